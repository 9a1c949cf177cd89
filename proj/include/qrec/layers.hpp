#pragma once

// Parameterized building blocks shared by the news and user models.

#include <string>

#include "qrec/autodiff.hpp"
#include "qrec/parameters.hpp"

namespace qrec {

// y = x W + b (no activation). Without a bias the layer is y = x W.
class Dense {
 public:
  Dense() = default;
  Dense(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, ad::Rng& rng,
        bool bias = true);

  ad::Tensor forward(ad::Graph& g, const ad::Tensor& x) const;

  const ad::Tensor& weight() const { return weight_; }
  const ad::Tensor& bias() const { return bias_; }  // undefined when built without bias
  std::size_t in_dim() const { return weight_.shape()[0]; }
  std::size_t out_dim() const { return weight_.shape()[1]; }

 private:
  ad::Tensor weight_;
  ad::Tensor bias_;
};

// Additive attention: logit_i = v . tanh(W x_i + b).
class AdditiveAttention {
 public:
  AdditiveAttention() = default;
  AdditiveAttention(ParameterStore& store, const std::string& name, std::size_t in, std::size_t attention_dim,
                    ad::Rng& rng);

  // Flat [n] logits, one per row of x.
  ad::Tensor logits(ad::Graph& g, const ad::Tensor& x) const;
  // Softmax of the logits within each segment.
  ad::Tensor weights(ad::Graph& g, const ad::Tensor& x, const ad::Segments& seg) const;
  // Weighted sum of rows per segment: [segments, in].
  ad::Tensor pool(ad::Graph& g, const ad::Tensor& x, const ad::Segments& seg) const;

  const Dense& projection() const { return proj_; }
  const ad::Tensor& query() const { return query_; }

 private:
  Dense proj_;
  ad::Tensor query_;  // [attention_dim, 1]
};

// Multi-head self-attention without output projection: per-head Q, K, V
// projections whose outputs are concatenated.
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t heads,
                         ad::Rng& rng);

  ad::Tensor forward(ad::Graph& g, const ad::Tensor& x, const ad::Segments& seg) const;

  std::size_t heads() const { return heads_; }

 private:
  ad::Tensor wq_, wk_, wv_;
  std::size_t heads_ = 1;
};

// Optional position-wise sublayer: x + W2 tanh(W1 x + b1) + b2.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, std::size_t dim, ad::Rng& rng);

  ad::Tensor forward(ad::Graph& g, const ad::Tensor& x) const;

 private:
  Dense inner_;
  Dense outer_;
};

}  // namespace qrec
