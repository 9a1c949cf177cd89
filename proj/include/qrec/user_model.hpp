#pragma once

// Quality-aware user modeling.
//
// Clicked-news vectors are contextualized by a user-level self-attention
// layer. Each click's dwell distribution t_i passes through a tanh dense
// layer (the quality representation). The joint attention logit of click i
// is content(h_i) + quality(hd_i), both additive-attention scorers; the user
// embedding is the softmax-weighted sum of the contextualized vectors.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qrec/autodiff.hpp"
#include "qrec/encoder.hpp"
#include "qrec/layers.hpp"
#include "qrec/parameters.hpp"

namespace qrec {

struct UserModelConfig {
  std::size_t hidden_dim = 400;
  std::size_t heads = 20;
  std::size_t bins = 13;
  std::size_t quality_rep_dim = 200;
  std::size_t attention_dim = 200;
  std::size_t max_history = 50;
  double dropout = 0.2;
  bool feed_forward = false;
};

// h^d = tanh(W_d t + b_d).
class DwellRepLayer {
 public:
  DwellRepLayer() = default;
  DwellRepLayer(ParameterStore& store, std::size_t bins, std::size_t rep_dim, ad::Rng& rng);

  // t: [n, bins] -> [n, rep_dim]. Throws StructuralError on a bin mismatch.
  ad::Tensor forward(ad::Graph& g, const ad::Tensor& t) const;
  const Dense& dense() const { return dense_; }

 private:
  Dense dense_;
};

// User-level transformer over the click sequence of each user (one segment
// per user).
class UserEncoder {
 public:
  UserEncoder() = default;
  UserEncoder(ParameterStore& store, const UserModelConfig& config, ad::Rng& rng);

  ad::Tensor forward(ad::Graph& g, const ad::Tensor& clicks, const ad::Segments& seg, bool train,
                     ad::Rng& rng) const;

 private:
  MultiHeadSelfAttention attention_;
  std::optional<FeedForward> feed_forward_;
  double dropout_ = 0.0;
};

class JointAttention {
 public:
  struct Output {
    ad::Tensor weights;  // [n], softmax within each user's segment
    ad::Tensor users;    // [segments, hidden]
  };

  JointAttention() = default;
  JointAttention(ParameterStore& store, const UserModelConfig& config, ad::Rng& rng);

  // h: [n, hidden]; hd: [n, quality_rep_dim]. Empty segments give zero users.
  Output forward(ad::Graph& g, const ad::Tensor& h, const ad::Tensor& hd, const ad::Segments& seg) const;

  const AdditiveAttention& content() const { return content_; }
  const AdditiveAttention& quality() const { return quality_; }
  // Parameter name of the quality scorer's query vector (frozen in ablations).
  static constexpr const char* kQualityQueryName = "user.joint.quality.v";

 private:
  AdditiveAttention content_;
  AdditiveAttention quality_;
};

// r^c = W h^c. No bias: a bias only adds u.b to every candidate of a user,
// which the softmax click loss cannot see, so the regularizer alone would
// drive it and push every click probability toward zero.
class CandidateHead {
 public:
  CandidateHead() = default;
  CandidateHead(ParameterStore& store, std::size_t hidden_dim, ad::Rng& rng);

  ad::Tensor forward(ad::Graph& g, const ad::Tensor& news) const { return dense_.forward(g, news); }
  const Dense& dense() const { return dense_; }

 private:
  Dense dense_;
};

// A user's recent clicks, padded to a fixed length.
struct ClickHistory {
  ad::Tensor vectors;                      // [N, hidden] news-model outputs h^t_i
  std::vector<std::vector<double>> dwell;  // N distributions of length B
  std::vector<std::uint8_t> mask;
};

// Missing distributions become uniform; mask marks real clicks.
ClickHistory make_click_history(ad::Tensor vectors, const std::vector<std::optional<std::vector<double>>>& dwell,
                                std::size_t bins);

// Single-user forms of the batched layers, used by tests and the Python
// module. Masked slots of contextualize() are zero rows.
ad::Tensor dwell_rep(ad::Graph& g, const DwellRepLayer& layer, std::span<const double> t);
ad::Tensor contextualize(ad::Graph& g, const UserEncoder& encoder, const ad::Tensor& clicks,
                         std::span<const std::uint8_t> mask, bool train, ad::Rng& rng);

struct JointAttentionResult {
  std::vector<double> weights;  // N entries, zero on masked slots
  ad::Tensor user;              // [hidden]
};
JointAttentionResult joint_attention(ad::Graph& g, const JointAttention& attention, const ad::Tensor& h,
                                     const ad::Tensor& hd, std::span<const std::uint8_t> mask);

ad::Tensor candidate_embed(ad::Graph& g, const NewsEncoder& encoder, const CandidateHead& head,
                           const NewsText& title, bool train, ad::Rng& rng);

// Inner product u . r; throws StructuralError on a dimension mismatch.
double click_score(std::span<const double> user, std::span<const double> candidate);
double click_prob(double raw_score);

}  // namespace qrec
