#include "qrec/layers.hpp"

#include "qrec/errors.hpp"

namespace qrec {

Dense::Dense(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, ad::Rng& rng,
             bool bias)
    : weight_(store.add_glorot(name + ".W", in, out, rng)) {
  if (bias) bias_ = store.add_zeros(name + ".b", {out});
}

ad::Tensor Dense::forward(ad::Graph& g, const ad::Tensor& x) const {
  ad::Tensor y = ad::matmul(g, x, weight_);
  return bias_.defined() ? ad::add_broadcast(g, y, bias_) : y;
}

AdditiveAttention::AdditiveAttention(ParameterStore& store, const std::string& name, std::size_t in,
                                     std::size_t attention_dim, ad::Rng& rng)
    : proj_(store, name + ".proj", in, attention_dim, rng),
      query_(store.add_glorot(name + ".v", attention_dim, 1, rng)) {}

ad::Tensor AdditiveAttention::logits(ad::Graph& g, const ad::Tensor& x) const {
  ad::Tensor hidden = ad::tanh(g, proj_.forward(g, x));
  ad::Tensor scores = ad::matmul(g, hidden, query_);
  return ad::reshape(g, scores, {scores.size()});
}

ad::Tensor AdditiveAttention::weights(ad::Graph& g, const ad::Tensor& x, const ad::Segments& seg) const {
  return ad::segment_softmax(g, logits(g, x), seg);
}

ad::Tensor AdditiveAttention::pool(ad::Graph& g, const ad::Tensor& x, const ad::Segments& seg) const {
  return ad::segment_weighted_sum(g, weights(g, x, seg), x, seg);
}

MultiHeadSelfAttention::MultiHeadSelfAttention(ParameterStore& store, const std::string& name, std::size_t dim,
                                               std::size_t heads, ad::Rng& rng)
    : wq_(store.add_glorot(name + ".Wq", dim, dim, rng)),
      wk_(store.add_glorot(name + ".Wk", dim, dim, rng)),
      wv_(store.add_glorot(name + ".Wv", dim, dim, rng)),
      heads_(heads) {
  if (heads == 0 || dim % heads != 0) throw ConfigError("attention width must be divisible by heads");
}

ad::Tensor MultiHeadSelfAttention::forward(ad::Graph& g, const ad::Tensor& x, const ad::Segments& seg) const {
  return ad::segment_attention(g, ad::matmul(g, x, wq_), ad::matmul(g, x, wk_), ad::matmul(g, x, wv_), seg, heads_);
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, std::size_t dim, ad::Rng& rng)
    : inner_(store, name + ".inner", dim, dim, rng), outer_(store, name + ".outer", dim, dim, rng) {}

ad::Tensor FeedForward::forward(ad::Graph& g, const ad::Tensor& x) const {
  return ad::add(g, x, outer_.forward(g, ad::tanh(g, inner_.forward(g, x))));
}

}  // namespace qrec
