#include "qrec/encoder.hpp"

#include <algorithm>

#include "qrec/errors.hpp"

namespace qrec {

EncoderConfig EncoderConfig::paper_profile(std::size_t vocab_size) {
  EncoderConfig c;
  c.vocab_size = vocab_size;
  return c;
}

EncoderConfig EncoderConfig::desk_profile(std::size_t vocab_size) {
  EncoderConfig c;
  c.vocab_size = vocab_size;
  c.embed_dim = 64;
  c.hidden_dim = 64;
  c.heads = 4;
  c.attention_dim = 32;
  return c;
}

void EncoderConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("vocabulary must contain at least the pad and unk tokens");
  if (embed_dim == 0 || hidden_dim == 0 || attention_dim == 0) throw ConfigError("encoder dims must be positive");
  if (heads == 0 || hidden_dim % heads != 0) throw ConfigError("hidden_dim must be divisible by heads");
  if (max_title_len == 0 || max_body_len == 0) throw ConfigError("max lengths must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

NewsText NewsText::from_tokens(std::span<const int> tokens, std::size_t max_len) {
  NewsText t;
  t.ids.assign(max_len, kPadId);
  t.mask.assign(max_len, 0);
  const std::size_t n = std::min(max_len, tokens.size());
  for (std::size_t i = 0; i < n; ++i) {
    t.ids[i] = tokens[i];
    t.mask[i] = 1;
  }
  return t;
}

std::size_t NewsText::real_length() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

void TokenBatch::add(std::span<const int> tokens, std::size_t max_len) {
  const std::size_t n = std::min(max_len, tokens.size());
  if (n == 0) throw InputError("cannot encode an empty text");
  for (std::size_t i = 0; i < n; ++i) {
    if (tokens[i] < 0) throw InputError("negative token id");
    ids.push_back(static_cast<std::size_t>(tokens[i]));
  }
  segments.push_back(ids.size());
}

void TokenBatch::add(const NewsText& text) {
  if (text.mask.size() != text.ids.size()) throw StructuralError("news text mask and ids differ in length");
  std::size_t n = 0;
  for (std::size_t i = 0; i < text.ids.size(); ++i) {
    if (!text.mask[i]) continue;
    if (text.ids[i] < 0) throw InputError("negative token id");
    ids.push_back(static_cast<std::size_t>(text.ids[i]));
    ++n;
  }
  if (n == 0) throw InputError("cannot encode an all-padding text");
  segments.push_back(ids.size());
}

NewsEncoder::NewsEncoder(ParameterStore& store, const EncoderConfig& config, ad::Rng& rng) : config_(config) {
  config_.validate();
  embedding_ = store.add_uniform("news.embedding", {config.vocab_size, config.embed_dim}, 0.1, rng);
  if (config.embed_dim != config.hidden_dim) {
    input_proj_.emplace(store, "news.input_proj", config.embed_dim, config.hidden_dim, rng);
  }
  self_attention_ = MultiHeadSelfAttention(store, "news.self_attn", config.hidden_dim, config.heads, rng);
  if (config.feed_forward) feed_forward_.emplace(store, "news.ff", config.hidden_dim, rng);
  pool_ = AdditiveAttention(store, "news.pool", config.hidden_dim, config.attention_dim, rng);
}

ad::Tensor NewsEncoder::contextualize(ad::Graph& g, const TokenBatch& batch, bool train, ad::Rng& rng) const {
  for (std::size_t id : batch.ids) {
    if (id >= config_.vocab_size) throw InputError("token id " + std::to_string(id) + " outside the vocabulary");
  }
  ad::Tensor x = ad::gather_rows(g, embedding_, batch.ids);
  x = ad::dropout(g, x, config_.dropout, train, rng);
  if (input_proj_) x = input_proj_->forward(g, x);
  x = self_attention_.forward(g, x, batch.segments);
  x = ad::dropout(g, x, config_.dropout, train, rng);
  if (feed_forward_) x = feed_forward_->forward(g, x);
  return x;
}

ad::Tensor NewsEncoder::encode(ad::Graph& g, const TokenBatch& batch, bool train, ad::Rng& rng) const {
  return pool_.pool(g, contextualize(g, batch, train, rng), batch.segments);
}

ad::Tensor encode_news(ad::Graph& g, const NewsEncoder& encoder, const NewsText& text, bool train, ad::Rng& rng) {
  TokenBatch batch;
  batch.add(text);
  ad::Tensor out = encoder.encode(g, batch, train, rng);
  return ad::reshape(g, out, {out.size()});
}

PoolResult attention_pool(ad::Graph& g, const ad::Tensor& h, std::span<const std::uint8_t> mask,
                          const AdditiveAttention& attention) {
  if (mask.size() != h.rows()) throw StructuralError("attention_pool: mask length differs from sequence length");
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) kept.push_back(i);
  }
  if (kept.empty()) throw InputError("attention_pool: no unmasked positions");
  ad::Tensor rows = ad::gather_rows(g, h, kept);
  const ad::Segments seg{0, kept.size()};
  ad::Tensor w = attention.weights(g, rows, seg);
  ad::Tensor pooled = ad::segment_weighted_sum(g, w, rows, seg);
  ad::Tensor full = ad::scatter_rows(g, ad::reshape(g, w, {kept.size(), 1}), kept, mask.size());
  return {ad::reshape(g, pooled, {pooled.size()}), ad::reshape(g, full, {mask.size()})};
}

}  // namespace qrec
