#pragma once

// News model: token embedding -> (optional input projection) -> masked
// multi-head self-attention -> (optional feed-forward) -> additive attention
// pooling. One vector of hidden_dim per news text.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qrec/autodiff.hpp"
#include "qrec/layers.hpp"
#include "qrec/parameters.hpp"

namespace qrec {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 300;
  std::size_t hidden_dim = 400;
  std::size_t heads = 20;
  std::size_t max_title_len = 30;
  std::size_t max_body_len = 200;
  std::size_t attention_dim = 200;
  double dropout = 0.2;
  bool feed_forward = false;

  static EncoderConfig paper_profile(std::size_t vocab_size);
  // embed 64, hidden 64, heads 4.
  static EncoderConfig desk_profile(std::size_t vocab_size);

  void validate() const;
};

// A token sequence padded (or truncated) to a fixed length.
struct NewsText {
  std::vector<int> ids;
  std::vector<std::uint8_t> mask;

  static NewsText from_tokens(std::span<const int> tokens, std::size_t max_len);
  std::size_t real_length() const;
};

// Variable-length token sequences packed back to back.
struct TokenBatch {
  std::vector<std::size_t> ids;
  ad::Segments segments{0};

  // Appends the first max_len tokens. Throws InputError for an empty text.
  void add(std::span<const int> tokens, std::size_t max_len);
  // Appends only the unmasked tokens of a padded text.
  void add(const NewsText& text);
  std::size_t count() const { return segments.size() - 1; }
};

class NewsEncoder {
 public:
  NewsEncoder() = default;
  NewsEncoder(ParameterStore& store, const EncoderConfig& config, ad::Rng& rng);

  // [batch.count(), hidden_dim]. Token ids are validated against vocab_size.
  ad::Tensor encode(ad::Graph& g, const TokenBatch& batch, bool train, ad::Rng& rng) const;

  // Contextualized token vectors before pooling: [tokens, hidden_dim].
  ad::Tensor contextualize(ad::Graph& g, const TokenBatch& batch, bool train, ad::Rng& rng) const;

  const EncoderConfig& config() const { return config_; }
  const AdditiveAttention& pooling() const { return pool_; }
  const ad::Tensor& embedding() const { return embedding_; }

 private:
  EncoderConfig config_;
  ad::Tensor embedding_;
  std::optional<Dense> input_proj_;
  MultiHeadSelfAttention self_attention_;
  std::optional<FeedForward> feed_forward_;
  AdditiveAttention pool_;
};

// Single-text convenience: [hidden_dim]. Throws InputError for all-padding text.
ad::Tensor encode_news(ad::Graph& g, const NewsEncoder& encoder, const NewsText& text, bool train, ad::Rng& rng);

struct PoolResult {
  ad::Tensor pooled;   // [d]
  ad::Tensor weights;  // [n], zero at masked positions
};

// Additive attention pooling of the rows of h [n, d] restricted to mask.
// Throws InputError when no position is unmasked.
PoolResult attention_pool(ad::Graph& g, const ad::Tensor& h, std::span<const std::uint8_t> mask,
                          const AdditiveAttention& attention);

}  // namespace qrec
