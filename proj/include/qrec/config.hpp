#pragma once

// Flat key=value experiment configuration. One key per line, '#' starts a
// comment, unknown keys are rejected.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qrec {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Parses "key=value" lines. Throws ConfigError on malformed lines or
// duplicate keys.
KeyValues parse_key_values(std::string_view text);

enum class QualityMeasure { kDistribution, kAvgDwell, kAvgLogDwell };

std::string to_string(QualityMeasure m);
QualityMeasure parse_quality_measure(std::string_view s);

struct ExperimentConfig {
  // Model shape. Paper-scale defaults; see configs/desk.conf for the small profile.
  int embed_dim = 300;
  int hidden_dim = 400;
  int heads = 20;
  int layers = 1;
  double dropout = 0.2;
  int max_title = 30;
  int max_body = 200;
  int max_history = 50;
  // Width of the additive-attention scorers; 0 means hidden_dim / 2.
  int attention_dim = 0;
  bool feed_forward = false;

  // Optimization.
  double lr = 1e-4;
  int batch_size = 32;
  int epochs = 4;
  double clip_norm = 5.0;
  std::uint64_t seed = 42;
  std::string precision = "double";

  // Loss.
  double lambda = 2.0;
  double mu = 0.5;
  double epsilon = 1e-6;
  int neg_k = 4;
  bool quality_attention = true;
  bool reg_positive_only = false;
  QualityMeasure quality_measure = QualityMeasure::kDistribution;

  // Data handling.
  int min_clicks = 10;
  double dwell_cap = 4096.0;
  double train_fraction = 0.8;
  double valid_fraction = 0.0;
  double quality_holdout = 0.2;

  int effective_attention_dim() const { return attention_dim > 0 ? attention_dim : hidden_dim / 2; }

  // Applies one key; throws ConfigError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  void apply(const KeyValues& kv);
  // Range and consistency checks (hidden divisible by heads, layers == 1...).
  void validate() const;

  // Canonical "key=value" text covering every key, in a fixed order.
  std::string to_text() const;
  std::string hash() const;

  static ExperimentConfig from_text(std::string_view text);
  static ExperimentConfig from_file(const std::string& path);
};

// Splits "key=value" override strings (as given on the command line).
KeyValues parse_overrides(const std::vector<std::string>& overrides);

}  // namespace qrec
