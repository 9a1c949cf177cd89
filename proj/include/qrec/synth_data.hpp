#pragma once

// Synthetic news corpus, users, impressions and dwell logs.
//
// Every news item has a topic and a latent quality g in [0, 1]. Clickbait
// items (low g) carry marker tokens in their titles and short, filler-heavy
// bodies; they get a boost in click log-odds, while dwell time after a click
// is lognormal with a log-mean that grows with g. A click-optimizing model
// therefore learns to prefer exactly the news that users abandon quickly.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "qrec/dwell_quality.hpp"

namespace qrec {

struct GenConfig {
  int n_news = 2000;
  int n_users = 5000;
  int n_impressions = 50000;
  int vocab_size = 3000;
  int n_topics = 12;
  double clickbait_fraction = 0.2;
  int candidates_per_impression = 15;
  std::uint64_t seed = 7;

  // Click model: logit = click_base + click_match * interest + clickbait_boost * [clickbait].
  double click_base = -3.6;
  double click_match = 3.0;
  double clickbait_boost = 1.2;

  // Dwell model: log d ~ Normal(dwell_base + dwell_quality_slope * g + dwell_match_slope * interest, dwell_log_std).
  double dwell_base = 2.0;
  double dwell_quality_slope = 5.0;
  double dwell_match_slope = 0.6;
  double dwell_log_std = 1.0;
  double dwell_cap = kDefaultDwellCap;

  // Clicks each user made before the impression window (history warm-up).
  int warmup_min = 3;
  int warmup_max = 12;
  int history_max = 50;

  void set(std::string_view key, std::string_view value);  // ConfigError on unknown keys
  void validate() const;
  std::string to_text() const;
  std::string hash() const;
  static GenConfig from_text(std::string_view text);
  static GenConfig from_file(const std::string& path);
};

struct SynthNews {
  std::string id;
  std::vector<std::string> title;
  std::vector<std::string> body;
  double quality = 0.0;  // latent g
  int topic = 0;
  bool clickbait = false;
};

struct SynthCorpus {
  std::vector<SynthNews> news;
  std::vector<std::string> vocab;  // every token, in vocabulary-id order after <pad>, <unk>
};

struct SynthImpression {
  std::string id;
  std::string user;
  std::int64_t timestamp = 0;
  std::vector<std::size_t> history;  // corpus indices, oldest first
  std::vector<std::size_t> candidates;
  std::vector<std::uint8_t> labels;
};

struct SynthBehaviors {
  std::vector<SynthImpression> impressions;
  std::vector<DwellRecord> dwell;
  std::vector<std::vector<double>> user_interest;  // [user][topic]
};

// Token helpers: "cb<i>" are clickbait markers.
bool is_marker_token(std::string_view token);

SynthCorpus generate_corpus(const GenConfig& config);
SynthBehaviors generate_behaviors(const GenConfig& config, const SynthCorpus& corpus);

std::string news_tsv(const SynthCorpus& corpus);
std::string truth_tsv(const SynthCorpus& corpus);
std::string vocab_tsv(const SynthCorpus& corpus);
std::string behaviors_tsv(const SynthCorpus& corpus, const SynthBehaviors& behaviors);
std::string dwell_tsv(const SynthBehaviors& behaviors);
std::string users_tsv(const SynthBehaviors& behaviors);

// Generates and writes news.tsv, behaviors.tsv, dwell.tsv, truth.tsv,
// vocab.tsv, users.tsv and manifest.txt into dir. Returns the manifest text.
std::string write_synthetic_dataset(const GenConfig& config, const std::string& dir);

}  // namespace qrec
