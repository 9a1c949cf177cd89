#pragma once

// On-disk dataset layout (one directory):
//   news.tsv       news_id \t title tokens \t body tokens (space separated)
//   behaviors.tsv  impression_id \t user_id \t timestamp \t history \t candidates
//                  history: space-separated news ids; candidates: "newsid-label"
//   dwell.tsv      user_id \t news_id \t dwell_seconds
//   truth.tsv      news_id \t g \t topic            (synthetic data only)
//   vocab.tsv      token \t id                      (optional; rebuilt if absent)

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qrec/dwell_quality.hpp"

namespace qrec {

class Vocabulary {
 public:
  // Starts with "<pad>" = 0 and "<unk>" = 1.
  Vocabulary();

  int id(std::string_view token) const;  // kUnkId when absent
  int add(std::string_view token);       // returns the (possibly existing) id
  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  std::string to_tsv() const;
  static Vocabulary from_tsv(std::string_view text);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct NewsCorpus {
  std::vector<std::string> ids;
  std::vector<std::vector<int>> titles;
  std::vector<std::vector<int>> bodies;
  std::unordered_map<std::string, std::size_t> index;
  Vocabulary vocab;

  std::size_t size() const { return ids.size(); }
  std::optional<std::size_t> find(std::string_view id) const;
  std::size_t at(std::string_view id) const;  // throws DataError when unknown
};

struct Impression {
  std::string id;
  std::string user;
  std::int64_t timestamp = 0;
  std::vector<std::size_t> history;     // corpus indices, oldest first
  std::vector<std::size_t> candidates;  // corpus indices
  std::vector<std::uint8_t> labels;     // 1 = clicked
};

struct TruthRecord {
  double quality = 0.0;  // latent g in [0, 1]
  int topic = 0;
};

struct Dataset {
  NewsCorpus corpus;
  std::vector<Impression> impressions;
  std::vector<DwellRecord> dwell;
  std::vector<std::optional<TruthRecord>> truth;  // aligned with corpus; empty if no truth.tsv
};

NewsCorpus parse_news(std::string_view news_tsv, std::optional<Vocabulary> vocab = std::nullopt);
std::vector<Impression> parse_behaviors(std::string_view behaviors_tsv, const NewsCorpus& corpus);
std::vector<DwellRecord> parse_dwell(std::string_view dwell_tsv);
std::vector<std::optional<TruthRecord>> parse_truth(std::string_view truth_tsv, const NewsCorpus& corpus);

Dataset load_dataset(const std::string& dir);

struct Split {
  std::vector<Impression> train;
  std::vector<Impression> validation;
  std::vector<Impression> test;
};

// Chronological split: stable sort by timestamp, then the first
// train_fraction go to train, the next valid_fraction to validation and the
// rest to test. Throws DataError when train or test would be empty.
Split split_impressions(std::vector<Impression> impressions, double train_fraction, double valid_fraction = 0.0);

// Dwell records whose (user, news) click happened in one of `impressions`,
// plus records that match no impression at all (clicks logged before the
// impression window).
std::vector<DwellRecord> dwell_for_impressions(const std::vector<DwellRecord>& dwell,
                                               const std::vector<Impression>& impressions,
                                               const std::vector<Impression>& all_impressions,
                                               const NewsCorpus& corpus);

}  // namespace qrec
