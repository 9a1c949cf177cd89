#pragma once

// The full recommender: news encoder, quality-aware user model, candidate
// head and quality-prediction head sharing one parameter store.
//
// Forward passes are batched. All news needed by a batch are encoded once
// (deduplicated), histories and candidates gather rows of that matrix, and
// users are ragged segments, so one graph covers the whole batch.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrec/autodiff.hpp"
#include "qrec/config.hpp"
#include "qrec/dataset.hpp"
#include "qrec/dwell_quality.hpp"
#include "qrec/encoder.hpp"
#include "qrec/layers.hpp"
#include "qrec/parameters.hpp"
#include "qrec/user_model.hpp"

namespace qrec {

// q_hat = dense2(tanh(dense1(news vector))).
class QualityHead {
 public:
  QualityHead() = default;
  QualityHead(ParameterStore& store, std::size_t hidden_dim, std::size_t rep_dim, ad::Rng& rng);

  // news: [n, hidden] -> [n] predictions.
  ad::Tensor forward(ad::Graph& g, const ad::Tensor& news) const;
  // Sets the output bias (used to start predictions at the mean label).
  void set_output_bias(double value);

 private:
  Dense dense1_;
  Dense dense2_;
};

struct ModelConfig {
  EncoderConfig encoder;
  UserModelConfig user;
  std::size_t quality_rep_dim = 200;  // width of the quality head's hidden layer

  static ModelConfig from_experiment(const ExperimentConfig& config, std::size_t vocab_size, int bins);
};

// Per-news inputs in corpus order: truncated titles, the truncated
// title+body concatenation, and the dwell distribution fed to the user model
// (uniform where the quality table has no entry).
struct NewsFeatures {
  std::vector<std::vector<int>> titles;
  std::vector<std::vector<int>> title_body;
  std::vector<double> dwell;  // [news, bins]
  std::vector<std::uint8_t> has_dwell;
  std::size_t bins = 0;

  static NewsFeatures build(const NewsCorpus& corpus, const QualityTable* table, std::size_t max_title,
                            std::size_t max_body, std::size_t bins);
  std::size_t size() const { return titles.size(); }
  std::span<const double> distribution(std::size_t news) const {
    return std::span<const double>(dwell).subspan(news * bins, bins);
  }
};

// One user and a list of candidates, all as corpus indices.
struct UserCandidates {
  std::span<const std::size_t> history;     // already truncated to max_history
  std::span<const std::size_t> candidates;
};

struct BatchOutput {
  ad::Tensor scores;                         // [sum of candidate counts], raw u . r
  std::vector<std::size_t> offsets;          // candidate offsets per user
  JointAttention::Output attention;          // weights over history rows, users [b, hidden]
};

class QualityRecModel {
 public:
  QualityRecModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  const NewsEncoder& news_encoder() const { return news_encoder_; }
  const DwellRepLayer& dwell_rep() const { return dwell_rep_; }
  const UserEncoder& user_encoder() const { return user_encoder_; }
  const JointAttention& joint_attention() const { return joint_attention_; }
  const CandidateHead& candidate_head() const { return candidate_head_; }
  const QualityHead& quality_head() const { return quality_head_; }
  QualityHead& quality_head() { return quality_head_; }

  // Zeroes v^q and freezes it: the joint attention becomes content-only.
  void disable_quality_attention();

  // Scores every (user, candidate) pair of the batch. Users with an empty
  // history get u = 0.
  BatchOutput score(ad::Graph& g, const NewsFeatures& news, std::span<const UserCandidates> batch, bool train,
                    ad::Rng& rng) const;

  // Quality predictions for the given news (title+body): [n].
  ad::Tensor predict_quality(ad::Graph& g, const NewsFeatures& news, std::span<const std::size_t> ids, bool train,
                             ad::Rng& rng) const;

  // Inference helpers without gradient tracking.
  // Candidate embeddings r for every news: [news, hidden], row-major.
  std::vector<double> candidate_embeddings(const NewsFeatures& news, std::size_t chunk = 256) const;
  // User embeddings for the given histories: [users, hidden], row-major.
  std::vector<double> user_embeddings(const NewsFeatures& news, std::span<const std::vector<std::size_t>> histories,
                                      std::size_t chunk = 64) const;
  std::vector<double> predict_quality_all(const NewsFeatures& news, std::size_t chunk = 128) const;

  void save(const std::string& path) const { store_.save(path); }
  void load(const std::string& path) { store_.load(path); }

 private:
  ModelConfig config_;
  ParameterStore store_;
  NewsEncoder news_encoder_;
  DwellRepLayer dwell_rep_;
  UserEncoder user_encoder_;
  JointAttention joint_attention_;
  CandidateHead candidate_head_;
  QualityHead quality_head_;
};

// The last max_history entries of a click list (the most recent clicks).
std::span<const std::size_t> recent(std::span<const std::size_t> history, std::size_t max_history);

}  // namespace qrec
