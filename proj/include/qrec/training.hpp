#pragma once

// Losses, negative sampling, the training loop and evaluation.
//
// Per sample: L = L_c + lambda * L_q + mu * L_r, where
//   L_c = -log softmax(scores)[positive]         (positive stored first)
//   L_q = |q_hat - q| / Q                         (positive candidate only)
//   L_r = mean over candidates with known q of sigmoid(score) / (eps + q)
// Terms whose quality is unknown are masked. Batch losses are the mean of
// the per-sample losses.

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrec/autodiff.hpp"
#include "qrec/config.hpp"
#include "qrec/dataset.hpp"
#include "qrec/dwell_quality.hpp"
#include "qrec/metrics.hpp"
#include "qrec/model.hpp"

namespace qrec {

struct LossWeights {
  double lambda = 2.0;
  double mu = 0.5;
  double epsilon = 1e-6;
  int neg_k = 4;

  static LossWeights from_config(const ExperimentConfig& config);
  void validate() const;  // ConfigError unless lambda, mu >= 0, epsilon > 0, neg_k >= 1
};

// Scalar forms, used for reporting and as test oracles for the graph forms.
double click_loss(std::span<const double> scores);  // positive at index 0
double quality_loss(double q_hat, double q, double max_quality);  // ConfigError when max_quality <= 0
double quality_regularizer(double click_prob, double q, double epsilon);
double unified_loss(double lc, double lq, double lr, const LossWeights& w);

struct TrainingSample {
  std::span<const std::size_t> history;
  std::vector<std::size_t> candidates;               // positive first, then K negatives
  std::vector<std::optional<double>> qualities;      // q per candidate (regularizer)
  std::optional<double> quality_label;               // L_q target of the positive
};

// One sample per clicked candidate: K distinct negatives drawn without
// replacement from the impression's non-clicked candidates. Impressions
// without history (cold start) or without enough negatives are skipped.
struct SampleSet {
  std::vector<TrainingSample> samples;
  std::size_t skipped_cold_start = 0;
  std::size_t skipped_few_negatives = 0;
};
SampleSet make_samples(std::span<const Impression> impressions, int neg_k, std::span<const std::optional<double>> quality,
                       std::span<const std::optional<double>> labels, ad::Rng& rng);

struct LossParts {
  ad::Tensor total;
  ad::Tensor click;
  ad::Tensor quality;      // zero scalar when masked or lambda == 0
  ad::Tensor regularizer;  // zero scalar when masked or mu == 0
};

// Graph forms over a batch. scores: [b * (1 + K)] raw scores, sample-major.
ad::Tensor batch_click_loss(ad::Graph& g, const ad::Tensor& scores, std::size_t batch, std::size_t group);
ad::Tensor batch_quality_loss(ad::Graph& g, const ad::Tensor& q_hat, std::span<const double> targets,
                              double max_quality, std::size_t batch);
ad::Tensor batch_regularizer(ad::Graph& g, const ad::Tensor& scores, std::span<const std::optional<double>> q,
                             std::size_t batch, std::size_t group, double epsilon, bool positive_only);

LossParts batch_loss(ad::Graph& g, const QualityRecModel& model, const NewsFeatures& news,
                     std::span<const TrainingSample> batch, const LossWeights& weights, double max_quality,
                     bool positive_only, bool train, ad::Rng& rng);

// Everything a run derives from the dataset before training starts.
struct PreparedData {
  Split split;
  QualityTable table;                               // training split only
  NewsFeatures features;
  std::vector<std::optional<double>> quality;       // q from the table, per news
  std::vector<std::optional<double>> labels;        // L_q target per news (holdout masked)
  std::vector<std::uint8_t> holdout;                // news excluded from L_q
  double max_quality = 0.0;                         // Q: max label over training news
  std::size_t vocab_size = 0;
};
PreparedData prepare_data(const Dataset& ds, const ExperimentConfig& config);

// Whether a news id falls in the quality holdout (stable hash of the id).
bool in_quality_holdout(const std::string& news_id, double fraction);

struct EpochTrace {
  int epoch = 0;
  double loss = 0.0;
  double click = 0.0;
  double quality = 0.0;
  double regularizer = 0.0;
  std::size_t samples = 0;
  std::size_t batches = 0;
  std::size_t clipped = 0;
  double seconds = 0.0;
  std::optional<MetricReport> validation;
};

struct TrainOptions {
  std::ostream* log = nullptr;
  std::function<void(const EpochTrace&)> on_epoch;
};

struct TrainResult {
  std::unique_ptr<QualityRecModel> model;
  std::vector<EpochTrace> trace;
};

// Deterministic given the config (including seed). Throws NumericError when
// the loss becomes non-finite.
TrainResult train(const PreparedData& data, const ExperimentConfig& config, const TrainOptions& options = {});
std::unique_ptr<QualityRecModel> make_model(const PreparedData& data, const ExperimentConfig& config);

// 5th-percentile threshold over news with known q among the given impressions' candidates.
double low_quality_threshold(std::span<const Impression> impressions, std::span<const std::optional<double>> quality);

MetricReport evaluate(const QualityRecModel& model, const NewsFeatures& news, std::span<const Impression> impressions,
                      std::span<const std::optional<double>> quality, double lq_threshold);

// PCC between predicted quality and a reference over the selected news.
double quality_pcc(std::span<const double> predicted, std::span<const double> reference,
                   std::span<const std::size_t> news);

std::string format_trace(const std::vector<EpochTrace>& trace);

}  // namespace qrec
