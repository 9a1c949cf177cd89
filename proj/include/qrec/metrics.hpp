#pragma once

// Ranking accuracy (AUC, MRR, nDCG@K), recommendation quality (QS@K, LQ@K)
// and Pearson correlation.
//
// Rankings sort by descending score; equal scores keep ascending candidate
// index, so every metric is deterministic. AUC alone counts tied
// positive/negative pairs as one half.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace qrec {

// Candidate indices from best to worst.
std::vector<std::size_t> rank_order(std::span<const double> scores);

// Each returns nullopt when the impression is degenerate for that metric
// (AUC needs a positive and a negative; MRR and nDCG need a positive).
std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels);
std::optional<double> mrr(std::span<const double> scores, std::span<const std::uint8_t> labels);
std::optional<double> ndcg_at_k(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t k);

// Mean known quality among the top k; nullopt when none of them has a quality.
std::optional<double> qs_at_k(std::span<const double> scores, std::span<const std::optional<double>> qualities,
                              std::size_t k);
// Number of top-k candidates with known quality <= threshold.
double lq_at_k(std::span<const double> scores, std::span<const std::optional<double>> qualities, std::size_t k,
               double threshold);

// Product-moment correlation. Throws InputError for fewer than two points,
// unequal lengths or zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

struct ImpressionResult {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<std::optional<double>> qualities;
};

struct MetricValue {
  double sum = 0.0;
  std::int64_t count = 0;
  std::int64_t skipped = 0;

  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
  void add(std::optional<double> v) {
    if (v) {
      sum += *v;
      ++count;
    } else {
      ++skipped;
    }
  }
};

// Per-impression averages with per-metric skip counts. Merging two reports
// equals recomputing over the concatenated impressions.
struct MetricReport {
  MetricValue auc, mrr, ndcg5, ndcg10, qs5, qs10, lq5, lq10;
  double lq_threshold = 0.0;

  void add(const ImpressionResult& r);
  void merge(const MetricReport& other);
  std::int64_t impressions() const { return auc.count + auc.skipped; }

  // "name=value" lines, including *_n and *_skipped counts.
  std::string to_key_values() const;
  std::string to_table() const;
  // Mean of the named metric ("auc", "mrr", "ndcg5", ...). Throws on unknown names.
  double value(const std::string& name) const;

  static const std::vector<std::string>& metric_names();
};

MetricReport evaluate_impressions(std::span<const ImpressionResult> results, double lq_threshold);

// Side-by-side table of several labelled reports.
std::string comparison_table(const std::vector<std::pair<std::string, MetricReport>>& runs);
// Long-format TSV for bar charts: run \t metric \t value.
std::string plot_tsv(const std::vector<std::pair<std::string, MetricReport>>& runs);

}  // namespace qrec
