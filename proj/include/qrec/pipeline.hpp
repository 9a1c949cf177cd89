#pragma once

// Experiment recipes behind the command line tool. Each run directory holds
// model.ckpt, config.conf, trace.tsv, quality.tsv and manifest.txt.

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "qrec/config.hpp"
#include "qrec/dataset.hpp"
#include "qrec/metrics.hpp"
#include "qrec/model.hpp"
#include "qrec/training.hpp"

namespace qrec {

struct ExperimentResult {
  MetricReport test;
  std::optional<double> holdout_pcc;  // q_hat vs latent quality on held-out news (needs truth.tsv)
  std::vector<EpochTrace> trace;
  std::unique_ptr<QualityRecModel> model;
};

// Prepare, train, and evaluate on the test split, all in memory.
ExperimentResult run_experiment(const Dataset& ds, const ExperimentConfig& config, std::ostream* log = nullptr);

// Test-split evaluation of an already trained model.
MetricReport evaluate_test(const QualityRecModel& model, const PreparedData& data);
std::optional<double> holdout_pcc(const QualityRecModel& model, const Dataset& ds, const PreparedData& data);

// The four ablation settings: full, -quality-attention, -L_q, -L_r.
std::vector<std::pair<std::string, ExperimentConfig>> ablation_configs(const ExperimentConfig& base);
// lambda in {0,1,2,3,4} x mu in {0,0.25,0.5,0.75,1}.
std::vector<std::pair<std::string, ExperimentConfig>> sweep_configs(const ExperimentConfig& base);

// File-level commands. Each returns the manifest text it wrote.
QualityTable build_quality_file(const std::string& dwell_path, const std::string& out_path, QualityTableOptions options);
std::string train_to_dir(const std::string& data_dir, const ExperimentConfig& config, const std::string& out_dir,
                         std::ostream* log = nullptr);
// Loads config.conf and model.ckpt from model_dir. Throws DataError when the
// checkpoint is missing.
MetricReport eval_from_dir(const std::string& data_dir, const std::string& model_dir);

struct ScoredNews {
  std::string id;
  double predicted = 0.0;                // clamped to [0, B-1]
  std::optional<double> measured;        // q from the training quality table
  std::optional<double> latent;          // synthetic ground truth
};
std::vector<ScoredNews> score_news_from_dir(const std::string& data_dir, const std::string& model_dir);
std::string format_scored_news(const std::vector<ScoredNews>& ranked, std::size_t top);

// Reads metric reports (key=value) back; missing metrics are an error.
MetricReport parse_report(const std::string& text);

std::string read_config_file(const std::string& path);

}  // namespace qrec
