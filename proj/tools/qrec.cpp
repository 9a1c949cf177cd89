// qrec: batch command line for the quality-aware recommender.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data error,
// 4 numeric error, 1 anything else.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "qrec/config.hpp"
#include "qrec/errors.hpp"
#include "qrec/manifest.hpp"
#include "qrec/pipeline.hpp"
#include "qrec/synth_data.hpp"
#include "qrec/text_io.hpp"

namespace fs = std::filesystem;
using namespace qrec;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  ExperimentConfig c = ExperimentConfig::from_text(read_config_file(path));
  c.apply(parse_overrides(overrides));
  c.validate();
  return c;
}

void write_report(const MetricReport& report, const std::string& out) {
  const std::string kv = report.to_key_values();
  if (!out.empty()) {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    text::write_file(out, kv);
  }
  std::cout << report.to_table() << kv;
}

struct RunSet {
  std::vector<std::pair<std::string, MetricReport>> reports;
  std::vector<std::pair<std::string, double>> pcc;
};

// Runs each named config on one dataset, writing per-run outputs under out_dir.
RunSet run_many(const std::string& data_dir, const std::vector<std::pair<std::string, ExperimentConfig>>& configs,
                const std::string& out_dir, const std::string& command) {
  const Dataset ds = load_dataset(data_dir);
  fs::create_directories(out_dir);
  RunSet set;
  Manifest manifest;
  manifest.set("command", command);
  manifest.set("data", data_dir);
  manifest.set("runs", std::to_string(configs.size()));
  for (const auto& [name, config] : configs) {
    std::cerr << "== " << name << '\n';
    ExperimentResult r = run_experiment(ds, config, &std::cerr);
    const std::string kv = r.test.to_key_values();
    std::string safe = name;
    for (char& ch : safe) {
      if (ch == '=' || ch == ',') ch = '_';
    }
    text::write_file((fs::path(out_dir) / (safe + ".report")).string(), kv);
    manifest.add_file(safe + ".report", kv);
    manifest.set("run." + safe + ".config_hash", config.hash());
    set.reports.emplace_back(name, r.test);
    if (r.holdout_pcc) set.pcc.emplace_back(name, *r.holdout_pcc);
  }
  const std::string table = comparison_table(set.reports);
  const std::string tsv = plot_tsv(set.reports);
  text::write_file((fs::path(out_dir) / "comparison.txt").string(), table);
  text::write_file((fs::path(out_dir) / "comparison.tsv").string(), tsv);
  manifest.add_file("comparison.txt", table);
  manifest.add_file("comparison.tsv", tsv);
  manifest.write((fs::path(out_dir) / "manifest.txt").string());
  std::cout << table;
  for (const auto& [name, p] : set.pcc) std::cout << "pcc[" << name << "]=" << text::format_double(p) << '\n';
  return set;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quality-aware news recommendation experiments"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  std::string gen_config, gen_out;
  std::vector<std::string> gen_set;
  gen->add_option("--config", gen_config, "Generator key=value config")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--set", gen_set, "Override key=value (repeatable)");

  // build-quality
  auto* bq = app.add_subcommand("build-quality", "Build the news quality table from a dwell log");
  std::string bq_dwell, bq_out;
  int bq_min_clicks = kDefaultMinClicks;
  double bq_cap = kDefaultDwellCap;
  bq->add_option("--dwell", bq_dwell, "dwell.tsv")->required()->check(CLI::ExistingFile);
  bq->add_option("--out", bq_out, "Output quality table TSV")->required();
  bq->add_option("--min-clicks", bq_min_clicks, "Minimum clicks per news")->check(CLI::PositiveNumber);
  bq->add_option("--cap", bq_cap, "Dwell cap in seconds")->check(CLI::PositiveNumber);

  // train
  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint directory");
  std::string tr_data, tr_config, tr_out;
  std::vector<std::string> tr_set;
  tr->add_option("--data", tr_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--config", tr_config, "Training config")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out, "Run directory")->required();
  tr->add_option("--set", tr_set, "Override key=value (repeatable)");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  std::string ev_data, ev_model, ev_out;
  ev->add_option("--data", ev_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--model", ev_model, "Run directory from train")->required();
  ev->add_option("--out", ev_out, "Write the key=value report here");

  // score-news
  auto* sn = app.add_subcommand("score-news", "Rank all news by predicted quality");
  std::string sn_data, sn_model, sn_out;
  std::size_t sn_top = 10;
  sn->add_option("--data", sn_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  sn->add_option("--model", sn_model, "Run directory from train")->required();
  sn->add_option("--top", sn_top, "Entries per list");
  sn->add_option("--out", sn_out, "Write the ranking TSV here");

  // ablate / sweep
  auto* ab = app.add_subcommand("ablate", "Full model and its three ablations");
  std::string ab_data, ab_config, ab_out;
  std::vector<std::string> ab_set;
  ab->add_option("--data", ab_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ab->add_option("--config", ab_config, "Training config")->required()->check(CLI::ExistingFile);
  ab->add_option("--out", ab_out, "Output directory")->required();
  ab->add_option("--set", ab_set, "Override key=value (repeatable)");

  auto* sw = app.add_subcommand("sweep", "Grid over lambda and mu (5 x 5 runs)");
  std::string sw_data, sw_config, sw_out;
  std::vector<std::string> sw_set;
  sw->add_option("--data", sw_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  sw->add_option("--config", sw_config, "Training config")->required()->check(CLI::ExistingFile);
  sw->add_option("--out", sw_out, "Output directory")->required();
  sw->add_option("--set", sw_set, "Override key=value (repeatable)");

  // plot
  auto* pl = app.add_subcommand("plot", "Collect metric reports into bar-chart TSV");
  std::vector<std::string> pl_inputs;
  std::string pl_out;
  pl->add_option("inputs", pl_inputs, "Metric report files (key=value)")->required()->check(CLI::ExistingFile);
  pl->add_option("--out", pl_out, "Output TSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) {
      GenConfig c = GenConfig::from_text(read_config_file(gen_config));
      for (const auto& [k, v] : parse_overrides(gen_set)) c.set(k, v);
      c.validate();
      const std::string manifest = write_synthetic_dataset(c, gen_out);
      std::cout << manifest;
      std::cout << "manifest_hash=" << text::hex64(text::fnv1a64(manifest)) << '\n';
    } else if (*bq) {
      const QualityTable t = build_quality_file(bq_dwell, bq_out, {bq_min_clicks, bq_cap});
      std::cout << "news=" << t.size() << "\nbins=" << t.bins() << "\nQ=" << text::format_double(t.max_quality())
                << "\nlow_quality_threshold=" << text::format_double(t.low_quality_threshold()) << '\n';
    } else if (*tr) {
      const ExperimentConfig c = load_config(tr_config, tr_set);
      std::cout << train_to_dir(tr_data, c, tr_out, &std::cerr);
    } else if (*ev) {
      write_report(eval_from_dir(ev_data, ev_model), ev_out);
    } else if (*sn) {
      const std::string table = format_scored_news(score_news_from_dir(sn_data, sn_model), sn_top);
      if (!sn_out.empty()) text::write_file(sn_out, table);
      std::cout << table;
    } else if (*ab) {
      run_many(ab_data, ablation_configs(load_config(ab_config, ab_set)), ab_out, "ablate");
    } else if (*sw) {
      run_many(sw_data, sweep_configs(load_config(sw_config, sw_set)), sw_out, "sweep");
    } else if (*pl) {
      std::vector<std::pair<std::string, MetricReport>> runs;
      for (const auto& path : pl_inputs) runs.emplace_back(fs::path(path).stem().string(), parse_report(text::read_file(path)));
      const std::string tsv = plot_tsv(runs);
      text::write_file(pl_out, tsv);
      std::cout << comparison_table(runs);
    }
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
