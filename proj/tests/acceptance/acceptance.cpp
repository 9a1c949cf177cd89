// Acceptance runner: prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails.
//
//   qrec_acceptance [--only 1,2,5] [--scratch DIR] [--config desk.conf]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qrec/config.hpp"
#include "qrec/dataset.hpp"
#include "qrec/dwell_quality.hpp"
#include "qrec/errors.hpp"
#include "qrec/metrics.hpp"
#include "qrec/pipeline.hpp"
#include "qrec/synth_data.hpp"
#include "qrec/text_io.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace qrec;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

// Collects failed checks; the first few are reported in the summary line.
struct Checks {
  std::vector<std::string> failures;
  std::size_t total = 0;

  void expect(bool ok, const std::string& what) {
    ++total;
    if (!ok) failures.push_back(what);
  }
  template <class E, class F>
  void expect_throw(F&& f, const std::string& what) {
    ++total;
    try {
      f();
      failures.push_back(what + " did not throw");
    } catch (const E&) {
    } catch (const std::exception& e) {
      failures.push_back(what + " threw the wrong error: " + e.what());
    }
  }
  std::string summary() const {
    if (failures.empty()) return std::to_string(total) + " checks";
    std::string out = std::to_string(failures.size()) + "/" + std::to_string(total) + " failed: " + failures.front();
    if (failures.size() > 1) out += " (+" + std::to_string(failures.size() - 1) + " more)";
    return out;
  }
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------

Outcome quality_math() {
  const auto start = Clock::now();
  Checks c;
  c.expect(quantize_dwell(0.0) == 0, "quantize(0) == 0");
  c.expect(quantize_dwell(1.0) == 1, "quantize(1) == 1");
  c.expect(quantize_dwell(7.0) == 3, "quantize(7) == 3");
  c.expect(quantize_dwell(5000.0) == 12, "quantize(5000) == 12");
  c.expect(bin_count() == 13, "13 bins");
  c.expect_throw<InputError>([] { quantize_dwell(-1.0); }, "negative dwell");

  DwellHistogram h("n");
  for (double d : {1.0, 1.0, 3.0}) h.accumulate(d);
  const DwellDistribution d = to_distribution(h);
  c.expect(std::abs(d.t[1] - 2.0 / 3.0) < 1e-12 && std::abs(d.t[2] - 1.0 / 3.0) < 1e-12, "t = [0, 2/3, 1/3, ...]");
  c.expect(std::abs(d.quality - 4.0 / 3.0) < 1e-12, "q(1, 1, 3) == 4/3");
  DwellHistogram top("n");
  for (int i = 0; i < 4; ++i) top.accumulate(4096.0);
  c.expect(to_distribution(top).quality == 12.0, "all-maximal q == 12");
  c.expect(std::abs(uniform_distribution(13).quality - 6.0) < 1e-12, "uniform q == 6");
  c.expect_throw<DataError>([] { to_distribution(DwellHistogram("n")); }, "empty histogram");

  std::mt19937_64 rng(2024);
  std::lognormal_distribution<double> dwell(4.0, 1.8);
  std::uniform_int_distribution<int> size(1, 400), shards(1, 8);
  for (int dataset = 0; dataset < 100; ++dataset) {
    std::vector<double> raw(static_cast<std::size_t>(size(rng)));
    for (double& x : raw) x = dwell(rng);
    DwellHistogram whole("n");
    for (double x : raw) whole.accumulate(x);
    const int k = shards(rng);
    std::vector<DwellHistogram> parts(static_cast<std::size_t>(k), DwellHistogram("n"));
    std::uniform_int_distribution<int> which(0, k - 1);
    for (double x : raw) parts[static_cast<std::size_t>(which(rng))].accumulate(x);
    DwellHistogram merged("n");
    for (const auto& p : parts) merged = merge(merged, p);
    const std::string tag = "dataset " + std::to_string(dataset);
    c.expect(merged == whole, tag + " merge == recompute");
    const double q = to_distribution(merged).quality;
    c.expect(q == to_distribution(whole).quality, tag + " same q");
    c.expect(q >= 0.0 && q <= 12.0, tag + " q in [0, 12]");
  }
  const double elapsed = seconds_since(start);
  c.expect(elapsed < 10.0, "runtime under 10 s");
  return {c.failures.empty(), c.summary() + ", " + fmt(elapsed, 2) + " s"};
}

Outcome gradients() {
  const auto start = Clock::now();
  Checks c;
  double worst = 0.0;
  std::size_t scalars = 0;
  for (const auto& [name, r] : testing::op_gradient_checks()) {
    c.expect(r.checked > 0 && r.max_rel_error < 1e-4, name + " " + r.worst);
    worst = std::max(worst, r.max_rel_error);
    scalars += r.checked;
  }
  const auto full = testing::full_loss_gradient_check();
  c.expect(full.checked > 0 && full.max_rel_error < 1e-4, "full loss " + full.worst);
  worst = std::max(worst, full.max_rel_error);
  scalars += full.checked;
  const double elapsed = seconds_since(start);
  c.expect(elapsed < 120.0, "runtime under 2 min");
  return {c.failures.empty(), c.summary() + ", " + std::to_string(scalars) + " scalars, max rel error " +
                                  std::to_string(worst) + ", " + fmt(elapsed, 1) + " s"};
}

Outcome attention() {
  std::string first;
  const std::size_t bad = testing::attention_invariant_failures(500, &first);
  return {bad == 0, bad == 0 ? "500 random fixtures" : std::to_string(bad) + " violations, first: " + first};
}

Outcome metric_oracles() {
  Checks c;
  std::string first;
  const std::size_t mismatches = testing::exhaustive_metric_mismatches(&first);
  c.expect(mismatches == 0, "exhaustive oracle: " + first);

  using S = std::vector<double>;
  using Q = std::vector<std::optional<double>>;
  c.expect(qs_at_k(S{0.9, 0.8, 0.1}, Q{4.0, 8.0, 0.0}, 2) == 6.0, "QS@2 == 6");
  c.expect(qs_at_k(S{0.9, 0.8, 0.1}, Q{std::nullopt, 8.0, 0.0}, 2) == 8.0, "QS@2 skips unknown q");
  c.expect(!qs_at_k(S{0.9, 0.8}, Q{std::nullopt, std::nullopt}, 2).has_value(), "QS@2 undefined without q");
  c.expect(qs_at_k(S{9, 8, 3, 2, 1}, Q{4.0, 5.0, 1.0, 2.0, 3.0}, 2) ==
               qs_at_k(S{9, 8, 1, 3, 2}, Q{4.0, 5.0, 1.0, 2.0, 3.0}, 2),
           "QS@2 ignores order below rank 2");
  c.expect(lq_at_k(S{7, 6, 5, 4, 3, 2, 1}, Q{7.0, 1.0, 6.0, 0.5, std::nullopt, 9.0, 0.2}, 5, 1.0) == 2.0, "LQ@5 == 2");
  c.expect(lq_at_k(S{3, 2, 1}, Q{7.0, 8.0, 9.0}, 5, 1.0) == 0.0, "LQ@5 == 0");

  // cov = 1.5, var_a = 1, var_b = 7/3.
  const double r = pearson(S{1, 2, 3}, S{1, 2, 4});
  c.expect(std::abs(r - 1.5 / std::sqrt(7.0 / 3.0)) <= 1e-9, "PCC == 1.5 / sqrt(7/3)");
  c.expect(std::abs(pearson(S{1, 2, 3}, S{-2, -4, -6}) + 1.0) <= 1e-9, "PCC == -1");
  return {c.failures.empty(), c.summary()};
}

// ---------------------------------------------------------------------------
// Training criteria share one default dataset and reuse runs across checks.

class Experiments {
 public:
  Experiments(fs::path scratch, ExperimentConfig base) : scratch_(std::move(scratch)), base_(std::move(base)) {}

  const Dataset& dataset() {
    if (!loaded_) {
      const auto start = Clock::now();
      const fs::path dir = scratch_ / "default_data";
      fs::remove_all(dir);
      write_synthetic_dataset(GenConfig{}, dir.string());
      dataset_ = load_dataset(dir.string());
      loaded_ = true;
      data_seconds_ = seconds_since(start);
      std::cout << "  generated default dataset in " << fmt(data_seconds_, 1) << " s\n" << std::flush;
    }
    return dataset_;
  }
  double data_seconds() const { return data_seconds_; }

  struct Run {
    MetricReport report;
    std::optional<double> pcc;
    double seconds = 0.0;
  };

  // Cached by the canonical config text.
  const Run& run(const std::string& label, const ExperimentConfig& config) {
    const std::string key = config.to_text();
    auto it = runs_.find(key);
    if (it != runs_.end()) return it->second;
    const Dataset& ds = dataset();
    const auto start = Clock::now();
    ExperimentResult r = run_experiment(ds, config);
    Run out{r.test, r.holdout_pcc, seconds_since(start)};
    std::cout << "  " << label << ": auc=" << fmt(out.report.value("auc")) << " qs5=" << fmt(out.report.value("qs5"))
              << " lq5=" << fmt(out.report.value("lq5"))
              << " pcc=" << (out.pcc ? fmt(*out.pcc) : std::string("n/a")) << " (" << fmt(out.seconds, 0) << " s)\n"
              << std::flush;
    return runs_.emplace(key, std::move(out)).first->second;
  }

  ExperimentConfig full(std::uint64_t seed) const {
    ExperimentConfig c = base_;
    c.seed = seed;
    return c;
  }
  ExperimentConfig click_only(std::uint64_t seed) const {
    ExperimentConfig c = full(seed);
    c.lambda = 0.0;
    c.mu = 0.0;
    c.quality_attention = false;
    return c;
  }
  std::uint64_t base_seed() const { return base_.seed; }

 private:
  fs::path scratch_;
  ExperimentConfig base_;
  Dataset dataset_;
  bool loaded_ = false;
  double data_seconds_ = 0.0;
  std::map<std::string, Run> runs_;
};

Outcome directional(Experiments& ex) {
  const auto start = Clock::now();
  ex.dataset();
  const auto& full = ex.run("full", ex.full(ex.base_seed()));
  const auto& click = ex.run("click-only", ex.click_only(ex.base_seed()));
  const double elapsed = seconds_since(start);

  const double qs_f = full.report.value("qs5"), qs_c = click.report.value("qs5");
  const double lq_f = full.report.value("lq5"), lq_c = click.report.value("lq5");
  const double auc_f = full.report.value("auc"), auc_c = click.report.value("auc");
  const double qs_gain = (qs_f - qs_c) / qs_c, lq_drop = (lq_c - lq_f) / lq_c;
  Checks c;
  c.expect(qs_gain >= 0.03, "QS@5 gain >= 3%");
  c.expect(lq_drop >= 0.03, "LQ@5 reduction >= 3%");
  c.expect(std::abs(auc_f - auc_c) <= 0.02, "|AUC difference| <= 0.02");
  c.expect(elapsed < 900.0, "runtime under 15 min");
  auto pct = [](double x) { return (x >= 0 ? "+" : "") + fmt(100 * x, 2) + "%"; };
  const std::string numbers = "full vs click-only: QS@5 " + fmt(qs_f) + " vs " + fmt(qs_c) + " (" + pct(qs_gain) +
                              "), LQ@5 " + fmt(lq_f) + " vs " + fmt(lq_c) + " (" + pct(-lq_drop) + "), AUC " +
                              fmt(auc_f) + " vs " + fmt(auc_c) + ", " + fmt(elapsed, 0) + " s";
  return {c.failures.empty(), numbers + (c.failures.empty() ? "" : "; " + c.summary())};
}

const std::vector<std::uint64_t> kSeeds{42, 43, 44};

Outcome ablation(Experiments& ex) {
  std::vector<double> d_auc, d_qs;
  for (std::uint64_t seed : kSeeds) {
    const auto& full = ex.run("full seed " + std::to_string(seed), ex.full(seed));
    ExperimentConfig no_lr = ex.full(seed);
    no_lr.mu = 0.0;
    const auto& ablated = ex.run("-L_r seed " + std::to_string(seed), no_lr);
    d_auc.push_back(ablated.report.value("auc") - full.report.value("auc"));
    d_qs.push_back(ablated.report.value("qs5") - full.report.value("qs5"));
  }
  const double m_auc = median(d_auc), m_qs = median(d_qs);
  return {m_auc >= 0.0 && m_qs < 0.0,
          "removing L_r: median dAUC " + fmt(m_auc) + " (want >= 0), median dQS@5 " + fmt(m_qs) + " (want < 0)"};
}

Outcome quality_measures(Experiments& ex) {
  std::vector<double> dist, avg;
  for (std::uint64_t seed : kSeeds) {
    const auto& a = ex.run("full seed " + std::to_string(seed), ex.full(seed));
    ExperimentConfig avg_config = ex.full(seed);
    avg_config.quality_measure = QualityMeasure::kAvgDwell;
    const auto& b = ex.run("avg-dwell labels seed " + std::to_string(seed), avg_config);
    if (!a.pcc || !b.pcc) return {false, "holdout PCC unavailable"};
    dist.push_back(*a.pcc);
    avg.push_back(*b.pcc);
  }
  const double md = median(dist), ma = median(avg);
  return {md > ma, "median holdout PCC: distribution " + fmt(md) + " vs avg dwell " + fmt(ma)};
}

// ---------------------------------------------------------------------------

int sh(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism(const fs::path& scratch, const std::string& cli) {
  const fs::path gen_conf = scratch / "det_gen.conf", train_conf = scratch / "det_train.conf";
  {
    std::ofstream g(gen_conf);
    g << "n_news=300\nn_users=300\nn_impressions=3000\nvocab_size=600\ncandidates_per_impression=10\nseed=5\n";
    std::ofstream t(train_conf);
    t << "embed_dim=16\nhidden_dim=16\nheads=2\nmax_title=12\nmax_body=40\nmax_history=10\nepochs=2\nlr=0.002\n"
         "batch_size=16\nseed=9\n";
  }
  std::vector<std::string> reports, tables, manifests;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const fs::path dir = scratch / ("det_" + std::to_string(attempt));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string q = "'" + cli + "'";
    const std::string data = (dir / "data").string(), run = (dir / "run").string();
    const std::string quiet = " > /dev/null 2>&1";
    if (sh(q + " gen-data --config " + gen_conf.string() + " --out " + data + quiet) != 0 ||
        sh(q + " build-quality --dwell " + data + "/dwell.tsv --out " + (dir / "quality.tsv").string() + quiet) != 0 ||
        sh(q + " train --data " + data + " --config " + train_conf.string() + " --out " + run + quiet) != 0 ||
        sh(q + " eval --data " + data + " --model " + run + " --out " + (dir / "report.txt").string() + quiet) != 0) {
      return {false, "pipeline command failed in attempt " + std::to_string(attempt + 1)};
    }
    reports.push_back(slurp(dir / "report.txt"));
    tables.push_back(slurp(dir / "quality.tsv"));
    manifests.push_back(slurp(fs::path(data) / "manifest.txt"));
  }
  Checks c;
  c.expect(!reports[0].empty(), "report written");
  c.expect(manifests[0] == manifests[1], "identical data manifests");
  c.expect(tables[0] == tables[1], "identical quality tables");
  c.expect(reports[0] == reports[1], "identical metric reports");
  return {c.failures.empty(), c.summary() + "; gen-data, build-quality, train, eval run twice"};
}

Outcome calibration() {
  const GenConfig config;
  const SynthCorpus corpus = generate_corpus(config);
  const SynthBehaviors behaviors = generate_behaviors(config, corpus);
  const QualityTable table = build_quality_table(behaviors.dwell);
  double total = 0.0;
  for (const auto& [id, e] : table.entries()) total += e.distribution.quality;
  const double mean = total / static_cast<double>(table.size());
  return {mean >= 5.2 && mean <= 8.2,
          "mean q " + fmt(mean) + " over " + std::to_string(table.size()) + " news (band [5.2, 8.2])"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::string only, scratch = (fs::temp_directory_path() / "qrec_acceptance").string();
  std::string config_path = std::string(QREC_SOURCE_DIR) + "/configs/desk.conf";
  std::string cli = QREC_CLI_PATH;
  app.add_option("--only", only, "Comma-separated criterion numbers (default: all)");
  app.add_option("--scratch", scratch, "Working directory for generated data");
  app.add_option("--config", config_path, "Training profile for the training criteria");
  app.add_option("--cli", cli, "Path to the qrec tool");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  for (const auto& part : text::split(only, ',')) {
    if (!part.empty()) selected.insert(std::stoi(std::string(part)));
  }
  auto wanted = [&](int n) { return selected.empty() || selected.count(n) > 0; };

  fs::create_directories(scratch);
  Experiments experiments(scratch, ExperimentConfig::from_file(config_path));

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"quality math", quality_math},
      {"gradients", gradients},
      {"attention invariants", attention},
      {"metric oracles", metric_oracles},
      {"quality vs click-only", [&] { return directional(experiments); }},
      {"L_r ablation", [&] { return ablation(experiments); }},
      {"quality measures", [&] { return quality_measures(experiments); }},
      {"determinism", [&] { return determinism(scratch, cli); }},
      {"calibration", calibration},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!wanted(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << n << " (" << criteria[i].first << "): " << (o.pass ? "PASS" : "FAIL") << " - "
              << o.detail << "\n"
              << std::flush;
  }
  return failed == 0 ? 0 : 1;
}
