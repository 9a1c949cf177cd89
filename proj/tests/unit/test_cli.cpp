#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "qrec/config.hpp"
#include "qrec/dwell_quality.hpp"
#include "qrec/pipeline.hpp"
#include "qrec/text_io.hpp"

using namespace qrec;
namespace fs = std::filesystem;

namespace {

struct Workdir {
  fs::path root;
  Workdir() {
    root = fs::temp_directory_path() / "qrec_unit_cli";
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workdir() { fs::remove_all(root); }
  std::string operator/(const std::string& name) const { return (root / name).string(); }
};

// Runs the command line tool, capturing stdout into `out` when given.
int run_cli(const std::string& args, const Workdir& w, std::string* out = nullptr) {
  const std::string stdout_path = w / "stdout.txt";
  const std::string cmd = std::string(QREC_CLI_PATH) + " " + args + " > " + stdout_path + " 2> " + (w / "stderr.txt");
  const int status = std::system(cmd.c_str());
  if (out) *out = text::read_file(stdout_path);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string value_of(const std::string& body, const std::string& key) {
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
  }
  return {};
}

const char* kGen =
    "n_news=120\nn_users=100\nn_impressions=1200\nvocab_size=300\ncandidates_per_impression=10\nseed=3\n";
const char* kTrain =
    "embed_dim=8\nhidden_dim=8\nheads=2\nmax_title=10\nmax_body=20\nmax_history=8\nlr=0.003\nbatch_size=32\n"
    "epochs=1\nseed=5\ndropout=0.1\n";

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  Workdir w;
  CHECK(run_cli("", w) == 2);
  CHECK(run_cli("frobnicate", w) == 2);
  CHECK(run_cli("gen-data --config " + (w / "missing.conf") + " --out " + (w / "d"), w) == 2);
  text::write_file(w / "bad.conf", "n_news=10\nwidgets=3\n");
  CHECK(run_cli("gen-data --config " + (w / "bad.conf") + " --out " + (w / "d"), w) == 2);
  text::write_file(w / "gen.conf", kGen);
  CHECK(run_cli("gen-data --config " + (w / "gen.conf") + " --out " + (w / "d") + " --set colour=blue", w) == 2);
}

TEST_CASE("gen-data is reproducible and reports its config") {
  Workdir w;
  text::write_file(w / "gen.conf", kGen);
  std::string a, b;
  REQUIRE(run_cli("gen-data --config " + (w / "gen.conf") + " --out " + (w / "d1"), w, &a) == 0);
  REQUIRE(run_cli("gen-data --config " + (w / "gen.conf") + " --out " + (w / "d2"), w, &b) == 0);
  CHECK(value_of(a, "manifest_hash") == value_of(b, "manifest_hash"));
  CHECK_FALSE(value_of(a, "manifest_hash").empty());
  CHECK(value_of(a, "n_news") == "120");
  CHECK(value_of(a, "n_users") == "100");
  CHECK(value_of(a, "seed") == "3");
  CHECK(value_of(a, "gen.n_news") == "120");
  for (const char* f : {"news.tsv", "behaviors.tsv", "dwell.tsv", "truth.tsv", "manifest.txt"}) {
    CHECK(fs::exists(fs::path(w / "d1") / f));
  }
  CHECK(text::read_file(w / "d1/news.tsv") == text::read_file(w / "d2/news.tsv"));
}

TEST_CASE("build-quality defaults, round trip and empty input") {
  Workdir w;
  text::write_file(w / "gen.conf", kGen);
  REQUIRE(run_cli("gen-data --config " + (w / "gen.conf") + " --out " + (w / "d"), w) == 0);
  std::string out;
  REQUIRE(run_cli("build-quality --dwell " + (w / "d/dwell.tsv") + " --out " + (w / "q.tsv"), w, &out) == 0);
  CHECK(value_of(out, "bins") == "13");
  const std::string manifest = text::read_file(w / "q.tsv.manifest");
  CHECK(value_of(manifest, "min_clicks") == "10");
  CHECK(value_of(manifest, "cap") == "4096");

  const QualityTable direct = build_quality_table(parse_dwell(text::read_file(w / "d/dwell.tsv")));
  std::istringstream saved(text::read_file(w / "q.tsv"));
  CHECK(QualityTable::load(saved) == direct);

  text::write_file(w / "empty.tsv", "");
  CHECK(run_cli("build-quality --dwell " + (w / "empty.tsv") + " --out " + (w / "e.tsv"), w) == 3);
}

TEST_CASE("train, eval, score-news, ablate and plot") {
  Workdir w;
  text::write_file(w / "gen.conf", kGen);
  text::write_file(w / "train.conf", kTrain);
  const std::string data = w / "d";
  REQUIRE(run_cli("gen-data --config " + (w / "gen.conf") + " --out " + data, w) == 0);

  CHECK(run_cli("eval --data " + data + " --model " + (w / "nothing"), w) == 3);
  CHECK(run_cli("train --data " + data + " --config " + (w / "train.conf") + " --out " + (w / "r") + " --set heads=3", w) == 2);

  REQUIRE(run_cli("train --data " + data + " --config " + (w / "train.conf") + " --out " + (w / "run"), w) == 0);
  for (const char* f : {"model.ckpt", "config.conf", "trace.tsv", "quality.tsv", "manifest.txt"}) {
    CHECK(fs::exists(fs::path(w / "run") / f));
  }
  const std::string manifest = text::read_file(w / "run/manifest.txt");
  CHECK(value_of(manifest, "config.hidden_dim") == "8");
  CHECK(value_of(manifest, "seed") == "5");

  REQUIRE(run_cli("eval --data " + data + " --model " + (w / "run") + " --out " + (w / "e1.txt"), w) == 0);
  REQUIRE(run_cli("eval --data " + data + " --model " + (w / "run") + " --out " + (w / "e2.txt"), w) == 0);
  const std::string e1 = text::read_file(w / "e1.txt");
  CHECK(e1 == text::read_file(w / "e2.txt"));
  CHECK_FALSE(value_of(e1, "auc").empty());

  std::string ranked;
  REQUIRE(run_cli("score-news --data " + data + " --model " + (w / "run") + " --top 3", w, &ranked) == 0);
  CHECK(ranked.find("highest\t1\t") != std::string::npos);
  CHECK(ranked.find("lowest\t") != std::string::npos);

  REQUIRE(run_cli("ablate --data " + data + " --config " + (w / "train.conf") + " --out " + (w / "ab"), w) == 0);
  for (const char* f : {"full.report", "no_quality_attention.report", "no_quality_loss.report",
                        "no_regularizer.report", "comparison.txt", "comparison.tsv", "manifest.txt"}) {
    CHECK(fs::exists(fs::path(w / "ab") / f));
  }
  // The full ablation arm is the plain training run.
  const std::string full = text::read_file(w / "ab/full.report");
  for (const auto& name : MetricReport::metric_names()) CHECK(value_of(full, name) == value_of(e1, name));

  REQUIRE(run_cli("plot " + (w / "ab/full.report") + " " + (w / "ab/no_regularizer.report") + " --out " + (w / "plot.tsv"), w) == 0);
  const std::string tsv = text::read_file(w / "plot.tsv");
  CHECK(tsv.find("full\tauc\t") != std::string::npos);
  CHECK(tsv.find("no_regularizer\tqs5\t") != std::string::npos);
}

TEST_CASE("ablation and sweep grids") {
  const ExperimentConfig base;
  const auto ab = ablation_configs(base);
  REQUIRE(ab.size() == 4);
  CHECK(ab[0].second.to_text() == base.to_text());
  CHECK_FALSE(ab[1].second.quality_attention);
  CHECK(ab[2].second.lambda == 0.0);
  CHECK(ab[3].second.mu == 0.0);
  const auto sweep = sweep_configs(base);
  CHECK(sweep.size() == 25);
  CHECK(sweep.front().second.lambda == 0.0);
  CHECK(sweep.back().second.lambda == 4.0);
  CHECK(sweep.back().second.mu == 1.0);
}
