#include "qrec/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "qrec/errors.hpp"
#include "qrec/manifest.hpp"
#include "qrec/text_io.hpp"

namespace qrec {

namespace fs = std::filesystem;

MetricReport evaluate_test(const QualityRecModel& model, const PreparedData& data) {
  const double threshold = low_quality_threshold(data.split.test, data.quality);
  return evaluate(model, data.features, data.split.test, data.quality, threshold);
}

std::optional<double> holdout_pcc(const QualityRecModel& model, const Dataset& ds, const PreparedData& data) {
  if (ds.truth.empty()) return std::nullopt;
  std::vector<std::size_t> news;
  std::vector<double> latent(ds.corpus.size(), 0.0);
  for (std::size_t i = 0; i < ds.corpus.size(); ++i) {
    if (ds.truth[i]) latent[i] = ds.truth[i]->quality;
    if (data.holdout[i] && ds.truth[i]) news.push_back(i);
  }
  if (news.size() < 2) return std::nullopt;
  const std::vector<double> predicted = model.predict_quality_all(data.features);
  return quality_pcc(predicted, latent, news);
}

ExperimentResult run_experiment(const Dataset& ds, const ExperimentConfig& config, std::ostream* log) {
  const PreparedData data = prepare_data(ds, config);
  TrainOptions options;
  options.log = log;
  TrainResult trained = train(data, config, options);
  ExperimentResult result;
  result.test = evaluate_test(*trained.model, data);
  result.holdout_pcc = holdout_pcc(*trained.model, ds, data);
  result.trace = std::move(trained.trace);
  result.model = std::move(trained.model);
  return result;
}

std::vector<std::pair<std::string, ExperimentConfig>> ablation_configs(const ExperimentConfig& base) {
  std::vector<std::pair<std::string, ExperimentConfig>> out;
  out.emplace_back("full", base);
  ExperimentConfig no_att = base;
  no_att.quality_attention = false;
  out.emplace_back("no_quality_attention", no_att);
  ExperimentConfig no_lq = base;
  no_lq.lambda = 0.0;
  out.emplace_back("no_quality_loss", no_lq);
  ExperimentConfig no_lr = base;
  no_lr.mu = 0.0;
  out.emplace_back("no_regularizer", no_lr);
  return out;
}

std::vector<std::pair<std::string, ExperimentConfig>> sweep_configs(const ExperimentConfig& base) {
  std::vector<std::pair<std::string, ExperimentConfig>> out;
  for (double lambda : {0.0, 1.0, 2.0, 3.0, 4.0}) {
    for (double mu : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      ExperimentConfig c = base;
      c.lambda = lambda;
      c.mu = mu;
      out.emplace_back("lambda=" + text::format_double(lambda) + ",mu=" + text::format_double(mu), c);
    }
  }
  return out;
}

QualityTable build_quality_file(const std::string& dwell_path, const std::string& out_path,
                                QualityTableOptions options) {
  const std::string body = text::read_file(dwell_path);
  const auto records = parse_dwell(body);
  if (records.empty()) throw DataError("dwell log " + dwell_path + " is empty");
  QualityTable table = build_quality_table(records, options);
  std::ostringstream out;
  table.save(out);
  text::write_file(out_path, out.str());
  Manifest m;
  m.set("command", "build-quality");
  m.set("input", dwell_path);
  m.add_file("input", body);
  m.set("min_clicks", std::to_string(options.min_clicks));
  m.set("cap", text::format_double(options.cap));
  m.set("news", std::to_string(table.size()));
  m.add_file(fs::path(out_path).filename().string(), out.str());
  m.write(out_path + ".manifest");
  return table;
}

std::string train_to_dir(const std::string& data_dir, const ExperimentConfig& config, const std::string& out_dir,
                         std::ostream* log) {
  const Dataset ds = load_dataset(data_dir);
  const PreparedData data = prepare_data(ds, config);
  TrainOptions options;
  options.log = log;
  TrainResult trained = train(data, config, options);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  std::ostringstream ckpt;
  trained.model->parameters().save(ckpt);
  std::ostringstream quality;
  data.table.save(quality);
  const std::vector<std::pair<std::string, std::string>> files{
      {"model.ckpt", ckpt.str()},
      {"config.conf", config.to_text()},
      {"trace.tsv", format_trace(trained.trace)},
      {"quality.tsv", quality.str()},
  };
  Manifest m;
  m.set("command", "train");
  m.set("data", data_dir);
  m.set("seed", std::to_string(config.seed));
  m.set("config_hash", config.hash());
  m.set("parameters", std::to_string(trained.model->parameters().scalar_count()));
  m.set("train_impressions", std::to_string(data.split.train.size()));
  m.set("test_impressions", std::to_string(data.split.test.size()));
  m.set("quality_news", std::to_string(data.table.size()));
  m.set("Q", text::format_double(data.max_quality));
  const fs::path manifest_in = fs::path(data_dir) / "manifest.txt";
  if (fs::exists(manifest_in)) m.add_file("data_manifest", text::read_file(manifest_in.string()));
  m.set_config("config", config.to_text());
  for (const auto& [name, body] : files) {
    text::write_file((dir / name).string(), body);
    m.add_file(name, body);
  }
  m.write((dir / "manifest.txt").string());
  return m.to_text();
}

namespace {

struct LoadedRun {
  ExperimentConfig config;
  Dataset ds;
  PreparedData data;
  std::unique_ptr<QualityRecModel> model;
};

LoadedRun load_run(const std::string& data_dir, const std::string& model_dir) {
  const fs::path dir(model_dir);
  if (!fs::exists(dir / "model.ckpt")) throw DataError("no checkpoint at " + (dir / "model.ckpt").string());
  if (!fs::exists(dir / "config.conf")) throw DataError("no config.conf next to the checkpoint in " + model_dir);
  LoadedRun run;
  run.config = ExperimentConfig::from_file((dir / "config.conf").string());
  run.ds = load_dataset(data_dir);
  run.data = prepare_data(run.ds, run.config);
  run.model = make_model(run.data, run.config);
  run.model->load((dir / "model.ckpt").string());
  return run;
}

}  // namespace

MetricReport eval_from_dir(const std::string& data_dir, const std::string& model_dir) {
  LoadedRun run = load_run(data_dir, model_dir);
  return evaluate_test(*run.model, run.data);
}

std::vector<ScoredNews> score_news_from_dir(const std::string& data_dir, const std::string& model_dir) {
  LoadedRun run = load_run(data_dir, model_dir);
  const std::vector<double> predicted = run.model->predict_quality_all(run.data.features);
  const double top = static_cast<double>(run.data.table.bins() - 1);
  std::vector<ScoredNews> out;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    ScoredNews s;
    s.id = run.ds.corpus.ids[i];
    s.predicted = std::clamp(predicted[i], 0.0, top);
    s.measured = run.data.quality[i];
    if (!run.ds.truth.empty() && run.ds.truth[i]) s.latent = run.ds.truth[i]->quality;
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.predicted > b.predicted; });
  return out;
}

std::string format_scored_news(const std::vector<ScoredNews>& ranked, std::size_t top) {
  std::ostringstream out;
  auto row = [&](const char* group, std::size_t rank, const ScoredNews& s) {
    out << group << '\t' << rank << '\t' << s.id << '\t' << text::format_double(s.predicted) << '\t'
        << (s.measured ? text::format_double(*s.measured) : "-") << '\t'
        << (s.latent ? text::format_double(*s.latent) : "-") << '\n';
  };
  out << "group\trank\tnews_id\tpredicted\tmeasured\tlatent\n";
  const std::size_t n = std::min(top, ranked.size());
  for (std::size_t i = 0; i < n; ++i) row("highest", i + 1, ranked[i]);
  for (std::size_t i = 0; i < n; ++i) row("lowest", ranked.size() - i, ranked[ranked.size() - 1 - i]);
  return out.str();
}

MetricReport parse_report(const std::string& body) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : parse_key_values(body)) kv[k] = v;
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("metric report lacks '" + key + "'");
    return it->second;
  };
  MetricReport r;
  if (kv.count("lq_threshold")) r.lq_threshold = text::parse_double(kv["lq_threshold"], "lq_threshold");
  const std::vector<std::pair<std::string, MetricValue*>> fields{
      {"auc", &r.auc},   {"mrr", &r.mrr},   {"ndcg5", &r.ndcg5}, {"ndcg10", &r.ndcg10},
      {"qs5", &r.qs5},   {"qs10", &r.qs10}, {"lq5", &r.lq5},     {"lq10", &r.lq10},
  };
  for (const auto& [name, field] : fields) {
    const double mean = text::parse_double(get(name), name);
    field->count = kv.count(name + "_n") ? text::parse_int(kv[name + "_n"], name + "_n") : 1;
    field->skipped = kv.count(name + "_skipped") ? text::parse_int(kv[name + "_skipped"], name + "_skipped") : 0;
    field->sum = mean * static_cast<double>(field->count);
  }
  return r;
}

std::string read_config_file(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("config file " + path + " does not exist");
  return text::read_file(path);
}

}  // namespace qrec
