#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "qrec/config.hpp"
#include "qrec/dataset.hpp"
#include "qrec/dwell_quality.hpp"
#include "qrec/errors.hpp"
#include "qrec/metrics.hpp"
#include "qrec/pipeline.hpp"
#include "qrec/synth_data.hpp"

namespace py = pybind11;
using namespace qrec;

namespace {

std::vector<std::uint8_t> to_labels(const std::vector<int>& labels) { return {labels.begin(), labels.end()}; }

template <class Config>
Config config_from(const std::map<std::string, std::string>& overrides) {
  Config c;
  for (const auto& [k, v] : overrides) c.set(k, v);
  c.validate();
  return c;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  for (const auto& name : MetricReport::metric_names()) d[py::str(name)] = r.value(name);
  d["lq_threshold"] = r.lq_threshold;
  d["impressions"] = r.impressions();
  return d;
}

}  // namespace

PYBIND11_MODULE(_qrec, m) {
  m.doc() = "Quality-aware news recommendation core";

  auto base = py::register_exception<Error>(m, "QrecError", PyExc_RuntimeError);
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<StructuralError>(m, "StructuralError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());

  m.attr("DEFAULT_DWELL_CAP") = kDefaultDwellCap;

  m.def("quantize_dwell", &quantize_dwell, py::arg("seconds"), py::arg("cap") = kDefaultDwellCap);
  m.def("bin_count", &bin_count, py::arg("cap") = kDefaultDwellCap);

  m.def(
      "dwell_distribution",
      [](const std::vector<double>& seconds, double cap) {
        DwellHistogram h("", cap);
        for (double s : seconds) h.accumulate(s);
        const DwellDistribution d = to_distribution(h);
        return py::make_tuple(d.t, d.quality);
      },
      py::arg("seconds"), py::arg("cap") = kDefaultDwellCap,
      "Bin distribution t and quality q = sum(i * t_i) of a list of dwell times.");

  m.def(
      "quality_table",
      [](const std::vector<std::tuple<std::string, std::string, double>>& records, int min_clicks, double cap) {
        std::vector<DwellRecord> log;
        log.reserve(records.size());
        for (const auto& [user, news, seconds] : records) log.push_back({user, news, seconds});
        const QualityTable t = build_quality_table(log, {min_clicks, cap});
        std::map<std::string, double> out;
        for (const auto& [id, e] : t.entries()) out[id] = e.distribution.quality;
        return out;
      },
      py::arg("records"), py::arg("min_clicks") = kDefaultMinClicks, py::arg("cap") = kDefaultDwellCap,
      "Maps news id to q for news with at least min_clicks (user, news, seconds) records.");

  m.def(
      "auc", [](const std::vector<double>& s, const std::vector<int>& l) { return auc(s, to_labels(l)); },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "mrr", [](const std::vector<double>& s, const std::vector<int>& l) { return mrr(s, to_labels(l)); },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "ndcg",
      [](const std::vector<double>& s, const std::vector<int>& l, std::size_t k) { return ndcg_at_k(s, to_labels(l), k); },
      py::arg("scores"), py::arg("labels"), py::arg("k"));
  m.def(
      "qs_at_k",
      [](const std::vector<double>& s, const std::vector<std::optional<double>>& q, std::size_t k) {
        return qs_at_k(s, q, k);
      },
      py::arg("scores"), py::arg("qualities"), py::arg("k"));
  m.def(
      "lq_at_k",
      [](const std::vector<double>& s, const std::vector<std::optional<double>>& q, std::size_t k, double threshold) {
        return lq_at_k(s, q, k, threshold);
      },
      py::arg("scores"), py::arg("qualities"), py::arg("k"), py::arg("threshold"));
  m.def(
      "pearson", [](const std::vector<double>& a, const std::vector<double>& b) { return pearson(a, b); },
      py::arg("a"), py::arg("b"));

  m.def(
      "generate_dataset",
      [](const std::string& out_dir, const std::map<std::string, std::string>& overrides) {
        py::gil_scoped_release release;
        return write_synthetic_dataset(config_from<GenConfig>(overrides), out_dir);
      },
      py::arg("out_dir"), py::arg("config") = std::map<std::string, std::string>{},
      "Writes a synthetic dataset and returns its manifest text.");

  m.def(
      "default_config", [] { return ExperimentConfig{}.to_text(); }, "Canonical key=value text of the defaults.");

  m.def(
      "train",
      [](const std::string& data_dir, const std::string& out_dir, const std::map<std::string, std::string>& overrides,
         const std::string& config_path) {
        ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::from_file(config_path);
        for (const auto& [k, v] : overrides) c.set(k, v);
        c.validate();
        py::gil_scoped_release release;
        return train_to_dir(data_dir, c, out_dir);
      },
      py::arg("data_dir"), py::arg("out_dir"), py::arg("config") = std::map<std::string, std::string>{},
      py::arg("config_path") = std::string{}, "Trains and writes a run directory; returns its manifest text.");

  m.def(
      "evaluate",
      [](const std::string& data_dir, const std::string& model_dir) {
        MetricReport r;
        {
          py::gil_scoped_release release;
          r = eval_from_dir(data_dir, model_dir);
        }
        return report_dict(r);
      },
      py::arg("data_dir"), py::arg("model_dir"));

  m.def(
      "score_news",
      [](const std::string& data_dir, const std::string& model_dir) {
        std::vector<ScoredNews> ranked;
        {
          py::gil_scoped_release release;
          ranked = score_news_from_dir(data_dir, model_dir);
        }
        py::list out;
        for (const auto& s : ranked) out.append(py::make_tuple(s.id, s.predicted, s.measured, s.latent));
        return out;
      },
      py::arg("data_dir"), py::arg("model_dir"), "(id, predicted, measured, latent) tuples, best first.");
}
