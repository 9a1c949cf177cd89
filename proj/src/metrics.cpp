#include "qrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "qrec/errors.hpp"
#include "qrec/text_io.hpp"

namespace qrec {

namespace {

void require_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw InputError(std::string(what) + ": scores and labels differ in length");
}

}  // namespace

std::vector<std::size_t> rank_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require_aligned(scores.size(), labels.size(), "auc");
  double wins = 0.0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i]) ++pos;
    else ++neg;
  }
  if (pos == 0 || neg == 0) return std::nullopt;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

std::optional<double> mrr(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require_aligned(scores.size(), labels.size(), "mrr");
  const auto order = rank_order(scores);
  double sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]]) {
      sum += 1.0 / static_cast<double>(r + 1);
      ++pos;
    }
  }
  if (pos == 0) return std::nullopt;
  return sum / static_cast<double>(pos);
}

std::optional<double> ndcg_at_k(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t k) {
  require_aligned(scores.size(), labels.size(), "ndcg");
  const auto order = rank_order(scores);
  const std::size_t top = std::min(k, order.size());
  const auto pos = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
  if (pos == 0) return std::nullopt;
  double dcg = 0.0, ideal = 0.0;
  for (std::size_t r = 0; r < top; ++r) {
    const double discount = 1.0 / std::log2(static_cast<double>(r) + 2.0);
    if (labels[order[r]]) dcg += discount;
    if (r < pos) ideal += discount;
  }
  return dcg / ideal;
}

std::optional<double> qs_at_k(std::span<const double> scores, std::span<const std::optional<double>> qualities,
                              std::size_t k) {
  require_aligned(scores.size(), qualities.size(), "qs_at_k");
  const auto order = rank_order(scores);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
    if (const auto& q = qualities[order[r]]) {
      sum += *q;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

double lq_at_k(std::span<const double> scores, std::span<const std::optional<double>> qualities, std::size_t k,
               double threshold) {
  require_aligned(scores.size(), qualities.size(), "lq_at_k");
  const auto order = rank_order(scores);
  double n = 0.0;
  for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
    const auto& q = qualities[order[r]];
    if (q && *q <= threshold) n += 1.0;
  }
  return n;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("pearson: inputs differ in length");
  if (a.size() < 2) throw InputError("pearson: need at least two points");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw InputError("pearson: zero variance, correlation undefined");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

void MetricReport::add(const ImpressionResult& r) {
  if (r.scores.size() != r.labels.size() || r.scores.size() != r.qualities.size()) {
    throw InputError("impression result fields differ in length");
  }
  auc.add(qrec::auc(r.scores, r.labels));
  mrr.add(qrec::mrr(r.scores, r.labels));
  ndcg5.add(ndcg_at_k(r.scores, r.labels, 5));
  ndcg10.add(ndcg_at_k(r.scores, r.labels, 10));
  qs5.add(qs_at_k(r.scores, r.qualities, 5));
  qs10.add(qs_at_k(r.scores, r.qualities, 10));
  lq5.add(lq_at_k(r.scores, r.qualities, 5, lq_threshold));
  lq10.add(lq_at_k(r.scores, r.qualities, 10, lq_threshold));
}

void MetricReport::merge(const MetricReport& other) {
  auto m = [](MetricValue& a, const MetricValue& b) {
    a.sum += b.sum;
    a.count += b.count;
    a.skipped += b.skipped;
  };
  m(auc, other.auc);
  m(mrr, other.mrr);
  m(ndcg5, other.ndcg5);
  m(ndcg10, other.ndcg10);
  m(qs5, other.qs5);
  m(qs10, other.qs10);
  m(lq5, other.lq5);
  m(lq10, other.lq10);
}

const std::vector<std::string>& MetricReport::metric_names() {
  static const std::vector<std::string> names{"auc", "mrr", "ndcg5", "ndcg10", "qs5", "qs10", "lq5", "lq10"};
  return names;
}

double MetricReport::value(const std::string& name) const {
  if (name == "auc") return auc.mean();
  if (name == "mrr") return mrr.mean();
  if (name == "ndcg5") return ndcg5.mean();
  if (name == "ndcg10") return ndcg10.mean();
  if (name == "qs5") return qs5.mean();
  if (name == "qs10") return qs10.mean();
  if (name == "lq5") return lq5.mean();
  if (name == "lq10") return lq10.mean();
  throw InputError("unknown metric '" + name + "'");
}

namespace {
const MetricValue& metric_field(const MetricReport& r, const std::string& name) {
  if (name == "auc") return r.auc;
  if (name == "mrr") return r.mrr;
  if (name == "ndcg5") return r.ndcg5;
  if (name == "ndcg10") return r.ndcg10;
  if (name == "qs5") return r.qs5;
  if (name == "qs10") return r.qs10;
  if (name == "lq5") return r.lq5;
  return r.lq10;
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}
}  // namespace

std::string MetricReport::to_key_values() const {
  std::ostringstream out;
  out << "impressions=" << impressions() << '\n';
  out << "lq_threshold=" << text::format_double(lq_threshold) << '\n';
  for (const auto& name : metric_names()) {
    const MetricValue& m = metric_field(*this, name);
    out << name << '=' << text::format_double(m.mean()) << '\n';
    out << name << "_n=" << m.count << '\n';
    out << name << "_skipped=" << m.skipped << '\n';
  }
  return out.str();
}

std::string MetricReport::to_table() const {
  return comparison_table({{"value", *this}});
}

MetricReport evaluate_impressions(std::span<const ImpressionResult> results, double lq_threshold) {
  MetricReport report;
  report.lq_threshold = lq_threshold;
  for (const auto& r : results) report.add(r);
  return report;
}

std::string comparison_table(const std::vector<std::pair<std::string, MetricReport>>& runs) {
  std::size_t label_width = 6;
  for (const auto& [name, _] : runs) label_width = std::max(label_width, name.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(label_width)) << "run";
  for (const auto& m : MetricReport::metric_names()) out << std::right << std::setw(10) << m;
  out << '\n';
  for (const auto& [name, report] : runs) {
    out << std::left << std::setw(static_cast<int>(label_width)) << name;
    for (const auto& m : MetricReport::metric_names()) {
      out << std::right << std::setw(10) << fixed(report.value(m), m[0] == 'l' ? 5 : 4);
    }
    out << '\n';
  }
  return out.str();
}

std::string plot_tsv(const std::vector<std::pair<std::string, MetricReport>>& runs) {
  std::ostringstream out;
  out << "run\tmetric\tvalue\n";
  for (const auto& [name, report] : runs) {
    for (const auto& m : MetricReport::metric_names()) {
      out << name << '\t' << m << '\t' << text::format_double(report.value(m)) << '\n';
    }
  }
  return out.str();
}

}  // namespace qrec
