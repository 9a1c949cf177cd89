#include "qrec/dwell_quality.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "qrec/errors.hpp"
#include "qrec/text_io.hpp"

namespace qrec {

int quantize_dwell(double seconds, double cap) {
  if (!(cap > 0.0) || !std::isfinite(cap)) throw InputError("dwell cap must be positive");
  if (!(seconds >= 0.0) || std::isnan(seconds)) {
    throw InputError("dwell time must be non-negative, got " + text::format_double(seconds));
  }
  // ilogb is the exact floor(log2(x)) for x >= 1.
  return std::ilogb(1.0 + std::min(seconds, cap));
}

int bin_count(double cap) { return quantize_dwell(cap, cap) + 1; }

DwellHistogram::DwellHistogram(std::string news_id, double cap)
    : news_id_(std::move(news_id)), cap_(cap), counts_(static_cast<std::size_t>(bin_count(cap)), 0) {}

void DwellHistogram::accumulate(double seconds) {
  ++counts_[static_cast<std::size_t>(quantize_dwell(seconds, cap_))];
  ++total_clicks_;
}

DwellHistogram accumulate(DwellHistogram hist, double seconds) {
  hist.accumulate(seconds);
  return hist;
}

DwellHistogram merge(const DwellHistogram& a, const DwellHistogram& b) {
  if (a.news_id_ != b.news_id_) {
    throw StructuralError("cannot merge histograms of '" + a.news_id_ + "' and '" + b.news_id_ + "'");
  }
  if (a.cap_ != b.cap_ || a.counts_.size() != b.counts_.size()) {
    throw StructuralError("cannot merge histograms with different bin layouts");
  }
  DwellHistogram out = a;
  for (std::size_t i = 0; i < out.counts_.size(); ++i) out.counts_[i] += b.counts_[i];
  out.total_clicks_ += b.total_clicks_;
  return out;
}

DwellDistribution to_distribution(const DwellHistogram& hist) {
  if (hist.total_clicks() <= 0) {
    throw DataError("empty dwell histogram for '" + hist.news_id() + "'");
  }
  DwellDistribution dist;
  dist.t.resize(static_cast<std::size_t>(hist.bins()));
  const double total = static_cast<double>(hist.total_clicks());
  for (std::size_t j = 0; j < dist.t.size(); ++j) {
    dist.t[j] = static_cast<double>(hist.counts()[j]) / total;
    dist.quality += static_cast<double>(j) * dist.t[j];
  }
  return dist;
}

DwellDistribution uniform_distribution(int bins) {
  DwellDistribution dist;
  dist.t.assign(static_cast<std::size_t>(bins), 1.0 / bins);
  for (int j = 0; j < bins; ++j) dist.quality += j * dist.t[static_cast<std::size_t>(j)];
  return dist;
}

const QualityTable::Entry* QualityTable::find(std::string_view news_id) const {
  auto it = entries_.find(news_id);
  return it == entries_.end() ? nullptr : &it->second;
}

std::optional<double> QualityTable::quality(std::string_view news_id) const {
  const Entry* e = find(news_id);
  if (!e) return std::nullopt;
  return e->distribution.quality;
}

QualityTable build_quality_table(std::span<const DwellRecord> log, QualityTableOptions options) {
  if (options.min_clicks < 1) throw ConfigError("min_clicks must be >= 1");
  std::map<std::string, DwellHistogram, std::less<>> hists;
  for (const DwellRecord& rec : log) {
    auto it = hists.find(rec.news_id);
    if (it == hists.end()) it = hists.emplace(rec.news_id, DwellHistogram(rec.news_id, options.cap)).first;
    it->second.accumulate(rec.seconds);
  }

  QualityTable table;
  table.bins_ = bin_count(options.cap);
  table.cap_ = options.cap;
  table.min_clicks_ = options.min_clicks;
  std::vector<double> qualities;
  for (const auto& [id, hist] : hists) {
    if (hist.total_clicks() < options.min_clicks) continue;
    QualityTable::Entry entry{hist.total_clicks(), to_distribution(hist)};
    qualities.push_back(entry.distribution.quality);
    table.entries_.emplace(id, std::move(entry));
  }
  if (table.entries_.empty()) {
    throw DataError("no news has at least " + std::to_string(options.min_clicks) + " dwell records");
  }
  table.max_quality_ = *std::max_element(qualities.begin(), qualities.end());
  table.low_quality_threshold_ = nearest_rank_percentile(std::move(qualities), 5.0);
  return table;
}

void QualityTable::save(std::ostream& out) const {
  out << "# B=" << bins_ << "\tcap=" << text::format_double(cap_) << "\tmin_clicks=" << min_clicks_
      << "\tQ=" << text::format_double(max_quality_)
      << "\tlow_quality_threshold=" << text::format_double(low_quality_threshold_) << '\n';
  for (const auto& [id, e] : entries_) {
    out << id << '\t' << e.total_clicks << '\t' << text::format_double(e.distribution.quality) << '\t';
    for (std::size_t j = 0; j < e.distribution.t.size(); ++j) {
      if (j) out << ',';
      out << text::format_double(e.distribution.t[j]);
    }
    out << '\n';
  }
}

QualityTable QualityTable::load(std::istream& in) {
  QualityTable table;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
    throw DataError("quality table is missing its header line");
  }
  bool seen_b = false, seen_q = false, seen_thr = false;
  for (std::string_view field : text::split(std::string_view(line).substr(2), '\t')) {
    auto eq = field.find('=');
    if (eq == std::string_view::npos) throw DataError("bad quality table header field");
    std::string_view key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "B") {
      table.bins_ = static_cast<int>(text::parse_int(value, "B"));
      seen_b = true;
    } else if (key == "cap") {
      table.cap_ = text::parse_double(value, "cap");
    } else if (key == "min_clicks") {
      table.min_clicks_ = static_cast<int>(text::parse_int(value, "min_clicks"));
    } else if (key == "Q") {
      table.max_quality_ = text::parse_double(value, "Q");
      seen_q = true;
    } else if (key == "low_quality_threshold") {
      table.low_quality_threshold_ = text::parse_double(value, "low_quality_threshold");
      seen_thr = true;
    } else {
      throw DataError("unknown quality table header key '" + std::string(key) + "'");
    }
  }
  if (!seen_b || !seen_q || !seen_thr) throw DataError("incomplete quality table header");

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = text::split(line, '\t');
    if (fields.size() != 4) throw DataError("quality table row needs 4 fields");
    Entry e;
    e.total_clicks = text::parse_int(fields[1], "total_clicks");
    e.distribution.quality = text::parse_double(fields[2], "q");
    for (std::string_view v : text::split(fields[3], ',')) {
      e.distribution.t.push_back(text::parse_double(v, "t"));
    }
    if (static_cast<int>(e.distribution.t.size()) != table.bins_) {
      throw DataError("quality table row has wrong number of bins");
    }
    table.entries_.emplace(std::string(fields[0]), std::move(e));
  }
  return table;
}

bool QualityTable::operator==(const QualityTable& other) const {
  if (bins_ != other.bins_ || cap_ != other.cap_ || min_clicks_ != other.min_clicks_ ||
      max_quality_ != other.max_quality_ || low_quality_threshold_ != other.low_quality_threshold_ ||
      entries_.size() != other.entries_.size()) {
    return false;
  }
  auto it = other.entries_.begin();
  for (const auto& [id, e] : entries_) {
    if (id != it->first || e.total_clicks != it->second.total_clicks ||
        e.distribution.quality != it->second.distribution.quality ||
        e.distribution.t != it->second.distribution.t) {
      return false;
    }
    ++it;
  }
  return true;
}

double quality_avg_dwell(std::span<const double> dwells, double cap) {
  if (dwells.empty()) throw InputError("average dwell of an empty list");
  double sum = 0.0;
  for (double d : dwells) {
    if (!(d >= 0.0)) throw InputError("dwell time must be non-negative");
    sum += std::min(d, cap);
  }
  return sum / static_cast<double>(dwells.size());
}

double quality_avg_log_dwell(std::span<const double> dwells, double cap) {
  if (dwells.empty()) throw InputError("average log-dwell of an empty list");
  double sum = 0.0;
  for (double d : dwells) {
    if (!(d >= 0.0)) throw InputError("dwell time must be non-negative");
    sum += std::log2(1.0 + std::min(d, cap));
  }
  return sum / static_cast<double>(dwells.size());
}

double nearest_rank_percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw InputError("percentile of an empty list");
  if (!(pct > 0.0 && pct <= 100.0)) throw InputError("percentile must be in (0, 100]");
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

}  // namespace qrec
