#pragma once

// News quality from dwell-time distributions.
//
// Each click's dwell time is quantized to floor(log2(1 + min(d, cap))). A
// news item's quality is summarized by the fraction of its clicks landing in
// each bin (the distribution vector t) and by the expected bin index q.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qrec {

inline constexpr double kDefaultDwellCap = 4096.0;
inline constexpr int kDefaultMinClicks = 10;

// Quantized bin of a dwell time. Throws InputError on negative or non-finite
// dwell and on a non-positive cap.
int quantize_dwell(double seconds, double cap = kDefaultDwellCap);

// Number of bins implied by a cap: quantize_dwell(cap) + 1 (13 for 4096).
int bin_count(double cap = kDefaultDwellCap);

// Mergeable per-news count of quantized dwell bins.
class DwellHistogram {
 public:
  explicit DwellHistogram(std::string news_id, double cap = kDefaultDwellCap);

  void accumulate(double seconds);

  const std::string& news_id() const { return news_id_; }
  double cap() const { return cap_; }
  int bins() const { return static_cast<int>(counts_.size()); }
  std::span<const std::int64_t> counts() const { return counts_; }
  std::int64_t total_clicks() const { return total_clicks_; }

  // Element-wise sum. Throws StructuralError on mismatched id, cap or bins.
  friend DwellHistogram merge(const DwellHistogram& a, const DwellHistogram& b);

  bool operator==(const DwellHistogram&) const = default;

 private:
  std::string news_id_;
  double cap_;
  std::vector<std::int64_t> counts_;
  std::int64_t total_clicks_ = 0;
};

// Value-returning form of DwellHistogram::accumulate.
DwellHistogram accumulate(DwellHistogram hist, double seconds);

struct DwellDistribution {
  std::vector<double> t;
  double quality = 0.0;
};

// t_j = counts_j / total, q = sum_i i * t_i. Throws DataError when empty.
DwellDistribution to_distribution(const DwellHistogram& hist);

// Neutral prior used for clicked news without enough dwell records.
DwellDistribution uniform_distribution(int bins);

struct DwellRecord {
  std::string user_id;
  std::string news_id;
  double seconds = 0.0;
};

struct QualityTableOptions {
  int min_clicks = kDefaultMinClicks;
  double cap = kDefaultDwellCap;
};

class QualityTable {
 public:
  struct Entry {
    std::int64_t total_clicks = 0;
    DwellDistribution distribution;
  };

  QualityTable() = default;

  const Entry* find(std::string_view news_id) const;
  std::optional<double> quality(std::string_view news_id) const;
  bool contains(std::string_view news_id) const { return find(news_id) != nullptr; }

  const std::map<std::string, Entry, std::less<>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  int bins() const { return bins_; }
  double cap() const { return cap_; }
  int min_clicks() const { return min_clicks_; }
  // Maximum q over the retained news.
  double max_quality() const { return max_quality_; }
  // Nearest-rank 5th percentile of q over the retained news.
  double low_quality_threshold() const { return low_quality_threshold_; }

  // TSV with a '#'-prefixed header line of key=value fields.
  void save(std::ostream& out) const;
  static QualityTable load(std::istream& in);

  bool operator==(const QualityTable& other) const;

 private:
  friend QualityTable build_quality_table(std::span<const DwellRecord>, QualityTableOptions);

  std::map<std::string, Entry, std::less<>> entries_;
  int bins_ = 0;
  double cap_ = kDefaultDwellCap;
  int min_clicks_ = kDefaultMinClicks;
  double max_quality_ = 0.0;
  double low_quality_threshold_ = 0.0;
};

// Retains exactly the news with >= min_clicks records. Throws DataError when
// nothing survives the filter. Independent of record order.
QualityTable build_quality_table(std::span<const DwellRecord> log, QualityTableOptions options = {});

// Alternative quality measures: mean capped dwell, and mean of
// log2(1 + capped dwell) without flooring. Throw InputError on empty input.
double quality_avg_dwell(std::span<const double> dwells, double cap = kDefaultDwellCap);
double quality_avg_log_dwell(std::span<const double> dwells, double cap = kDefaultDwellCap);

// Nearest-rank percentile (pct in (0, 100]). Throws InputError when empty.
double nearest_rank_percentile(std::vector<double> values, double pct);

}  // namespace qrec
