#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "qrec/dwell_quality.hpp"
#include "qrec/errors.hpp"

using namespace qrec;

TEST_CASE("quantize_dwell bins by floor(log2(1 + d))") {
  CHECK(quantize_dwell(0.0) == 0);
  CHECK(quantize_dwell(1.0) == 1);
  CHECK(quantize_dwell(7.0) == 3);
  CHECK(quantize_dwell(5000.0) == 12);  // capped at 4096, floor(log2(4097)) = 12
  CHECK(bin_count() == 13);
  for (int k = 0; k <= 12; ++k) CHECK(quantize_dwell(std::pow(2.0, k) - 1.0) == k);
  CHECK_THROWS_AS(quantize_dwell(-0.5), InputError);
  CHECK_THROWS_AS(quantize_dwell(std::nan("")), InputError);
}

TEST_CASE("quantize_dwell is monotone") {
  int previous = 0;
  for (double d = 0.0; d < 6000.0; d += 0.37) {
    const int b = quantize_dwell(d);
    CHECK(b >= previous);
    previous = b;
  }
}

TEST_CASE("histogram accumulation") {
  DwellHistogram h("n1");
  h.accumulate(1.0);
  CHECK(h.total_clicks() == 1);
  CHECK(h.counts()[1] == 1);
  h = accumulate(h, 3.0);
  CHECK(h.counts()[1] == 1);
  CHECK(h.counts()[2] == 1);
  CHECK(h.total_clicks() == 2);

  DwellHistogram a("n"), b("n");
  for (double d : {1.0, 1.0, 3.0}) a.accumulate(d);
  for (double d : {3.0, 1.0, 1.0}) b.accumulate(d);
  CHECK(a == b);
}

TEST_CASE("merge is commutative, has an identity and rejects mismatches") {
  DwellHistogram a("n"), b("n"), empty("n");
  for (double d : {0.0, 2.0, 90.0}) a.accumulate(d);
  for (double d : {1.0, 4000.0}) b.accumulate(d);
  CHECK(merge(a, empty) == a);
  CHECK(merge(a, b) == merge(b, a));
  CHECK_THROWS_AS(merge(a, DwellHistogram("other")), StructuralError);
  CHECK_THROWS_AS(merge(a, DwellHistogram("n", 100.0)), StructuralError);
}

TEST_CASE("distribution and quality score by hand") {
  DwellHistogram h("n");
  for (double d : {1.0, 1.0, 3.0}) h.accumulate(d);
  const DwellDistribution dist = to_distribution(h);
  CHECK(dist.t[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(dist.t[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(dist.quality == doctest::Approx(4.0 / 3.0).epsilon(1e-12));

  DwellHistogram top("n");
  for (int i = 0; i < 5; ++i) top.accumulate(4096.0);
  CHECK(to_distribution(top).quality == 12.0);

  CHECK(uniform_distribution(13).quality == doctest::Approx(6.0).epsilon(1e-12));  // 78 / 13
  CHECK_THROWS_AS(to_distribution(DwellHistogram("n")), DataError);
}

TEST_CASE("one more maximal-bin record raises q unless already maximal") {
  std::mt19937_64 rng(3);
  std::lognormal_distribution<double> dwell(3.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    DwellHistogram h("n");
    for (int i = 0; i < 1 + trial % 7; ++i) h.accumulate(dwell(rng));
    const double before = to_distribution(h).quality;
    h.accumulate(1e9);
    const double after = to_distribution(h).quality;
    if (before < 12.0) {
      CHECK(after > before);
    } else {
      CHECK(after == 12.0);
    }
  }
}

TEST_CASE("sharded merge equals recomputation on 100 random datasets") {
  std::mt19937_64 rng(2024);
  std::lognormal_distribution<double> dwell(4.0, 1.8);
  std::uniform_int_distribution<int> size(1, 400), shards(1, 8);
  for (int dataset = 0; dataset < 100; ++dataset) {
    std::vector<double> raw(static_cast<std::size_t>(size(rng)));
    for (double& d : raw) d = std::round(dwell(rng) * 1000.0) / 1000.0;
    DwellHistogram whole("n");
    for (double d : raw) whole.accumulate(d);

    const int k = shards(rng);
    std::vector<DwellHistogram> parts(static_cast<std::size_t>(k), DwellHistogram("n"));
    std::uniform_int_distribution<int> which(0, k - 1);
    for (double d : raw) parts[static_cast<std::size_t>(which(rng))].accumulate(d);
    DwellHistogram merged("n");
    for (const auto& p : parts) merged = merge(merged, p);

    CHECK(merged == whole);
    const auto a = to_distribution(merged), b = to_distribution(whole);
    CHECK(a.t == b.t);
    CHECK(a.quality == b.quality);
    CHECK(a.quality >= 0.0);
    CHECK(a.quality <= 12.0);
    double mass = 0.0, q = 0.0;
    for (std::size_t j = 0; j < a.t.size(); ++j) {
      mass += a.t[j];
      q += static_cast<double>(j) * a.t[j];
    }
    CHECK(std::abs(mass - 1.0) <= 1e-9);
    CHECK(std::abs(q - a.quality) <= 1e-9);
  }
}

namespace {

std::vector<DwellRecord> records(const std::string& news, std::initializer_list<double> dwell) {
  std::vector<DwellRecord> out;
  for (double d : dwell) out.push_back({"u", news, d});
  return out;
}

}  // namespace

TEST_CASE("quality table filtering and Q") {
  auto log = records("a", {1, 1, 1, 1, 1, 1, 1, 1, 1, 1});
  QualityTable t = build_quality_table(log);
  REQUIRE(t.contains("a"));
  CHECK(*t.quality("a") == 1.0);
  CHECK(t.max_quality() == 1.0);

  auto nine = records("b", {1, 1, 1, 1, 1, 1, 1, 1, 1});
  CHECK_THROWS_AS(build_quality_table(nine), DataError);
  nine.insert(nine.end(), log.begin(), log.end());
  t = build_quality_table(nine);
  CHECK_FALSE(t.contains("b"));
  CHECK(t.size() == 1);

  // q = 2 (all dwell 3) and q = 8 (all dwell 255).
  auto two = records("lo", {3, 3, 3, 3, 3, 3, 3, 3, 3, 3});
  auto eight = records("hi", {255, 255, 255, 255, 255, 255, 255, 255, 255, 255});
  two.insert(two.end(), eight.begin(), eight.end());
  t = build_quality_table(two);
  CHECK(*t.quality("lo") == 2.0);
  CHECK(*t.quality("hi") == 8.0);
  CHECK(t.max_quality() == 8.0);
  for (const auto& [id, e] : t.entries()) CHECK(t.max_quality() >= e.distribution.quality);
}

TEST_CASE("quality table ignores record order and round-trips through text") {
  std::mt19937_64 rng(5);
  std::lognormal_distribution<double> dwell(3.0, 1.5);
  std::vector<DwellRecord> log;
  for (int n = 0; n < 30; ++n) {
    for (int i = 0; i < 5 + n; ++i) log.push_back({"u", "n" + std::to_string(n), std::round(dwell(rng))});
  }
  const QualityTable a = build_quality_table(log);
  std::shuffle(log.begin(), log.end(), rng);
  const QualityTable b = build_quality_table(log);
  CHECK(a == b);

  std::stringstream buffer;
  a.save(buffer);
  CHECK(QualityTable::load(buffer) == a);
  for (const auto& [id, e] : a.entries()) CHECK(e.total_clicks >= 10);
}

TEST_CASE("alternative quality measures") {
  const std::vector<double> fours{4, 4}, one_three{1, 3}, capped{0, 4096};
  CHECK(quality_avg_dwell(fours) == 4.0);
  CHECK(quality_avg_dwell(one_three) == 2.0);
  CHECK(quality_avg_dwell(capped) == 2048.0);
  const std::vector<double> zero{0}, ones{1, 1}, three_seven{3, 7};
  CHECK(quality_avg_log_dwell(zero) == 0.0);
  CHECK(quality_avg_log_dwell(ones) == 1.0);
  CHECK(quality_avg_log_dwell(three_seven) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK_THROWS_AS(quality_avg_dwell(std::vector<double>{}), InputError);
  CHECK_THROWS_AS(quality_avg_log_dwell(std::vector<double>{}), InputError);
}

TEST_CASE("nearest-rank percentile") {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  CHECK(nearest_rank_percentile(v, 5.0) == 5.0);
  CHECK(nearest_rank_percentile({3.0, 1.0, 2.0}, 5.0) == 1.0);
  CHECK(nearest_rank_percentile({3.0, 1.0, 2.0}, 100.0) == 3.0);
  CHECK_THROWS_AS(nearest_rank_percentile({}, 5.0), InputError);
}
