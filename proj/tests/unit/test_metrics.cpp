#include <doctest.h>

#include <cmath>
#include <random>

#include "qrec/errors.hpp"
#include "qrec/metrics.hpp"
#include "test_support.hpp"

using namespace qrec;
using L = std::vector<std::uint8_t>;
using S = std::vector<double>;
using Q = std::vector<std::optional<double>>;

TEST_CASE("auc examples") {
  CHECK(*auc(S{0.9, 0.1}, L{1, 0}) == 1.0);
  CHECK(*auc(S{0.1, 0.9}, L{1, 0}) == 0.0);
  CHECK(*auc(S{0.5, 0.5}, L{1, 0}) == 0.5);
  CHECK_FALSE(auc(S{0.5, 0.2}, L{1, 1}).has_value());
  CHECK_FALSE(auc(S{0.5, 0.2}, L{0, 0}).has_value());
}

TEST_CASE("mrr examples") {
  CHECK(*mrr(S{0.9, 0.2, 0.1}, L{1, 0, 0}) == 1.0);
  CHECK(*mrr(S{0.5, 0.9, 0.1}, L{1, 0, 0}) == 0.5);
  CHECK(*mrr(S{0.9, 0.5, 0.1}, L{1, 0, 1}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK_FALSE(mrr(S{0.9, 0.5}, L{0, 0}).has_value());
  // Ties break toward the lower candidate index.
  CHECK(*mrr(S{0.5, 0.5}, L{0, 1}) == 0.5);
}

TEST_CASE("ndcg examples") {
  CHECK(*ndcg_at_k(S{0.9, 0.8, 0.1}, L{1, 1, 0}, 5) == 1.0);
  CHECK(*ndcg_at_k(S{0.5, 0.9, 0.1, 0.0, -1.0}, L{1, 0, 0, 0, 0}, 5) ==
        doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-15));
  CHECK(*ndcg_at_k(S{0.5, 0.9, 0.1}, L{1, 0, 0}, 1) == 0.0);
  CHECK_FALSE(ndcg_at_k(S{0.5}, L{0}, 5).has_value());
}

TEST_CASE("exhaustive oracle over every small instance") {
  std::string first;
  const std::size_t mismatches = qrec::testing::exhaustive_metric_mismatches(&first);
  INFO(first);
  CHECK(mismatches == 0);
}

TEST_CASE("metrics are invariant under monotone score transforms") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    S s(8);
    L l(8);
    for (std::size_t i = 0; i < 8; ++i) {
      s[i] = n(rng);
      l[i] = static_cast<std::uint8_t>(i % 3 == 0);
    }
    S t = s;
    for (double& x : t) x = std::exp(2.0 * x) + 5.0;
    CHECK(*auc(s, l) == *auc(t, l));
    CHECK(*mrr(s, l) == *mrr(t, l));
    CHECK(*ndcg_at_k(s, l, 5) == *ndcg_at_k(t, l, 5));
    CHECK(*ndcg_at_k(s, l, 5) <= 1.0);
  }
}

TEST_CASE("qs and lq by hand") {
  CHECK(*qs_at_k(S{5, 4, 3, 2, 1, 0}, Q{6.0, 6.0, 6.0, 6.0, 6.0, 1.0}, 5) == 6.0);
  CHECK(*qs_at_k(S{0.9, 0.8, 0.1}, Q{4.0, 8.0, 0.0}, 2) == 6.0);
  // Unknown qualities are skipped, not imputed.
  CHECK(*qs_at_k(S{0.9, 0.8, 0.1}, Q{std::nullopt, 8.0, 0.0}, 2) == 8.0);
  CHECK_FALSE(qs_at_k(S{0.9, 0.8}, Q{std::nullopt, std::nullopt}, 2).has_value());
  // Reordering below rank K does not matter.
  CHECK(*qs_at_k(S{9, 8, 3, 2, 1}, Q{4.0, 5.0, 1.0, 2.0, 3.0}, 2) ==
        *qs_at_k(S{9, 8, 1, 3, 2}, Q{4.0, 5.0, 1.0, 2.0, 3.0}, 2));

  const Q q{7.0, 1.0, 6.0, 0.5, std::nullopt, 9.0, 0.2};
  const S s{7, 6, 5, 4, 3, 2, 1};
  CHECK(lq_at_k(s, q, 5, 1.0) == 2.0);
  CHECK(lq_at_k(S{3, 2, 1}, Q{7.0, 8.0, 9.0}, 5, 1.0) == 0.0);
  for (double threshold : {2.0, 1.0, 0.6, 0.4, 0.1}) {
    CHECK(lq_at_k(s, q, 10, threshold) <= lq_at_k(s, q, 10, threshold + 0.5));
  }
}

TEST_CASE("pearson") {
  const S a{1, 2, 3};
  CHECK(pearson(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson(a, S{-1, -2, -3}) == doctest::Approx(-1.0).epsilon(1e-15));
  // cov = 1.5, var_a = 1, var_b = 7/3: r = 1.5 / sqrt(7/3).
  const double r = pearson(a, S{1, 2, 4});
  CHECK(std::abs(r - 1.5 / std::sqrt(7.0 / 3.0)) <= 1e-9);
  CHECK(std::abs(r - 0.98198) <= 1e-5);
  CHECK_THROWS_AS(pearson(S{1}, S{1}), InputError);
  CHECK_THROWS_AS(pearson(a, S{2, 2, 2}), InputError);
  CHECK_THROWS_AS(pearson(a, S{1, 2}), InputError);
}

TEST_CASE("report averaging, skip counts and merging") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ImpressionResult> results;
  for (int i = 0; i < 40; ++i) {
    ImpressionResult r;
    for (int c = 0; c < 6; ++c) {
      r.scores.push_back(u(rng));
      r.labels.push_back(static_cast<std::uint8_t>(i % 7 == 0 ? 0 : u(rng) < 0.3));
      r.qualities.push_back(u(rng) < 0.2 ? std::nullopt : std::optional<double>(12.0 * u(rng)));
    }
    results.push_back(r);
  }
  const MetricReport all = evaluate_impressions(results, 2.0);
  CHECK(all.impressions() == 40);
  CHECK(all.auc.skipped >= 6);  // every seventh impression has no positive

  double sum = 0.0;
  int n = 0;
  for (const auto& r : results) {
    if (auto v = mrr(r.scores, r.labels)) {
      sum += *v;
      ++n;
    }
  }
  CHECK(all.mrr.mean() == doctest::Approx(sum / n).epsilon(1e-14));

  const std::span<const ImpressionResult> span(results);
  MetricReport left = evaluate_impressions(span.first(15), 2.0);
  left.merge(evaluate_impressions(span.subspan(15), 2.0));
  for (const auto& name : MetricReport::metric_names()) {
    CHECK(left.value(name) == doctest::Approx(all.value(name)).epsilon(1e-14));
  }
  CHECK(left.auc.skipped == all.auc.skipped);
  CHECK_THROWS(all.value("nope"));

  const std::string kv = all.to_key_values();
  CHECK(kv.find("auc=") != std::string::npos);
  CHECK(kv.find("auc_skipped=") != std::string::npos);
  CHECK(kv.find("lq_threshold=") != std::string::npos);
  const std::string tsv = plot_tsv({{"a", all}, {"b", left}});
  CHECK(tsv.rfind("run\tmetric\tvalue\n", 0) == 0);
}
