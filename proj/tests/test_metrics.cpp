#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "exdr/metrics.hpp"
#include "metric_cases.hpp"

using namespace exdr;
using B = BinaryLabel;

TEST(RetrievalMetrics, HandEnumeratedCases) {
  for (const auto& c : exdr::testing::metric_cases()) {
    const auto ri = retrieval_identification(c.counts);
    ASSERT_EQ(ri.has_value(), c.ri.has_value());
    if (ri) EXPECT_NEAR(*ri, *c.ri, 1e-15);

    const auto re = retrieval_efficiency(c.counts);
    if (c.counts.n_retrieved == 0) {
      EXPECT_FALSE(re.has_value());
      continue;
    }
    ASSERT_TRUE(re.has_value());
    EXPECT_EQ(re->annotation, c.annotation);
    if (c.re) {
      EXPECT_NEAR(re->value, *c.re, 1e-12);
    } else {
      EXPECT_TRUE(std::isnan(re->value));
    }
  }
}

TEST(RetrievalMetrics, EfficiencyIsScaleInvariant) {
  for (const auto& c : exdr::testing::metric_cases()) {
    if (!c.re) continue;
    for (int s : {2, 3, 7}) {
      RunCounts k = c.counts;
      for (int* f : {&k.n_total, &k.n_retrieved, &k.n_err_classified, &k.n_dyn, &k.n_full, &k.n_no}) *f *= s;
      const auto re = retrieval_efficiency(k);
      EXPECT_NEAR(re->value, *c.re, 1e-12);
      EXPECT_EQ(re->annotation, c.annotation);
    }
  }
}

TEST(RetrievalMetrics, InconsistentCountsAreRejected) {
  EXPECT_THROW(retrieval_identification({10, 5, 6, 0, 0, 0}), Error);
  EXPECT_THROW(retrieval_efficiency({10, 11, 0, 0, 0, 0}), Error);
}

TEST(Classification, DocumentedExamples) {
  const std::vector<B> p{B::Fake, B::Fake, B::Real, B::Real};
  const std::vector<B> g{B::Fake, B::Real, B::Fake, B::Real};
  EXPECT_DOUBLE_EQ(accuracy(p, g), 0.5);
  EXPECT_DOUBLE_EQ(f1(p, g, F1Mode::FakePositive), 0.5);
  EXPECT_DOUBLE_EQ(f1(p, g, F1Mode::Macro), 0.5);

  EXPECT_DOUBLE_EQ(accuracy(g, g), 1.0);
  EXPECT_DOUBLE_EQ(f1(g, g, F1Mode::Macro), 1.0);
  EXPECT_DOUBLE_EQ(f1(g, g, F1Mode::FakePositive), 1.0);

  const std::vector<B> all_real(4, B::Real);
  EXPECT_DOUBLE_EQ(accuracy(all_real, g), 0.5);
  EXPECT_DOUBLE_EQ(f1(all_real, g, F1Mode::FakePositive), 0.0);
  // No fake anywhere: that class is scored 1.0.
  EXPECT_DOUBLE_EQ(f1(all_real, all_real, F1Mode::FakePositive), 1.0);
}

TEST(Classification, ShapeErrors) {
  try {
    accuracy({B::Real}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
  try {
    f1({}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Empty);
  }
}

TEST(Classification, MacroIsTheMeanOfPerClassScores) {
  std::mt19937 rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    std::vector<B> p(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng() % 2 ? B::Real : B::Fake;
      g[i] = rng() % 2 ? B::Real : B::Fake;
    }
    auto swap = [](std::vector<B> v) {
      for (auto& x : v) x = opposite(x);
      return v;
    };
    // F1 of Real equals the fake-positive F1 of the label-swapped data.
    const double real_f1 = f1(swap(p), swap(g), F1Mode::FakePositive);
    ASSERT_NEAR(f1(p, g, F1Mode::Macro), 0.5 * (f1(p, g, F1Mode::FakePositive) + real_f1), 1e-15);
    ASSERT_EQ(accuracy(p, p), 1.0);
  }
}

TEST(MetricsJson, MarkersForMissingValues) {
  const std::vector<B> g{B::Fake, B::Real};
  auto j = metrics_json(g, g, {2, 0, 0, 2, 2, 2}, true);
  EXPECT_EQ(j["ri"], "*");
  EXPECT_EQ(j["re"]["annotation"], "n/a");
  EXPECT_EQ(j["trigger_ratio"], 0.0);

  j = metrics_json(g, g, {200, 40, 12, 88, 90, 80}, true);
  EXPECT_DOUBLE_EQ(j["ri"].get<double>(), 0.3);
  EXPECT_DOUBLE_EQ(j["re"]["value"].get<double>(), 4.0);
  EXPECT_EQ(j["re"]["annotation"], "none");
  EXPECT_DOUBLE_EQ(j["trigger_ratio"].get<double>(), 0.2);

  j = metrics_json(g, g, {200, 50, 25, 82, 75, 80}, true);
  EXPECT_EQ(j["re"]["annotation"], "+");
  // Without a full-retrieval reference RE cannot be computed.
  j = metrics_json(g, g, {200, 50, 25, 82, 75, 80}, false);
  EXPECT_EQ(j["re"]["annotation"], "n/a");
}
