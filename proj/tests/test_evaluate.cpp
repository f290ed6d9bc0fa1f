#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "cropdnn/evaluate.hpp"
#include "test_util.hpp"

using namespace cropdnn;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(Metrics, Basics) {
  Vector t = vec({1, 2, 3, 5});
  auto m = metrics(t, t);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_NEAR(m.pearson_percent, 100.0, 1e-12);
  EXPECT_NEAR(rmse(vec({0, 0}), vec({3, 4})), std::sqrt(12.5), 1e-15);
  auto c = metrics(Vector::Constant(4, 2.0), t);
  EXPECT_TRUE(c.degenerate);
  EXPECT_EQ(c.pearson_percent, 0.0);
  EXPECT_THROW(metrics(vec({1, 2}), vec({1, 2, 3})), Error);
  EXPECT_THROW(rmse(Vector(0), Vector(0)), Error);
}

TEST(Metrics, Invariances) {
  Vector p = testutil::gaussian(50, 1, 1).col(0), t = testutil::gaussian(50, 1, 2).col(0) + 0.5 * p;
  auto base = metrics(p, t);
  // Paired permutation.
  std::vector<Index> perm(50);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
  Vector pp(50), tp(50);
  for (Index i = 0; i < 50; ++i) pp[i] = p[perm[static_cast<std::size_t>(i)]], tp[i] = t[perm[static_cast<std::size_t>(i)]];
  EXPECT_NEAR(metrics(pp, tp).rmse, base.rmse, 1e-12);
  // Positive affine maps leave correlation unchanged.
  EXPECT_NEAR(metrics(Vector(3.0 * p.array() + 7.0), t).pearson_percent, base.pearson_percent, 1e-10);
  EXPECT_NEAR(metrics(p, Vector(0.2 * t.array() - 1.0)).pearson_percent, base.pearson_percent, 1e-10);
  EXPECT_NEAR(metrics(Vector(-p), t).pearson_percent, -base.pearson_percent, 1e-10);
}

TEST(VarianceIdentity, Cases) {
  Vector y = testutil::gaussian(30, 1, 4).col(0) * 20.0;
  auto c = variance_identity_check(y, Vector::Constant(30, 7.0));
  EXPECT_NEAR(c.var_difference, sample_variance(y), 1e-12 * sample_variance(y));
  EXPECT_EQ(variance_identity_check(y, y).var_difference, 0.0);
  for (std::uint64_t s = 0; s < 100; ++s) {
    Vector a = testutil::gaussian(40, 1, 100 + s).col(0) * 25.0 + Vector::Constant(40, 116.0);
    Vector b = 0.6 * a + testutil::gaussian(40, 1, 300 + s).col(0) * 10.0;
    EXPECT_LT(variance_identity_check(a, b).relative_gap, 1e-10);
  }
  EXPECT_THROW(variance_identity_check(vec({1}), vec({1})), Error);
}

TEST(PerLocation, GroupsAndThreshold) {
  Vector p = vec({1, 2, 3, 4, 5, 6}), t = vec({1, 2, 0, 4, 5, 10});
  std::vector<std::string> loc = {"B", "A", "B", "A", "C", "C"};
  auto table = per_location_errors(p, t, loc, 2.5);
  ASSERT_EQ(table.rows.size(), 3u);
  EXPECT_EQ(table.rows[0].location, "A");
  EXPECT_EQ(table.rows[0].rmse, 0.0);
  EXPECT_NEAR(table.rows[1].rmse, std::sqrt(4.5), 1e-15);
  EXPECT_NEAR(table.rows[2].rmse, std::sqrt(8.0), 1e-15);
  EXPECT_EQ(table.below_threshold, 2u);
  std::size_t total = 0;
  for (const auto& r : table.rows) total += r.count;
  EXPECT_EQ(total, 6u);

  auto one = per_location_errors(p, t, std::vector<std::string>(6, "X"), INFINITY);
  EXPECT_NEAR(one.rows[0].rmse, rmse(p, t), 1e-15);
  EXPECT_EQ(one.below_threshold, 1u);
}

TEST(Distribution, Histograms) {
  Vector t = testutil::gaussian(200, 1, 5).col(0);
  auto same = distribution_summary(t, t, 10);
  EXPECT_EQ(same.prediction_counts, same.target_counts);
  Vector p = 0.5 * t;
  auto d = distribution_summary(p, t, 7);
  EXPECT_EQ(d.edges.size(), 8u);
  double sp = 0.0, st = 0.0;
  for (std::size_t b = 0; b < 7; ++b) sp += d.prediction_density[b], st += d.target_density[b];
  EXPECT_NEAR(sp, 1.0, 1e-10);
  EXPECT_NEAR(st, 1.0, 1e-10);
  EXPECT_TRUE(d.prediction_variance_smaller);
  EXPECT_THROW(distribution_summary(p, t, 1), Error);
}

TEST(Weather, NaiveAndRmse) {
  EnvironmentTable env;
  WeatherVector a{}, b{};
  for (std::size_t k = 0; k < kWeatherDim; ++k) a[k] = 1.0, b[k] = 3.0;
  env.set_weather("L", 2015, a);
  env.set_weather("L", 2016, b);
  auto naive = repeat_last_year(env, 2016);
  EXPECT_EQ(*naive.weather("L", 2016), a);
  EXPECT_NEAR(weather_rmse(naive, env), 2.0, 1e-15);
  EXPECT_EQ(weather_rmse(repeat_last_year(env, 2016), repeat_last_year(env, 2016)), 0.0);
}

TEST(Report, SummaryAndCsv) {
  Report r;
  EXPECT_THROW(report_summary(r), Error);
  r.metrics.push_back({"DNN", "yield", {1.0, 90.0, false}, {2.0, 80.0, false}, ""});
  auto s = report_summary(r);
  EXPECT_NE(s.find("116.51 +- 27.7"), std::string::npos);
  EXPECT_NE(s.find("not reproduced"), std::string::npos);
  EXPECT_NE(s.find("sample (n - 1)"), std::string::npos);
  auto csv = metrics_csv(r.metrics);
  EXPECT_NE(csv.find("DNN,yield,1,90,2,80,"), std::string::npos);
  EXPECT_EQ(ablation_csv({}), "model,train_rmse,train_corr_pct,validation_rmse,validation_corr_pct\n");
}
