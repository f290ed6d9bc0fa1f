#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cropdnn/preprocess.hpp"
#include "cropdnn/synth.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cropdnn;

namespace {

MarkerMatrix column_matrix(const std::vector<std::vector<MarkerCode>>& cols) {
  const auto n = static_cast<Index>(cols[0].size());
  CodeMatrix v(n, static_cast<Index>(cols.size()));
  std::vector<std::string> ids, names;
  for (Index i = 0; i < n; ++i) ids.push_back("H" + std::to_string(i));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    names.push_back("m_" + std::to_string(j));
    for (Index i = 0; i < n; ++i) v(i, static_cast<Index>(j)) = cols[j][static_cast<std::size_t>(i)];
  }
  return {ids, names, v};
}

FieldTrialDataset synthetic_dataset(std::uint64_t seed, double missing = 0.005) {
  SynthConfig c;
  c.n_hybrids = 50;
  c.n_locations = 6;
  c.p_markers = 60;
  c.n_causal_markers = 3;
  c.n_trials = 400;
  c.missing_rate = missing;
  c.seed = seed;
  auto d = generate_synthetic(c);
  return join_trials(std::make_shared<const MarkerMatrix>(d.markers),
                     std::make_shared<const EnvironmentTable>(d.environment), d.performance)
      .dataset;
}

}  // namespace

TEST(Filter, TrivialCases) {
  auto half_missing = column_matrix({{1, kMissing, kMissing, -1}, {1, 0, -1, 0}});
  EXPECT_EQ(filter_markers(half_missing).kept, std::vector<std::size_t>{1});
  auto mono = column_matrix({{1, 1, 1, 1}, {1, -1, 0, 0}});
  EXPECT_EQ(filter_markers(mono).kept, std::vector<std::size_t>{1});
  auto none = column_matrix({{1, 1, 1, 1}});
  EXPECT_THROW(filter_markers(none), Error);
}

TEST(Filter, MatchesBruteForceOracle) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto m = testutil::planted_panel(seed);
    auto got = filter_markers(m, 0.97, 0.01);
    auto want = oracle::brute_force_filter(m, 0.97, 0.01);
    EXPECT_EQ(got.kept, want);
    EXPECT_GT(want.size(), 100u);
    EXPECT_LT(want.size(), 900u);
    EXPECT_EQ(got.markers.n_markers(), want.size());
  }
}

TEST(Impute, TrivialCases) {
  auto m = column_matrix({{-1, 1, 1, kMissing}});
  EXPECT_EQ(impute_median(m).values()(3, 0), 1);
  auto tie = column_matrix({{-1, -1, 1, 1, kMissing}});
  EXPECT_EQ(impute_median(tie).values()(4, 0), 0);
  auto up = column_matrix({{0, 1, kMissing}});
  EXPECT_EQ(impute_median(up).values()(2, 0), 0);
  auto empty = column_matrix({{kMissing, kMissing}});
  EXPECT_THROW(impute_median(empty), Error);
}

TEST(Impute, MatchesSortOracleAndKeepsObservedValues) {
  auto m = testutil::planted_panel(4);
  auto imp = impute_median(m);
  EXPECT_EQ(imp.missing_count(), 0u);
  for (Index j = 0; j < m.values().cols(); ++j) {
    std::vector<int> observed;
    for (Index i = 0; i < m.values().rows(); ++i)
      if (m.values()(i, j) != kMissing) observed.push_back(m.values()(i, j));
    int med = oracle::sorted_median(observed);
    for (Index i = 0; i < m.values().rows(); ++i)
      EXPECT_EQ(imp.values()(i, j), m.values()(i, j) == kMissing ? med : m.values()(i, j));
  }
}

TEST(Design, LayoutAndStandardization) {
  auto data = synthetic_dataset(3);
  auto r = assemble_design(data, std::nullopt);
  const auto p = r.fit.kept_markers.size();
  ASSERT_EQ(static_cast<std::size_t>(r.design.cols()), p + 80);
  auto names = r.fit.feature_names();
  EXPECT_EQ(names[p], "w_01");
  EXPECT_EQ(names[p + 72], "s_1");
  EXPECT_EQ(names.back(), "s_8");
  const auto n = static_cast<double>(r.design.rows());
  for (Index c = static_cast<Index>(p); c < r.design.cols(); ++c) {
    double mean = r.design.col(c).mean();
    double sd = std::sqrt((r.design.col(c).array() - mean).square().sum() / (n - 1));
    EXPECT_NEAR(mean, 0.0, 1e-10);
    EXPECT_NEAR(sd, 1.0, 1e-10);
  }
  for (Index c = 0; c < static_cast<Index>(p); ++c)
    for (Index i = 0; i < r.design.rows(); ++i) EXPECT_TRUE(r.design(i, c) == -1 || r.design(i, c) == 0 || r.design(i, c) == 1);
}

TEST(Design, WidthForFullScaleMarkerCount) {
  PreprocessFit f;
  f.kept_markers.resize(627);
  EXPECT_EQ(f.layout().width(), 707u);
}

TEST(Design, FitReusedVerbatim) {
  auto data = synthetic_dataset(5);
  auto s = split_by_year(data, SplitRule{2016, 0.5, 1});
  auto tr = assemble_design(s.train, std::nullopt);
  auto va = assemble_design(s.validation, tr.fit);
  EXPECT_EQ(va.fit.weather_mean, tr.fit.weather_mean);
  EXPECT_EQ(va.fit.soil_scale, tr.fit.soil_scale);
  EXPECT_EQ(va.fit.kept_markers, tr.fit.kept_markers);
  EXPECT_EQ(va.design.cols(), tr.design.cols());
  // Rebuilding the training design from the stored fit is bitwise identical.
  EXPECT_EQ(assemble_design(s.train, tr.fit).design, tr.design);
}

TEST(Design, RestrictionSelectsColumns) {
  auto data = synthetic_dataset(6);
  auto full = assemble_design(data, std::nullopt);
  auto cols = std::vector<std::size_t>{full.fit.layout().soil_offset() + 2, 0, 3};
  auto sub = assemble_design(data, full.fit.restricted_to(cols));
  ASSERT_EQ(sub.design.cols(), 3);
  EXPECT_EQ(sub.design.col(0), full.design.col(0));
  EXPECT_EQ(sub.design.col(2), full.design.col(static_cast<Index>(cols[0])));
  EXPECT_EQ(sub.fit.feature_groups().back(), FeatureGroup::soil);
}

TEST(Design, ZeroVarianceFeatureWarns) {
  auto data = synthetic_dataset(7);
  auto env = std::make_shared<EnvironmentTable>();
  for (const auto& [key, w] : data.environment().weather_entries()) {
    auto copy = w;
    copy[5] = 2.5;
    env->set_weather(key.first, key.second, copy);
  }
  for (const auto& [loc, s] : data.environment().soil_entries()) env->set_soil(loc, s);
  auto r = assemble_design(data.with_environment(env), std::nullopt);
  EXPECT_EQ(r.fit.weather_scale[5], 1.0);
  ASSERT_FALSE(r.fit.warnings.empty());
  EXPECT_NE(r.fit.warnings[0].find("w_06"), std::string::npos);
}

TEST(Design, JsonRoundTrip) {
  auto data = synthetic_dataset(8);
  auto r = assemble_design(data, std::nullopt);
  auto back = preprocess_fit_from_json(nlohmann::json::parse(to_json(r.fit).dump()));
  EXPECT_EQ(assemble_design(data, back).design, r.design);
  auto j = to_json(r.fit);
  j["version"] = 99;
  EXPECT_THROW(preprocess_fit_from_json(j), Error);
}

TEST(Design, Deterministic) {
  auto a = assemble_design(synthetic_dataset(9), std::nullopt);
  auto b = assemble_design(synthetic_dataset(9), std::nullopt);
  EXPECT_EQ(a.design, b.design);
  EXPECT_EQ(to_json(a.fit).dump(), to_json(b.fit).dump());
}
