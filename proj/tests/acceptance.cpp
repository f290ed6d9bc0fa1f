// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "cropdnn/baselines/baselines.hpp"
#include "cropdnn/evaluate.hpp"
#include "cropdnn/feature_select.hpp"
#include "cropdnn/nn/adam.hpp"
#include "cropdnn/nn/gradient_check.hpp"
#include "cropdnn/preprocess.hpp"
#include "cropdnn/synth.hpp"
#include "cropdnn/weather_forecast.hpp"
#include "cropdnn/yield_model.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace cropdnn;

namespace {

// Pinned tolerances.
constexpr double kGradTol = 1e-4;
constexpr double kLinearGradTol = 1e-7;
constexpr double kGradRuntime = 60.0;  // seconds
constexpr double kAdamTol = 1e-6;
constexpr long long kAdamSteps = 50'000;
constexpr double kOlsTol = 1e-6;
constexpr double kSoftThresholdTol = 1e-8;
constexpr double kIdentityTol = 1e-10;
constexpr double kPipelineRuntime = 15 * 60.0;
constexpr double kSelectionPValue = 0.01;
constexpr double kSubsetSlack = 1.15;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> layers(2, 6), width(2, 8), inputs(2, 6);
  double worst = 0.0;
  std::string where;
  for (std::uint64_t k = 0; k < 4; ++k) {
    nn::NetworkSpec s{static_cast<std::size_t>(inputs(rng)), static_cast<std::size_t>(layers(rng)),
                      static_cast<std::size_t>(width(rng)), 2, nn::Activation::maxout, true, true};
    auto r = nn::gradient_check(s, 300 + k, 1e-5);
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      where = std::to_string(s.hidden_layers) + "x" + std::to_string(s.hidden_width) + " " + r.worst_tensor;
    }
  }
  nn::GradientCheckOptions plain;
  plain.reg = {0.0, 0.0};
  double linear = std::max(nn::gradient_check(nn::NetworkSpec::linear(6), 11, 1e-5, plain).max_relative_error,
                           nn::gradient_check(nn::NetworkSpec{5, 3, 4, 1, nn::Activation::identity, false, true}, 12, 1e-5,
                                              plain)
                               .max_relative_error);
  const double elapsed = seconds_since(t0);
  return {worst < kGradTol && linear < kLinearGradTol && elapsed < kGradRuntime,
          "4 maxout specs max rel err " + fmt(worst) + " (" + where + "), linear " + fmt(linear) + ", " + fmt(elapsed, 3) +
              " s"};
}

Outcome optimizer() {
  // f(x) = x'Ax/2 - b'x with A symmetric positive definite, eigenvalues 1..10.
  const Index d = 10;
  Matrix q = Eigen::HouseholderQR<Matrix>(testutil::gaussian(d, d, 5)).householderQ();
  Vector eig = Vector::LinSpaced(d, 1.0, 10.0);
  Matrix a = q * eig.asDiagonal() * q.transpose();
  Matrix b = testutil::gaussian(d, 1, 6);
  Matrix target = a.ldlt().solve(b);

  nn::TrainConfig schedule;
  schedule.base_lr = 0.05;
  schedule.lr_halving_period = 2'500;
  Matrix x = Matrix::Zero(d, 1), g(d, 1);
  nn::AdamState state;
  long long reached = -1;
  for (long long t = 0; t < kAdamSteps; ++t) {
    g = a * x - b;
    nn::adam_step({&x}, {&g}, state, nn::lr_at(t, schedule));
    double err = (x - target).cwiseAbs().maxCoeff();
    if (err < kAdamTol && reached < 0) reached = t + 1;
    if (err >= kAdamTol) reached = -1;
  }
  const double final_err = (x - target).cwiseAbs().maxCoeff();

  nn::TrainConfig def;
  bool halving = nn::lr_at(0, def) == 3e-4 && nn::lr_at(50'000, def) == 1.5e-4 && nn::lr_at(100'000, def) == 7.5e-5 &&
                 nn::lr_at(49'999, def) == 3e-4;
  return {final_err < kAdamTol && reached > 0 && halving,
          "max |x - x*| " + fmt(final_err) + ", within tolerance from step " + std::to_string(reached) +
              "; lr_at 0/50k/100k = " + fmt(nn::lr_at(0, def)) + "/" + fmt(nn::lr_at(50'000, def)) + "/" +
              fmt(nn::lr_at(100'000, def))};
}

Outcome preprocessing() {
  std::size_t kept = 0, columns = 0;
  bool ok = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto m = testutil::planted_panel(seed);
    auto got = filter_markers(m, 0.97, 0.01);
    ok = ok && got.kept == oracle::brute_force_filter(m, 0.97, 0.01);
    kept += got.kept.size();
    auto imp = impute_median(m);
    const auto& v = m.values();
    for (Index j = 0; j < v.cols(); ++j, ++columns) {
      std::vector<int> observed;
      for (Index i = 0; i < v.rows(); ++i)
        if (v(i, j) != kMissing) observed.push_back(v(i, j));
      const int med = oracle::sorted_median(observed);
      for (Index i = 0; i < v.rows(); ++i) ok = ok && imp.values()(i, j) == (v(i, j) == kMissing ? med : v(i, j));
    }
  }
  return {ok, "3 panels of 1000 markers, " + std::to_string(kept) + " kept in total; " + std::to_string(columns) +
                  " imputed columns checked"};
}

Vector linear_targets(const Matrix& x, std::uint64_t seed, double noise) {
  Vector beta(x.cols());
  for (Index j = 0; j < x.cols(); ++j) beta[j] = (j % 2 == 0 ? 1.5 : -0.75) * (1.0 + 0.2 * static_cast<double>(j));
  return (x * beta).array() + 2.0 + noise * testutil::gaussian(x.rows(), 1, seed).col(0).array();
}

Outcome lasso() {
  Matrix x = testutil::gaussian(90, 7, 31);
  x.col(4) = x.col(4) * 4.0 + Vector::Constant(90, -2.0);
  Vector y = linear_targets(x, 32, 0.5);
  LassoConfig c;
  c.lambda = 0.0;
  c.tolerance = 1e-13;
  c.max_sweeps = 100'000;
  auto m = fit_lasso(x, y, c);
  Vector ols = oracle::ols_with_intercept(x, y);
  double ols_err = std::abs(m.intercept - ols[0]);
  for (Index j = 0; j < x.cols(); ++j) ols_err = std::max(ols_err, std::abs(m.coefficients[j] - ols[j + 1]));

  LassoConfig big;
  big.lambda = lasso_lambda_max(x, y);
  bool zeroed = (fit_lasso(x, y, big).coefficients.array() == 0.0).all();
  big.lambda *= 3.0;
  zeroed = zeroed && (fit_lasso(x, y, big).coefficients.array() == 0.0).all();

  const Index n = 72, p = 6;
  Matrix raw = testutil::gaussian(n, p, 33);
  raw.rowwise() -= raw.colwise().mean();
  Matrix orth = Eigen::HouseholderQR<Matrix>(raw).householderQ() * Matrix::Identity(n, p);
  orth *= std::sqrt(static_cast<double>(n));
  Vector yo = linear_targets(orth, 34, 0.4);
  LassoConfig co;
  co.lambda = 0.6;
  co.tolerance = 1e-14;
  auto mo = fit_lasso(orth, yo, co);
  double st_err = 0.0;
  for (Index j = 0; j < p; ++j)
    st_err = std::max(st_err, std::abs(mo.coefficients[j] -
                                       oracle::soft_threshold(orth.col(j).dot(yo) / static_cast<double>(n), co.lambda)));
  return {ols_err < kOlsTol && zeroed && st_err < kSoftThresholdTol,
          "lambda=0 vs OLS " + fmt(ols_err) + ", lambda>=lambda_max all zero: " + (zeroed ? "yes" : "no") +
              ", orthonormal vs soft-thresholded OLS " + fmt(st_err)};
}

Outcome tree() {
  std::size_t splits = 0, leaves = 0, mismatches = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Matrix x = testutil::gaussian(50, 4, 500 + seed);
    x.col(2) = x.col(2).array().round();
    Vector y = (x.col(0).array() > 0.0).cast<double>() * 3.0 + x.col(1).array().abs() +
               0.5 * testutil::gaussian(50, 1, 600 + seed).col(0).array();
    auto t = fit_regression_tree(x, y);
    if (t.depth() > 10) ++mismatches;
    // Replay the thresholds to recover the rows at each node.
    std::vector<std::vector<long>> rows(t.nodes.size());
    for (Index i = 0; i < x.rows(); ++i)
      for (int k = 0;;) {
        rows[static_cast<std::size_t>(k)].push_back(static_cast<long>(i));
        const auto& nd = t.nodes[static_cast<std::size_t>(k)];
        if (nd.is_leaf()) break;
        k = x(i, nd.feature) <= nd.threshold ? nd.left : nd.right;
      }
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
      const auto& nd = t.nodes[k];
      auto want = oracle::exhaustive_split(x, y, rows[k]);
      if (nd.is_leaf()) {
        ++leaves;
        bool pure = true;
        for (long r : rows[k]) pure = pure && y[r] == y[rows[k][0]];
        if (!(pure || nd.depth >= 10 || rows[k].size() < 2 || !want.found)) ++mismatches;
      } else {
        ++splits;
        if (!want.found || static_cast<std::size_t>(nd.feature) != want.feature || nd.threshold != want.threshold ||
            rows[k].size() < 2)
          ++mismatches;
      }
    }
  }
  return {mismatches == 0, "20 instances, " + std::to_string(splits) + " splits and " + std::to_string(leaves) +
                               " leaves checked, " + std::to_string(mismatches) + " mismatches"};
}

Outcome identity() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> size(2, 5'000);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Index n = size(rng);
    const double mean = 60.0 + 120.0 * u(rng), sd = 1.0 + 40.0 * u(rng), rho = -0.95 + 1.9 * u(rng);
    Matrix z = testutil::gaussian(n, 2, 1'000 + static_cast<std::uint64_t>(k));
    Vector y = mean + sd * z.col(0).array();
    Vector yc = mean + sd * (rho * z.col(0).array() + std::sqrt(1.0 - rho * rho) * z.col(1).array());
    worst = std::max(worst, variance_identity_check(y, yc).relative_gap);
  }
  return {worst < kIdentityTol, "100 random pairs, worst relative gap " + fmt(worst)};
}

Outcome weather() {
  auto env_of = [](int locations, int first, int last) {
    EnvironmentTable env;
    for (int l = 0; l < locations; ++l)
      for (int y = first; y <= last; ++y) env.set_weather("L" + std::to_string(l), y, WeatherVector{});
    return env;
  };
  const auto one = build_lag_samples(env_of(1, 2001, 2016)).size();
  const auto many = build_lag_samples(env_of(2'247, 2001, 2015)).size();

  SynthConfig c;
  c.n_hybrids = 10;
  c.n_locations = 80;
  c.p_markers = 20;
  c.n_causal_markers = 2;
  c.n_trials = 100;
  c.n_interactions = 0;
  c.seed = 41;
  auto d = generate_synthetic(c);
  ForecastConfig fc;
  fc.train.seed = 42;
  auto f = train_forecasters(build_lag_samples(d.environment, 4, 2015), fc);
  const double model = weather_rmse(forecast_table(forecast_year(f, d.environment, 2016)), d.environment);
  const double naive = weather_rmse(repeat_last_year(d.environment, 2016), d.environment);
  return {one == 12 && many == 24'717 && model < naive,
          "samples " + std::to_string(one) + " and " + std::to_string(many) + "; backtest RMSE " + fmt(model) +
              " vs repeat-last-year " + fmt(naive)};
}

// ---------------------------------------------------------------------------
// Desk-scale synthetic study shared by the model-level criteria.

struct Study {
  SyntheticData raw;
  FieldTrialDataset all;
  Split split;
  nn::NetworkSpec spec = nn::NetworkSpec::desk(0);
  nn::TrainConfig train;
  YieldModelPair pair;
  Matrix xt, xv;
  double full_rmse = 0.0;
  double seconds = 0.0;
};

const Study& study() {
  static const Study s = [] {
    auto t0 = std::chrono::steady_clock::now();
    Study s;
    SynthConfig c;
    c.p_markers = 627;
    c.n_causal_markers = 10;
    c.low_maf_fraction = 0.0;
    c.missing_rate = 0.005;
    c.marker_effect = 5.0;
    c.seed = 11;
    s.raw = generate_synthetic(c);
    s.all = join_trials(std::make_shared<const MarkerMatrix>(s.raw.markers),
                        std::make_shared<const EnvironmentTable>(s.raw.environment), s.raw.performance)
                .dataset;
    s.split = split_by_year(s.all, SplitRule{2016, 0.5, 11});
    s.train.base_lr = 1e-3;
    s.train.max_iterations = 3'000;
    s.train.lr_halving_period = 1'000;
    s.train.l2_lambda = 1e-2;
    s.train.l1_lambda = 1e-3;
    s.train.seed = 11;
    s.pair = train_pair(s.split.train, s.spec, s.train);
    s.xt = assemble_design(s.split.train, s.pair.fit).design;
    s.xv = assemble_design(s.split.validation, s.pair.fit).design;
    s.full_rmse = rmse(s.pair.yield.predict(s.xv), s.split.validation.yields());
    s.seconds = seconds_since(t0);
    return s;
  }();
  return s;
}

Outcome model_ordering() {
  const auto& s = study();
  auto t0 = std::chrono::steady_clock::now();
  auto lasso = fit_lasso(s.xt, s.split.train.yields());
  const double lasso_rmse = rmse(lasso.predict(s.xv), s.split.validation.yields());
  const double elapsed = s.seconds + seconds_since(t0);
  return {s.full_rmse < lasso_rmse && elapsed < kPipelineRuntime,
          std::to_string(s.all.size()) + " trials (" + std::to_string(s.split.train.size()) + " train / " +
              std::to_string(s.split.validation.size()) + " validation); DNN " + fmt(s.full_rmse) + " vs Lasso " +
              fmt(lasso_rmse) + "; " + fmt(elapsed, 3) + " s"};
}

Outcome ablation() {
  const auto& s = study();
  double r[4];
  const Source order[] = {Source::weather, Source::soil, Source::genotype, Source::average};
  for (int k = 0; k < 4; ++k)
    r[k] = ablation_single_source(s.split.train, s.split.validation, order[k], s.spec, s.train, s.pair.fit).validation.rmse;
  const bool ok = r[0] < r[2] && r[1] < r[2] && r[2] < r[3];
  return {ok, "W " + fmt(r[0]) + ", S " + fmt(r[1]) + ", G " + fmt(r[2]) + ", Average " + fmt(r[3])};
}

/// P(X >= k) for X hypergeometric: `draws` from `total` holding `marked`.
double hypergeometric_tail(int total, int marked, int draws, int k) {
  auto log_choose = [](int n, int r) { return std::lgamma(n + 1.0) - std::lgamma(r + 1.0) - std::lgamma(n - r + 1.0); };
  double p = 0.0;
  for (int x = k; x <= std::min(marked, draws); ++x)
    p += std::exp(log_choose(marked, x) + log_choose(total - marked, draws - x) - log_choose(total, draws));
  return p;
}

Outcome selection() {
  const auto& s = study();
  auto report = yield_effects(s.pair, s.xv);
  auto cols = select_top_features(report, 50, 20);
  const auto& kept = s.pair.fit.kept_markers;
  int hits = 0;
  for (auto causal : s.raw.truth.causal_markers) {
    auto it = std::find(kept.begin(), kept.end(), causal);
    if (it != kept.end() && std::count(cols.begin(), cols.end(), static_cast<std::size_t>(it - kept.begin()))) ++hits;
  }
  const int total = static_cast<int>(kept.size()), planted = static_cast<int>(s.raw.truth.causal_markers.size());
  const double p = hypergeometric_tail(total, planted, 50, hits);
  auto sub = retrain_subset(s.split.train, s.pair.fit, cols, s.spec, s.train);
  const double sub_rmse = rmse(predict_triplet(sub, s.split.validation).yield, s.split.validation.yields());
  return {p < kSelectionPValue && sub_rmse <= kSubsetSlack * s.full_rmse,
          std::to_string(hits) + "/" + std::to_string(planted) + " planted markers in top 50 of " + std::to_string(total) +
              " (tail p " + fmt(p, 3) + "); subset RMSE " + fmt(sub_rmse) + " vs full " + fmt(s.full_rmse)};
}

Outcome substitution() {
  const auto& s = study();
  ForecastConfig fc;
  fc.train.seed = 12;
  auto f = train_forecasters(build_lag_samples(s.raw.environment, 4, 2015), fc);
  auto forecast = forecast_year(f, s.raw.environment, 2016);
  auto valid = s.split.validation.with_environment(
      std::make_shared<const EnvironmentTable>(substitute_forecast(s.raw.environment, forecast)));
  const double with_forecast = rmse(predict_triplet(s.pair, valid).yield, s.split.validation.yields());
  return {with_forecast >= s.full_rmse,
          "validation yield RMSE " + fmt(s.full_rmse) + " on true weather, " + fmt(with_forecast) + " on forecast weather"};
}

// ---------------------------------------------------------------------------

std::string tree_bytes(const fs::path& root, std::size_t& files) {
  std::vector<fs::path> all;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) all.push_back(e.path());
  std::sort(all.begin(), all.end());
  files = all.size();
  std::string out;
  for (const auto& f : all) out += fs::relative(f, root).string() + "\n" + read_file(f.string()) + "\n";
  return out;
}

Outcome determinism() {
  const fs::path base = fs::temp_directory_path() / "cropdnn_acceptance";
  fs::remove_all(base);
  const char* config =
      "seed = 5\n"
      "synth.n_hybrids = 60\nsynth.n_locations = 12\nsynth.n_trials = 600\nsynth.p_markers = 80\n"
      "synth.missing_rate = 0.005\n"
      "network.hidden_layers = 4\nnetwork.hidden_width = 8\n"
      "train.max_iterations = 150\ntrain.lr_halving_period = 50\n"
      "weather.max_iterations = 200\nsnn.max_iterations = 100\nsnn.width = 16\n"
      "select.n_markers = 10\nselect.n_environment = 10\n";
  const std::vector<std::string> steps = {
      "synth --out data",
      "preprocess --data data --out pre",
      "train-weather --data data --out tw",
      "forecast-weather --data data --forecaster tw --out fw",
      "train --data data --out tr",
      "train --data data --weather=forecast --forecast fw/weather_forecast.csv --out trf",
      "baselines --data data --out bl all",
      "ablate --data data --out ab all",
      "select-features --data data --model tr --out sf",
      "retrain-subset --data data --model tr --selection sf/selection.csv --out rs",
      "evaluate --data data --model tr --baselines bl --ablation ab/ablation.csv --subset rs --out rep",
      "evaluate --data data --model trf --out repf",
  };
  std::string bytes[2];
  std::size_t files = 0;
  for (int pass = 0; pass < 2; ++pass) {
    const auto root = base / ("run" + std::to_string(pass));
    fs::create_directories(root);
    write_file((root / "run.cfg").string(), config);
    for (const auto& step : steps) {
      const std::string cmd = "cd '" + root.string() + "' && " + CROPDNN_CLI + " " + step +
                              " --config run.cfg >/dev/null 2>>log.txt";
      if (std::system(cmd.c_str()) != 0) return {false, "pipeline step failed: " + step};
    }
    fs::remove(root / "log.txt");
    bytes[pass] = tree_bytes(root, files);
  }
  const bool same = bytes[0] == bytes[1];
  fs::remove_all(base);
  return {same, std::to_string(steps.size()) + " CLI stages run twice; " + std::to_string(files) +
                    " files including manifests and reports " + (same ? "identical" : "differ")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient exactness", gradients},
      {"optimizer and schedule", optimizer},
      {"preprocessing oracle", preprocessing},
      {"lasso oracle", lasso},
      {"tree oracle", tree},
      {"variance identity", identity},
      {"weather pipeline", weather},
      {"model ordering", model_ordering},
      {"ablation ordering", ablation},
      {"feature selection recovery", selection},
      {"weather substitution", substitution},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (k + 1) << ". " << criteria[k].first << ": " << o.detail << " ["
              << fmt(seconds_since(t0), 3) << " s]" << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
