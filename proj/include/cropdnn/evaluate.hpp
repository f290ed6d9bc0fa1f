#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cropdnn/common.hpp"
#include "cropdnn/data_model.hpp"

namespace cropdnn {

struct Metrics {
  double rmse = 0.0;
  double pearson_percent = 0.0;
  bool degenerate = false;  // a series had zero variance; correlation reported as 0
};

inline double rmse(const Vector& predictions, const Vector& targets) {
  if (predictions.size() != targets.size()) throw data_error("rmse: length mismatch");
  if (predictions.size() == 0) throw data_error("rmse: empty input");
  return std::sqrt((predictions - targets).squaredNorm() / static_cast<double>(predictions.size()));
}

inline Metrics metrics(const Vector& predictions, const Vector& targets) {
  Metrics m;
  m.rmse = rmse(predictions, targets);
  auto constant = [](const Vector& v) { return (v.array() == v[0]).all(); };
  const Vector a = predictions.array() - predictions.mean();
  const Vector b = targets.array() - targets.mean();
  const double saa = a.squaredNorm(), sbb = b.squaredNorm();
  if (constant(predictions) || constant(targets) || !(saa > 0.0) || !(sbb > 0.0)) {
    m.degenerate = true;
    return m;
  }
  double r = a.dot(b) / std::sqrt(saa * sbb);
  m.pearson_percent = 100.0 * std::clamp(r, -1.0, 1.0);
  return m;
}

/// Sample (n - 1) variance and covariance.
inline double sample_variance(const Vector& x) {
  if (x.size() < 2) throw data_error("sample_variance: need at least 2 values");
  return (x.array() - x.mean()).square().sum() / static_cast<double>(x.size() - 1);
}

inline double sample_covariance(const Vector& x, const Vector& y) {
  if (x.size() != y.size() || x.size() < 2) throw data_error("sample_covariance: need equal lengths >= 2");
  return ((x.array() - x.mean()) * (y.array() - y.mean())).sum() / static_cast<double>(x.size() - 1);
}

struct VarianceIdentity {
  double var_difference = 0.0;  // Var(y - y_c)
  double decomposed = 0.0;      // Var(y) + Var(y_c) - 2 Cov(y, y_c)
  double relative_gap = 0.0;
};

inline VarianceIdentity variance_identity_check(const Vector& y, const Vector& yc) {
  if (y.size() != yc.size() || y.size() < 2) throw data_error("variance_identity_check: need equal lengths >= 2");
  VarianceIdentity v;
  v.var_difference = sample_variance(y - yc);
  v.decomposed = sample_variance(y) + sample_variance(yc) - 2.0 * sample_covariance(y, yc);
  double scale = std::max({std::abs(v.var_difference), std::abs(v.decomposed)});
  // Both sides 0 (y_c = y) is an exact match; otherwise relative to the larger.
  v.relative_gap = scale > 0.0 ? std::abs(v.var_difference - v.decomposed) / scale : 0.0;
  return v;
}

struct LocationError {
  std::string location;
  std::size_t count = 0;
  double rmse = 0.0;
};

struct LocationErrorTable {
  std::vector<LocationError> rows;  // sorted by location id
  double threshold = 0.0;
  std::size_t below_threshold = 0;  // locations with rmse < threshold
};

inline LocationErrorTable per_location_errors(const Vector& predictions, const Vector& targets,
                                              const std::vector<std::string>& locations, double threshold = 15.0) {
  if (predictions.size() != targets.size() || static_cast<std::size_t>(predictions.size()) != locations.size())
    throw data_error("per_location_errors: length mismatch");
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < locations.size(); ++i) {
    double e = predictions[static_cast<Index>(i)] - targets[static_cast<Index>(i)];
    auto& a = acc[locations[i]];
    a.first += e * e;
    a.second += 1;
  }
  LocationErrorTable t;
  t.threshold = threshold;
  for (const auto& [loc, a] : acc) {
    double r = std::sqrt(a.first / static_cast<double>(a.second));
    t.rows.push_back({loc, a.second, r});
    if (r < threshold) ++t.below_threshold;
  }
  return t;
}

struct DistributionSummary {
  std::vector<double> edges;  // n_bins + 1
  std::vector<std::size_t> prediction_counts, target_counts;
  std::vector<double> prediction_density, target_density;  // bin shares, each summing to 1
  double prediction_variance = 0.0, target_variance = 0.0;
  bool prediction_variance_smaller = false;
};

/// Paired histogram over the joint range with equal-width bins; the last bin
/// is closed on the right.
inline DistributionSummary distribution_summary(const Vector& predictions, const Vector& targets, std::size_t n_bins) {
  if (n_bins < 2) throw config_error("distribution_summary: n_bins must be >= 2");
  if (predictions.size() == 0 || targets.size() == 0) throw data_error("distribution_summary: empty input");
  double lo = std::min(predictions.minCoeff(), targets.minCoeff());
  double hi = std::max(predictions.maxCoeff(), targets.maxCoeff());
  if (!(hi > lo)) hi = lo + 1.0;
  DistributionSummary d;
  for (std::size_t b = 0; b <= n_bins; ++b)
    d.edges.push_back(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(n_bins));
  auto histogram = [&](const Vector& v, std::vector<std::size_t>& counts, std::vector<double>& density) {
    counts.assign(n_bins, 0);
    for (Index i = 0; i < v.size(); ++i) {
      auto b = static_cast<std::size_t>((v[i] - lo) / (hi - lo) * static_cast<double>(n_bins));
      ++counts[std::min(b, n_bins - 1)];
    }
    for (auto c : counts) density.push_back(static_cast<double>(c) / static_cast<double>(v.size()));
  };
  histogram(predictions, d.prediction_counts, d.prediction_density);
  histogram(targets, d.target_counts, d.target_density);
  if (predictions.size() > 1) d.prediction_variance = sample_variance(predictions);
  if (targets.size() > 1) d.target_variance = sample_variance(targets);
  d.prediction_variance_smaller = d.prediction_variance <= d.target_variance;
  return d;
}

// ---------------------------------------------------------------------------
// Weather backtests.

/// RMSE of forecast rows against the true weather of the same (location, year).
inline double weather_rmse(const EnvironmentTable& forecast_rows, const EnvironmentTable& truth) {
  double ss = 0.0;
  std::size_t n = 0;
  for (const auto& [key, w] : forecast_rows.weather_entries()) {
    const auto* t = truth.weather(key.first, key.second);
    if (!t) throw data_error("weather_rmse: no true weather for (" + key.first + ", " + std::to_string(key.second) + ")");
    for (std::size_t k = 0; k < kWeatherDim; ++k) ss += (w[k] - (*t)[k]) * (w[k] - (*t)[k]);
    n += kWeatherDim;
  }
  if (n == 0) throw data_error("weather_rmse: no forecast rows");
  return std::sqrt(ss / static_cast<double>(n));
}

/// Naive forecast: each location's weather from the previous year.
inline EnvironmentTable repeat_last_year(const EnvironmentTable& env, int target_year) {
  EnvironmentTable out;
  for (const auto& loc : env.location_ids())
    if (const auto* prev = env.weather(loc, target_year - 1)) out.set_weather(loc, target_year, *prev);
  return out;
}

// ---------------------------------------------------------------------------
// Reports.

struct MetricsRow {
  std::string model;
  std::string response;  // yield | check_yield | yield_difference
  Metrics train;
  Metrics validation;
  std::string note;
};

struct AblationRow {
  std::string model;
  Metrics train;
  Metrics validation;
};

/// Published figures carried in reports for orientation only.
struct ReferenceValue {
  std::string label;
  std::string value;
};

inline std::vector<ReferenceValue> reference_values() {
  return {{"yield mean +- sd (reference, not reproduced)", "116.51 +- 27.7"},
          {"DNN yield validation RMSE (reference, not reproduced)", "12.79"},
          {"DNN yield validation correlation % (reference, not reproduced)", "81.91"}};
}

inline std::string csv_field(double v) { return std::isfinite(v) ? format_double(v) : std::string("NA"); }

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "model,response,train_rmse,train_corr_pct,validation_rmse,validation_corr_pct,note\n";
  for (const auto& r : rows)
    out += r.model + "," + r.response + "," + csv_field(r.train.rmse) + "," + csv_field(r.train.pearson_percent) + "," +
           csv_field(r.validation.rmse) + "," + csv_field(r.validation.pearson_percent) + "," + r.note + "\n";
  return out;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "model,train_rmse,train_corr_pct,validation_rmse,validation_corr_pct\n";
  for (const auto& r : rows)
    out += r.model + "," + csv_field(r.train.rmse) + "," + csv_field(r.train.pearson_percent) + "," +
           csv_field(r.validation.rmse) + "," + csv_field(r.validation.pearson_percent) + "\n";
  return out;
}

inline std::string per_location_csv(const LocationErrorTable& t) {
  std::string out = "location_id,count,rmse\n";
  for (const auto& r : t.rows) out += r.location + "," + std::to_string(r.count) + "," + format_double(r.rmse) + "\n";
  return out;
}

inline std::string distribution_csv(const DistributionSummary& d) {
  std::string out = "bin_low,bin_high,prediction_count,target_count,prediction_density,target_density\n";
  for (std::size_t b = 0; b + 1 < d.edges.size(); ++b)
    out += format_double(d.edges[b]) + "," + format_double(d.edges[b + 1]) + "," + std::to_string(d.prediction_counts[b]) +
           "," + std::to_string(d.target_counts[b]) + "," + format_double(d.prediction_density[b]) + "," +
           format_double(d.target_density[b]) + "\n";
  return out;
}

struct Report {
  std::vector<MetricsRow> metrics;
  std::vector<AblationRow> ablation;
  std::vector<std::pair<std::string, VarianceIdentity>> identities;
  std::optional<LocationErrorTable> per_location;
  std::optional<DistributionSummary> distribution;
  std::string title;
};

/// Human-readable summary of a report.
inline std::string report_summary(const Report& r) {
  if (r.metrics.empty()) throw data_error("report: at least one metrics row is required");
  std::string s = r.title.empty() ? "Evaluation report\n" : r.title + "\n";
  s += "Variance convention: sample (n - 1).\n\nModels\n";
  for (const auto& m : r.metrics) {
    char line[256];
    std::snprintf(line, sizeof line, "  %-12s %-17s train RMSE %9.4f corr %7.2f%% | validation RMSE %9.4f corr %7.2f%%%s\n",
                  m.model.c_str(), m.response.c_str(), m.train.rmse, m.train.pearson_percent, m.validation.rmse,
                  m.validation.pearson_percent, m.validation.degenerate ? " (constant)" : "");
    s += line;
  }
  if (!r.ablation.empty()) {
    s += "\nSingle-source models\n";
    for (const auto& a : r.ablation) {
      char line[200];
      std::snprintf(line, sizeof line, "  %-8s validation RMSE %9.4f corr %7.2f%%\n", a.model.c_str(), a.validation.rmse,
                    a.validation.pearson_percent);
      s += line;
    }
  }
  for (const auto& [name, v] : r.identities) {
    char line[200];
    std::snprintf(line, sizeof line, "\nVar(y - y_c) check on %s: %.10g vs %.10g (relative gap %.3g)\n", name.c_str(),
                  v.var_difference, v.decomposed, v.relative_gap);
    s += line;
  }
  if (r.per_location) {
    s += "\nLocations: " + std::to_string(r.per_location->rows.size()) + ", with RMSE below " +
         format_double(r.per_location->threshold) + ": " + std::to_string(r.per_location->below_threshold) + "\n";
  }
  if (r.distribution) {
    s += "Predicted variance " + format_double(r.distribution->prediction_variance) + " vs observed " +
         format_double(r.distribution->target_variance) + "\n";
  }
  s += "\nReference values\n";
  for (const auto& ref : reference_values()) s += "  " + ref.label + ": " + ref.value + "\n";
  return s;
}

inline std::string references_csv() {
  std::string out = "label,value\n";
  for (const auto& r : reference_values()) out += r.label + "," + r.value + "\n";
  return out;
}

}  // namespace cropdnn
