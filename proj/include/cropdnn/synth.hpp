#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <array>
#include <filesystem>
#include <map>
#include <numeric>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "cropdnn/common.hpp"
#include "cropdnn/data_model.hpp"

namespace cropdnn {

/// Parameters of the synthetic genotype-by-environment generator.
///
/// Yield is built as
///   base + sum_c beta_c g_c
///        + sum_w (a_w tanh(1.5 x_w) - q_w x_w^2)
///        + sum_s a_s tanh(x_s)
///        + gxe_strength * sum_i gamma_i g_{m_i} x_{w_i}
///        + N(0, noise_sd^2)
/// with g the true (unmasked) marker code and x the weather/soil value.
struct SynthConfig {
  std::size_t n_hybrids = 300;
  std::size_t n_locations = 60;
  int first_year = 2001;        // first year with weather
  int last_year = 2016;         // last year with weather and trials
  int first_trial_year = 2008;  // trials sampled in [first_trial_year, last_year]
  std::size_t n_trials = 5000;
  std::size_t p_markers = 1000;
  double missing_rate = 0.0;
  std::size_t n_causal_markers = 10;
  double gxe_strength = 1.0;
  double noise_sd = 3.0;
  std::uint64_t seed = 1;

  double base_yield = 120.0;
  double marker_effect = 3.0;      // |beta_c| drawn from [0.5, 1.5] * marker_effect
  double weather_effect = 8.0;     // saturating amplitude scale of weather drivers
  double weather_curvature = 3.0;  // quadratic penalty scale of weather drivers
  double soil_effect = 6.0;
  std::size_t n_weather_drivers = 6;
  std::size_t n_soil_drivers = 2;
  std::size_t n_interactions = 5;
  double weather_persistence = 0.6;  // AR(1) coefficient per location and variable
  double location_weather_sd = 0.6;  // spread of per-location weather means
  double low_maf_fraction = 0.1;     // markers drawn with minor allele frequency below 1%
  double min_common_maf = 0.05;

  void validate() const {
    if (n_hybrids == 0 || n_locations == 0 || p_markers == 0 || n_trials == 0)
      throw config_error("synth: all counts must be positive");
    if (last_year < first_year || first_trial_year < first_year || first_trial_year > last_year)
      throw config_error("synth: inconsistent year range");
    if (n_causal_markers > p_markers) throw config_error("synth: n_causal_markers exceeds p_markers");
    if (!(missing_rate >= 0.0 && missing_rate <= 1.0)) throw config_error("synth: missing_rate outside [0, 1]");
    if (gxe_strength < 0.0 || noise_sd < 0.0) throw config_error("synth: gxe_strength and noise_sd must be >= 0");
    if (n_weather_drivers > kWeatherDim || n_soil_drivers > kSoilDim)
      throw config_error("synth: more environment drivers than variables");
    if (!(low_maf_fraction >= 0.0 && low_maf_fraction <= 1.0)) throw config_error("synth: low_maf_fraction outside [0, 1]");
    if (!(min_common_maf >= 0.01 && min_common_maf <= 0.5)) throw config_error("synth: min_common_maf outside [0.01, 0.5]");
    if (!(std::abs(weather_persistence) < 1.0)) throw config_error("synth: weather_persistence must lie in (-1, 1)");
    double combos = static_cast<double>(n_hybrids) * static_cast<double>(n_locations) *
                    static_cast<double>(last_year - first_trial_year + 1);
    if (static_cast<double>(n_trials) > combos) throw config_error("synth: n_trials exceeds distinct trial keys");
    if (n_interactions > 0 && (n_causal_markers == 0 || n_weather_drivers == 0))
      throw config_error("synth: interactions need causal markers and weather drivers");
  }
};

struct WeatherDriver {
  std::size_t index;
  double amplitude;
  double curvature;
};
struct SoilDriver {
  std::size_t index;
  double amplitude;
};
struct Interaction {
  std::size_t marker;   // index into causal markers' marker indices space (marker column)
  std::size_t weather;  // weather column
  double coefficient;
};

struct GroundTruth {
  double base_yield = 0.0;
  double gxe_strength = 0.0;
  std::vector<std::size_t> causal_markers;
  std::vector<double> marker_coefficients;
  std::vector<WeatherDriver> weather_drivers;
  std::vector<SoilDriver> soil_drivers;
  std::vector<Interaction> interactions;
  std::vector<double> allele_frequencies;  // frequency of the +1 allele per marker
  /// True codes (before masking) of every hybrid at every marker referenced
  /// above, keyed by marker column; rows follow hybrid order.
  std::map<std::size_t, std::vector<MarkerCode>> true_codes;

  double genetic_value(std::size_t hybrid) const {
    double g = 0.0;
    for (std::size_t c = 0; c < causal_markers.size(); ++c)
      g += marker_coefficients[c] * true_codes.at(causal_markers[c])[hybrid];
    return g;
  }

  double environment_value(const WeatherVector& w, const SoilVector& s) const {
    double e = 0.0;
    for (const auto& d : weather_drivers) {
      double x = w[d.index];
      e += d.amplitude * std::tanh(1.5 * x) - d.curvature * x * x;
    }
    for (const auto& d : soil_drivers) e += d.amplitude * std::tanh(s[d.index]);
    return e;
  }

  double interaction_value(std::size_t hybrid, const WeatherVector& w) const {
    double v = 0.0;
    for (const auto& t : interactions) v += t.coefficient * true_codes.at(t.marker)[hybrid] * w[t.weather];
    return gxe_strength * v;
  }

  double noiseless_yield(std::size_t hybrid, const WeatherVector& w, const SoilVector& s) const {
    return base_yield + genetic_value(hybrid) + environment_value(w, s) + interaction_value(hybrid, w);
  }
};

struct SyntheticData {
  MarkerMatrix markers;
  EnvironmentTable environment;
  PerformanceTable performance;
  GroundTruth truth;
};

inline std::string marker_column_name(std::size_t j, std::size_t p) {
  std::size_t width = std::max<std::size_t>(4, std::to_string(p).size());
  std::string digits = std::to_string(j + 1);
  return "m_" + std::string(width - digits.size(), '0') + digits;
}

inline std::string padded_id(char prefix, std::size_t i, std::size_t n) {
  std::size_t width = std::max<std::size_t>(4, std::to_string(n).size());
  std::string digits = std::to_string(i + 1);
  return std::string(1, prefix) + std::string(width - digits.size(), '0') + digits;
}

inline SyntheticData generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SyntheticData out;
  GroundTruth& truth = out.truth;
  truth.base_yield = cfg.base_yield;
  truth.gxe_strength = cfg.gxe_strength;

  // Allele frequencies and genotypes.
  const auto n_h = static_cast<Index>(cfg.n_hybrids);
  const auto p = static_cast<Index>(cfg.p_markers);
  truth.allele_frequencies.resize(cfg.p_markers);
  std::vector<bool> common(cfg.p_markers);
  for (std::size_t j = 0; j < cfg.p_markers; ++j) {
    bool rare = unit(rng) < cfg.low_maf_fraction;
    double maf = rare ? uniform(0.0, 0.01) : uniform(cfg.min_common_maf, 0.5);
    truth.allele_frequencies[j] = unit(rng) < 0.5 ? maf : 1.0 - maf;
    common[j] = !rare;
  }
  CodeMatrix codes(n_h, p);
  for (Index i = 0; i < n_h; ++i)
    for (Index j = 0; j < p; ++j) {
      double f = truth.allele_frequencies[static_cast<std::size_t>(j)];
      int alleles = (unit(rng) < f) + (unit(rng) < f);
      codes(i, j) = static_cast<MarkerCode>(alleles - 1);
    }

  // Causal markers among the common ones (fall back to any marker).
  std::vector<std::size_t> pool;
  for (std::size_t j = 0; j < cfg.p_markers; ++j)
    if (common[j]) pool.push_back(j);
  if (pool.size() < cfg.n_causal_markers) {
    pool.resize(cfg.p_markers);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  truth.causal_markers.assign(pool.begin(), pool.begin() + static_cast<long>(cfg.n_causal_markers));
  std::sort(truth.causal_markers.begin(), truth.causal_markers.end());
  for (std::size_t c = 0; c < cfg.n_causal_markers; ++c) {
    double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    truth.marker_coefficients.push_back(sign * cfg.marker_effect * uniform(0.5, 1.5));
  }

  // Environment drivers.
  std::vector<std::size_t> w_idx(kWeatherDim), s_idx(kSoilDim);
  std::iota(w_idx.begin(), w_idx.end(), std::size_t{0});
  std::iota(s_idx.begin(), s_idx.end(), std::size_t{0});
  std::shuffle(w_idx.begin(), w_idx.end(), rng);
  std::shuffle(s_idx.begin(), s_idx.end(), rng);
  for (std::size_t d = 0; d < cfg.n_weather_drivers; ++d) {
    double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    truth.weather_drivers.push_back(
        {w_idx[d], sign * cfg.weather_effect * uniform(0.5, 1.5), cfg.weather_curvature * uniform(0.5, 1.5)});
  }
  std::sort(truth.weather_drivers.begin(), truth.weather_drivers.end(),
            [](const auto& a, const auto& b) { return a.index < b.index; });
  for (std::size_t d = 0; d < cfg.n_soil_drivers; ++d) {
    double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    truth.soil_drivers.push_back({s_idx[d], sign * cfg.soil_effect * uniform(0.5, 1.5)});
  }
  std::sort(truth.soil_drivers.begin(), truth.soil_drivers.end(),
            [](const auto& a, const auto& b) { return a.index < b.index; });
  for (std::size_t t = 0; t < cfg.n_interactions; ++t) {
    auto m = truth.causal_markers[t % truth.causal_markers.size()];
    auto w = truth.weather_drivers[t % truth.weather_drivers.size()].index;
    double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    truth.interactions.push_back({m, w, sign * cfg.marker_effect * uniform(0.5, 1.5)});
  }
  for (auto m : truth.causal_markers) {
    auto& col = truth.true_codes[m];
    col.resize(cfg.n_hybrids);
    for (std::size_t i = 0; i < cfg.n_hybrids; ++i) col[i] = codes(static_cast<Index>(i), static_cast<Index>(m));
  }

  // Weather: per-location mean plus a stationary AR(1) deviation per variable.
  std::vector<std::string> locations;
  for (std::size_t l = 0; l < cfg.n_locations; ++l) locations.push_back(padded_id('L', l, cfg.n_locations));
  const double phi = cfg.weather_persistence;
  const double innovation = std::sqrt(1.0 - phi * phi);
  const double deviation_sd = std::sqrt(std::max(0.0, 1.0 - cfg.location_weather_sd * cfg.location_weather_sd));
  for (const auto& loc : locations) {
    std::array<double, kWeatherDim> mean{}, dev{};
    for (std::size_t w = 0; w < kWeatherDim; ++w) {
      mean[w] = cfg.location_weather_sd * normal(rng);
      dev[w] = normal(rng);
    }
    for (int y = cfg.first_year; y <= cfg.last_year; ++y) {
      WeatherVector wv{};
      for (std::size_t w = 0; w < kWeatherDim; ++w) {
        if (y > cfg.first_year) dev[w] = phi * dev[w] + innovation * normal(rng);
        wv[w] = mean[w] + deviation_sd * dev[w];
      }
      out.environment.set_weather(loc, y, wv);
    }
    SoilVector sv{};
    for (auto& v : sv) v = normal(rng);
    out.environment.set_soil(loc, sv);
  }

  // Trial keys, unique, sorted by (year, location, hybrid).
  std::set<std::tuple<int, std::size_t, std::size_t>> keys;
  std::uniform_int_distribution<std::size_t> pick_h(0, cfg.n_hybrids - 1), pick_l(0, cfg.n_locations - 1);
  std::uniform_int_distribution<int> pick_y(cfg.first_trial_year, cfg.last_year);
  while (keys.size() < cfg.n_trials) keys.emplace(pick_y(rng), pick_l(rng), pick_h(rng));

  std::vector<std::string> hybrids;
  for (std::size_t h = 0; h < cfg.n_hybrids; ++h) hybrids.push_back(padded_id('H', h, cfg.n_hybrids));

  std::vector<PerformanceRecord> recs;
  recs.reserve(keys.size());
  std::map<std::pair<std::size_t, int>, std::pair<double, std::size_t>> site_sums;
  for (const auto& [y, l, h] : keys) {
    const auto& w = *out.environment.weather(locations[l], y);
    const auto& s = *out.environment.soil(locations[l]);
    double value = truth.noiseless_yield(h, w, s) + cfg.noise_sd * normal(rng);
    recs.push_back({hybrids[h], locations[l], y, value, 0.0});
    auto& acc = site_sums[{l, y}];
    acc.first += value;
    acc.second += 1;
  }
  std::size_t r = 0;
  for (const auto& [y, l, h] : keys) {
    const auto& acc = site_sums[{l, y}];
    recs[r++].check_yield = acc.first / static_cast<double>(acc.second);
  }

  // Independent masking at missing_rate.
  if (cfg.missing_rate > 0.0)
    for (Index j = 0; j < p; ++j)
      for (Index i = 0; i < n_h; ++i)
        if (unit(rng) < cfg.missing_rate) codes(i, j) = kMissing;

  std::vector<std::string> names;
  for (std::size_t j = 0; j < cfg.p_markers; ++j) names.push_back(marker_column_name(j, cfg.p_markers));
  out.markers = MarkerMatrix(std::move(hybrids), std::move(names), std::move(codes));
  out.performance = PerformanceTable(std::move(recs));
  return out;
}

/// ground_truth.csv: one row per planted term.
inline std::string ground_truth_csv(const GroundTruth& t, const MarkerMatrix& markers) {
  std::string out = "feature,group,index,coefficient,term\n";
  out += "intercept,none,0," + format_double(t.base_yield) + ",base\n";
  for (std::size_t c = 0; c < t.causal_markers.size(); ++c)
    out += markers.marker_names()[t.causal_markers[c]] + ",marker," + std::to_string(t.causal_markers[c]) + "," +
           format_double(t.marker_coefficients[c]) + ",additive\n";
  for (const auto& d : t.weather_drivers) {
    out += weather_column_name(d.index) + ",weather," + std::to_string(d.index) + "," + format_double(d.amplitude) +
           ",saturating\n";
    out += weather_column_name(d.index) + ",weather," + std::to_string(d.index) + "," + format_double(-d.curvature) +
           ",quadratic\n";
  }
  for (const auto& d : t.soil_drivers)
    out += soil_column_name(d.index) + ",soil," + std::to_string(d.index) + "," + format_double(d.amplitude) +
           ",saturating\n";
  for (const auto& x : t.interactions)
    out += markers.marker_names()[x.marker] + ":" + weather_column_name(x.weather) + ",interaction," +
           std::to_string(x.marker) + "," + format_double(t.gxe_strength * x.coefficient) + ",marker_x_weather\n";
  return out;
}

/// Writes genotype.csv, weather.csv, soil.csv, performance.csv and
/// ground_truth.csv into `dir` (created if needed).
inline void write_synthetic(const std::string& dir, const SyntheticData& d) {
  std::filesystem::create_directories(dir);
  write_file(dir + "/genotype.csv", genotype_csv(d.markers));
  write_file(dir + "/weather.csv", weather_csv(d.environment));
  write_file(dir + "/soil.csv", soil_csv(d.environment));
  write_file(dir + "/performance.csv", performance_csv(d.performance));
  write_file(dir + "/ground_truth.csv", ground_truth_csv(d.truth, d.markers));
}

}  // namespace cropdnn
