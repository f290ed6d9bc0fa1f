#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cropdnn/common.hpp"
#include "cropdnn/data_model.hpp"
#include "cropdnn/nn/checkpoint.hpp"
#include "cropdnn/nn/network.hpp"
#include "cropdnn/nn/trainer.hpp"

namespace cropdnn {

struct LagSample {
  std::string location;
  int target_year = 0;
};

/// Pooled lagged samples. Row r of every variable's block belongs to
/// provenance[r]; column k holds the value k + 1 years before the target.
struct LagSampleSet {
  std::size_t lag = 4;
  std::vector<LagSample> provenance;
  std::vector<Matrix> inputs;   // kWeatherDim blocks, rows x lag
  std::vector<Vector> targets;  // kWeatherDim vectors

  std::size_t size() const { return provenance.size(); }
};

/// One sample per (location, year) whose `lag` preceding years are all
/// present at that location. Targets after `max_target_year` are skipped.
inline LagSampleSet build_lag_samples(const EnvironmentTable& env, std::size_t lag = 4,
                                      std::optional<int> max_target_year = std::nullopt) {
  if (lag == 0) throw config_error("build_lag_samples: lag must be positive");
  LagSampleSet set;
  set.lag = lag;
  for (const auto& loc : env.location_ids())
    for (int y : env.years_at(loc)) {
      if (max_target_year && y > *max_target_year) continue;
      bool complete = true;
      for (std::size_t k = 1; k <= lag && complete; ++k) complete = env.weather(loc, y - static_cast<int>(k)) != nullptr;
      if (complete) set.provenance.push_back({loc, y});
    }
  if (set.provenance.empty())
    throw data_error("build_lag_samples: no location has " + std::to_string(lag + 1) + " consecutive years of weather");
  const auto n = static_cast<Index>(set.provenance.size());
  set.inputs.assign(kWeatherDim, Matrix(n, static_cast<Index>(lag)));
  set.targets.assign(kWeatherDim, Vector(n));
  for (Index r = 0; r < n; ++r) {
    const auto& s = set.provenance[static_cast<std::size_t>(r)];
    const auto& target = *env.weather(s.location, s.target_year);
    for (std::size_t w = 0; w < kWeatherDim; ++w) set.targets[w][r] = target[w];
    for (std::size_t k = 0; k < lag; ++k) {
      const auto& past = *env.weather(s.location, s.target_year - 1 - static_cast<int>(k));
      for (std::size_t w = 0; w < kWeatherDim; ++w) set.inputs[w](r, static_cast<Index>(k)) = past[w];
    }
  }
  return set;
}

struct ForecastConfig {
  std::size_t lag = 4;
  std::size_t hidden_width = 10;
  nn::TrainConfig train = [] {
    nn::TrainConfig c;
    c.base_lr = 3e-3;
    c.lr_halving_period = 1'000;
    c.max_iterations = 3'000;
    c.batch_size = 64;
    c.l1_lambda = 0.0;
    c.l2_lambda = 1e-5;
    c.log_interval = 1'000;
    return c;
  }();
};

/// Model for one weather variable: inputs are standardized with the
/// variable's training mean and scale; a constant variable is predicted as
/// that constant.
struct VariableModel {
  bool constant = false;
  double mean = 0.0;
  double scale = 1.0;
  nn::NetworkParams params;
};

struct WeatherForecaster {
  std::size_t lag = 4;
  nn::NetworkSpec spec;
  nn::TrainConfig config;
  std::vector<VariableModel> models;  // one per weather variable
  std::vector<std::string> warnings;

  /// Predictions for one variable from raw lag values (rows x lag).
  Vector predict_variable(std::size_t w, const Matrix& lags) const {
    const auto& m = models.at(w);
    if (m.constant) return Vector::Constant(lags.rows(), m.mean);
    Matrix x = (lags.array() - m.mean) / m.scale;
    return nn::predict(m.params, spec, x);
  }
};

/// Trains one shallow tanh network per weather variable. Variable w uses
/// seed derive_seed(config.train.seed, w), so variables are independent.
inline WeatherForecaster train_forecasters(const LagSampleSet& samples, const ForecastConfig& config) {
  if (samples.size() < 2) throw data_error("train_forecasters: need at least 2 lag samples");
  WeatherForecaster f;
  f.lag = samples.lag;
  f.spec = nn::NetworkSpec::shallow(samples.lag, config.hidden_width);
  f.config = config.train;
  f.models.resize(kWeatherDim);
  for (std::size_t w = 0; w < kWeatherDim; ++w) {
    const Matrix& x = samples.inputs[w];
    const Vector& y = samples.targets[w];
    auto& m = f.models[w];
    const double n = static_cast<double>(x.size());
    m.mean = x.mean();
    double sd = std::sqrt((x.array() - m.mean).square().sum() / (n - 1.0));
    if ((x.array() == y[0]).all() && (y.array() == y[0]).all()) {
      m.constant = true;
      m.mean = y[0];
      f.warnings.push_back(weather_column_name(w) + " is constant; forecast as " + format_double(y[0]));
      continue;
    }
    m.scale = sd > 0.0 ? sd : 1.0;
    nn::TrainConfig c = config.train;
    c.seed = derive_seed(config.train.seed, w);
    Matrix xs = (x.array() - m.mean) / m.scale;
    m.params = nn::train_network(f.spec, c, xs, y).params;
  }
  return f;
}

struct WeatherForecast {
  int year = 0;
  std::map<std::string, WeatherVector> values;  // by location
  std::vector<std::string> missing_window;      // locations lacking the lag window
};

/// Forecasts `target_year` at every location whose lag window is present.
inline WeatherForecast forecast_year(const WeatherForecaster& f, const EnvironmentTable& env, int target_year) {
  WeatherForecast out;
  out.year = target_year;
  std::vector<std::string> ready;
  for (const auto& loc : env.location_ids()) {
    bool complete = true;
    for (std::size_t k = 1; k <= f.lag && complete; ++k)
      complete = env.weather(loc, target_year - static_cast<int>(k)) != nullptr;
    (complete ? ready : out.missing_window).push_back(loc);
  }
  if (ready.empty()) throw data_error("forecast_year: no location has the lag window for " + std::to_string(target_year));
  const auto n = static_cast<Index>(ready.size());
  for (const auto& loc : ready) out.values[loc] = WeatherVector{};
  for (std::size_t w = 0; w < kWeatherDim; ++w) {
    Matrix lags(n, static_cast<Index>(f.lag));
    for (Index r = 0; r < n; ++r)
      for (std::size_t k = 0; k < f.lag; ++k)
        lags(r, static_cast<Index>(k)) = (*env.weather(ready[static_cast<std::size_t>(r)], target_year - 1 - static_cast<int>(k)))[w];
    Vector pred = f.predict_variable(w, lags);
    for (Index r = 0; r < n; ++r) out.values[ready[static_cast<std::size_t>(r)]][w] = pred[r];
  }
  return out;
}

/// Copy of `env` with the forecasted year's weather replaced (or added).
inline EnvironmentTable substitute_forecast(const EnvironmentTable& env, const WeatherForecast& forecast) {
  EnvironmentTable out;
  for (const auto& [key, w] : env.weather_entries()) {
    if (key.second == forecast.year && forecast.values.count(key.first)) continue;
    out.set_weather(key.first, key.second, w);
  }
  for (const auto& [loc, w] : forecast.values) out.set_weather(loc, forecast.year, w);
  for (const auto& [loc, s] : env.soil_entries()) out.set_soil(loc, s);
  return out;
}

/// Copy of `env` with every weather row of `forecast_rows` replacing the
/// matching (location, year) entry.
inline EnvironmentTable substitute_weather(const EnvironmentTable& env, const EnvironmentTable& forecast_rows) {
  EnvironmentTable out;
  for (const auto& [key, w] : env.weather_entries())
    if (!forecast_rows.weather(key.first, key.second)) out.set_weather(key.first, key.second, w);
  for (const auto& [key, w] : forecast_rows.weather_entries()) out.set_weather(key.first, key.second, w);
  for (const auto& [loc, s] : env.soil_entries()) out.set_soil(loc, s);
  return out;
}

/// Weather-only table holding the forecast rows (weather.csv schema).
inline EnvironmentTable forecast_table(const WeatherForecast& forecast) {
  EnvironmentTable t;
  for (const auto& [loc, w] : forecast.values) t.set_weather(loc, forecast.year, w);
  return t;
}

inline constexpr int kForecasterVersion = 1;

inline nlohmann::json to_json(const WeatherForecaster& f) {
  nlohmann::json models = nlohmann::json::array();
  for (std::size_t w = 0; w < f.models.size(); ++w) {
    const auto& m = f.models[w];
    nlohmann::json j{{"variable", weather_column_name(w)}, {"constant", m.constant}, {"mean", m.mean}, {"scale", m.scale}};
    if (!m.constant) j["checkpoint"] = nn::Checkpoint{f.spec, m.params, f.config}.to_json();
    models.push_back(std::move(j));
  }
  return {{"format", "cropdnn.weather_forecaster"},
          {"version", kForecasterVersion},
          {"lag", f.lag},
          {"spec", nn::to_json(f.spec)},
          {"config", nn::to_json(f.config)},
          {"warnings", f.warnings},
          {"models", std::move(models)}};
}

inline WeatherForecaster weather_forecaster_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cropdnn.weather_forecaster") throw data_error("not a weather forecaster bundle");
  if (j.at("version").get<int>() != kForecasterVersion) throw data_error("unsupported weather forecaster version");
  WeatherForecaster f;
  f.lag = j.at("lag").get<std::size_t>();
  f.spec = nn::spec_from_json(j.at("spec"));
  f.config = nn::train_config_from_json(j.at("config"));
  f.warnings = j.at("warnings").get<std::vector<std::string>>();
  for (const auto& m : j.at("models")) {
    VariableModel v;
    v.constant = m.at("constant").get<bool>();
    v.mean = m.at("mean").get<double>();
    v.scale = m.at("scale").get<double>();
    if (!v.constant) v.params = nn::Checkpoint::from_json(m.at("checkpoint")).params;
    f.models.push_back(std::move(v));
  }
  if (f.models.size() != kWeatherDim) throw data_error("weather forecaster bundle must hold 72 models");
  return f;
}

}  // namespace cropdnn
