#pragma once

#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "cropdnn/baselines/baselines.hpp"
#include "cropdnn/common.hpp"
#include "cropdnn/data_model.hpp"
#include "cropdnn/nn/network.hpp"
#include "cropdnn/nn/trainer.hpp"
#include "cropdnn/preprocess.hpp"
#include "cropdnn/synth.hpp"
#include "cropdnn/weather_forecast.hpp"

namespace cropdnn {

struct SelectionConfig {
  std::size_t n_markers = 50;
  std::size_t n_environment = 20;
  double activation_threshold = 0.0;
};

struct ReportConfig {
  double location_threshold = 15.0;
  std::size_t bins = 20;
};

/// Everything a run needs. Defaults are desk scale.
struct RunConfig {
  std::uint64_t seed = 1;
  SynthConfig synth;
  PreprocessOptions preprocess;
  SplitRule split{2016, 0.5, 0};
  nn::NetworkSpec network = nn::NetworkSpec::desk(0);
  nn::TrainConfig train;
  ForecastConfig weather;
  BaselineSettings baselines;
  SelectionConfig select;
  ReportConfig report;
  std::string profile = "desk";

  /// Per-stage seeds follow from the master seed.
  void propagate_seeds() {
    synth.seed = seed;
    split.seed = derive_seed(seed, 100);
    train.seed = derive_seed(seed, 101);
    weather.train.seed = derive_seed(seed, 102);
    baselines.seed = derive_seed(seed, 103);
  }
};

namespace detail {

struct ConfigKey {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline double parse_number([[maybe_unused]] const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw config_error("expected a number, got '" + v + "'");
  }
}

inline long long parse_integer([[maybe_unused]] const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw config_error("expected an integer, got '" + v + "'");
  }
}

inline bool parse_bool([[maybe_unused]] const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw config_error("expected true or false, got '" + v + "'");
}

template <class T>
ConfigKey real(T RunConfig::*section, double T::*field) {
  return {[=](RunConfig& c, const std::string& v) { c.*section.*field = parse_number("", v); },
          [=](const RunConfig& c) { return format_double(c.*section.*field); }};
}

template <class T, class I>
ConfigKey integer(T RunConfig::*section, I T::*field) {
  return {[=](RunConfig& c, const std::string& v) {
            auto x = parse_integer("", v);
            if (std::is_unsigned_v<I> && x < 0) throw config_error("negative value '" + v + "'");
            c.*section.*field = static_cast<I>(x);
          },
          [=](const RunConfig& c) { return std::to_string(c.*section.*field); }};
}

template <class T>
ConfigKey boolean(T RunConfig::*section, bool T::*field) {
  return {[=](RunConfig& c, const std::string& v) { c.*section.*field = parse_bool("", v); },
          [=](const RunConfig& c) { return std::string(c.*section.*field ? "true" : "false"); }};
}

inline const std::map<std::string, ConfigKey>& config_keys() {
  static const std::map<std::string, ConfigKey> keys = [] {
    std::map<std::string, ConfigKey> k;
    k["seed"] = {[](RunConfig& c, const std::string& v) {
                   auto x = parse_integer("seed", v);
                   if (x < 0) throw config_error("seed must be >= 0");
                   c.seed = static_cast<std::uint64_t>(x);
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }};
    using S = SynthConfig;
    k["synth.n_hybrids"] = integer(&RunConfig::synth, &S::n_hybrids);
    k["synth.n_locations"] = integer(&RunConfig::synth, &S::n_locations);
    k["synth.first_year"] = integer(&RunConfig::synth, &S::first_year);
    k["synth.last_year"] = integer(&RunConfig::synth, &S::last_year);
    k["synth.first_trial_year"] = integer(&RunConfig::synth, &S::first_trial_year);
    k["synth.n_trials"] = integer(&RunConfig::synth, &S::n_trials);
    k["synth.p_markers"] = integer(&RunConfig::synth, &S::p_markers);
    k["synth.missing_rate"] = real(&RunConfig::synth, &S::missing_rate);
    k["synth.n_causal_markers"] = integer(&RunConfig::synth, &S::n_causal_markers);
    k["synth.gxe_strength"] = real(&RunConfig::synth, &S::gxe_strength);
    k["synth.noise_sd"] = real(&RunConfig::synth, &S::noise_sd);
    k["synth.base_yield"] = real(&RunConfig::synth, &S::base_yield);
    k["synth.marker_effect"] = real(&RunConfig::synth, &S::marker_effect);
    k["synth.weather_effect"] = real(&RunConfig::synth, &S::weather_effect);
    k["synth.weather_curvature"] = real(&RunConfig::synth, &S::weather_curvature);
    k["synth.soil_effect"] = real(&RunConfig::synth, &S::soil_effect);
    k["synth.n_weather_drivers"] = integer(&RunConfig::synth, &S::n_weather_drivers);
    k["synth.n_soil_drivers"] = integer(&RunConfig::synth, &S::n_soil_drivers);
    k["synth.n_interactions"] = integer(&RunConfig::synth, &S::n_interactions);
    k["synth.weather_persistence"] = real(&RunConfig::synth, &S::weather_persistence);
    k["synth.location_weather_sd"] = real(&RunConfig::synth, &S::location_weather_sd);
    k["synth.low_maf_fraction"] = real(&RunConfig::synth, &S::low_maf_fraction);
    k["synth.min_common_maf"] = real(&RunConfig::synth, &S::min_common_maf);

    k["preprocess.call_rate"] = real(&RunConfig::preprocess, &PreprocessOptions::call_rate);
    k["preprocess.maf"] = real(&RunConfig::preprocess, &PreprocessOptions::maf);
    k["split.holdout_year"] = integer(&RunConfig::split, &SplitRule::holdout_year);
    k["split.holdout_fraction"] = real(&RunConfig::split, &SplitRule::holdout_fraction);

    using N = nn::NetworkSpec;
    k["network.hidden_layers"] = integer(&RunConfig::network, &N::hidden_layers);
    k["network.hidden_width"] = integer(&RunConfig::network, &N::hidden_width);
    k["network.maxout_pieces"] = integer(&RunConfig::network, &N::maxout_pieces);
    k["network.batchnorm"] = boolean(&RunConfig::network, &N::batchnorm);
    k["network.residual"] = boolean(&RunConfig::network, &N::residual);
    k["network.bn_epsilon"] = real(&RunConfig::network, &N::bn_epsilon);

    using T = nn::TrainConfig;
    k["train.base_lr"] = real(&RunConfig::train, &T::base_lr);
    k["train.lr_halving_period"] = integer(&RunConfig::train, &T::lr_halving_period);
    k["train.batch_size"] = integer(&RunConfig::train, &T::batch_size);
    k["train.max_iterations"] = integer(&RunConfig::train, &T::max_iterations);
    k["train.l1_lambda"] = real(&RunConfig::train, &T::l1_lambda);
    k["train.l2_lambda"] = real(&RunConfig::train, &T::l2_lambda);
    k["train.bn_momentum"] = real(&RunConfig::train, &T::bn_momentum);
    k["train.log_interval"] = integer(&RunConfig::train, &T::log_interval);

    k["weather.lag"] = integer(&RunConfig::weather, &ForecastConfig::lag);
    k["weather.hidden_width"] = integer(&RunConfig::weather, &ForecastConfig::hidden_width);
    k["weather.base_lr"] = {[](RunConfig& c, const std::string& v) { c.weather.train.base_lr = parse_number("weather.base_lr", v); },
                            [](const RunConfig& c) { return format_double(c.weather.train.base_lr); }};
    k["weather.max_iterations"] = {
        [](RunConfig& c, const std::string& v) { c.weather.train.max_iterations = parse_integer("weather.max_iterations", v); },
        [](const RunConfig& c) { return std::to_string(c.weather.train.max_iterations); }};
    k["weather.lr_halving_period"] = {
        [](RunConfig& c, const std::string& v) { c.weather.train.lr_halving_period = parse_integer("weather.lr_halving_period", v); },
        [](const RunConfig& c) { return std::to_string(c.weather.train.lr_halving_period); }};
    k["weather.l2_lambda"] = {[](RunConfig& c, const std::string& v) { c.weather.train.l2_lambda = parse_number("weather.l2_lambda", v); },
                              [](const RunConfig& c) { return format_double(c.weather.train.l2_lambda); }};

    k["lasso.lambda"] = {[](RunConfig& c, const std::string& v) { c.baselines.lasso.lambda = parse_number("lasso.lambda", v); },
                         [](const RunConfig& c) { return format_double(c.baselines.lasso.lambda); }};
    k["lasso.tolerance"] = {[](RunConfig& c, const std::string& v) { c.baselines.lasso.tolerance = parse_number("lasso.tolerance", v); },
                            [](const RunConfig& c) { return format_double(c.baselines.lasso.tolerance); }};
    k["lasso.max_sweeps"] = {
        [](RunConfig& c, const std::string& v) { c.baselines.lasso.max_sweeps = static_cast<int>(parse_integer("lasso.max_sweeps", v)); },
        [](const RunConfig& c) { return std::to_string(c.baselines.lasso.max_sweeps); }};
    k["tree.max_depth"] = {
        [](RunConfig& c, const std::string& v) { c.baselines.tree.max_depth = static_cast<std::size_t>(parse_integer("tree.max_depth", v)); },
        [](const RunConfig& c) { return std::to_string(c.baselines.tree.max_depth); }};
    k["tree.min_samples_split"] = {
        [](RunConfig& c, const std::string& v) {
          c.baselines.tree.min_samples_split = static_cast<std::size_t>(parse_integer("tree.min_samples_split", v));
        },
        [](const RunConfig& c) { return std::to_string(c.baselines.tree.min_samples_split); }};
    k["snn.width"] = {
        [](RunConfig& c, const std::string& v) { c.baselines.snn.width = static_cast<std::size_t>(parse_integer("snn.width", v)); },
        [](const RunConfig& c) { return std::to_string(c.baselines.snn.width); }};
    k["snn.base_lr"] = {[](RunConfig& c, const std::string& v) { c.baselines.snn.train.base_lr = parse_number("snn.base_lr", v); },
                        [](const RunConfig& c) { return format_double(c.baselines.snn.train.base_lr); }};
    k["snn.max_iterations"] = {
        [](RunConfig& c, const std::string& v) { c.baselines.snn.train.max_iterations = parse_integer("snn.max_iterations", v); },
        [](const RunConfig& c) { return std::to_string(c.baselines.snn.train.max_iterations); }};
    k["snn.lr_halving_period"] = {
        [](RunConfig& c, const std::string& v) { c.baselines.snn.train.lr_halving_period = parse_integer("snn.lr_halving_period", v); },
        [](const RunConfig& c) { return std::to_string(c.baselines.snn.train.lr_halving_period); }};
    k["snn.l2_lambda"] = {[](RunConfig& c, const std::string& v) { c.baselines.snn.train.l2_lambda = parse_number("snn.l2_lambda", v); },
                          [](const RunConfig& c) { return format_double(c.baselines.snn.train.l2_lambda); }};

    k["select.n_markers"] = integer(&RunConfig::select, &SelectionConfig::n_markers);
    k["select.n_environment"] = integer(&RunConfig::select, &SelectionConfig::n_environment);
    k["select.activation_threshold"] = real(&RunConfig::select, &SelectionConfig::activation_threshold);
    k["report.location_threshold"] = real(&RunConfig::report, &ReportConfig::location_threshold);
    k["report.bins"] = integer(&RunConfig::report, &ReportConfig::bins);
    return k;
  }();
  return keys;
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline std::vector<std::string> config_key_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : detail::config_keys()) out.push_back(k);
  return out;
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  const auto& keys = detail::config_keys();
  auto it = keys.find(key);
  if (it == keys.end()) throw config_error("config: unknown key '" + key + "'");
  try {
    it->second.set(c, value);
  } catch (const Error& e) {
    throw config_error("config: " + key + ": " + e.what());
  }
}

/// "paper" is the full-size setting: 21 x 50 network and 300,000 iterations.
inline void apply_profile(RunConfig& c, const std::string& profile) {
  if (profile == "desk") {
    c.network.hidden_layers = 6;
    c.train.max_iterations = 30'000;
  } else if (profile == "paper") {
    c.network.hidden_layers = 21;
    c.network.hidden_width = 50;
    c.train.max_iterations = 300'000;
    c.baselines.snn.width = 300;
  } else {
    throw config_error("unknown profile '" + profile + "' (expected desk or paper)");
  }
  c.profile = profile;
}

/// Flat `key = value` lines; `#` starts a comment. A `profile` line is
/// accepted so that config_text() output reads back unchanged.
inline void apply_config_text(RunConfig& c, const std::string& text, const std::string& origin = "config") {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error(origin + ":" + std::to_string(number) + ": expected key = value");
    const auto key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    try {
      if (key == "profile")
        apply_profile(c, value);  // resets the profile keys, so put it first
      else
        set_config_value(c, key, value);
    } catch (const Error& e) {
      throw config_error(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

inline void validate(const RunConfig& c) {
  c.synth.validate();
  c.train.validate();
  c.weather.train.validate();
  c.baselines.snn.train.validate();
  auto net = c.network;
  net.input_dim = 1;
  net.validate();
  if (!(c.preprocess.call_rate >= 0.0 && c.preprocess.call_rate <= 1.0)) throw config_error("preprocess.call_rate outside [0, 1]");
  if (!(c.preprocess.maf >= 0.0 && c.preprocess.maf <= 0.5)) throw config_error("preprocess.maf outside [0, 0.5]");
  if (!(c.split.holdout_fraction > 0.0 && c.split.holdout_fraction <= 1.0))
    throw config_error("split.holdout_fraction outside (0, 1]");
  if (c.weather.lag == 0) throw config_error("weather.lag must be positive");
  if (c.baselines.tree.min_samples_split < 2) throw config_error("tree.min_samples_split must be >= 2");
  if (c.report.bins < 2) throw config_error("report.bins must be >= 2");
}

/// Canonical text of every key, sorted; hashed into run manifests.
inline std::string config_text(const RunConfig& c) {
  std::string out = "profile = " + c.profile + "\n";
  for (const auto& [k, v] : detail::config_keys()) out += k + " = " + v.get(c) + "\n";
  return out;
}

}  // namespace cropdnn
