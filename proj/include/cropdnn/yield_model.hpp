#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "cropdnn/common.hpp"
#include "cropdnn/data_model.hpp"
#include "cropdnn/evaluate.hpp"
#include "cropdnn/nn/checkpoint.hpp"
#include "cropdnn/nn/network.hpp"
#include "cropdnn/nn/trainer.hpp"
#include "cropdnn/preprocess.hpp"

namespace cropdnn {

// Seed streams under the master seed.
inline constexpr std::uint64_t kYieldSeedStream = 1;
inline constexpr std::uint64_t kCheckSeedStream = 2;

struct TrainedNetwork {
  nn::NetworkSpec spec;
  nn::NetworkParams params;
  nn::TrainConfig config;
  nn::TrainLog log;

  Vector predict(const Matrix& design) const { return nn::predict(params, spec, design); }
  nn::Checkpoint checkpoint() const { return {spec, params, config}; }
};

/// Yield and check-yield networks over one shared design layout.
struct YieldModelPair {
  PreprocessFit fit;
  TrainedNetwork yield;
  TrainedNetwork check;
};

struct PredictionTriplet {
  Vector yield;
  Vector check;
  Vector difference;  // yield - check, elementwise
};

/// Network spec with the input width taken from the design.
inline nn::NetworkSpec sized_spec(nn::NetworkSpec spec, std::size_t input_dim) {
  spec.input_dim = input_dim;
  return spec;
}

inline TrainedNetwork train_one(const nn::NetworkSpec& spec, nn::TrainConfig config, std::uint64_t seed,
                                const Matrix& design, const Vector& targets) {
  config.seed = seed;
  auto r = nn::train_network(spec, config, design, targets);
  return {spec, std::move(r.params), config, std::move(r.log)};
}

/// Trains both networks on a prepared design. The seeds are given explicitly
/// so callers can tie them together.
inline YieldModelPair train_pair_on_design(const Matrix& design, const PreprocessFit& fit, const Vector& yield,
                                           const Vector& check, const nn::NetworkSpec& spec_template,
                                           const nn::TrainConfig& config, std::uint64_t yield_seed,
                                           std::uint64_t check_seed) {
  if (static_cast<std::size_t>(design.cols()) != fit.width()) throw data_error("train_pair: design width does not match the fit");
  auto spec = sized_spec(spec_template, static_cast<std::size_t>(design.cols()));
  YieldModelPair pair;
  pair.fit = fit;
  pair.yield = train_one(spec, config, yield_seed, design, yield);
  pair.check = train_one(spec, config, check_seed, design, check);
  return pair;
}

/// Fits preprocessing on the training rows (unless `fit` is given) and
/// trains the pair with seeds derived from config.seed.
inline YieldModelPair train_pair(const FieldTrialDataset& train, const nn::NetworkSpec& spec_template,
                                 const nn::TrainConfig& config, const std::optional<PreprocessFit>& fit = std::nullopt,
                                 const PreprocessOptions& opts = {}) {
  auto d = assemble_design(train, fit, opts);
  return train_pair_on_design(d.design, d.fit, train.yields(), train.check_yields(), spec_template, config,
                              derive_seed(config.seed, kYieldSeedStream), derive_seed(config.seed, kCheckSeedStream));
}

inline PredictionTriplet predict_triplet(const YieldModelPair& pair, const Matrix& design) {
  PredictionTriplet t;
  t.yield = pair.yield.predict(design);
  t.check = pair.check.predict(design);
  t.difference = t.yield - t.check;
  return t;
}

inline PredictionTriplet predict_triplet(const YieldModelPair& pair, const FieldTrialDataset& rows) {
  return predict_triplet(pair, assemble_design(rows, pair.fit).design);
}

/// Metrics rows for the three responses.
inline std::vector<MetricsRow> triplet_metrics(const std::string& model, const PredictionTriplet& train_pred,
                                               const FieldTrialDataset& train, const PredictionTriplet& valid_pred,
                                               const FieldTrialDataset& validation, const std::string& note = "") {
  auto diff = [](const FieldTrialDataset& d) { return Vector(d.yields() - d.check_yields()); };
  return {{model, "yield", metrics(train_pred.yield, train.yields()), metrics(valid_pred.yield, validation.yields()), note},
          {model, "check_yield", metrics(train_pred.check, train.check_yields()),
           metrics(valid_pred.check, validation.check_yields()), note},
          {model, "yield_difference", metrics(train_pred.difference, diff(train)),
           metrics(valid_pred.difference, diff(validation)), note}};
}

// ---------------------------------------------------------------------------
// Single-source models.

enum class Source { genotype, soil, weather, average };

inline const char* to_string(Source s) {
  switch (s) {
    case Source::genotype: return "G";
    case Source::soil: return "S";
    case Source::weather: return "W";
    case Source::average: return "average";
  }
  return "?";
}

inline Source source_from_string(const std::string& s) {
  if (s == "G" || s == "g") return Source::genotype;
  if (s == "S" || s == "s") return Source::soil;
  if (s == "W" || s == "w") return Source::weather;
  if (s == "average" || s == "AVERAGE") return Source::average;
  throw config_error("unknown ablation source '" + s + "' (expected G, S, W or average)");
}

inline FeatureGroup group_of(Source s) {
  switch (s) {
    case Source::genotype: return FeatureGroup::marker;
    case Source::soil: return FeatureGroup::soil;
    case Source::weather: return FeatureGroup::weather;
    case Source::average: break;
  }
  throw config_error("the average model uses no features");
}

struct AblationResult {
  Source source = Source::average;
  Metrics train;
  Metrics validation;
  std::optional<TrainedNetwork> network;  // empty for the average model
  PreprocessFit fit;
  Vector validation_predictions;
};

/// Yield model on one feature group, or the training mean for `average`.
/// The fit is computed on `train` when not given; the restriction is applied
/// on top of it.
inline AblationResult ablation_single_source(const FieldTrialDataset& train, const FieldTrialDataset& validation,
                                             Source source, const nn::NetworkSpec& spec_template,
                                             const nn::TrainConfig& config,
                                             const std::optional<PreprocessFit>& fit = std::nullopt,
                                             const PreprocessOptions& opts = {}) {
  AblationResult r;
  r.source = source;
  const Vector ytr = train.yields(), yva = validation.yields();
  if (source == Source::average) {
    const double mean = ytr.mean();
    r.train = metrics(Vector::Constant(ytr.size(), mean), ytr);
    r.validation_predictions = Vector::Constant(yva.size(), mean);
    r.validation = metrics(r.validation_predictions, yva);
    if (fit) r.fit = *fit;
    return r;
  }
  PreprocessFit base = fit ? *fit : assemble_design(train, std::nullopt, opts).fit;
  base.columns.reset();
  r.fit = base.restricted_to(base.layout().columns_of(group_of(source)));
  Matrix xtr = assemble_design(train, r.fit).design;
  Matrix xva = assemble_design(validation, r.fit).design;
  auto spec = sized_spec(spec_template, r.fit.width());
  r.network = train_one(spec, config, derive_seed(config.seed, 10 + static_cast<std::uint64_t>(source)), xtr, ytr);
  r.train = metrics(r.network->predict(xtr), ytr);
  r.validation_predictions = r.network->predict(xva);
  r.validation = metrics(r.validation_predictions, yva);
  return r;
}

// ---------------------------------------------------------------------------
// Artifacts on disk.

inline constexpr int kArtifactsVersion = 1;

/// Preprocessing fit, both checkpoints and a manifest of their digests.
struct PipelineArtifacts {
  YieldModelPair pair;
  nlohmann::json extra = nlohmann::json::object();  // run metadata carried in the manifest

  void save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    const std::string fit_text = to_json(pair.fit).dump(1);
    const std::string yield_text = pair.yield.checkpoint().to_json().dump();
    const std::string check_text = pair.check.checkpoint().to_json().dump();
    write_file(dir + "/preprocess_fit.json", fit_text);
    write_file(dir + "/yield_net.json", yield_text);
    write_file(dir + "/check_net.json", check_text);
    nlohmann::json manifest{{"format", "cropdnn.artifacts"},
                            {"version", kArtifactsVersion},
                            {"config_digest", digest(nn::to_json(pair.yield.config).dump())},
                            {"yield_seed", pair.yield.config.seed},
                            {"check_seed", pair.check.config.seed},
                            {"files",
                             {{"preprocess_fit.json", digest(fit_text)},
                              {"yield_net.json", digest(yield_text)},
                              {"check_net.json", digest(check_text)}}},
                            {"run", extra}};
    write_file(dir + "/manifest.json", manifest.dump(1));
  }

  static PipelineArtifacts load(const std::string& dir) {
    const std::string manifest_path = dir + "/manifest.json";
    if (!std::filesystem::exists(manifest_path))
      throw Error(ErrorKind::missing_artifacts, "no trained model in " + dir + " (manifest.json not found)");
    try {
      auto manifest = nlohmann::json::parse(read_file(manifest_path));
      if (manifest.value("format", "") != "cropdnn.artifacts") throw data_error(manifest_path + ": not an artifacts manifest");
      if (manifest.at("version").get<int>() != kArtifactsVersion) throw data_error(manifest_path + ": unsupported version");
      std::map<std::string, std::string> text;
      for (const auto& [name, want] : manifest.at("files").items()) {
        const std::string path = dir + "/" + name;
        if (!std::filesystem::exists(path)) throw Error(ErrorKind::missing_artifacts, path + " is missing");
        text[name] = read_file(path);
        if (digest(text[name]) != want.get<std::string>()) throw data_error(path + ": digest does not match the manifest");
      }
      PipelineArtifacts a;
      a.extra = manifest.value("run", nlohmann::json::object());
      a.pair.fit = preprocess_fit_from_json(nlohmann::json::parse(text.at("preprocess_fit.json")));
      auto yc = nn::Checkpoint::from_json(nlohmann::json::parse(text.at("yield_net.json")));
      auto cc = nn::Checkpoint::from_json(nlohmann::json::parse(text.at("check_net.json")));
      a.pair.yield = {yc.spec, yc.params, yc.config, {}};
      a.pair.check = {cc.spec, cc.params, cc.config, {}};
      if (yc.spec.input_dim != a.pair.fit.width() || cc.spec.input_dim != a.pair.fit.width())
        throw data_error(dir + ": network input width does not match the preprocessing fit");
      return a;
    } catch (const nlohmann::json::exception& e) {
      throw data_error(dir + ": malformed artifact: " + e.what());
    }
  }
};

}  // namespace cropdnn
