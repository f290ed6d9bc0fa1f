#pragma once

#include <string>
#include <variant>

#include <json.hpp>

#include "cropdnn/baselines/lasso.hpp"
#include "cropdnn/baselines/shallow_net.hpp"
#include "cropdnn/baselines/tree.hpp"
#include "cropdnn/common.hpp"

namespace cropdnn {

enum class BaselineKind { lasso, snn, tree, average };

inline const char* to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::lasso: return "Lasso";
    case BaselineKind::snn: return "SNN";
    case BaselineKind::tree: return "RT";
    case BaselineKind::average: return "Average";
  }
  return "?";
}

inline BaselineKind baseline_from_string(const std::string& s) {
  if (s == "lasso") return BaselineKind::lasso;
  if (s == "snn") return BaselineKind::snn;
  if (s == "tree" || s == "rt") return BaselineKind::tree;
  if (s == "average") return BaselineKind::average;
  throw config_error("unknown baseline '" + s + "' (expected lasso, snn, tree, average or all)");
}

/// Constant predictor: the training-target mean.
struct AverageModel {
  double value = 0.0;
  std::size_t n_features = 0;

  Vector predict(const Matrix& design) const {
    if (static_cast<std::size_t>(design.cols()) != n_features) throw data_error("average model: layout mismatch");
    return Vector::Constant(design.rows(), value);
  }
};

using BaselineModel = std::variant<LassoModel, TreeModel, ShallowNetModel, AverageModel>;

inline Vector predict_model(const BaselineModel& model, const Matrix& design) {
  return std::visit([&](const auto& m) { return Vector(m.predict(design)); }, model);
}

struct BaselineSettings {
  LassoConfig lasso;
  TreeConfig tree;
  ShallowNetConfig snn;
  std::uint64_t seed = 0;
};

inline BaselineModel fit_baseline(BaselineKind kind, const Matrix& design, const Vector& targets,
                                  const BaselineSettings& settings, std::uint64_t seed) {
  switch (kind) {
    case BaselineKind::lasso: return fit_lasso(design, targets, settings.lasso);
    case BaselineKind::tree: return fit_regression_tree(design, targets, settings.tree);
    case BaselineKind::snn: {
      ShallowNetConfig c = settings.snn;
      c.train.seed = seed;
      return fit_shallow_net(design, targets, c);
    }
    case BaselineKind::average: return AverageModel{targets.mean(), static_cast<std::size_t>(design.cols())};
  }
  throw config_error("unknown baseline kind");
}

/// Separate yield and check-yield models; the difference is taken afterwards.
struct BaselinePair {
  BaselineKind kind = BaselineKind::lasso;
  BaselineModel yield;
  BaselineModel check;
};

inline BaselinePair fit_baseline_pair(BaselineKind kind, const Matrix& design, const Vector& yield, const Vector& check,
                                      const BaselineSettings& settings) {
  return {kind, fit_baseline(kind, design, yield, settings, derive_seed(settings.seed, 21)),
          fit_baseline(kind, design, check, settings, derive_seed(settings.seed, 22))};
}

inline nlohmann::json to_json(const BaselineModel& model) {
  return std::visit(
      [](const auto& m) -> nlohmann::json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ShallowNetModel>)
          return m.checkpoint.to_json();
        else if constexpr (std::is_same_v<T, AverageModel>)
          return {{"format", "cropdnn.average"}, {"version", 1}, {"value", m.value}, {"n_features", m.n_features}};
        else
          return to_json(m);
      },
      model);
}

inline BaselineModel baseline_from_json(const nlohmann::json& j) {
  const std::string format = j.value("format", "");
  if (format == "cropdnn.lasso") return lasso_from_json(j);
  if (format == "cropdnn.tree") return tree_from_json(j);
  if (format == "cropdnn.checkpoint") return ShallowNetModel{nn::Checkpoint::from_json(j)};
  if (format == "cropdnn.average") return AverageModel{j.at("value").get<double>(), j.at("n_features").get<std::size_t>()};
  throw data_error("unknown baseline model format '" + format + "'");
}

}  // namespace cropdnn
