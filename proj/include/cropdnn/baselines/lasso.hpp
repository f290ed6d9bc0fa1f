#pragma once

#include <cmath>
#include <vector>

#include <json.hpp>

#include "cropdnn/common.hpp"

namespace cropdnn {

struct LassoConfig {
  double lambda = 0.2;
  double tolerance = 1e-7;  // on the largest standardized coefficient change in a sweep
  int max_sweeps = 10'000;
};

/// Coefficients are reported in original feature units.
struct LassoModel {
  Vector coefficients;
  double intercept = 0.0;
  double lambda = 0.0;
  std::vector<double> feature_mean, feature_scale;
  bool converged = false;
  int sweeps = 0;
  std::vector<double> objective;  // standardized objective after each sweep

  Vector predict(const Matrix& design) const {
    if (design.cols() != coefficients.size())
      throw data_error("lasso: design has " + std::to_string(design.cols()) + " columns, model expects " +
                       std::to_string(coefficients.size()));
    return (design * coefficients).array() + intercept;
  }
};

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

/// Largest lambda with a nonzero solution on standardized columns.
inline double lasso_lambda_max(const Matrix& design, const Vector& targets) {
  const double n = static_cast<double>(design.rows());
  const Vector yc = targets.array() - targets.mean();
  double best = 0.0;
  for (Index j = 0; j < design.cols(); ++j) {
    const double m = design.col(j).mean();
    const double sd = std::sqrt((design.col(j).array() - m).square().mean());
    if (sd > 0.0) best = std::max(best, std::abs((design.col(j).array() - m).matrix().dot(yc)) / (n * sd));
  }
  return best;
}

/// Cyclic coordinate descent on
///   (1 / 2n) |y - b0 - Z b|^2 + lambda |b|_1
/// with Z the columns standardized to mean 0 and (1/n) z'z = 1. Constant
/// columns keep a zero coefficient.
inline LassoModel fit_lasso(const Matrix& design, const Vector& targets, const LassoConfig& config = {}) {
  if (design.rows() != targets.size() || design.rows() < 1) throw data_error("lasso: design/target size mismatch");
  if (!(config.lambda >= 0.0)) throw config_error("lasso: lambda must be >= 0");
  if (!(config.tolerance > 0.0) || config.max_sweeps < 1) throw config_error("lasso: invalid tolerance or sweep limit");
  const Index n = design.rows(), p = design.cols();
  const double nd = static_cast<double>(n);
  LassoModel m;
  m.lambda = config.lambda;
  m.feature_mean.assign(static_cast<std::size_t>(p), 0.0);
  m.feature_scale.assign(static_cast<std::size_t>(p), 0.0);
  Matrix z(n, p);
  for (Index j = 0; j < p; ++j) {
    double mean = design.col(j).mean();
    double sd = std::sqrt((design.col(j).array() - mean).square().mean());
    m.feature_mean[static_cast<std::size_t>(j)] = mean;
    m.feature_scale[static_cast<std::size_t>(j)] = sd;
    z.col(j) = sd > 0.0 ? Vector((design.col(j).array() - mean) / sd) : Vector::Zero(n);
  }
  const double ybar = targets.mean();
  Vector residual = targets.array() - ybar;
  Vector b = Vector::Zero(p);
  auto objective = [&] { return residual.squaredNorm() / (2.0 * nd) + config.lambda * b.lpNorm<1>(); };
  for (m.sweeps = 1; m.sweeps <= config.max_sweeps; ++m.sweeps) {
    double max_change = 0.0;
    for (Index j = 0; j < p; ++j) {
      if (m.feature_scale[static_cast<std::size_t>(j)] == 0.0) continue;
      const double old = b[j];
      const double updated = soft_threshold(old + z.col(j).dot(residual) / nd, config.lambda);
      if (updated != old) {
        residual.noalias() -= (updated - old) * z.col(j);
        b[j] = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    m.objective.push_back(objective());
    if (max_change < config.tolerance) {
      m.converged = true;
      break;
    }
  }
  m.sweeps = std::min(m.sweeps, config.max_sweeps);
  m.coefficients = Vector::Zero(p);
  m.intercept = ybar;
  for (Index j = 0; j < p; ++j) {
    const double sd = m.feature_scale[static_cast<std::size_t>(j)];
    if (sd == 0.0) continue;
    m.coefficients[j] = b[j] / sd;
    m.intercept -= m.coefficients[j] * m.feature_mean[static_cast<std::size_t>(j)];
  }
  return m;
}

inline nlohmann::json to_json(const LassoModel& m) {
  return {{"format", "cropdnn.lasso"},
          {"version", 1},
          {"lambda", m.lambda},
          {"intercept", m.intercept},
          {"coefficients", std::vector<double>(m.coefficients.data(), m.coefficients.data() + m.coefficients.size())},
          {"feature_mean", m.feature_mean},
          {"feature_scale", m.feature_scale},
          {"converged", m.converged},
          {"sweeps", m.sweeps}};
}

inline LassoModel lasso_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cropdnn.lasso" || j.value("version", 0) != 1) throw data_error("not a lasso model (version 1)");
  LassoModel m;
  m.lambda = j.at("lambda").get<double>();
  m.intercept = j.at("intercept").get<double>();
  auto c = j.at("coefficients").get<std::vector<double>>();
  m.coefficients = Eigen::Map<Vector>(c.data(), static_cast<Index>(c.size()));
  m.feature_mean = j.at("feature_mean").get<std::vector<double>>();
  m.feature_scale = j.at("feature_scale").get<std::vector<double>>();
  m.converged = j.at("converged").get<bool>();
  m.sweeps = j.at("sweeps").get<int>();
  return m;
}

}  // namespace cropdnn
