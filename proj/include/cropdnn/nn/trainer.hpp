#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <utility>
#include <random>
#include <vector>

#include "cropdnn/common.hpp"
#include "cropdnn/nn/adam.hpp"
#include "cropdnn/nn/network.hpp"

namespace cropdnn::nn {

struct TrainConfig {
  double base_lr = 3e-4;
  long long lr_halving_period = 50'000;
  std::size_t batch_size = 64;
  long long max_iterations = 30'000;
  double l2_lambda = 1e-4;
  double l1_lambda = 1e-4;
  AdamHyper adam;
  double bn_momentum = 0.99;
  std::uint64_t seed = 0;
  long long log_interval = 1'000;
  /// Train against (y - mean) / sd and fold the affine map into the
  /// parameters' target shift/scale.
  bool standardize_targets = true;

  static TrainConfig full_scale() {
    TrainConfig c;
    c.max_iterations = 300'000;
    return c;
  }

  Regularization regularization() const { return {l1_lambda, l2_lambda}; }

  void validate() const {
    if (!(base_lr > 0.0)) throw config_error("train: base_lr must be positive");
    if (lr_halving_period <= 0) throw config_error("train: lr_halving_period must be positive");
    if (batch_size < 1) throw config_error("train: batch_size must be >= 1");
    if (max_iterations < 0) throw config_error("train: max_iterations must be >= 0");
    if (l1_lambda < 0.0 || l2_lambda < 0.0) throw config_error("train: regularization weights must be >= 0");
    if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0 && adam.beta2 > 0.0 && adam.beta2 < 1.0 && adam.epsilon > 0.0))
      throw config_error("train: invalid Adam hyperparameters");
    if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw config_error("train: bn_momentum must lie in [0, 1)");
    if (log_interval <= 0) throw config_error("train: log_interval must be positive");
  }
};

/// Step schedule: base_lr halved every lr_halving_period iterations.
inline double lr_at(long long iteration, const TrainConfig& config) {
  if (iteration < 0) throw config_error("lr_at: negative iteration");
  return std::ldexp(config.base_lr, -static_cast<int>(iteration / config.lr_halving_period));
}

struct LogEntry {
  long long iteration = 0;
  double lr = 0.0;
  double batch_loss = 0.0;  // regularized loss on the minibatch, standardized units
  std::optional<double> validation_rmse;
};

struct TrainLog {
  std::vector<LogEntry> entries;
  double initial_train_mse = 0.0;  // INFER-mode MSE over the training set before any step
  double final_train_mse = 0.0;
};

struct TrainResult {
  NetworkParams params;
  TrainLog log;
};

inline double rmse_of(const Vector& pred, const Vector& target) {
  return std::sqrt((pred - target).squaredNorm() / static_cast<double>(pred.size()));
}

/// Minibatch Adam training. Batches are drawn by epoch-wise shuffling without
/// replacement; a trailing batch of one row is folded into the preceding
/// batch because batch statistics need two rows.
inline TrainResult train_network(const NetworkSpec& spec, const TrainConfig& config, const Matrix& design,
                                 const Vector& targets, const Matrix* validation_design = nullptr,
                                 const Vector* validation_targets = nullptr) {
  spec.validate();
  config.validate();
  if (design.rows() != targets.size()) throw data_error("train_network: design/target row mismatch");
  if (design.cols() != static_cast<Index>(spec.input_dim)) throw data_error("train_network: design width != input_dim");
  if (design.rows() < 2) throw data_error("train_network: need at least 2 training rows");
  if (!design.allFinite() || !targets.allFinite()) throw numeric_error("train_network: non-finite training data");
  if ((validation_design == nullptr) != (validation_targets == nullptr))
    throw data_error("train_network: validation design and targets must be given together");

  TrainResult result;
  NetworkParams& params = result.params;
  params = xavier_init(spec, derive_seed(config.seed, 0));
  if (config.standardize_targets) {
    double mean = targets.mean();
    double sd = std::sqrt((targets.array() - mean).square().mean());
    params.target_shift = mean;
    params.target_scale = sd > 0.0 ? sd : 1.0;
  }
  const Vector scaled = ((targets.array() - params.target_shift) / params.target_scale).matrix();
  const Regularization reg = config.regularization();

  result.log.initial_train_mse = (predict(params, spec, design) - targets).squaredNorm() / static_cast<double>(targets.size());

  const Index n = design.rows();
  const Index bs = std::max<Index>(2, static_cast<Index>(std::min<std::size_t>(config.batch_size, static_cast<std::size_t>(n))));
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 1));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Index cursor = n;  // forces a shuffle on the first step
  AdamState adam;
  std::vector<Matrix*> param_ptrs;
  for (auto& t : params.learnable()) param_ptrs.push_back(t.value);

  Matrix xb;
  Vector yb;
  double interval_loss = 0.0;
  long long interval_count = 0;
  for (long long it = 0; it < config.max_iterations; ++it) {
    if (cursor >= n) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      cursor = 0;
    }
    Index take = std::min(bs, n - cursor);
    if (n - cursor - take == 1) ++take;
    xb.resize(take, design.cols());
    yb.resize(take);
    for (Index r = 0; r < take; ++r) {
      auto src = order[static_cast<std::size_t>(cursor + r)];
      xb.row(r) = design.row(src);
      yb[r] = scaled[src];
    }
    cursor += take;

    ForwardResult fw;
    try {
      fw = forward(params, spec, xb, Mode::train);
    } catch (const Error& e) {
      throw numeric_error("train_network: iteration " + std::to_string(it) + ": " + e.what());
    }
    double loss = compute_loss(fw.predictions, yb, params, reg);
    if (!std::isfinite(loss)) throw numeric_error("train_network: non-finite loss at iteration " + std::to_string(it));
    NetworkParams grads = backward(fw.cache, yb, params, spec, reg);
    update_running_stats(params, fw.cache, config.bn_momentum);
    std::vector<const Matrix*> grad_ptrs;
    for (const auto& t : std::as_const(grads).learnable()) grad_ptrs.push_back(t.value);
    adam_step(param_ptrs, grad_ptrs, adam, lr_at(it, config), config.adam);

    interval_loss += loss;
    ++interval_count;
    if ((it + 1) % config.log_interval == 0 || it + 1 == config.max_iterations) {
      LogEntry e{it + 1, lr_at(it, config), interval_loss / static_cast<double>(interval_count), std::nullopt};
      if (validation_design) e.validation_rmse = rmse_of(predict(params, spec, *validation_design), *validation_targets);
      result.log.entries.push_back(e);
      interval_loss = 0.0;
      interval_count = 0;
    }
  }
  result.log.final_train_mse = (predict(params, spec, design) - targets).squaredNorm() / static_cast<double>(targets.size());
  return result;
}

}  // namespace cropdnn::nn
