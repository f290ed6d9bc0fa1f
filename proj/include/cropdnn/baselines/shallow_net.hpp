#pragma once

#include "cropdnn/nn/checkpoint.hpp"
#include "cropdnn/nn/network.hpp"
#include "cropdnn/nn/trainer.hpp"

namespace cropdnn {

struct ShallowNetConfig {
  std::size_t width = 300;
  nn::TrainConfig train = [] {
    nn::TrainConfig c;
    c.base_lr = 1e-3;
    c.max_iterations = 5'000;
    c.lr_halving_period = 2'500;
    c.l1_lambda = 0.0;
    c.l2_lambda = 1e-4;
    return c;
  }();
};

/// One tanh hidden layer, no batch norm.
struct ShallowNetModel {
  nn::Checkpoint checkpoint;

  Vector predict(const Matrix& design) const {
    if (static_cast<std::size_t>(design.cols()) != checkpoint.spec.input_dim)
      throw data_error("shallow net: design has " + std::to_string(design.cols()) + " columns, model expects " +
                       std::to_string(checkpoint.spec.input_dim));
    return nn::predict(checkpoint.params, checkpoint.spec, design);
  }
};

inline ShallowNetModel fit_shallow_net(const Matrix& design, const Vector& targets, const ShallowNetConfig& config = {}) {
  auto spec = nn::NetworkSpec::shallow(static_cast<std::size_t>(design.cols()), config.width);
  auto r = nn::train_network(spec, config.train, design, targets);
  return {{spec, std::move(r.params), config.train}};
}

}  // namespace cropdnn
