#pragma once

#include <string>

#include <json.hpp>

#include "cropdnn/common.hpp"
#include "cropdnn/nn/network.hpp"
#include "cropdnn/nn/trainer.hpp"

namespace cropdnn::nn {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  auto rows = j.at("rows").get<Index>(), cols = j.at("cols").get<Index>();
  const auto& data = j.at("data");
  if (static_cast<Index>(data.size()) != rows * cols) throw data_error("checkpoint: matrix data has wrong length");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  return m;
}

inline nlohmann::json to_json(const NetworkSpec& s) {
  return {{"input_dim", s.input_dim},         {"hidden_layers", s.hidden_layers}, {"hidden_width", s.hidden_width},
          {"maxout_pieces", s.maxout_pieces}, {"activation", to_string(s.activation)}, {"batchnorm", s.batchnorm},
          {"residual", s.residual},           {"bn_epsilon", s.bn_epsilon}};
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.hidden_layers = j.at("hidden_layers").get<std::size_t>();
  s.hidden_width = j.at("hidden_width").get<std::size_t>();
  s.maxout_pieces = j.at("maxout_pieces").get<std::size_t>();
  s.activation = activation_from_string(j.at("activation").get<std::string>());
  s.batchnorm = j.at("batchnorm").get<bool>();
  s.residual = j.at("residual").get<bool>();
  s.bn_epsilon = j.at("bn_epsilon").get<double>();
  return s;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"base_lr", c.base_lr},
          {"lr_halving_period", c.lr_halving_period},
          {"batch_size", c.batch_size},
          {"max_iterations", c.max_iterations},
          {"l2_lambda", c.l2_lambda},
          {"l1_lambda", c.l1_lambda},
          {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},
          {"adam_epsilon", c.adam.epsilon},
          {"bn_momentum", c.bn_momentum},
          {"seed", c.seed},
          {"log_interval", c.log_interval},
          {"standardize_targets", c.standardize_targets}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.base_lr = j.at("base_lr").get<double>();
  c.lr_halving_period = j.at("lr_halving_period").get<long long>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.max_iterations = j.at("max_iterations").get<long long>();
  c.l2_lambda = j.at("l2_lambda").get<double>();
  c.l1_lambda = j.at("l1_lambda").get<double>();
  c.adam.beta1 = j.at("adam_beta1").get<double>();
  c.adam.beta2 = j.at("adam_beta2").get<double>();
  c.adam.epsilon = j.at("adam_epsilon").get<double>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.log_interval = j.at("log_interval").get<long long>();
  c.standardize_targets = j.at("standardize_targets").get<bool>();
  return c;
}

inline nlohmann::json to_json(const NetworkParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& h : p.hidden) {
    nlohmann::json l{{"weight", matrix_to_json(h.weight)}, {"bias", matrix_to_json(h.bias)}};
    if (h.bn) {
      l["bn"] = {{"gamma", matrix_to_json(h.bn->gamma)},
                 {"beta", matrix_to_json(h.bn->beta)},
                 {"running_mean", matrix_to_json(h.bn->running_mean)},
                 {"running_var", matrix_to_json(h.bn->running_var)}};
    }
    layers.push_back(std::move(l));
  }
  return {{"hidden", std::move(layers)},
          {"output_weight", matrix_to_json(p.out_weight)},
          {"output_bias", matrix_to_json(p.out_bias)},
          {"target_shift", p.target_shift},
          {"target_scale", p.target_scale}};
}

inline NetworkParams params_from_json(const nlohmann::json& j) {
  NetworkParams p;
  for (const auto& l : j.at("hidden")) {
    HiddenLayer h;
    h.weight = matrix_from_json(l.at("weight"));
    h.bias = matrix_from_json(l.at("bias"));
    if (l.contains("bn")) {
      const auto& b = l.at("bn");
      h.bn = BatchNormParams{matrix_from_json(b.at("gamma")), matrix_from_json(b.at("beta")),
                             matrix_from_json(b.at("running_mean")), matrix_from_json(b.at("running_var"))};
    }
    p.hidden.push_back(std::move(h));
  }
  p.out_weight = matrix_from_json(j.at("output_weight"));
  p.out_bias = matrix_from_json(j.at("output_bias"));
  p.target_shift = j.at("target_shift").get<double>();
  p.target_scale = j.at("target_scale").get<double>();
  return p;
}

/// Versioned container: spec, parameters (with running statistics), training
/// configuration and seed.
struct Checkpoint {
  NetworkSpec spec;
  NetworkParams params;
  TrainConfig config;

  nlohmann::json to_json() const {
    return {{"format", "cropdnn.checkpoint"},
            {"version", kCheckpointVersion},
            {"spec", nn::to_json(spec)},
            {"config", nn::to_json(config)},
            {"seed", config.seed},
            {"params", nn::to_json(params)}};
  }
  static Checkpoint from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "cropdnn.checkpoint") throw data_error("not a checkpoint document");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw data_error("unsupported checkpoint version " + j.at("version").dump());
    Checkpoint c{spec_from_json(j.at("spec")), params_from_json(j.at("params")), train_config_from_json(j.at("config"))};
    check_shapes(c.params, c.spec);
    return c;
  }
  void save(const std::string& path) const { write_file(path, to_json().dump()); }
  static Checkpoint load(const std::string& path) {
    try {
      return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
      throw data_error(path + ": malformed checkpoint: " + e.what());
    }
  }
};

}  // namespace cropdnn::nn
