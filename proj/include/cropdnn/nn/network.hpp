#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cropdnn/common.hpp"

namespace cropdnn::nn {

enum class Activation { maxout, tanh, identity };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::maxout: return "maxout";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "maxout") return Activation::maxout;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw config_error("unknown activation '" + s + "'");
}

/// Architecture of a fully connected regression network.
///
/// Hidden layer 1 is a stem (affine -> activation). Layers 2..L apply
/// affine -> batch norm -> activation. Hidden layers are grouped into
/// residual blocks {2,3}, {4,5}, ...; the block input is added to the
/// affine output of the block's second layer, ahead of its batch norm. With an
/// even L the last layer stands alone. The output layer is affine.
struct NetworkSpec {
  std::size_t input_dim = 0;
  std::size_t hidden_layers = 21;
  std::size_t hidden_width = 50;
  std::size_t maxout_pieces = 2;
  Activation activation = Activation::maxout;
  bool batchnorm = true;
  bool residual = true;
  double bn_epsilon = 1e-5;

  static NetworkSpec full_scale(std::size_t input_dim) { return {input_dim, 21, 50}; }
  static NetworkSpec desk(std::size_t input_dim) { return {input_dim, 6, 50}; }
  /// One smooth hidden layer and no batch norm.
  static NetworkSpec shallow(std::size_t input_dim, std::size_t width) {
    return {input_dim, 1, width, 1, Activation::tanh, false, false};
  }
  static NetworkSpec linear(std::size_t input_dim) { return {input_dim, 0, 1, 1, Activation::identity, false, false}; }

  std::size_t pieces() const { return activation == Activation::maxout ? maxout_pieces : 1; }
  std::size_t units() const { return pieces() * hidden_width; }
  bool has_batchnorm(std::size_t layer) const { return batchnorm && layer >= 1; }
  /// 0-based layer index; true for the second layer of each residual block.
  bool has_skip(std::size_t layer) const { return residual && layer >= 2 && layer % 2 == 0; }
  std::size_t fan_in(std::size_t layer) const { return layer == 0 ? input_dim : hidden_width; }
  std::size_t last_width() const { return hidden_layers == 0 ? input_dim : hidden_width; }

  void validate() const {
    if (input_dim == 0) throw config_error("network: input_dim must be positive");
    if (hidden_layers > 0 && hidden_width == 0) throw config_error("network: hidden_width must be positive");
    if (activation == Activation::maxout && maxout_pieces < 2) throw config_error("network: maxout needs >= 2 pieces");
    if (!(bn_epsilon > 0.0)) throw config_error("network: bn_epsilon must be positive");
  }
  bool operator==(const NetworkSpec&) const = default;
};

struct BatchNormParams {
  Matrix gamma, beta;  // units x 1
  Vector running_mean, running_var;
};

struct HiddenLayer {
  Matrix weight;  // (pieces * width) x fan_in; rows p*width + j hold piece p of unit j
  Matrix bias;    // (pieces * width) x 1
  std::optional<BatchNormParams> bn;
};

/// Learnable parameters plus batch-norm running statistics. Predictions in
/// original target units are network output * target_scale + target_shift;
/// the shift and scale are fixed by the trainer, not learned.
struct NetworkParams {
  std::vector<HiddenLayer> hidden;
  Matrix out_weight;  // 1 x last_width
  Matrix out_bias;    // 1 x 1
  double target_shift = 0.0;
  double target_scale = 1.0;

  struct Tensor {
    std::string name;
    Matrix* value;
  };
  struct ConstTensor {
    std::string name;
    const Matrix* value;
  };

  /// Learnable tensors in a fixed order: per hidden layer weight, bias,
  /// gamma, beta; then the output weight and bias.
  std::vector<Tensor> learnable() {
    std::vector<Tensor> out;
    for (std::size_t l = 0; l < hidden.size(); ++l) {
      auto tag = "hidden" + std::to_string(l + 1);
      out.push_back({tag + ".weight", &hidden[l].weight});
      out.push_back({tag + ".bias", &hidden[l].bias});
      if (hidden[l].bn) {
        out.push_back({tag + ".bn.gamma", &hidden[l].bn->gamma});
        out.push_back({tag + ".bn.beta", &hidden[l].bn->beta});
      }
    }
    out.push_back({"output.weight", &out_weight});
    out.push_back({"output.bias", &out_bias});
    return out;
  }
  std::vector<ConstTensor> learnable() const {
    std::vector<ConstTensor> out;
    for (auto& t : const_cast<NetworkParams*>(this)->learnable()) out.push_back({t.name, t.value});
    return out;
  }

  NetworkParams zeros_like() const {
    NetworkParams z = *this;
    for (auto& t : z.learnable()) t.value->setZero();
    return z;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : learnable()) n += static_cast<std::size_t>(t.value->size());
    return n;
  }
  bool operator==(const NetworkParams& o) const {
    if (hidden.size() != o.hidden.size() || target_shift != o.target_shift || target_scale != o.target_scale ||
        out_weight != o.out_weight || out_bias != o.out_bias)
      return false;
    for (std::size_t l = 0; l < hidden.size(); ++l) {
      const auto &a = hidden[l], &b = o.hidden[l];
      if (a.weight != b.weight || a.bias != b.bias || a.bn.has_value() != b.bn.has_value()) return false;
      if (a.bn && (a.bn->gamma != b.bn->gamma || a.bn->beta != b.bn->beta ||
                   a.bn->running_mean != b.bn->running_mean || a.bn->running_var != b.bn->running_var))
        return false;
    }
    return true;
  }
};

/// Xavier (Glorot) uniform weights on +-sqrt(6 / (fan_in + fan_out)), with
/// fan_out the number of units the layer feeds. Biases and beta start at 0,
/// gamma at 1, running statistics at (0, 1).
inline NetworkParams xavier_init(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  auto uniform_fill = [&](Matrix& m, double fan_in, double fan_out) {
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Index c = 0; c < m.cols(); ++c)
      for (Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
  };
  NetworkParams p;
  const auto units = static_cast<Index>(spec.units());
  for (std::size_t l = 0; l < spec.hidden_layers; ++l) {
    HiddenLayer h;
    h.weight.resize(units, static_cast<Index>(spec.fan_in(l)));
    uniform_fill(h.weight, static_cast<double>(spec.fan_in(l)), static_cast<double>(spec.hidden_width));
    h.bias = Matrix::Zero(units, 1);
    if (spec.has_batchnorm(l))
      h.bn = BatchNormParams{Matrix::Ones(units, 1), Matrix::Zero(units, 1), Vector::Zero(units), Vector::Ones(units)};
    p.hidden.push_back(std::move(h));
  }
  p.out_weight.resize(1, static_cast<Index>(spec.last_width()));
  uniform_fill(p.out_weight, static_cast<double>(spec.last_width()), 1.0);
  p.out_bias = Matrix::Zero(1, 1);
  return p;
}

enum class Mode { train, infer };

struct LayerCache {
  Matrix input;          // n x fan_in
  Matrix xhat;           // n x units, batch-normalized pre-activation (if bn)
  RowVector inv_std;     // 1 x units (if bn)
  RowVector batch_mean;  // train mode only
  RowVector batch_var;   // biased batch variance, train mode only
  Matrix output;         // n x width, post-activation
  Eigen::MatrixXi argmax;  // n x width, maxout winning piece
};

struct ForwardCache {
  Mode mode = Mode::infer;
  Index rows = 0;
  std::vector<LayerCache> layers;
  Matrix last_hidden;  // input to the output layer
  Vector predictions;  // network units
};

struct ForwardResult {
  Vector predictions;  // network units (before target de-standardization)
  ForwardCache cache;
};

inline void check_shapes(const NetworkParams& params, const NetworkSpec& spec) {
  if (params.hidden.size() != spec.hidden_layers) throw config_error("network: parameter/spec layer count mismatch");
  for (std::size_t l = 0; l < spec.hidden_layers; ++l) {
    const auto& h = params.hidden[l];
    if (h.weight.rows() != static_cast<Index>(spec.units()) || h.weight.cols() != static_cast<Index>(spec.fan_in(l)) ||
        h.bn.has_value() != spec.has_batchnorm(l))
      throw config_error("network: parameter shapes inconsistent with spec at hidden layer " + std::to_string(l + 1));
  }
  if (params.out_weight.cols() != static_cast<Index>(spec.last_width()))
    throw config_error("network: output weight shape inconsistent with spec");
}

/// Forward pass. TRAIN normalizes with batch statistics (batch size >= 2);
/// INFER uses running statistics, so rows are processed independently.
/// Does not modify parameters; running statistics are updated by the trainer.
inline ForwardResult forward(const NetworkParams& params, const NetworkSpec& spec, const Matrix& batch, Mode mode) {
  check_shapes(params, spec);
  if (batch.cols() != static_cast<Index>(spec.input_dim))
    throw data_error("forward: batch width " + std::to_string(batch.cols()) + " != input_dim " +
                     std::to_string(spec.input_dim));
  const Index n = batch.rows();
  if (mode == Mode::train && n < 2) throw data_error("forward: TRAIN mode needs a batch of at least 2 rows");
  const auto width = static_cast<Index>(spec.hidden_width);
  const auto pieces = static_cast<Index>(spec.pieces());

  ForwardCache cache;
  cache.mode = mode;
  cache.rows = n;
  cache.layers.resize(spec.hidden_layers);
  const Matrix* x = &batch;
  for (std::size_t l = 0; l < spec.hidden_layers; ++l) {
    const auto& layer = params.hidden[l];
    auto& c = cache.layers[l];
    c.input = *x;
    Matrix z = c.input * layer.weight.transpose();
    z.rowwise() += layer.bias.col(0).transpose();
    if (spec.has_skip(l)) {
      // Identity skip from the block input, added before batch norm.
      const Matrix& block_input = cache.layers[l - 2].output;
      for (Index p = 0; p < pieces; ++p) z.middleCols(p * width, width) += block_input;
    }
    if (layer.bn) {
      const auto& bn = *layer.bn;
      if (mode == Mode::train) {
        c.batch_mean = z.colwise().mean();
        c.batch_var = (z.rowwise() - c.batch_mean).array().square().colwise().mean();
        c.inv_std = (c.batch_var.array() + spec.bn_epsilon).rsqrt();
        c.xhat = (z.rowwise() - c.batch_mean).array().rowwise() * c.inv_std.array();
      } else {
        c.inv_std = (bn.running_var.transpose().array() + spec.bn_epsilon).rsqrt();
        c.xhat = (z.rowwise() - bn.running_mean.transpose()).array().rowwise() * c.inv_std.array();
      }
      z = (c.xhat.array().rowwise() * bn.gamma.col(0).transpose().array()).rowwise() + bn.beta.col(0).transpose().array();
    }
    switch (spec.activation) {
      case Activation::maxout: {
        c.output = z.leftCols(width);
        c.argmax = Eigen::MatrixXi::Zero(n, width);
        for (Index p = 1; p < pieces; ++p)
          for (Index j = 0; j < width; ++j)
            for (Index i = 0; i < n; ++i)
              if (z(i, p * width + j) > c.output(i, j)) {
                c.output(i, j) = z(i, p * width + j);
                c.argmax(i, j) = static_cast<int>(p);
              }
        break;
      }
      case Activation::tanh: c.output = z.array().tanh(); break;
      case Activation::identity: c.output = std::move(z); break;
    }
    if (!c.output.allFinite()) throw numeric_error("forward: non-finite activation at hidden layer " + std::to_string(l + 1));
    x = &c.output;
  }
  cache.last_hidden = *x;
  Vector pred = (*x) * params.out_weight.row(0).transpose();
  pred.array() += params.out_bias(0, 0);
  if (!pred.allFinite()) throw numeric_error("forward: non-finite value at output layer");
  cache.predictions = pred;
  return {std::move(pred), std::move(cache)};
}

/// Predictions in original target units (INFER mode).
inline Vector predict(const NetworkParams& params, const NetworkSpec& spec, const Matrix& design) {
  if (design.rows() == 0) return Vector(0);
  Vector raw = forward(params, spec, design, Mode::infer).predictions;
  return (raw.array() * params.target_scale + params.target_shift).matrix();
}

struct Regularization {
  double l1 = 0.0;  // first weight layer
  double l2 = 0.0;  // all hidden layers' weights
};

/// The layer carrying the L1 penalty: hidden layer 1, or the output layer of
/// a network without hidden layers.
inline const Matrix& first_layer_weight(const NetworkParams& p) {
  return p.hidden.empty() ? p.out_weight : p.hidden.front().weight;
}

inline double compute_loss(const Vector& predictions, const Vector& targets, const NetworkParams& params,
                           const Regularization& reg) {
  if (predictions.size() != targets.size()) throw data_error("compute_loss: prediction/target length mismatch");
  if (predictions.size() == 0) throw data_error("compute_loss: empty batch");
  double loss = (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
  if (reg.l2 != 0.0)
    for (const auto& h : params.hidden) loss += reg.l2 * h.weight.squaredNorm();
  if (reg.l1 != 0.0) loss += reg.l1 * first_layer_weight(params).array().abs().sum();
  return loss;
}

struct BackpropOptions {
  bool guided = false;  // zero negative signals at every activation site
  NetworkParams* grads = nullptr;  // accumulate parameter gradients here when set
  /// When set, receives the (clipped, if guided) signal at each hidden
  /// layer's output, index l for hidden layer l + 1.
  std::vector<Matrix>* activation_signals = nullptr;
};

/// Propagates a signal on the last hidden layer's output back to the input.
/// Maxout routes through the recorded argmax piece, batch norm uses the chain
/// rule for the mode the cache was produced in, and residual skips deliver
/// the signal to both endpoints. Returns the signal on the network input.
inline Matrix backprop_hidden(const ForwardCache& cache, const NetworkParams& params, const NetworkSpec& spec,
                              Matrix signal, const BackpropOptions& opts = {}) {
  const std::size_t L = spec.hidden_layers;
  if (L == 0) return signal;
  const Index n = cache.rows;
  const auto width = static_cast<Index>(spec.hidden_width);
  const auto pieces = static_cast<Index>(spec.pieces());
  // pending[l] accumulates the signal on hidden layer l's output; index L-1 is the top.
  std::vector<Matrix> pending(L);
  pending[L - 1] = std::move(signal);
  Matrix input_signal = Matrix::Zero(n, static_cast<Index>(spec.input_dim));
  if (opts.activation_signals) opts.activation_signals->assign(L, Matrix());

  for (std::size_t li = L; li-- > 0;) {
    const auto& c = cache.layers[li];
    const auto& layer = params.hidden[li];
    Matrix dh = pending[li].size() ? std::move(pending[li]) : Matrix::Zero(n, width);
    if (opts.guided) dh = dh.cwiseMax(0.0);
    if (opts.activation_signals) (*opts.activation_signals)[li] = dh;

    Matrix dz;
    switch (spec.activation) {
      case Activation::maxout:
        dz = Matrix::Zero(n, width * pieces);
        for (Index j = 0; j < width; ++j)
          for (Index i = 0; i < n; ++i) dz(i, c.argmax(i, j) * width + j) = dh(i, j);
        break;
      case Activation::tanh: dz = dh.array() * (1.0 - c.output.array().square()); break;
      case Activation::identity: dz = std::move(dh); break;
    }

    Matrix da;
    if (layer.bn) {
      const auto& bn = *layer.bn;
      if (opts.grads) {
        auto& g = *opts.grads->hidden[li].bn;
        g.gamma.col(0) += (dz.array() * c.xhat.array()).colwise().sum().transpose().matrix();
        g.beta.col(0) += dz.colwise().sum().transpose();
      }
      Matrix dxhat = dz.array().rowwise() * bn.gamma.col(0).transpose().array();
      if (cache.mode == Mode::train) {
        RowVector sum_d = dxhat.colwise().sum();
        RowVector sum_dx = (dxhat.array() * c.xhat.array()).colwise().sum();
        Matrix t = (dxhat * static_cast<double>(n)).rowwise() - sum_d;
        t -= (c.xhat.array().rowwise() * sum_dx.array()).matrix();
        da = (t.array().rowwise() * c.inv_std.array()) / static_cast<double>(n);
      } else {
        da = dxhat.array().rowwise() * c.inv_std.array();
      }
    } else {
      da = std::move(dz);
    }

    if (spec.has_skip(li)) {
      Matrix skip = da.leftCols(width);
      for (Index p = 1; p < pieces; ++p) skip += da.middleCols(p * width, width);
      auto& target = pending[li - 2];
      if (target.size())
        target += skip;
      else
        target = std::move(skip);
    }

    if (opts.grads) {
      auto& g = opts.grads->hidden[li];
      g.weight.noalias() += da.transpose() * c.input;
      g.bias.col(0) += da.colwise().sum().transpose();
    }
    Matrix dx = da * layer.weight;
    if (li == 0)
      input_signal += dx;
    else if (pending[li - 1].size())
      pending[li - 1] += dx;
    else
      pending[li - 1] = std::move(dx);
  }
  return input_signal;
}

/// Exact gradients of compute_loss for the batch the cache was produced on.
inline NetworkParams backward(const ForwardCache& cache, const Vector& targets, const NetworkParams& params,
                              const NetworkSpec& spec, const Regularization& reg) {
  check_shapes(params, spec);
  if (targets.size() != cache.rows || cache.predictions.size() != cache.rows)
    throw data_error("backward: cache does not belong to this batch (" + std::to_string(cache.rows) + " rows, " +
                     std::to_string(targets.size()) + " targets)");
  if (cache.layers.size() != spec.hidden_layers) throw data_error("backward: cache does not match network depth");
  const auto n = static_cast<double>(cache.rows);
  NetworkParams grads = params.zeros_like();
  Vector dy = (cache.predictions - targets) * (2.0 / n);
  grads.out_weight.row(0) = (cache.last_hidden.transpose() * dy).transpose();
  grads.out_bias(0, 0) = dy.sum();
  Matrix top = dy * params.out_weight.row(0);
  BackpropOptions opts;
  opts.grads = &grads;
  backprop_hidden(cache, params, spec, std::move(top), opts);

  if (reg.l2 != 0.0)
    for (std::size_t l = 0; l < params.hidden.size(); ++l) grads.hidden[l].weight += 2.0 * reg.l2 * params.hidden[l].weight;
  if (reg.l1 != 0.0) {
    Matrix& g = params.hidden.empty() ? grads.out_weight : grads.hidden.front().weight;
    g += reg.l1 * first_layer_weight(params).unaryExpr([](double w) { return double((w > 0) - (w < 0)); });
  }
  return grads;
}

/// Blends batch statistics from a TRAIN forward into the running statistics.
/// The running variance uses the unbiased batch estimate.
inline void update_running_stats(NetworkParams& params, const ForwardCache& cache, double momentum) {
  if (cache.mode != Mode::train) return;
  const double n = static_cast<double>(cache.rows);
  for (std::size_t l = 0; l < params.hidden.size(); ++l) {
    auto& bn = params.hidden[l].bn;
    if (!bn) continue;
    const auto& c = cache.layers[l];
    bn->running_mean = momentum * bn->running_mean + (1.0 - momentum) * c.batch_mean.transpose();
    bn->running_var = momentum * bn->running_var + (1.0 - momentum) * (c.batch_var.transpose() * (n / (n - 1.0)));
  }
}

}  // namespace cropdnn::nn
