#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cropdnn/nn/network.hpp"

namespace cropdnn::nn {

struct TensorCheck {
  std::string name;
  std::size_t entries = 0;
  double max_relative_error = 0.0;
};

struct GradientCheckReport {
  std::vector<TensorCheck> tensors;
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t kink_adjusted = 0;  // entries re-probed with a smaller step
};

struct GradientCheckOptions {
  double h = 1e-5;
  std::size_t batch_rows = 8;
  Regularization reg{1e-3, 1e-3};
  /// Gradients smaller than this are compared on an absolute basis.
  double denominator_floor = 1e-5;
};

/// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace detail {
inline bool same_routing(const ForwardCache& a, const ForwardCache& b) {
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    if (a.layers[l].argmax.size() && a.layers[l].argmax != b.layers[l].argmax) return false;
  return true;
}
}  // namespace detail

/// Central finite differences for every parameter of `params` on one batch,
/// in TRAIN mode. When a probe changes any maxout routing (or crosses the L1
/// kink at zero) the step is shrunk by 10x, up to three times, so the
/// comparison stays on one linear piece.
inline GradientCheckReport gradient_check(const NetworkSpec& spec, const NetworkParams& base, const Matrix& batch,
                                          const Vector& targets, const GradientCheckOptions& opts) {
  auto fw = forward(base, spec, batch, Mode::train);
  NetworkParams analytic = backward(fw.cache, targets, base, spec, opts.reg);
  const Matrix* l1_tensor = &first_layer_weight(base);

  GradientCheckReport report;
  NetworkParams probe = base;
  auto probe_tensors = probe.learnable();
  auto base_tensors = base.learnable();
  auto grad_tensors = std::as_const(analytic).learnable();
  for (std::size_t k = 0; k < probe_tensors.size(); ++k) {
    TensorCheck tc{probe_tensors[k].name, static_cast<std::size_t>(probe_tensors[k].value->size()), 0.0};
    Matrix& value = *probe_tensors[k].value;
    const bool l1_here = opts.reg.l1 != 0.0 && base_tensors[k].value == l1_tensor;
    for (Index e = 0; e < value.size(); ++e) {
      const double original = value.data()[e];
      double h = opts.h;
      double numeric = 0.0;
      for (int attempt = 0; attempt < 4; ++attempt) {
        value.data()[e] = original + h;
        auto plus = forward(probe, spec, batch, Mode::train);
        const double loss_plus = compute_loss(plus.predictions, targets, probe, opts.reg);
        value.data()[e] = original - h;
        auto minus = forward(probe, spec, batch, Mode::train);
        const double loss_minus = compute_loss(minus.predictions, targets, probe, opts.reg);
        value.data()[e] = original;
        numeric = (loss_plus - loss_minus) / (2.0 * h);
        bool kink = !detail::same_routing(plus.cache, fw.cache) || !detail::same_routing(minus.cache, fw.cache) ||
                    (l1_here && std::abs(original) < h);
        if (!kink || attempt == 3) break;
        ++report.kink_adjusted;
        h /= 10.0;
      }
      double err = relative_error(grad_tensors[k].value->data()[e], numeric, opts.denominator_floor);
      tc.max_relative_error = std::max(tc.max_relative_error, err);
    }
    if (tc.max_relative_error >= report.max_relative_error) {
      report.max_relative_error = tc.max_relative_error;
      report.worst_tensor = tc.name;
    }
    report.tensors.push_back(std::move(tc));
  }
  return report;
}

/// Builds a random network for `spec` (non-trivial biases, gamma, beta and
/// running statistics), a random batch and targets, then checks gradients.
inline GradientCheckReport gradient_check(const NetworkSpec& spec, std::uint64_t seed, double h,
                                          GradientCheckOptions opts = {}) {
  opts.h = h;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  NetworkParams params = xavier_init(spec, derive_seed(seed, 7));
  for (auto& layer : params.hidden) {
    for (Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = 0.1 * normal(rng);
    if (layer.bn)
      for (Index i = 0; i < layer.bn->gamma.size(); ++i) {
        layer.bn->gamma(i) = 1.0 + 0.2 * normal(rng);
        layer.bn->beta(i) = 0.2 * normal(rng);
      }
  }
  params.out_bias(0, 0) = 0.1 * normal(rng);
  Matrix batch(static_cast<Index>(opts.batch_rows), static_cast<Index>(spec.input_dim));
  Vector targets(static_cast<Index>(opts.batch_rows));
  for (Index i = 0; i < batch.size(); ++i) batch.data()[i] = normal(rng);
  for (Index i = 0; i < targets.size(); ++i) targets[i] = normal(rng);
  return gradient_check(spec, params, batch, targets, opts);
}

}  // namespace cropdnn::nn
