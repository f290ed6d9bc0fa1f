#pragma once

#include <cmath>
#include <vector>

#include "cropdnn/common.hpp"

namespace cropdnn::nn {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moment estimates, one pair per parameter tensor.
struct AdamState {
  std::vector<Matrix> m, v;
  long long t = 0;
};

/// One bias-corrected Adam update over parallel lists of parameter and
/// gradient tensors. Moment buffers are allocated on first use.
inline void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads, AdamState& state,
                      double lr, const AdamHyper& hyper = {}) {
  if (params.size() != grads.size()) throw data_error("adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size()) throw data_error("adam_step: state does not match parameters");
  ++state.t;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix& g = *grads[k];
    if (g.rows() != params[k]->rows() || g.cols() != params[k]->cols())
      throw data_error("adam_step: gradient shape mismatch at tensor " + std::to_string(k));
    auto& m = state.m[k];
    auto& v = state.v[k];
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g.cwiseAbs2();
    params[k]->array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + hyper.epsilon);
  }
}

}  // namespace cropdnn::nn
