#pragma once

// Independent reference implementations used to check the library.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "cropdnn/data_model.hpp"

namespace oracle {

/// Re-derives the kept marker set one rule at a time, with plain counting.
inline std::vector<std::size_t> brute_force_filter(const cropdnn::MarkerMatrix& m, double call_rate, double maf) {
  const auto& v = m.values();
  std::vector<std::size_t> by_call, by_maf, both;
  for (std::size_t j = 0; j < m.n_markers(); ++j) {
    double present = 0, alleles = 0;
    for (cropdnn::Index i = 0; i < v.rows(); ++i) {
      int c = v(i, static_cast<cropdnn::Index>(j));
      if (c == cropdnn::kMissing) continue;
      present += 1;
      alleles += c + 1;  // copies of the +1 allele: aa=0, aA=1, AA=2
    }
    if (present / static_cast<double>(v.rows()) >= call_rate) by_call.push_back(j);
    if (present > 0) {
      double f = alleles / (2.0 * present);
      if (std::min(f, 1.0 - f) >= maf) by_maf.push_back(j);
    }
  }
  std::set_intersection(by_call.begin(), by_call.end(), by_maf.begin(), by_maf.end(), std::back_inserter(both));
  return both;
}

/// Sorts the observed codes and takes the middle (mean of the middle pair,
/// truncated toward zero).
inline int sorted_median(std::vector<int> xs) {
  std::sort(xs.begin(), xs.end());
  const auto n = xs.size();
  if (n % 2 == 1) return xs[n / 2];
  double mid = (xs[n / 2 - 1] + xs[n / 2]) / 2.0;
  return static_cast<int>(std::trunc(mid));
}

/// Least squares with an intercept via a QR solve of [1 | X].
inline Eigen::VectorXd ols_with_intercept(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  return a.colPivHouseholderQr().solve(y);
}

inline double soft_threshold(double z, double g) {
  if (z > g) return z - g;
  if (z < -g) return z + g;
  return 0.0;
}

struct BestSplit {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

/// Exhaustive (feature, midpoint) search maximizing the SSE decrease, each
/// candidate's SSE computed from scratch. Ties keep the first candidate in
/// (feature, threshold) order.
inline BestSplit exhaustive_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<long>& rows) {
  auto sse = [&](const std::vector<long>& idx) {
    if (idx.empty()) return 0.0;
    double m = 0;
    for (long r : idx) m += y[r];
    m /= static_cast<double>(idx.size());
    double s = 0;
    for (long r : idx) s += (y[r] - m) * (y[r] - m);
    return s;
  };
  const double parent = sse(rows);
  BestSplit best;
  for (long f = 0; f < x.cols(); ++f) {
    std::vector<double> vals;
    for (long r : rows) vals.push_back(x(r, f));
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
      double t = (vals[k] + vals[k + 1]) / 2.0;
      std::vector<long> l, r;
      for (long i : rows) (x(i, f) <= t ? l : r).push_back(i);
      double gain = parent - sse(l) - sse(r);
      if (!best.found || gain > best.gain + 1e-9 * std::max(1.0, std::abs(parent))) {
        best = {true, static_cast<std::size_t>(f), t, gain};
      }
    }
  }
  return best;
}

}  // namespace oracle
