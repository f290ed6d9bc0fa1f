#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "cropdnn/common.hpp"

namespace cropdnn {

struct TreeConfig {
  std::size_t max_depth = 10;
  std::size_t min_samples_split = 2;
};

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  double value = 0.0;  // mean training target of the node
  std::size_t samples = 0;
  std::size_t depth = 0;
  double sse = 0.0;

  bool is_leaf() const { return feature < 0; }
};

/// Regression tree; rows with value <= threshold descend left.
struct TreeModel {
  std::vector<TreeNode> nodes;  // preorder, root first
  std::size_t n_features = 0;
  TreeConfig config;

  int leaf_of(const Eigen::Ref<const RowVector>& row) const {
    int k = 0;
    while (!nodes[static_cast<std::size_t>(k)].is_leaf()) {
      const auto& nd = nodes[static_cast<std::size_t>(k)];
      k = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
    }
    return k;
  }

  Vector predict(const Matrix& design) const {
    if (static_cast<std::size_t>(design.cols()) != n_features)
      throw data_error("tree: design has " + std::to_string(design.cols()) + " columns, model expects " +
                       std::to_string(n_features));
    Vector out(design.rows());
    for (Index i = 0; i < design.rows(); ++i) out[i] = nodes[static_cast<std::size_t>(leaf_of(design.row(i)))].value;
    return out;
  }

  std::size_t depth() const {
    std::size_t d = 0;
    for (const auto& nd : nodes) d = std::max(d, nd.depth);
    return d;
  }

  double training_sse() const {
    double s = 0.0;
    for (const auto& nd : nodes)
      if (nd.is_leaf()) s += nd.sse;
    return s;
  }
};

struct SplitChoice {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

/// Best (feature, midpoint) split of `rows` by SSE decrease. A later
/// candidate must beat the incumbent by a relative margin, so near-ties go
/// to the lower feature index and then the lower threshold.
inline SplitChoice best_split(const Matrix& x, const Vector& y, const std::vector<Index>& rows, double parent_sse,
                              double parent_mean) {
  SplitChoice best;
  const double margin = 1e-9 * std::max(1.0, std::abs(parent_sse));
  const std::size_t m = rows.size();
  std::vector<std::pair<double, double>> pts(m);
  for (Index f = 0; f < x.cols(); ++f) {
    for (std::size_t k = 0; k < m; ++k) pts[k] = {x(rows[k], f), y[rows[k]] - parent_mean};
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double total = 0.0, total_sq = 0.0;
    for (const auto& [xv, yv] : pts) total += yv, total_sq += yv * yv;
    double sum = 0.0, sq = 0.0;
    for (std::size_t k = 0; k + 1 < m; ++k) {
      sum += pts[k].second;
      sq += pts[k].second * pts[k].second;
      if (!(pts[k].first < pts[k + 1].first)) continue;
      const double nl = static_cast<double>(k + 1), nr = static_cast<double>(m - k - 1);
      const double sse_l = sq - sum * sum / nl;
      const double sse_r = (total_sq - sq) - (total - sum) * (total - sum) / nr;
      const double gain = parent_sse - sse_l - sse_r;
      if (!best.found || gain > best.gain + margin)
        best = {true, static_cast<std::size_t>(f), (pts[k].first + pts[k + 1].first) / 2.0, gain};
    }
  }
  return best;
}

namespace detail {

inline int grow(TreeModel& t, const Matrix& x, const Vector& y, std::vector<Index> rows, std::size_t depth) {
  TreeNode node;
  node.samples = rows.size();
  node.depth = depth;
  double mean = 0.0;
  for (Index r : rows) mean += y[r];
  mean /= static_cast<double>(rows.size());
  node.value = mean;
  bool pure = true;
  for (Index r : rows) {
    node.sse += (y[r] - mean) * (y[r] - mean);
    pure = pure && y[r] == y[rows[0]];
  }
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.push_back(node);
  if (pure || depth >= t.config.max_depth || rows.size() < t.config.min_samples_split) return id;
  auto split = best_split(x, y, rows, node.sse, mean);
  if (!split.found) return id;
  std::vector<Index> left, right;
  for (Index r : rows) (x(r, static_cast<Index>(split.feature)) <= split.threshold ? left : right).push_back(r);
  rows.clear();
  rows.shrink_to_fit();
  t.nodes[static_cast<std::size_t>(id)].feature = static_cast<int>(split.feature);
  t.nodes[static_cast<std::size_t>(id)].threshold = split.threshold;
  int l = grow(t, x, y, std::move(left), depth + 1);
  int r = grow(t, x, y, std::move(right), depth + 1);
  t.nodes[static_cast<std::size_t>(id)].left = l;
  t.nodes[static_cast<std::size_t>(id)].right = r;
  return id;
}

}  // namespace detail

/// Greedy top-down induction. A node becomes a leaf when its targets are all
/// equal, it sits at max_depth, it holds fewer than min_samples_split rows,
/// or every feature is constant on it.
inline TreeModel fit_regression_tree(const Matrix& design, const Vector& targets, const TreeConfig& config = {}) {
  if (design.rows() != targets.size()) throw data_error("tree: design/target size mismatch");
  if (design.rows() == 0) throw data_error("tree: empty training data");
  if (config.min_samples_split < 2) throw config_error("tree: min_samples_split must be >= 2");
  TreeModel t;
  t.n_features = static_cast<std::size_t>(design.cols());
  t.config = config;
  std::vector<Index> rows(static_cast<std::size_t>(design.rows()));
  for (Index i = 0; i < design.rows(); ++i) rows[static_cast<std::size_t>(i)] = i;
  detail::grow(t, design, targets, std::move(rows), 0);
  return t;
}

/// Human-readable rules, one node per line.
inline std::string tree_rules(const TreeModel& t, const std::vector<std::string>& names = {}) {
  std::string out;
  for (std::size_t k = 0; k < t.nodes.size(); ++k) {
    const auto& nd = t.nodes[k];
    out += std::string(2 * nd.depth, ' ') + "node " + std::to_string(k) + ": ";
    if (nd.is_leaf()) {
      out += "predict " + format_double(nd.value) + " (n=" + std::to_string(nd.samples) + ")\n";
    } else {
      auto f = static_cast<std::size_t>(nd.feature);
      std::string name = f < names.size() ? names[f] : "x[" + std::to_string(f) + "]";
      out += "if " + name + " <= " + format_double(nd.threshold) + " then node " + std::to_string(nd.left) + " else node " +
             std::to_string(nd.right) + " (n=" + std::to_string(nd.samples) + ")\n";
    }
  }
  return out;
}

inline nlohmann::json to_json(const TreeModel& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& nd : t.nodes)
    nodes.push_back({{"feature", nd.feature}, {"threshold", nd.threshold}, {"left", nd.left}, {"right", nd.right},
                     {"value", nd.value}, {"samples", nd.samples}, {"depth", nd.depth}, {"sse", nd.sse}});
  return {{"format", "cropdnn.tree"},
          {"version", 1},
          {"n_features", t.n_features},
          {"max_depth", t.config.max_depth},
          {"min_samples_split", t.config.min_samples_split},
          {"nodes", std::move(nodes)}};
}

inline TreeModel tree_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cropdnn.tree" || j.value("version", 0) != 1) throw data_error("not a tree model (version 1)");
  TreeModel t;
  t.n_features = j.at("n_features").get<std::size_t>();
  t.config.max_depth = j.at("max_depth").get<std::size_t>();
  t.config.min_samples_split = j.at("min_samples_split").get<std::size_t>();
  for (const auto& n : j.at("nodes")) {
    TreeNode nd;
    nd.feature = n.at("feature").get<int>();
    nd.threshold = n.at("threshold").get<double>();
    nd.left = n.at("left").get<int>();
    nd.right = n.at("right").get<int>();
    nd.value = n.at("value").get<double>();
    nd.samples = n.at("samples").get<std::size_t>();
    nd.depth = n.at("depth").get<std::size_t>();
    nd.sse = n.at("sse").get<double>();
    t.nodes.push_back(nd);
  }
  if (t.nodes.empty()) throw data_error("tree model has no nodes");
  const auto count = static_cast<int>(t.nodes.size());
  for (const auto& nd : t.nodes)
    if (!nd.is_leaf() && (nd.left <= 0 || nd.left >= count || nd.right <= 0 || nd.right >= count ||
                          static_cast<std::size_t>(nd.feature) >= t.n_features))
      throw data_error("tree model has an invalid node reference");
  return t;
}

}  // namespace cropdnn
