#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cropdnn/common.hpp"
#include "cropdnn/nn/network.hpp"
#include "cropdnn/preprocess.hpp"
#include "cropdnn/yield_model.hpp"

namespace cropdnn {

struct NeuronMask {
  std::vector<double> mean_activation;  // per last-hidden neuron
  std::vector<bool> active;
  double threshold = 0.0;

  std::size_t count() const { return static_cast<std::size_t>(std::count(active.begin(), active.end(), true)); }
};

/// Average INFER-mode activation of each last-hidden neuron over `design`;
/// a neuron is active when its average exceeds `threshold`.
inline NeuronMask activated_neuron_mask(const TrainedNetwork& net, const Matrix& design, double threshold = 0.0) {
  if (design.rows() == 0) throw data_error("activated_neuron_mask: empty design");
  if (net.spec.hidden_layers == 0) throw config_error("activated_neuron_mask: network has no hidden layer");
  auto fw = nn::forward(net.params, net.spec, design, nn::Mode::infer);
  RowVector mean = fw.cache.last_hidden.colwise().mean();
  NeuronMask m;
  m.threshold = threshold;
  for (Index j = 0; j < mean.size(); ++j) {
    m.mean_activation.push_back(mean[j]);
    m.active.push_back(mean[j] > threshold);
  }
  if (m.count() == 0)
    throw config_error("activated_neuron_mask: no neuron has mean activation above " + format_double(threshold) +
                       "; lower the activation threshold");
  return m;
}

struct FeatureEffect {
  std::size_t column = 0;  // index in the full design layout
  std::string name;
  FeatureGroup group = FeatureGroup::marker;
  double raw = 0.0;
  double normalized = 0.0;
};

struct EffectReport {
  std::vector<FeatureEffect> features;  // in design column order
  NeuronMask mask;
};

/// Seeds the mask on the last hidden layer's output and propagates it to the
/// input, dropping negative signals at every activation. Raw effect is the
/// mean absolute input signal over the rows; each group is then divided by
/// its own maximum.
inline EffectReport effects_via_guided_backprop(const TrainedNetwork& net, const PreprocessFit& fit, const Matrix& design,
                                                const NeuronMask& mask) {
  if (static_cast<std::size_t>(design.cols()) != fit.width() || fit.width() != net.spec.input_dim)
    throw data_error("effects: design, fit and network widths disagree");
  if (mask.active.size() != net.spec.hidden_width) throw data_error("effects: mask length != last hidden width");
  auto fw = nn::forward(net.params, net.spec, design, nn::Mode::infer);
  RowVector seed(static_cast<Index>(mask.active.size()));
  for (std::size_t j = 0; j < mask.active.size(); ++j) seed[static_cast<Index>(j)] = mask.active[j] ? 1.0 : 0.0;
  Matrix signal = seed.replicate(design.rows(), 1);
  nn::BackpropOptions opts;
  opts.guided = true;
  Matrix input = nn::backprop_hidden(fw.cache, net.params, net.spec, std::move(signal), opts);
  RowVector raw = input.cwiseAbs().colwise().mean();

  EffectReport r;
  r.mask = mask;
  const auto names = fit.feature_names();
  const auto groups = fit.feature_groups();
  for (std::size_t k = 0; k < names.size(); ++k)
    r.features.push_back({fit.columns ? (*fit.columns)[k] : k, names[k], groups[k], raw[static_cast<Index>(k)], 0.0});
  for (auto g : {FeatureGroup::marker, FeatureGroup::weather, FeatureGroup::soil}) {
    double top = 0.0;
    for (const auto& f : r.features)
      if (f.group == g) top = std::max(top, f.raw);
    if (top > 0.0)
      for (auto& f : r.features)
        if (f.group == g) f.normalized = f.raw / top;
  }
  return r;
}

/// Convenience: mask and effects from the yield network of a pair.
inline EffectReport yield_effects(const YieldModelPair& pair, const Matrix& validation_design, double threshold = 0.0) {
  return effects_via_guided_backprop(pair.yield, pair.fit, validation_design,
                                     activated_neuron_mask(pair.yield, validation_design, threshold));
}

/// Top markers and top environment features (soil and weather pooled) by raw
/// effect, ties to the lower column. Returns full-layout columns, ascending.
inline std::vector<std::size_t> select_top_features(const EffectReport& report, std::size_t n_markers = 50,
                                                    std::size_t n_environment = 20) {
  std::vector<const FeatureEffect*> markers, environment;
  for (const auto& f : report.features) (f.group == FeatureGroup::marker ? markers : environment).push_back(&f);
  if (n_markers > markers.size())
    throw config_error("select_top_features: " + std::to_string(n_markers) + " markers requested, " +
                       std::to_string(markers.size()) + " available");
  if (n_environment > environment.size())
    throw config_error("select_top_features: " + std::to_string(n_environment) + " environment features requested, " +
                       std::to_string(environment.size()) + " available");
  auto by_effect = [](const FeatureEffect* a, const FeatureEffect* b) {
    return a->raw != b->raw ? a->raw > b->raw : a->column < b->column;
  };
  std::sort(markers.begin(), markers.end(), by_effect);
  std::sort(environment.begin(), environment.end(), by_effect);
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < n_markers; ++k) out.push_back(markers[k]->column);
  for (std::size_t k = 0; k < n_environment; ++k) out.push_back(environment[k]->column);
  std::sort(out.begin(), out.end());
  return out;
}

/// Trains a fresh pair on the selected columns of an existing fit.
inline YieldModelPair retrain_subset(const FieldTrialDataset& train, const PreprocessFit& fit,
                                     const std::vector<std::size_t>& columns, const nn::NetworkSpec& spec_template,
                                     const nn::TrainConfig& config) {
  PreprocessFit base = fit;
  base.columns.reset();
  return train_pair(train, spec_template, config, base.restricted_to(columns));
}

inline std::string effects_csv(const EffectReport& r) {
  std::string out = "feature,group,raw,normalized\n";
  for (const auto& f : r.features)
    out += f.name + "," + to_string(f.group) + "," + format_double(f.raw) + "," + format_double(f.normalized) + "\n";
  return out;
}

inline std::string selection_csv(const PreprocessFit& fit, const std::vector<std::size_t>& columns) {
  PreprocessFit base = fit;
  base.columns.reset();
  const auto names = base.full_feature_names();
  const auto lay = base.layout();
  std::string out = "column,feature,group\n";
  for (auto c : columns) out += std::to_string(c) + "," + names.at(c) + "," + to_string(lay.group(c)) + "\n";
  return out;
}

}  // namespace cropdnn
