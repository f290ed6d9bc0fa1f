#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cropdnn/synth.hpp"

namespace testutil {

/// Small joined synthetic dataset plus its split (holdout = last year).
struct SmallTrials {
  cropdnn::SyntheticData raw;
  cropdnn::FieldTrialDataset all;
  cropdnn::Split split;
};

inline SmallTrials small_trials(std::uint64_t seed, std::size_t trials = 600, std::size_t markers = 60) {
  cropdnn::SynthConfig c;
  c.n_hybrids = 60;
  c.n_locations = 12;
  c.p_markers = markers;
  c.n_causal_markers = 4;
  c.n_trials = trials;
  c.missing_rate = 0.005;
  c.seed = seed;
  SmallTrials t{cropdnn::generate_synthetic(c), {}, {}};
  t.all = cropdnn::join_trials(std::make_shared<const cropdnn::MarkerMatrix>(t.raw.markers),
                               std::make_shared<const cropdnn::EnvironmentTable>(t.raw.environment), t.raw.performance)
              .dataset;
  t.split = cropdnn::split_by_year(t.all, cropdnn::SplitRule{c.last_year, 0.5, seed});
  return t;
}

/// 1,000 markers: per-marker missingness drawn from {0, 1%, 2%, 3%, 5%, 20%}
/// and allele frequencies including sub-1% ones.
inline cropdnn::MarkerMatrix planted_panel(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const cropdnn::Index n = 200, p = 1'000;
  const double miss[] = {0.0, 0.01, 0.02, 0.03, 0.05, 0.2};
  cropdnn::CodeMatrix v(n, p);
  for (cropdnn::Index j = 0; j < p; ++j) {
    double rate = miss[j % 6];
    double f = (j % 5 == 0) ? 0.004 * u(rng) : u(rng);
    for (cropdnn::Index i = 0; i < n; ++i) {
      int a = (u(rng) < f) + (u(rng) < f);
      v(i, j) = u(rng) < rate ? cropdnn::kMissing : static_cast<cropdnn::MarkerCode>(a - 1);
    }
  }
  std::vector<std::string> ids, names;
  for (cropdnn::Index i = 0; i < n; ++i) ids.push_back("H" + std::to_string(i));
  for (cropdnn::Index j = 0; j < p; ++j) names.push_back(cropdnn::marker_column_name(static_cast<std::size_t>(j), 1000));
  return {ids, names, v};
}

}  // namespace testutil
