#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cropdnn/common.hpp"
#include "cropdnn/data_model.hpp"

namespace cropdnn {

enum class FeatureGroup { marker, weather, soil };

inline const char* to_string(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::marker: return "marker";
    case FeatureGroup::weather: return "weather";
    case FeatureGroup::soil: return "soil";
  }
  return "?";
}

struct MarkerFilterResult {
  MarkerMatrix markers;
  std::vector<std::size_t> kept;
};

struct MarkerStats {
  std::size_t non_missing = 0;
  double call_rate = 0.0;
  double allele_frequency = 0.0;  // frequency of the +1 allele among non-missing calls
  double maf = 0.0;
};

inline MarkerStats marker_stats(const CodeMatrix& values, Index j) {
  MarkerStats s;
  std::size_t aa = 0, het = 0;
  for (Index i = 0; i < values.rows(); ++i) {
    auto c = values(i, j);
    if (c == kMissing) continue;
    ++s.non_missing;
    if (c == 1) ++aa;
    if (c == 0) ++het;
  }
  s.call_rate = values.rows() == 0 ? 0.0 : static_cast<double>(s.non_missing) / static_cast<double>(values.rows());
  if (s.non_missing > 0) {
    s.allele_frequency = static_cast<double>(2 * aa + het) / static_cast<double>(2 * s.non_missing);
    s.maf = std::min(s.allele_frequency, 1.0 - s.allele_frequency);
  }
  return s;
}

inline MarkerMatrix select_markers(const MarkerMatrix& m, const std::vector<std::size_t>& columns) {
  CodeMatrix values(m.values().rows(), static_cast<Index>(columns.size()));
  std::vector<std::string> names;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    values.col(static_cast<Index>(k)) = m.values().col(static_cast<Index>(columns[k]));
    names.push_back(m.marker_names()[columns[k]]);
  }
  return {m.hybrid_ids(), std::move(names), std::move(values)};
}

/// Keeps a marker iff its call rate is at least `call_rate` and its minor
/// allele frequency is at least `maf`. Both statistics come from the
/// unfiltered panel, so the result is the intersection of the two rules.
inline MarkerFilterResult filter_markers(const MarkerMatrix& markers, double call_rate = 0.97, double maf = 0.01) {
  if (markers.n_markers() == 0 || markers.n_hybrids() == 0) throw data_error("filter_markers: empty marker matrix");
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < markers.n_markers(); ++j) {
    auto s = marker_stats(markers.values(), static_cast<Index>(j));
    if (s.non_missing > 0 && s.call_rate >= call_rate && s.maf >= maf) kept.push_back(j);
  }
  if (kept.empty())
    throw data_error("filter_markers: every marker was filtered out (call rate " + format_double(call_rate) +
                     ", maf " + format_double(maf) + ")");
  return {select_markers(markers, kept), std::move(kept)};
}

/// Median of a marker's non-missing codes. For an even count the two middle
/// codes are averaged and a half-integer result is truncated toward 0.
inline MarkerCode column_median(const CodeMatrix& values, Index j) {
  std::size_t counts[3] = {0, 0, 0};
  for (Index i = 0; i < values.rows(); ++i) {
    auto c = values(i, j);
    if (c != kMissing) ++counts[c + 1];
  }
  std::size_t n = counts[0] + counts[1] + counts[2];
  if (n == 0) throw data_error("impute_median: marker column " + std::to_string(j) + " is fully missing");
  auto kth = [&](std::size_t k) -> int {  // k-th smallest, 0-based
    if (k < counts[0]) return -1;
    if (k < counts[0] + counts[1]) return 0;
    return 1;
  };
  int lo = kth((n - 1) / 2), hi = kth(n / 2);
  return static_cast<MarkerCode>((lo + hi) / 2);  // integer division truncates toward 0
}

inline std::vector<MarkerCode> marker_medians(const MarkerMatrix& markers) {
  std::vector<MarkerCode> med(markers.n_markers());
  for (std::size_t j = 0; j < med.size(); ++j) med[j] = column_median(markers.values(), static_cast<Index>(j));
  return med;
}

inline MarkerMatrix impute_with(const MarkerMatrix& markers, const std::vector<MarkerCode>& medians) {
  if (medians.size() != markers.n_markers()) throw data_error("impute: median count does not match marker count");
  CodeMatrix values = markers.values();
  for (Index j = 0; j < values.cols(); ++j)
    for (Index i = 0; i < values.rows(); ++i)
      if (values(i, j) == kMissing) values(i, j) = medians[static_cast<std::size_t>(j)];
  return {markers.hybrid_ids(), markers.marker_names(), std::move(values)};
}

inline MarkerMatrix impute_median(const MarkerMatrix& markers) { return impute_with(markers, marker_medians(markers)); }

/// Column layout of a design matrix: kept markers, then w_01..w_72, then s_1..s_8.
struct DesignLayout {
  std::size_t n_markers = 0;

  std::size_t width() const { return n_markers + kWeatherDim + kSoilDim; }
  std::size_t weather_offset() const { return n_markers; }
  std::size_t soil_offset() const { return n_markers + kWeatherDim; }
  FeatureGroup group(std::size_t col) const {
    if (col < n_markers) return FeatureGroup::marker;
    if (col < soil_offset()) return FeatureGroup::weather;
    return FeatureGroup::soil;
  }
  std::vector<std::size_t> columns_of(FeatureGroup g) const {
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < width(); ++c)
      if (group(c) == g) cols.push_back(c);
    return cols;
  }
};

/// Fitted preprocessing state, reused verbatim for validation and prediction.
struct PreprocessFit {
  static constexpr int kVersion = 1;

  double call_rate = 0.97;
  double maf = 0.01;
  std::vector<std::size_t> kept_markers;      // column indices in the raw panel
  std::vector<std::string> kept_marker_names;
  std::vector<MarkerCode> medians;            // one per kept marker
  std::vector<double> weather_mean, weather_scale;
  std::vector<double> soil_mean, soil_scale;
  /// Optional restriction to a subset of the full layout's columns (ascending).
  std::optional<std::vector<std::size_t>> columns;
  std::vector<std::string> warnings;

  DesignLayout layout() const { return {kept_markers.size()}; }
  std::size_t width() const { return columns ? columns->size() : layout().width(); }

  std::vector<std::string> full_feature_names() const {
    std::vector<std::string> names = kept_marker_names;
    for (std::size_t w = 0; w < kWeatherDim; ++w) names.push_back(weather_column_name(w));
    for (std::size_t s = 0; s < kSoilDim; ++s) names.push_back(soil_column_name(s));
    return names;
  }
  std::vector<std::string> feature_names() const {
    auto all = full_feature_names();
    if (!columns) return all;
    std::vector<std::string> out;
    for (auto c : *columns) out.push_back(all[c]);
    return out;
  }
  std::vector<FeatureGroup> feature_groups() const {
    auto lay = layout();
    std::vector<FeatureGroup> out;
    if (columns)
      for (auto c : *columns) out.push_back(lay.group(c));
    else
      for (std::size_t c = 0; c < lay.width(); ++c) out.push_back(lay.group(c));
    return out;
  }

  /// Copy restricted to `cols` (indices into the full layout).
  PreprocessFit restricted_to(std::vector<std::size_t> cols) const {
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    if (cols.empty()) throw config_error("design restriction selects no columns");
    if (cols.back() >= layout().width()) throw config_error("design restriction column out of range");
    PreprocessFit f = *this;
    f.columns = std::move(cols);
    return f;
  }
};

struct PreprocessOptions {
  double call_rate = 0.97;
  double maf = 0.01;
};

inline void fit_standardization(const Matrix& block, std::vector<double>& mean, std::vector<double>& scale,
                                const std::vector<std::string>& names, std::vector<std::string>& warnings) {
  const auto n = block.rows();
  mean.assign(static_cast<std::size_t>(block.cols()), 0.0);
  scale.assign(static_cast<std::size_t>(block.cols()), 1.0);
  for (Index c = 0; c < block.cols(); ++c) {
    double m = block.col(c).mean();
    double ss = (block.col(c).array() - m).square().sum();
    double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    mean[static_cast<std::size_t>(c)] = m;
    if (!(sd > 0.0)) {
      warnings.push_back("zero-variance feature " + names[static_cast<std::size_t>(c)] + ": scale clamped to 1");
      sd = 1.0;
    }
    scale[static_cast<std::size_t>(c)] = sd;
  }
}

struct DesignResult {
  Matrix design;
  PreprocessFit fit;
};

/// Builds the model input matrix. Without a fit, filtering, medians and
/// environment standardization are fitted on `data` (the training rows).
inline DesignResult assemble_design(const FieldTrialDataset& data, const std::optional<PreprocessFit>& given,
                                    const PreprocessOptions& opts = {}) {
  if (data.empty()) throw data_error("assemble_design: empty dataset");
  const auto& panel = data.markers();
  PreprocessFit fit;
  if (given) {
    fit = *given;
    for (std::size_t k = 0; k < fit.kept_markers.size(); ++k)
      if (fit.kept_markers[k] >= panel.n_markers() || panel.marker_names()[fit.kept_markers[k]] != fit.kept_marker_names[k])
        throw data_error("assemble_design: fitted marker '" + fit.kept_marker_names[k] + "' not present in dataset");
  } else {
    fit.call_rate = opts.call_rate;
    fit.maf = opts.maf;
    auto filtered = filter_markers(panel, opts.call_rate, opts.maf);
    fit.kept_markers = filtered.kept;
    fit.kept_marker_names = filtered.markers.marker_names();
    fit.medians = marker_medians(filtered.markers);
  }

  const auto n = static_cast<Index>(data.size());
  const auto p = static_cast<Index>(fit.kept_markers.size());
  Matrix weather(n, static_cast<Index>(kWeatherDim)), soil(n, static_cast<Index>(kSoilDim));
  for (Index i = 0; i < n; ++i) {
    const auto& w = data.weather(static_cast<std::size_t>(i));
    const auto& s = data.soil(static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < kWeatherDim; ++k) weather(i, static_cast<Index>(k)) = w[k];
    for (std::size_t k = 0; k < kSoilDim; ++k) soil(i, static_cast<Index>(k)) = s[k];
  }
  if (!given) {
    std::vector<std::string> wn, sn;
    for (std::size_t k = 0; k < kWeatherDim; ++k) wn.push_back(weather_column_name(k));
    for (std::size_t k = 0; k < kSoilDim; ++k) sn.push_back(soil_column_name(k));
    fit_standardization(weather, fit.weather_mean, fit.weather_scale, wn, fit.warnings);
    fit_standardization(soil, fit.soil_mean, fit.soil_scale, sn, fit.warnings);
  }

  const auto lay = fit.layout();
  Matrix full(n, static_cast<Index>(lay.width()));
  const auto& codes = panel.values();
  for (Index i = 0; i < n; ++i) {
    auto h = static_cast<Index>(data.row(static_cast<std::size_t>(i)).hybrid);
    for (Index k = 0; k < p; ++k) {
      auto c = codes(h, static_cast<Index>(fit.kept_markers[static_cast<std::size_t>(k)]));
      full(i, k) = c == kMissing ? fit.medians[static_cast<std::size_t>(k)] : c;
    }
    for (std::size_t k = 0; k < kWeatherDim; ++k)
      full(i, p + static_cast<Index>(k)) = (weather(i, static_cast<Index>(k)) - fit.weather_mean[k]) / fit.weather_scale[k];
    for (std::size_t k = 0; k < kSoilDim; ++k)
      full(i, static_cast<Index>(lay.soil_offset() + k)) = (soil(i, static_cast<Index>(k)) - fit.soil_mean[k]) / fit.soil_scale[k];
  }
  if (!fit.columns) return {std::move(full), std::move(fit)};
  Matrix restricted(n, static_cast<Index>(fit.columns->size()));
  for (std::size_t k = 0; k < fit.columns->size(); ++k)
    restricted.col(static_cast<Index>(k)) = full.col(static_cast<Index>((*fit.columns)[k]));
  return {std::move(restricted), std::move(fit)};
}

inline nlohmann::json to_json(const PreprocessFit& f) {
  nlohmann::json j;
  j["format"] = "cropdnn.preprocess";
  j["version"] = PreprocessFit::kVersion;
  j["call_rate"] = f.call_rate;
  j["maf"] = f.maf;
  j["kept_markers"] = f.kept_markers;
  j["kept_marker_names"] = f.kept_marker_names;
  std::vector<int> med(f.medians.begin(), f.medians.end());
  j["medians"] = med;
  j["weather_mean"] = f.weather_mean;
  j["weather_scale"] = f.weather_scale;
  j["soil_mean"] = f.soil_mean;
  j["soil_scale"] = f.soil_scale;
  j["columns"] = f.columns ? nlohmann::json(*f.columns) : nlohmann::json(nullptr);
  j["warnings"] = f.warnings;
  return j;
}

inline PreprocessFit preprocess_fit_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cropdnn.preprocess") throw data_error("not a preprocessing metadata document");
  if (j.at("version").get<int>() != PreprocessFit::kVersion)
    throw data_error("unsupported preprocessing metadata version " + j.at("version").dump());
  PreprocessFit f;
  f.call_rate = j.at("call_rate").get<double>();
  f.maf = j.at("maf").get<double>();
  f.kept_markers = j.at("kept_markers").get<std::vector<std::size_t>>();
  f.kept_marker_names = j.at("kept_marker_names").get<std::vector<std::string>>();
  for (int m : j.at("medians").get<std::vector<int>>()) f.medians.push_back(static_cast<MarkerCode>(m));
  f.weather_mean = j.at("weather_mean").get<std::vector<double>>();
  f.weather_scale = j.at("weather_scale").get<std::vector<double>>();
  f.soil_mean = j.at("soil_mean").get<std::vector<double>>();
  f.soil_scale = j.at("soil_scale").get<std::vector<double>>();
  if (!j.at("columns").is_null()) f.columns = j.at("columns").get<std::vector<std::size_t>>();
  f.warnings = j.at("warnings").get<std::vector<std::string>>();
  if (f.medians.size() != f.kept_markers.size() || f.kept_marker_names.size() != f.kept_markers.size() ||
      f.weather_mean.size() != kWeatherDim || f.weather_scale.size() != kWeatherDim || f.soil_mean.size() != kSoilDim ||
      f.soil_scale.size() != kSoilDim)
    throw data_error("preprocessing metadata has inconsistent sizes");
  return f;
}

}  // namespace cropdnn
