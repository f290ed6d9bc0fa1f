#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cropdnn/common.hpp"
#include "cropdnn/csv.hpp"

namespace cropdnn {

inline constexpr std::size_t kWeatherVariables = 6;
inline constexpr std::size_t kMonths = 12;
inline constexpr std::size_t kWeatherDim = kWeatherVariables * kMonths;  // 72
inline constexpr std::size_t kSoilDim = 8;

using MarkerCode = std::int8_t;
inline constexpr MarkerCode kMissing = std::numeric_limits<MarkerCode>::min();
using CodeMatrix = Eigen::Matrix<MarkerCode, Eigen::Dynamic, Eigen::Dynamic>;

using WeatherVector = std::array<double, kWeatherDim>;
using SoilVector = std::array<double, kSoilDim>;

inline std::string weather_column_name(std::size_t w) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "w_%02zu", w + 1);
  return buf;
}
inline std::string soil_column_name(std::size_t s) { return "s_" + std::to_string(s + 1); }

/// Genotype panel: one row per hybrid, one column per marker, codes in
/// {-1, 0, +1} or kMissing.
class MarkerMatrix {
 public:
  MarkerMatrix() = default;
  MarkerMatrix(std::vector<std::string> hybrid_ids, std::vector<std::string> marker_names, CodeMatrix values)
      : hybrid_ids_(std::move(hybrid_ids)), marker_names_(std::move(marker_names)), values_(std::move(values)) {
    if (static_cast<std::size_t>(values_.rows()) != hybrid_ids_.size())
      throw data_error("marker matrix: row count does not match hybrid id count");
    if (static_cast<std::size_t>(values_.cols()) != marker_names_.size())
      throw data_error("marker matrix: column count does not match marker name count");
    for (std::size_t i = 0; i < hybrid_ids_.size(); ++i)
      if (!index_.emplace(hybrid_ids_[i], i).second) throw data_error("duplicate hybrid id '" + hybrid_ids_[i] + "'");
    for (Index j = 0; j < values_.cols(); ++j)
      for (Index i = 0; i < values_.rows(); ++i) {
        auto c = values_(i, j);
        if (c != kMissing && (c < -1 || c > 1)) throw data_error("marker code outside {-1,0,1}");
      }
  }

  std::size_t n_hybrids() const { return hybrid_ids_.size(); }
  std::size_t n_markers() const { return marker_names_.size(); }
  const std::vector<std::string>& hybrid_ids() const { return hybrid_ids_; }
  const std::vector<std::string>& marker_names() const { return marker_names_; }
  const CodeMatrix& values() const { return values_; }

  std::optional<std::size_t> find(const std::string& hybrid) const {
    auto it = index_.find(hybrid);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t missing_count() const { return static_cast<std::size_t>((values_.array() == kMissing).count()); }

  bool operator==(const MarkerMatrix& o) const {
    return hybrid_ids_ == o.hybrid_ids_ && marker_names_ == o.marker_names_ && values_ == o.values_;
  }

 private:
  std::vector<std::string> hybrid_ids_;
  std::vector<std::string> marker_names_;
  CodeMatrix values_;
  std::unordered_map<std::string, std::size_t> index_;
};

using SiteYear = std::pair<std::string, int>;

/// Weather per (location, year) and static soil per location. Complete by
/// construction: no missing entries are representable.
class EnvironmentTable {
 public:
  void set_weather(const std::string& location, int year, const WeatherVector& w) {
    if (!weather_.emplace(SiteYear{location, year}, w).second)
      throw data_error("duplicate weather key (" + location + ", " + std::to_string(year) + ")");
  }
  void set_soil(const std::string& location, const SoilVector& s) {
    if (!soil_.emplace(location, s).second) throw data_error("duplicate soil key '" + location + "'");
  }

  const WeatherVector* weather(const std::string& location, int year) const {
    auto it = weather_.find({location, year});
    return it == weather_.end() ? nullptr : &it->second;
  }
  const SoilVector* soil(const std::string& location) const {
    auto it = soil_.find(location);
    return it == soil_.end() ? nullptr : &it->second;
  }

  const std::map<SiteYear, WeatherVector>& weather_entries() const { return weather_; }
  const std::map<std::string, SoilVector>& soil_entries() const { return soil_; }

  std::vector<std::string> location_ids() const {
    std::set<std::string> ids;
    for (const auto& [key, _] : weather_) ids.insert(key.first);
    for (const auto& [loc, _] : soil_) ids.insert(loc);
    return {ids.begin(), ids.end()};
  }

  /// Years with weather at a location, ascending.
  std::vector<int> years_at(const std::string& location) const {
    std::vector<int> years;
    for (auto it = weather_.lower_bound({location, std::numeric_limits<int>::min()});
         it != weather_.end() && it->first.first == location; ++it)
      years.push_back(it->first.second);
    return years;
  }

  bool operator==(const EnvironmentTable& o) const { return weather_ == o.weather_ && soil_ == o.soil_; }

 private:
  std::map<SiteYear, WeatherVector> weather_;
  std::map<std::string, SoilVector> soil_;
};

struct PerformanceRecord {
  std::string hybrid_id;
  std::string location_id;
  int year = 0;
  double yield = 0.0;
  double check_yield = 0.0;

  double yield_difference() const { return yield - check_yield; }
  bool operator==(const PerformanceRecord&) const = default;
};

class PerformanceTable {
 public:
  PerformanceTable() = default;
  explicit PerformanceTable(std::vector<PerformanceRecord> records) : records_(std::move(records)) {
    std::set<std::tuple<std::string, std::string, int>> keys;
    for (const auto& r : records_)
      if (!keys.emplace(r.hybrid_id, r.location_id, r.year).second)
        throw data_error("duplicate performance key (" + r.hybrid_id + ", " + r.location_id + ", " +
                         std::to_string(r.year) + ")");
  }
  const std::vector<PerformanceRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool operator==(const PerformanceTable& o) const { return records_ == o.records_; }

 private:
  std::vector<PerformanceRecord> records_;
};

struct TrialRow {
  std::size_t hybrid;  // row in the marker matrix
  std::string location_id;
  int year;
  double yield;
  double check_yield;
  double yield_difference() const { return yield - check_yield; }
  bool operator==(const TrialRow&) const = default;
};

struct Rejection {
  std::size_t record;  // index into the performance table
  std::string reason;
};

/// Performance records resolved against genotype and environment tables.
/// The referenced tables are shared and immutable.
class FieldTrialDataset {
 public:
  FieldTrialDataset() = default;
  FieldTrialDataset(std::shared_ptr<const MarkerMatrix> markers, std::shared_ptr<const EnvironmentTable> environment,
                    std::vector<TrialRow> rows)
      : markers_(std::move(markers)), environment_(std::move(environment)), rows_(std::move(rows)) {}

  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  const std::vector<TrialRow>& rows() const { return rows_; }
  const TrialRow& row(std::size_t i) const { return rows_[i]; }
  const MarkerMatrix& markers() const { return *markers_; }
  const EnvironmentTable& environment() const { return *environment_; }
  std::shared_ptr<const MarkerMatrix> markers_ptr() const { return markers_; }
  std::shared_ptr<const EnvironmentTable> environment_ptr() const { return environment_; }

  const std::string& hybrid_id(std::size_t i) const { return markers_->hybrid_ids()[rows_[i].hybrid]; }
  const WeatherVector& weather(std::size_t i) const {
    return *environment_->weather(rows_[i].location_id, rows_[i].year);
  }
  const SoilVector& soil(std::size_t i) const { return *environment_->soil(rows_[i].location_id); }

  Vector yields() const {
    Vector v(static_cast<Index>(rows_.size()));
    for (std::size_t i = 0; i < rows_.size(); ++i) v[static_cast<Index>(i)] = rows_[i].yield;
    return v;
  }
  Vector check_yields() const {
    Vector v(static_cast<Index>(rows_.size()));
    for (std::size_t i = 0; i < rows_.size(); ++i) v[static_cast<Index>(i)] = rows_[i].check_yield;
    return v;
  }

  FieldTrialDataset subset(const std::vector<std::size_t>& indices) const {
    std::vector<TrialRow> picked;
    picked.reserve(indices.size());
    for (auto i : indices) picked.push_back(rows_.at(i));
    return {markers_, environment_, std::move(picked)};
  }

  /// Same rows against a different environment (e.g. forecasted weather).
  FieldTrialDataset with_environment(std::shared_ptr<const EnvironmentTable> environment) const {
    for (const auto& r : rows_)
      if (!environment->weather(r.location_id, r.year) || !environment->soil(r.location_id))
        throw data_error("replacement environment lacks (" + r.location_id + ", " + std::to_string(r.year) + ")");
    return {markers_, std::move(environment), rows_};
  }

 private:
  std::shared_ptr<const MarkerMatrix> markers_;
  std::shared_ptr<const EnvironmentTable> environment_;
  std::vector<TrialRow> rows_;
};

struct JoinResult {
  FieldTrialDataset dataset;
  std::vector<Rejection> rejections;
};

inline JoinResult join_trials(std::shared_ptr<const MarkerMatrix> markers,
                              std::shared_ptr<const EnvironmentTable> environment,
                              const PerformanceTable& performance) {
  std::vector<TrialRow> rows;
  std::vector<Rejection> rejections;
  rows.reserve(performance.size());
  for (std::size_t i = 0; i < performance.size(); ++i) {
    const auto& r = performance.records()[i];
    auto h = markers->find(r.hybrid_id);
    if (!h) {
      rejections.push_back({i, "unknown hybrid '" + r.hybrid_id + "'"});
      continue;
    }
    if (!environment->weather(r.location_id, r.year)) {
      rejections.push_back({i, "no weather for (" + r.location_id + ", " + std::to_string(r.year) + ")"});
      continue;
    }
    if (!environment->soil(r.location_id)) {
      rejections.push_back({i, "no soil for '" + r.location_id + "'"});
      continue;
    }
    rows.push_back({*h, r.location_id, r.year, r.yield, r.check_yield});
  }
  return {FieldTrialDataset(std::move(markers), std::move(environment), std::move(rows)), std::move(rejections)};
}

struct SplitRule {
  int holdout_year = 2016;
  double holdout_fraction = 0.5;  // share of holdout-year rows sent to validation
  std::uint64_t seed = 0;

  std::string describe() const {
    return "train: years < " + std::to_string(holdout_year) + " plus " + format_double(1.0 - holdout_fraction) +
           " of " + std::to_string(holdout_year) + "; validation: remaining " + std::to_string(holdout_year) +
           " rows and any later years; seed " + std::to_string(seed);
  }
};

struct Split {
  FieldTrialDataset train;
  FieldTrialDataset validation;
  std::string rule;
};

/// Rows before the holdout year train; a seeded fraction of holdout-year rows
/// (rounded to nearest) validate, the rest train. Later years validate.
inline Split split_by_year(const FieldTrialDataset& data, const SplitRule& rule) {
  if (data.empty()) throw data_error("split_by_year: empty dataset");
  if (!(rule.holdout_fraction > 0.0 && rule.holdout_fraction <= 1.0))
    throw config_error("split_by_year: holdout fraction must lie in (0, 1]");
  std::vector<std::size_t> train, validation, holdout_year_rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    int y = data.row(i).year;
    if (y < rule.holdout_year)
      train.push_back(i);
    else if (y == rule.holdout_year)
      holdout_year_rows.push_back(i);
    else
      validation.push_back(i);
  }
  std::mt19937_64 rng(rule.seed);
  std::shuffle(holdout_year_rows.begin(), holdout_year_rows.end(), rng);
  auto n_hold = static_cast<std::size_t>(std::llround(rule.holdout_fraction * static_cast<double>(holdout_year_rows.size())));
  validation.insert(validation.end(), holdout_year_rows.begin(), holdout_year_rows.begin() + static_cast<long>(n_hold));
  train.insert(train.end(), holdout_year_rows.begin() + static_cast<long>(n_hold), holdout_year_rows.end());
  if (validation.empty()) throw data_error("split_by_year: validation set is empty under rule: " + rule.describe());
  std::sort(train.begin(), train.end());
  std::sort(validation.begin(), validation.end());
  return {data.subset(train), data.subset(validation), rule.describe()};
}

// ---------------------------------------------------------------------------
// CSV ingestion and serialization.

inline MarkerMatrix parse_genotype(const csv::Table& t) {
  if (t.header.empty() || t.header[0] != "hybrid_id") throw data_error(t.source + ": first column must be hybrid_id");
  std::vector<std::string> names(t.header.begin() + 1, t.header.end());
  std::vector<std::string> ids;
  CodeMatrix values(static_cast<Index>(t.rows.size()), static_cast<Index>(names.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    ids.push_back(row[0]);
    for (std::size_t j = 1; j < row.size(); ++j) {
      const auto& f = row[j];
      MarkerCode c;
      if (f == "NA" || f.empty())
        c = kMissing;
      else if (f == "-1")
        c = -1;
      else if (f == "0")
        c = 0;
      else if (f == "1" || f == "+1")
        c = 1;
      else
        throw data_error(t.source + ":" + std::to_string(t.line_numbers[r]) + ": invalid marker code '" + f + "'");
      values(static_cast<Index>(r), static_cast<Index>(j - 1)) = c;
    }
  }
  std::set<std::string> seen;
  for (std::size_t r = 0; r < ids.size(); ++r)
    if (!seen.insert(ids[r]).second)
      throw data_error(t.source + ":" + std::to_string(t.line_numbers[r]) + ": duplicate hybrid id '" + ids[r] + "'");
  return {std::move(ids), std::move(names), std::move(values)};
}

inline void parse_weather_into(const csv::Table& t, EnvironmentTable& env) {
  if (t.header.size() < 2 || t.header[0] != "location_id" || t.header[1] != "year")
    throw data_error(t.source + ": header must start with location_id, year");
  std::size_t n_w = 0;
  while (2 + n_w < t.header.size() && t.header[2 + n_w].rfind("w_", 0) == 0) ++n_w;
  if (n_w != kWeatherDim)
    throw data_error(t.source + ": weather vector length " + std::to_string(n_w) + " != " + std::to_string(kWeatherDim));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    WeatherVector w{};
    for (std::size_t k = 0; k < kWeatherDim; ++k) w[k] = csv::to_double(row[2 + k], t, r);
    try {
      env.set_weather(row[0], csv::to_int(row[1], t, r), w);
    } catch (const Error& e) {
      throw data_error(t.source + ":" + std::to_string(t.line_numbers[r]) + ": " + e.what());
    }
  }
}

inline void parse_soil_into(const csv::Table& t, EnvironmentTable& env) {
  if (t.header.empty() || t.header[0] != "location_id") throw data_error(t.source + ": first column must be location_id");
  if (t.header.size() - 1 != kSoilDim)
    throw data_error(t.source + ": soil vector length " + std::to_string(t.header.size() - 1) + " != " +
                     std::to_string(kSoilDim));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    SoilVector s{};
    for (std::size_t k = 0; k < kSoilDim; ++k) s[k] = csv::to_double(t.rows[r][1 + k], t, r);
    try {
      env.set_soil(t.rows[r][0], s);
    } catch (const Error& e) {
      throw data_error(t.source + ":" + std::to_string(t.line_numbers[r]) + ": " + e.what());
    }
  }
}

inline PerformanceTable parse_performance(const csv::Table& t) {
  auto ch = t.column("hybrid_id"), cl = t.column("location_id"), cy = t.column("year"), cv = t.column("yield"),
       cc = t.column("check_yield");
  std::vector<PerformanceRecord> recs;
  recs.reserve(t.rows.size());
  std::set<std::tuple<std::string, std::string, int>> keys;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    PerformanceRecord rec{row[ch], row[cl], csv::to_int(row[cy], t, r), csv::to_double(row[cv], t, r),
                          csv::to_double(row[cc], t, r)};
    if (!keys.emplace(rec.hybrid_id, rec.location_id, rec.year).second)
      throw data_error(t.source + ":" + std::to_string(t.line_numbers[r]) + ": duplicate key (" + rec.hybrid_id +
                       ", " + rec.location_id + ", " + std::to_string(rec.year) + ")");
    recs.push_back(std::move(rec));
  }
  return PerformanceTable(std::move(recs));
}

struct Tables {
  MarkerMatrix markers;
  EnvironmentTable environment;
  PerformanceTable performance;
};

inline Tables ingest_tables(const std::string& genotype_path, const std::string& weather_path,
                            const std::string& soil_path, const std::string& performance_path) {
  Tables out;
  out.markers = parse_genotype(csv::read(genotype_path));
  parse_weather_into(csv::read(weather_path), out.environment);
  parse_soil_into(csv::read(soil_path), out.environment);
  out.performance = parse_performance(csv::read(performance_path));
  return out;
}

inline std::string genotype_csv(const MarkerMatrix& m) {
  std::string out = "hybrid_id";
  for (const auto& n : m.marker_names()) out += "," + n;
  out += '\n';
  for (std::size_t i = 0; i < m.n_hybrids(); ++i) {
    out += m.hybrid_ids()[i];
    for (std::size_t j = 0; j < m.n_markers(); ++j) {
      auto c = m.values()(static_cast<Index>(i), static_cast<Index>(j));
      out += c == kMissing ? ",NA" : c < 0 ? ",-1" : c == 0 ? ",0" : ",1";
    }
    out += '\n';
  }
  return out;
}

/// Weather rows in the weather.csv schema. When `forecast` is set a trailing
/// `forecast=true` marker column is appended.
inline std::string weather_csv(const EnvironmentTable& env, bool forecast = false) {
  std::string out = "location_id,year";
  for (std::size_t k = 0; k < kWeatherDim; ++k) out += "," + weather_column_name(k);
  if (forecast) out += ",forecast";
  out += '\n';
  for (const auto& [key, w] : env.weather_entries()) {
    out += key.first + "," + std::to_string(key.second);
    for (double v : w) out += "," + format_double(v);
    if (forecast) out += ",true";
    out += '\n';
  }
  return out;
}

inline std::string soil_csv(const EnvironmentTable& env) {
  std::string out = "location_id";
  for (std::size_t k = 0; k < kSoilDim; ++k) out += "," + soil_column_name(k);
  out += '\n';
  for (const auto& [loc, s] : env.soil_entries()) {
    out += loc;
    for (double v : s) out += "," + format_double(v);
    out += '\n';
  }
  return out;
}

inline std::string performance_csv(const PerformanceTable& p) {
  std::string out = "hybrid_id,location_id,year,yield,check_yield\n";
  for (const auto& r : p.records())
    out += r.hybrid_id + "," + r.location_id + "," + std::to_string(r.year) + "," + format_double(r.yield) + "," +
           format_double(r.check_yield) + "\n";
  return out;
}

}  // namespace cropdnn
