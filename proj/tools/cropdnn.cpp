// cropdnn: command-line front end for the crop-yield pipeline.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cropdnn/baselines/baselines.hpp"
#include "cropdnn/config.hpp"
#include "cropdnn/csv.hpp"
#include "cropdnn/data_model.hpp"
#include "cropdnn/evaluate.hpp"
#include "cropdnn/feature_select.hpp"
#include "cropdnn/preprocess.hpp"
#include "cropdnn/synth.hpp"
#include "cropdnn/weather_forecast.hpp"
#include "cropdnn/yield_model.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace cropdnn;

namespace {

constexpr const char* kExitCodes =
    "Exit codes:\n"
    "  0  success\n"
    "  1  internal error\n"
    "  2  usage (bad flags, unknown subcommand, non-empty output directory)\n"
    "  3  invalid configuration\n"
    "  4  missing input file\n"
    "  5  missing model artifacts\n"
    "  6  malformed or inconsistent data\n"
    "  7  numerical failure (non-finite loss or weights)\n";

void log(const std::string& msg) { std::clog << "[cropdnn] " << msg << '\n'; }

struct Common {
  std::string out;
  std::string config_file;
  std::string profile = "desk";
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--out", c.out, "Fresh output directory")->required();
  sub->add_option("--config", c.config_file, "Config file of key = value lines");
  sub->add_option("--profile", c.profile, "Scale profile")->check(CLI::IsMember({"desk", "paper"}));
  sub->add_option("--set", c.sets, "Override one key, e.g. --set train.batch_size=32 (repeatable)");
  sub->add_option("--seed", c.seed, "Master seed (same as --set seed=N)");
}

/// defaults < profile < config file < --seed < --set
RunConfig resolve(const Common& c) {
  RunConfig cfg;
  apply_profile(cfg, c.profile);
  if (!c.config_file.empty()) {
    if (!fs::exists(c.config_file)) throw Error(ErrorKind::missing_input, "config file not found: " + c.config_file);
    apply_config_text(cfg, read_file(c.config_file), c.config_file);
  }
  if (c.seed) cfg.seed = *c.seed;
  for (const auto& s : c.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos) throw config_error("--set expects key=value, got '" + s + "'");
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  cfg.propagate_seeds();
  validate(cfg);
  return cfg;
}

json split_json(const SplitRule& r) {
  return {{"holdout_year", r.holdout_year}, {"holdout_fraction", r.holdout_fraction}, {"seed", r.seed}};
}

SplitRule split_from_json(const json& j) {
  return {j.at("holdout_year").get<int>(), j.at("holdout_fraction").get<double>(), j.at("seed").get<std::uint64_t>()};
}

/// One invocation's output directory and manifest.
class Run {
 public:
  Run(std::string command, const Common& common, const RunConfig& cfg) : command_(std::move(command)), out_(common.out) {
    if (fs::exists(out_) && !(fs::is_directory(out_) && fs::is_empty(out_)))
      throw Error(ErrorKind::usage, "output directory " + out_ + " exists and is not empty; pick a fresh --out");
    fs::create_directories(out_);
    config_text_ = config_text(cfg);
    seed_ = cfg.seed;
  }

  std::string path(const std::string& name) const { return out_ + "/" + name; }

  void input(const std::string& role, const std::string& file) {
    if (!fs::exists(file)) throw Error(ErrorKind::missing_input, role + " not found: " + file);
    inputs_[role] = {{"path", file}, {"digest", digest(read_file(file))}};
  }

  void note(const std::string& key, json value) { extra_[key] = std::move(value); }

  void write(const std::string& name, const std::string& contents) const { write_file(path(name), contents); }

  void finish() const {
    json outputs = json::object();
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(out_))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      auto rel = fs::relative(f, out_).generic_string();
      if (rel != "manifest.json") outputs[rel] = digest(read_file(f.string()));
    }
    json m{{"format", "cropdnn.run"},
           {"version", 1},
           {"command", command_},
           {"seed", seed_},
           {"config", config_text_},
           {"config_digest", digest(config_text_)},
           {"inputs", inputs_},
           {"outputs", outputs},
           {"details", extra_}};
    write_file(path("manifest.json"), m.dump(1) + "\n");
    log(command_ + ": wrote " + std::to_string(outputs.size()) + " files to " + out_);
  }

 private:
  std::string command_;
  std::string out_;
  std::string config_text_;
  std::uint64_t seed_ = 0;
  json inputs_ = json::object();
  json extra_ = json::object();
};

FieldTrialDataset load_trials(Run& run, const std::string& dir) {
  for (const char* f : {"genotype.csv", "weather.csv", "soil.csv", "performance.csv"}) run.input(f, dir + "/" + f);
  auto t = ingest_tables(dir + "/genotype.csv", dir + "/weather.csv", dir + "/soil.csv", dir + "/performance.csv");
  auto joined = join_trials(std::make_shared<const MarkerMatrix>(std::move(t.markers)),
                            std::make_shared<const EnvironmentTable>(std::move(t.environment)), t.performance);
  if (!joined.rejections.empty())
    log(std::to_string(joined.rejections.size()) + " performance records rejected (first: " +
        joined.rejections.front().reason + ")");
  if (joined.dataset.empty()) throw data_error("no usable performance records in " + dir);
  run.note("trials", joined.dataset.size());
  run.note("rejected_records", joined.rejections.size());
  return std::move(joined.dataset);
}

EnvironmentTable load_weather(Run& run, const std::string& dir) {
  run.input("weather.csv", dir + "/weather.csv");
  EnvironmentTable env;
  parse_weather_into(csv::read(dir + "/weather.csv"), env);
  return env;
}

EnvironmentTable read_forecast_rows(Run& run, const std::string& file) {
  run.input("forecast", file);
  EnvironmentTable rows;
  parse_weather_into(csv::read(file), rows);
  return rows;
}

/// A run directory holding model/ or the model directory itself.
std::string model_dir(const std::string& p) { return fs::exists(p + "/model/manifest.json") ? p + "/model" : p; }

PipelineArtifacts load_model(Run& run, const std::string& where, const std::string& role = "model") {
  const auto dir = model_dir(where);
  auto a = PipelineArtifacts::load(dir);
  run.input(role, dir + "/manifest.json");
  return a;
}

std::string predictions_csv(const FieldTrialDataset& d, const PredictionTriplet& p) {
  std::string out = "hybrid_id,location_id,year,yield,check_yield,predicted_yield,predicted_check_yield,predicted_difference\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto k = static_cast<Index>(i);
    const auto& r = d.row(i);
    out += d.hybrid_id(i) + "," + r.location_id + "," + std::to_string(r.year) + "," + format_double(r.yield) + "," +
           format_double(r.check_yield) + "," + format_double(p.yield[k]) + "," + format_double(p.check[k]) + "," +
           format_double(p.difference[k]) + "\n";
  }
  return out;
}

std::string training_log_csv(const TrainedNetwork& yield, const TrainedNetwork& check) {
  std::string out = "network,iteration,lr,batch_loss\n";
  for (const auto* n : {&yield, &check})
    for (const auto& e : n->log.entries)
      out += std::string(n == &yield ? "yield" : "check") + "," + std::to_string(e.iteration) + "," + format_double(e.lr) +
             "," + format_double(e.batch_loss) + "\n";
  return out;
}

PredictionTriplet baseline_triplet(const BaselinePair& p, const Matrix& x) {
  PredictionTriplet t;
  t.yield = predict_model(p.yield, x);
  t.check = predict_model(p.check, x);
  t.difference = t.yield - t.check;
  return t;
}

const char* slug(BaselineKind k) {
  switch (k) {
    case BaselineKind::lasso: return "lasso";
    case BaselineKind::snn: return "snn";
    case BaselineKind::tree: return "tree";
    case BaselineKind::average: return "average";
  }
  return "?";
}

constexpr BaselineKind kAllBaselines[] = {BaselineKind::lasso, BaselineKind::snn, BaselineKind::tree, BaselineKind::average};

double parse_metric(const std::string& s) { return s == "NA" ? std::numeric_limits<double>::quiet_NaN() : std::stod(s); }

std::vector<AblationRow> read_ablation(const std::string& file) {
  auto t = csv::read(file);
  const auto cm = t.column("model"), a = t.column("train_rmse"), b = t.column("train_corr_pct"),
             c = t.column("validation_rmse"), d = t.column("validation_corr_pct");
  std::vector<AblationRow> rows;
  for (const auto& r : t.rows) {
    try {
      rows.push_back({r[cm], {parse_metric(r[a]), parse_metric(r[b]), false}, {parse_metric(r[c]), parse_metric(r[d]), false}});
    } catch (const std::exception&) {
      throw data_error(file + ": malformed metric in row for " + r[cm]);
    }
  }
  return rows;
}

std::vector<std::size_t> read_selection(const std::string& file) {
  auto t = csv::read(file);
  const auto c = t.column("column");
  std::vector<std::size_t> cols;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto v = csv::to_int(t.rows[r][c], t, r);
    if (v < 0) throw data_error(file + ": negative column index");
    cols.push_back(static_cast<std::size_t>(v));
  }
  if (cols.empty()) throw data_error(file + ": no columns selected");
  return cols;
}

// ---------------------------------------------------------------------------
// Subcommands.

void cmd_synth(const Common& c) {
  auto cfg = resolve(c);
  Run run("synth", c, cfg);
  auto d = generate_synthetic(cfg.synth);
  write_synthetic(c.out, d);
  run.note("trials", d.performance.records().size());
  run.finish();
}

void cmd_preprocess(const Common& c, const std::string& data_dir) {
  auto cfg = resolve(c);
  Run run("preprocess", c, cfg);
  auto data = load_trials(run, data_dir);
  auto split = split_by_year(data, cfg.split);
  run.note("split", split_json(cfg.split));
  auto d = assemble_design(split.train, std::nullopt, cfg.preprocess);
  run.write("preprocess_fit.json", to_json(d.fit).dump(1) + "\n");
  std::string cols = "column,feature,group\n";
  const auto names = d.fit.feature_names();
  const auto groups = d.fit.feature_groups();
  for (std::size_t k = 0; k < names.size(); ++k) cols += std::to_string(k) + "," + names[k] + "," + to_string(groups[k]) + "\n";
  run.write("design_columns.csv", cols);
  std::string rows = "hybrid_id,location_id,year,partition\n";
  for (const auto* part : {&split.train, &split.validation})
    for (std::size_t i = 0; i < part->size(); ++i)
      rows += part->hybrid_id(i) + "," + part->row(i).location_id + "," + std::to_string(part->row(i).year) + "," +
              (part == &split.train ? "train" : "validation") + "\n";
  run.write("split.csv", rows);
  for (const auto& w : d.fit.warnings) log("warning: " + w);
  log("design width " + std::to_string(d.fit.width()) + " (" + std::to_string(d.fit.kept_markers.size()) +
      " markers kept); " + std::to_string(split.train.size()) + " train rows, " + std::to_string(split.validation.size()) +
      " validation rows");
  run.finish();
}

void cmd_train_weather(const Common& c, const std::string& data_dir, std::optional<int> max_year) {
  auto cfg = resolve(c);
  Run run("train-weather", c, cfg);
  auto env = load_weather(run, data_dir);
  const int last = max_year.value_or(cfg.split.holdout_year - 1);
  auto samples = build_lag_samples(env, cfg.weather.lag, last);
  auto f = train_forecasters(samples, cfg.weather);
  for (const auto& w : f.warnings) log("warning: " + w);
  run.note("max_target_year", last);
  run.note("samples", samples.size());
  run.write("forecaster.json", to_json(f).dump() + "\n");

  // Backtest on the first unseen year where truth exists.
  const int target = last + 1;
  auto naive = repeat_last_year(env, target);
  EnvironmentTable truth_rows;
  for (const auto& loc : env.location_ids())
    if (env.weather(loc, target) && naive.weather(loc, target)) truth_rows.set_weather(loc, target, *env.weather(loc, target));
  if (!truth_rows.weather_entries().empty()) {
    auto fc = forecast_year(f, env, target);
    EnvironmentTable scored, naive_scored;
    for (const auto& [loc, w] : fc.values)
      if (truth_rows.weather(loc, target)) {
        scored.set_weather(loc, target, w);
        naive_scored.set_weather(loc, target, *naive.weather(loc, target));
      }
    const double a = weather_rmse(scored, env), b = weather_rmse(naive_scored, env);
    run.write("backtest.csv", "year,locations,forecast_rmse,repeat_last_year_rmse\n" + std::to_string(target) + "," +
                                  std::to_string(scored.weather_entries().size()) + "," + format_double(a) + "," +
                                  format_double(b) + "\n");
    log("backtest " + std::to_string(target) + ": forecast RMSE " + format_double(a) + ", repeat-last-year " + format_double(b));
  }
  run.finish();
}

void cmd_forecast_weather(const Common& c, const std::string& data_dir, const std::string& model, std::optional<int> year) {
  auto cfg = resolve(c);
  Run run("forecast-weather", c, cfg);
  const auto file = fs::is_directory(model) ? model + "/forecaster.json" : model;
  if (!fs::exists(file)) throw Error(ErrorKind::missing_artifacts, "no weather forecaster at " + file);
  run.input("forecaster", file);
  WeatherForecaster f;
  try {
    f = weather_forecaster_from_json(json::parse(read_file(file)));
  } catch (const json::exception& e) {
    throw data_error(file + ": " + e.what());
  }
  auto env = load_weather(run, data_dir);
  const int target = year.value_or(cfg.split.holdout_year);
  auto fc = forecast_year(f, env, target);
  for (const auto& loc : fc.missing_window) log("no lag window at " + loc + "; not forecast");
  run.note("year", target);
  run.write("weather_forecast.csv", weather_csv(forecast_table(fc), true));
  run.finish();
}

void cmd_train(const Common& c, const std::string& data_dir, const std::string& weather, const std::string& forecast) {
  auto cfg = resolve(c);
  Run run("train", c, cfg);
  auto data = load_trials(run, data_dir);
  auto split = split_by_year(data, cfg.split);
  FieldTrialDataset valid = split.validation;
  std::string label = "true weather";
  if (weather == "forecast") {
    if (forecast.empty()) throw Error(ErrorKind::usage, "--weather=forecast needs --forecast FILE (from forecast-weather)");
    auto rows = read_forecast_rows(run, forecast);
    valid = split.validation.with_environment(
        std::make_shared<const EnvironmentTable>(substitute_weather(data.environment(), rows)));
    run.write("validation_weather.csv", read_file(forecast));
    label = "predicted weather";
  }
  log("training yield and check networks on " + std::to_string(split.train.size()) + " rows");
  auto pair = train_pair(split.train, cfg.network, cfg.train, std::nullopt, cfg.preprocess);
  PipelineArtifacts a{pair, {{"weather", weather}, {"split", split_json(cfg.split)}}};
  a.save(run.path("model"));
  auto tp = predict_triplet(pair, split.train);
  auto vp = predict_triplet(pair, valid);
  auto rows = triplet_metrics("DNN", tp, split.train, vp, valid, label);
  run.write("metrics.csv", metrics_csv(rows));
  run.write("predictions.csv", predictions_csv(valid, vp));
  run.write("training_log.csv", training_log_csv(pair.yield, pair.check));
  run.note("weather", label);
  run.note("split", split_json(cfg.split));
  log("validation yield RMSE " + format_double(rows[0].validation.rmse) + " (" + label + ")");
  run.finish();
}

void cmd_baselines(const Common& c, const std::string& data_dir, const std::string& which) {
  auto cfg = resolve(c);
  std::vector<BaselineKind> kinds;
  if (which == "all")
    kinds.assign(std::begin(kAllBaselines), std::end(kAllBaselines));
  else
    kinds.push_back(baseline_from_string(which));
  Run run("baselines", c, cfg);
  auto data = load_trials(run, data_dir);
  auto split = split_by_year(data, cfg.split);
  auto d = assemble_design(split.train, std::nullopt, cfg.preprocess);
  Matrix xv = assemble_design(split.validation, d.fit).design;
  run.write("preprocess_fit.json", to_json(d.fit).dump(1) + "\n");
  std::vector<MetricsRow> rows;
  for (auto k : kinds) {
    log("fitting " + std::string(to_string(k)));
    auto p = fit_baseline_pair(k, d.design, split.train.yields(), split.train.check_yields(), cfg.baselines);
    run.write(std::string(slug(k)) + "_yield.json", to_json(p.yield).dump() + "\n");
    run.write(std::string(slug(k)) + "_check.json", to_json(p.check).dump() + "\n");
    auto r = triplet_metrics(to_string(k), baseline_triplet(p, d.design), split.train, baseline_triplet(p, xv),
                             split.validation);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  run.write("metrics.csv", metrics_csv(rows));
  run.note("split", split_json(cfg.split));
  run.finish();
}

void cmd_ablate(const Common& c, const std::string& data_dir, const std::string& which) {
  auto cfg = resolve(c);
  std::vector<Source> sources;
  if (which == "all")
    sources = {Source::genotype, Source::soil, Source::weather, Source::average};
  else
    sources.push_back(source_from_string(which));
  Run run("ablate", c, cfg);
  auto data = load_trials(run, data_dir);
  auto split = split_by_year(data, cfg.split);
  auto fit = assemble_design(split.train, std::nullopt, cfg.preprocess).fit;
  std::vector<AblationRow> rows;
  for (auto s : sources) {
    log("single-source model " + std::string(to_string(s)));
    auto r = ablation_single_source(split.train, split.validation, s, cfg.network, cfg.train, fit);
    rows.push_back({to_string(s), r.train, r.validation});
  }
  run.write("ablation.csv", ablation_csv(rows));
  run.note("split", split_json(cfg.split));
  run.finish();
}

struct ModelSplit {
  PipelineArtifacts model;
  FieldTrialDataset data;
  Split split;
};

ModelSplit model_and_split(Run& run, const RunConfig& cfg, const std::string& data_dir, const std::string& model) {
  auto a = load_model(run, model);
  auto data = load_trials(run, data_dir);
  SplitRule rule = a.extra.contains("split") ? split_from_json(a.extra.at("split")) : cfg.split;
  run.note("split", split_json(rule));
  auto split = split_by_year(data, rule);
  return {std::move(a), std::move(data), std::move(split)};
}

void cmd_select(const Common& c, const std::string& data_dir, const std::string& model) {
  auto cfg = resolve(c);
  Run run("select-features", c, cfg);
  auto m = model_and_split(run, cfg, data_dir, model);
  Matrix xv = assemble_design(m.split.validation, m.model.pair.fit).design;
  auto report = yield_effects(m.model.pair, xv, cfg.select.activation_threshold);
  auto cols = select_top_features(report, cfg.select.n_markers, cfg.select.n_environment);
  run.write("effects.csv", effects_csv(report));
  run.write("selection.csv", selection_csv(m.model.pair.fit, cols));
  log(std::to_string(report.mask.count()) + " of " + std::to_string(report.mask.active.size()) +
      " last-layer neurons active; selected " + std::to_string(cols.size()) + " features");
  run.finish();
}

void cmd_retrain(const Common& c, const std::string& data_dir, const std::string& model, const std::string& selection) {
  auto cfg = resolve(c);
  Run run("retrain-subset", c, cfg);
  auto m = model_and_split(run, cfg, data_dir, model);
  run.input("selection", selection);
  auto cols = read_selection(selection);
  log("retraining on " + std::to_string(cols.size()) + " selected features");
  auto pair = retrain_subset(m.split.train, m.model.pair.fit, cols, cfg.network, cfg.train);
  PipelineArtifacts a{pair, {{"weather", "true"}, {"split", m.model.extra.at("split")}, {"subset", cols.size()}}};
  a.save(run.path("model"));
  auto rows = triplet_metrics("DNN subset", predict_triplet(pair, m.split.train), m.split.train,
                              predict_triplet(pair, m.split.validation), m.split.validation);
  run.write("metrics.csv", metrics_csv(rows));
  run.finish();
}

struct EvaluateInputs {
  std::string data, model, forecast, baselines, ablation, subset;
};

void cmd_evaluate(const Common& c, const EvaluateInputs& in) {
  auto cfg = resolve(c);
  Run run("evaluate", c, cfg);
  auto m = model_and_split(run, cfg, in.data, in.model);
  const auto& pair = m.model.pair;
  auto& split = m.split;

  std::string forecast = in.forecast;
  if (forecast.empty() && m.model.extra.value("weather", "true") == "forecast") {
    auto stored = fs::path(model_dir(in.model)).parent_path() / "validation_weather.csv";
    if (!fs::exists(stored)) throw Error(ErrorKind::missing_input, "model was trained with forecast weather; pass --forecast");
    forecast = stored.string();
  }
  FieldTrialDataset valid = split.validation;
  std::string label = "true weather";
  if (!forecast.empty()) {
    auto rows = read_forecast_rows(run, forecast);
    valid = split.validation.with_environment(
        std::make_shared<const EnvironmentTable>(substitute_weather(m.data.environment(), rows)));
    label = "predicted weather";
  }

  Report r;
  r.title = "Evaluation report (" + label + ")";
  Matrix xv = assemble_design(valid, pair.fit).design;
  auto tp = predict_triplet(pair, split.train);
  auto vp = predict_triplet(pair, xv);
  r.metrics = triplet_metrics("DNN", tp, split.train, vp, valid, label);

  if (!in.subset.empty()) {
    auto s = load_model(run, in.subset, "subset");
    auto rows = triplet_metrics("DNN subset", predict_triplet(s.pair, split.train), split.train,
                                predict_triplet(s.pair, valid), valid, label);
    r.metrics.insert(r.metrics.end(), rows.begin(), rows.end());
  }
  if (!in.baselines.empty()) {
    const auto dir = in.baselines;
    const auto fit_file = dir + "/preprocess_fit.json";
    if (!fs::exists(fit_file)) throw Error(ErrorKind::missing_artifacts, "no baseline models in " + dir);
    run.input("baselines", dir + "/manifest.json");
    auto bm = json::parse(read_file(dir + "/manifest.json"));
    if (bm.at("details").value("split", json()) != split_json(split_from_json(m.model.extra.at("split"))))
      throw data_error(dir + ": baselines were fit on a different split than the model");
    auto fit = preprocess_fit_from_json(json::parse(read_file(fit_file)));
    Matrix bt = assemble_design(split.train, fit).design, bv = assemble_design(valid, fit).design;
    for (auto k : kAllBaselines) {
      const auto y = dir + "/" + slug(k) + "_yield.json", ch = dir + "/" + slug(k) + "_check.json";
      if (!fs::exists(y)) continue;
      BaselinePair p{k, baseline_from_json(json::parse(read_file(y))), baseline_from_json(json::parse(read_file(ch)))};
      auto rows = triplet_metrics(to_string(k), baseline_triplet(p, bt), split.train, baseline_triplet(p, bv), valid, label);
      r.metrics.insert(r.metrics.end(), rows.begin(), rows.end());
    }
  }
  if (!in.ablation.empty()) {
    run.input("ablation", in.ablation);
    r.ablation = read_ablation(in.ablation);
  }
  r.identities.push_back({"observed validation", variance_identity_check(valid.yields(), valid.check_yields())});
  r.identities.push_back({"predicted validation", variance_identity_check(vp.yield, vp.check)});
  r.per_location = per_location_errors(vp.yield, valid.yields(),
                                       [&] {
                                         std::vector<std::string> locs;
                                         for (const auto& row : valid.rows()) locs.push_back(row.location_id);
                                         return locs;
                                       }(),
                                       cfg.report.location_threshold);
  r.distribution = distribution_summary(vp.yield, valid.yields(), cfg.report.bins);

  auto effects = yield_effects(pair, xv, cfg.select.activation_threshold);
  run.write("metrics.csv", metrics_csv(r.metrics));
  run.write("per_location.csv", per_location_csv(*r.per_location));
  run.write("distribution.csv", distribution_csv(*r.distribution));
  run.write("ablation.csv", ablation_csv(r.ablation));
  run.write("effects.csv", effects_csv(effects));
  run.write("references.csv", references_csv());
  run.write("summary.txt", report_summary(r));
  run.note("weather", label);
  std::cout << report_summary(r);
  run.finish();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crop-yield prediction pipeline: synthetic data, preprocessing, weather forecasting, "
               "residual maxout networks, baselines and feature selection."};
  app.footer(kExitCodes);
  app.require_subcommand(1);

  Common common;
  std::string data_dir, model, forecast, selection, weather = "true", which = "all";
  std::optional<int> year;
  EvaluateInputs ev;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic trial dataset with planted effects");
  add_common(synth, common);

  auto* preprocess = app.add_subcommand("preprocess", "Fit marker filtering, imputation and scaling; emit design metadata");
  add_common(preprocess, common);
  preprocess->add_option("--data", data_dir, "Dataset directory")->required();

  auto* train_weather = app.add_subcommand("train-weather", "Train per-variable lagged weather forecasters");
  add_common(train_weather, common);
  train_weather->add_option("--data", data_dir, "Dataset directory (weather.csv)")->required();
  train_weather->add_option("--max-year", year, "Last target year used for training (default: holdout year - 1)");

  auto* forecast_weather = app.add_subcommand("forecast-weather", "Forecast one year of weather at every location");
  add_common(forecast_weather, common);
  forecast_weather->add_option("--data", data_dir, "Dataset directory (weather.csv)")->required();
  forecast_weather->add_option("--forecaster", model, "forecaster.json or a train-weather run directory")->required();
  forecast_weather->add_option("--year", year, "Target year (default: holdout year)");

  auto* train = app.add_subcommand("train", "Train the yield and check-yield networks");
  add_common(train, common);
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--weather", weather, "Validation weather: true or forecast")->check(CLI::IsMember({"true", "forecast"}));
  train->add_option("--forecast", forecast, "weather_forecast.csv from forecast-weather");

  auto* baselines = app.add_subcommand("baselines", "Fit baseline models");
  add_common(baselines, common);
  baselines->add_option("--data", data_dir, "Dataset directory")->required();
  baselines->add_option("model", which, "lasso, snn, tree, average or all")
      ->check(CLI::IsMember({"lasso", "snn", "tree", "rt", "average", "all"}));

  auto* ablate = app.add_subcommand("ablate", "Single-source yield models");
  add_common(ablate, common);
  ablate->add_option("--data", data_dir, "Dataset directory")->required();
  ablate->add_option("source", which, "G, S, W, average or all")->check(CLI::IsMember({"G", "S", "W", "average", "all"}));

  auto* select = app.add_subcommand("select-features", "Rank features by guided backpropagation and pick a subset");
  add_common(select, common);
  select->add_option("--data", data_dir, "Dataset directory")->required();
  select->add_option("--model", model, "train run directory")->required();

  auto* retrain = app.add_subcommand("retrain-subset", "Retrain the networks on selected features");
  add_common(retrain, common);
  retrain->add_option("--data", data_dir, "Dataset directory")->required();
  retrain->add_option("--model", model, "train run directory (supplies the preprocessing fit)")->required();
  retrain->add_option("--selection", selection, "selection.csv from select-features")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Assemble the evaluation report");
  add_common(evaluate, common);
  evaluate->add_option("--data", ev.data, "Dataset directory")->required();
  evaluate->add_option("--model", ev.model, "train run directory")->required();
  evaluate->add_option("--forecast", ev.forecast, "Evaluate on forecast weather from this file");
  evaluate->add_option("--baselines", ev.baselines, "baselines run directory");
  evaluate->add_option("--ablation", ev.ablation, "ablation.csv from ablate");
  evaluate->add_option("--subset", ev.subset, "retrain-subset run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::usage);
  }

  try {
    if (synth->parsed()) cmd_synth(common);
    if (preprocess->parsed()) cmd_preprocess(common, data_dir);
    if (train_weather->parsed()) cmd_train_weather(common, data_dir, year);
    if (forecast_weather->parsed()) cmd_forecast_weather(common, data_dir, model, year);
    if (train->parsed()) cmd_train(common, data_dir, weather, forecast);
    if (baselines->parsed()) cmd_baselines(common, data_dir, which);
    if (ablate->parsed()) cmd_ablate(common, data_dir, which);
    if (select->parsed()) cmd_select(common, data_dir, model);
    if (retrain->parsed()) cmd_retrain(common, data_dir, model, selection);
    if (evaluate->parsed()) cmd_evaluate(common, ev);
  } catch (const Error& e) {
    std::cerr << "cropdnn: " << to_string(e.kind()) << " error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "cropdnn: data error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::data);
  } catch (const std::exception& e) {
    std::cerr << "cropdnn: internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
