#pragma once

// Batch stages over files, shared by the command-line tool and the
// integration tests. Each stage validates the whole configuration first,
// writes its outputs under an output directory, and records a manifest with
// the configuration, input fingerprints and tool version.

#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eetrack/classifier.hpp"
#include "eetrack/dailypomdp.hpp"
#include "eetrack/detail/csv.hpp"
#include "eetrack/detail/hash.hpp"
#include "eetrack/energy.hpp"
#include "eetrack/error.hpp"
#include "eetrack/signal.hpp"
#include "eetrack/simgen.hpp"
#include "eetrack/version.hpp"

namespace eetrack::pipeline {

namespace fs = std::filesystem;

struct PomdpConfig {
  pomdp::SpeedBins bins;
  pomdp::SmoothingParams smoothing;
  pomdp::RewardTweaks reward_tweaks;
};

struct SimulateConfig {
  std::size_t days = 10;
  double session_minutes = 2.5;
  std::size_t sessions_per_activity = 1;
};

struct PipelineConfig {
  signal::FeatureConfig features;
  classifier::TreeParams tree;
  std::size_t cv_folds = 10;
  PomdpConfig pomdp;
  double weight_kg = 70.0;
  bool met_from_speed = false;
  std::uint64_t seed = 42;
  SimulateConfig simulate;

  void validate() const {
    features.validate();
    tree.validate();
    if (cv_folds < 2) throw InvalidParameter("cv_folds must be >= 2");
    pomdp.bins.validate();
    pomdp.smoothing.validate();
    for (const auto& [name, f] : pomdp.reward_tweaks) {
      if (!(f > 0.0)) throw InvalidParameter("reward tweak for '" + name + "' must be > 0");
    }
    if (!(weight_kg > 0.0)) throw InvalidParameter("weight_kg must be > 0");
    if (simulate.days < 1) throw InvalidParameter("simulate.days must be >= 1");
    if (!(simulate.session_minutes > 0.0)) throw InvalidParameter("simulate.session_minutes must be > 0");
    if (simulate.sessions_per_activity < 1) throw InvalidParameter("simulate.sessions_per_activity must be >= 1");
  }
};

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  return {{"features", c.features},
          {"tree", c.tree},
          {"cv_folds", c.cv_folds},
          {"pomdp",
           {{"speed_bin_edges", c.pomdp.bins.upper_edges},
            {"smoothing", c.pomdp.smoothing},
            {"reward_tweaks", c.pomdp.reward_tweaks}}},
          {"weight_kg", c.weight_kg},
          {"met_from_speed", c.met_from_speed},
          {"seed", c.seed},
          {"simulate",
           {{"days", c.simulate.days},
            {"session_minutes", c.simulate.session_minutes},
            {"sessions_per_activity", c.simulate.sessions_per_activity}}}};
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {"features", "tree",   "cv_folds", "pomdp",
                                                 "weight_kg", "met_from_speed", "seed", "simulate"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw InvalidParameter("unknown config key '" + key + "'");
  }
  PipelineConfig c;
  if (j.contains("features")) c.features = j["features"].get<signal::FeatureConfig>();
  if (j.contains("tree")) c.tree = j["tree"].get<classifier::TreeParams>();
  c.cv_folds = j.value("cv_folds", c.cv_folds);
  if (j.contains("pomdp")) {
    const auto& p = j["pomdp"];
    c.pomdp.bins.upper_edges = p.value("speed_bin_edges", c.pomdp.bins.upper_edges);
    if (p.contains("smoothing")) c.pomdp.smoothing = p["smoothing"].get<pomdp::SmoothingParams>();
    c.pomdp.reward_tweaks = p.value("reward_tweaks", c.pomdp.reward_tweaks);
  }
  c.weight_kg = j.value("weight_kg", c.weight_kg);
  c.met_from_speed = j.value("met_from_speed", c.met_from_speed);
  c.seed = j.value("seed", c.seed);
  if (j.contains("simulate")) {
    const auto& s = j["simulate"];
    c.simulate.days = s.value("days", c.simulate.days);
    c.simulate.session_minutes = s.value("session_minutes", c.simulate.session_minutes);
    c.simulate.sessions_per_activity = s.value("sessions_per_activity", c.simulate.sessions_per_activity);
  }
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  try {
    return config_from_json(nlohmann::json::parse(detail::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 0, e.what());
  }
}

inline nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, 0, e.what());
  }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { detail::write_file(path.string(), j.dump(2) + "\n"); }

/// What a stage produced: files written (relative to the output directory)
/// and the human-readable report printed by the CLI.
struct StageResult {
  std::vector<std::string> outputs;
  std::string report;
};

/// Records config, input fingerprints (file name + FNV-1a of contents) and
/// the tool version. Paths are reduced to file names so manifests of
/// identical runs in different directories compare equal.
class Manifest {
 public:
  Manifest(std::string command, const PipelineConfig& cfg) : command_(std::move(command)), config_(config_to_json(cfg)) {}

  void input(const std::string& path) {
    inputs_.push_back({{"file", fs::path(path).filename().string()},
                       {"fnv1a64", detail::hex64(detail::fnv1a64(detail::read_file(path)))}});
  }

  void write(const fs::path& out_dir, StageResult& result) const {
    nlohmann::json outputs = nlohmann::json::array();
    for (const auto& o : result.outputs) {
      outputs.push_back({{"file", o}, {"fnv1a64", detail::hex64(detail::fnv1a64(detail::read_file((out_dir / o).string())))}});
    }
    const nlohmann::json j = {{"tool", kToolName},   {"version", kVersion}, {"command", command_},
                              {"config", config_},   {"inputs", inputs_},   {"outputs", outputs}};
    const std::string name = "manifest." + command_ + ".json";
    write_json(out_dir / name, j);
    result.outputs.push_back(name);
  }

 private:
  std::string command_;
  nlohmann::json config_;
  nlohmann::json inputs_ = nlohmann::json::array();
};

inline fs::path prepare_out(const std::string& out_dir) {
  fs::path p(out_dir);
  fs::create_directories(p);
  return p;
}

inline std::string day_file(std::size_t d) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "day%02zu.csv", d);
  return buf;
}

inline nlohmann::json states_to_json(const std::vector<pomdp::DailyActivity>& states) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : states) j.push_back({{"name", s.name}, {"code", s.compendium_code}});
  return j;
}

inline std::vector<pomdp::DailyActivity> states_from_json(const nlohmann::json& j) {
  std::vector<pomdp::DailyActivity> out;
  for (const auto& s : j) out.push_back({s.at("name").get<std::string>(), s.at("code").get<int>()});
  return out;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Synthetic corpus: labeled sensor sessions plus manifest, observed day
/// traces (corrupted by the reference channel), true traces, the template
/// and the state catalogue.
inline StageResult simulate(const PipelineConfig& cfg, const std::optional<std::string>& template_path,
                            const std::string& out_dir) {
  cfg.validate();
  const auto out = prepare_out(out_dir);
  Manifest manifest("simulate", cfg);
  simgen::ScheduleTemplate tmpl = simgen::default_day_template();
  if (template_path) {
    manifest.input(*template_path);
    tmpl = simgen::template_from_json(read_json(*template_path));
  }
  StageResult res;
  fs::create_directories(out / "sensors");
  fs::create_directories(out / "traces");
  fs::create_directories(out / "truth");

  const auto recipe = simgen::default_signal_recipe();
  const auto sessions = simgen::generate_sessions(recipe, cfg.simulate.session_minutes, cfg.simulate.sessions_per_activity,
                                                  detail::derive_seed(cfg.seed, 1));
  nlohmann::json sensor_manifest = nlohmann::json::array();
  std::map<std::string, int> seen;
  for (const auto& s : sessions) {
    const std::string label(to_string(*s.label));
    const std::string name = label + "_" + std::to_string(seen[label]++) + ".csv";
    signal::write_sensor_csv((out / "sensors" / name).string(), s);
    sensor_manifest.push_back({{"file", name}, {"label", label}, {"sample_rate", s.sample_rate}});
    res.outputs.push_back("sensors/" + name);
  }
  write_json(out / "sensors" / "manifest.json", sensor_manifest);
  res.outputs.push_back("sensors/manifest.json");

  simgen::DayOptions day_opts;
  day_opts.weight_kg = cfg.weight_kg;
  const auto corpus = simgen::generate_corpus(tmpl, cfg.simulate.days, detail::derive_seed(cfg.seed, 2),
                                              simgen::reference_noise_channel(), day_opts);
  for (std::size_t d = 0; d < corpus.days.size(); ++d) {
    pomdp::write_trace_csv((out / "traces" / day_file(d)).string(), corpus.observed[d]);
    pomdp::write_trace_csv((out / "truth" / day_file(d)).string(), corpus.days[d].trace);
    res.outputs.push_back("traces/" + day_file(d));
    res.outputs.push_back("truth/" + day_file(d));
  }
  write_json(out / "template.json", simgen::template_to_json(tmpl));
  write_json(out / "states.json", states_to_json(simgen::states_of(tmpl)));
  res.outputs.push_back("template.json");
  res.outputs.push_back("states.json");
  manifest.write(out, res);
  res.report = "simulated " + std::to_string(sessions.size()) + " sensor sessions and " + std::to_string(corpus.days.size()) +
               " days\n";
  return res;
}

/// Inputs are sensor CSVs or manifest JSONs (by extension).
inline StageResult features(const PipelineConfig& cfg, const std::vector<std::string>& inputs, const std::string& out_dir,
                            bool binary_cache = false) {
  cfg.validate();
  if (inputs.empty()) throw InvalidParameter("features: no input files");
  const auto out = prepare_out(out_dir);
  Manifest manifest("features", cfg);
  std::vector<signal::SensorStream> sessions;
  for (const auto& in : inputs) {
    manifest.input(in);
    if (fs::path(in).extension() == ".json") {
      for (const auto& e : signal::read_sensor_manifest(in)) {
        manifest.input(e.file);
        sessions.push_back(signal::read_sensor_csv(e.file, e.sample_rate, e.label));
      }
    } else {
      sessions.push_back(signal::read_sensor_csv(in, cfg.features.sample_rate));
    }
  }
  const auto m = signal::build_feature_matrix(sessions, cfg.features);
  StageResult res;
  signal::write_feature_matrix_csv((out / "features.csv").string(), m);
  res.outputs.push_back("features.csv");
  if (binary_cache) {
    signal::write_feature_cache((out / "features.bin").string(), m);
    res.outputs.push_back("features.bin");
  }
  manifest.write(out, res);
  res.report = "extracted " + std::to_string(m.num_rows()) + " windows x " + std::to_string(m.num_features()) +
               " features from " + std::to_string(sessions.size()) + " sessions\n";
  return res;
}

inline StageResult train_pa(const PipelineConfig& cfg, const std::string& features_path, const std::string& out_dir) {
  cfg.validate();
  const auto out = prepare_out(out_dir);
  Manifest manifest("train-pa", cfg);
  manifest.input(features_path);
  const auto data = signal::read_feature_matrix(features_path);
  const auto model = classifier::train_tree(data, cfg.tree);
  StageResult res;
  write_json(out / "tree.json", classifier::tree_to_json(model));
  res.outputs.push_back("tree.json");
  manifest.write(out, res);
  res.report = "trained tree: " + std::to_string(model.nodes.size()) + " nodes, depth " + std::to_string(model.depth()) +
               ", training accuracy " + detail::format_fixed(classifier::training_accuracy(model, data), 4) + "\n";
  return res;
}

inline StageResult eval_pa(const PipelineConfig& cfg, const std::string& features_path, const std::string& out_dir) {
  cfg.validate();
  const auto out = prepare_out(out_dir);
  Manifest manifest("eval-pa", cfg);
  manifest.input(features_path);
  const auto data = signal::read_feature_matrix(features_path);
  const auto cv = classifier::cross_validate(data, cfg.cv_folds, cfg.tree, detail::derive_seed(cfg.seed, 3));
  StageResult res;
  detail::write_file((out / "confusion.csv").string(), classifier::confusion_csv_string(cv.confusion));
  res.outputs.push_back("confusion.csv");
  manifest.write(out, res);
  std::ostringstream os;
  os << "Physical Activity Recognition Probabilities (" << cfg.cv_folds << "-fold CV, rows expected, columns predicted)\n"
     << classifier::confusion_table(cv.confusion) << "overall accuracy " << detail::format_fixed(cv.accuracy, 4) << " over "
     << cv.confusion.total() << " windows\n";
  for (const auto& w : cv.warnings) os << "warning: " << w << "\n";
  res.report = os.str();
  return res;
}

inline StageResult train_pomdp(const PipelineConfig& cfg, const std::vector<std::string>& trace_paths,
                               const std::optional<std::string>& states_path, const std::string& out_dir) {
  cfg.validate();
  if (trace_paths.empty()) throw InvalidParameter("train-pomdp: no trace files");
  const auto out = prepare_out(out_dir);
  Manifest manifest("train-pomdp", cfg);
  std::vector<pomdp::DailyActivity> states = simgen::default_daily_activities();
  if (states_path) {
    manifest.input(*states_path);
    states = states_from_json(read_json(*states_path));
  }
  std::vector<pomdp::DayTrace> traces;
  for (const auto& p : trace_paths) {
    manifest.input(p);
    traces.push_back(pomdp::read_trace_csv(p));
  }
  pomdp::TrainOptions opts;
  opts.bins = cfg.pomdp.bins;
  opts.smoothing = cfg.pomdp.smoothing;
  opts.reward_tweaks = cfg.pomdp.reward_tweaks;
  const auto model = pomdp::train_pomdp(traces, states, opts);
  StageResult res;
  detail::write_file((out / "pomdp.json").string(), pomdp::model_to_json(model).dump() + "\n");
  res.outputs.push_back("pomdp.json");
  manifest.write(out, res);
  res.report = "trained POMDP: " + std::to_string(model.num_states()) + " states from " + std::to_string(traces.size()) +
               " traces\n";
  return res;
}

inline pomdp::PomdpModel load_pomdp(const std::string& path) { return pomdp::model_from_json(read_json(path)); }

inline StageResult infer_day(const PipelineConfig& cfg, const std::string& model_path, const std::string& trace_path,
                             const std::string& out_dir) {
  cfg.validate();
  const auto out = prepare_out(out_dir);
  Manifest manifest("infer-day", cfg);
  manifest.input(model_path);
  manifest.input(trace_path);
  const auto model = load_pomdp(model_path);
  const auto trace = pomdp::read_trace_csv(trace_path);
  for (const auto& s : trace.steps) {
    if (!model.state_index(s.activity)) throw InvalidParameter("trace activity '" + s.activity + "' is not a model state");
  }
  const auto obs = trace.observations(model.bins);
  const auto inf = pomdp::infer_day(obs, model);
  const auto metrics = pomdp::evaluate_day(pomdp::action_names(model, inf.actions), trace);
  StageResult res;
  detail::write_file((out / "predictions.csv").string(), pomdp::predictions_csv_string(model, obs, inf));
  detail::write_file((out / "daily_metrics.csv").string(), pomdp::daily_metrics_csv_string(metrics));
  res.outputs.push_back("predictions.csv");
  res.outputs.push_back("daily_metrics.csv");
  manifest.write(out, res);
  std::ostringstream os;
  os << "Daily Activity Recognition Results\n" << pomdp::daily_metrics_table(metrics, "POMDP");
  for (const auto& r : metrics.per_activity) {
    os << "  " << r.activity << ": " << detail::format_fixed(r.recall(), 3) << " (" << r.minutes << " min)\n";
  }
  if (inf.resets) os << "belief resets on impossible observations: " << inf.resets << "\n";
  res.report = os.str();
  return res;
}

struct EstimateEeInputs {
  std::optional<std::string> model;        // maps activity names to compendium codes
  std::optional<std::string> predictions;  // predictions CSV
  std::optional<std::string> trace;        // ground-truth trace CSV
  std::optional<std::string> segments;     // alternative: code,minutes[,speed_kmh,phys_activity]
  std::optional<std::string> compendium;   // default: bundled
};

inline StageResult estimate_ee(const PipelineConfig& cfg, const EstimateEeInputs& in, const std::string& out_dir) {
  cfg.validate();
  const auto out = prepare_out(out_dir);
  Manifest manifest("estimate-ee", cfg);
  energy::Compendium comp = energy::bundled_compendium();
  if (in.compendium) {
    manifest.input(*in.compendium);
    comp = energy::load_compendium(*in.compendium);
  }
  StageResult res;
  std::ostringstream os;
  energy::EeOptions opts;
  opts.met_from_speed = cfg.met_from_speed;

  if (in.segments) {
    manifest.input(*in.segments);
    const auto est = energy::estimate_ee(energy::read_segments_csv(*in.segments), cfg.weight_kg, comp, opts);
    detail::write_file((out / "ee.csv").string(), energy::timeline_csv_string(est.timeline));
    res.outputs.push_back("ee.csv");
    manifest.write(out, res);
    os << "total energy expenditure " << detail::format_fixed(est.total_kcal, 1) << " kcal ("
       << (cfg.met_from_speed ? "walking speed as MET multiplier" : "compendium MET values") << ", "
       << detail::format_double(cfg.weight_kg) << " kg)\n";
    res.report = os.str();
    return res;
  }

  if (!in.model || !in.predictions || !in.trace) {
    throw InvalidParameter("estimate-ee needs --segments, or --model with --predictions and --trace");
  }
  manifest.input(*in.model);
  manifest.input(*in.predictions);
  manifest.input(*in.trace);
  const auto model = load_pomdp(*in.model);
  const auto preds = pomdp::read_predictions_csv(*in.predictions);
  const auto trace = pomdp::read_trace_csv(*in.trace);
  if (preds.size() != trace.size()) throw InvalidParameter("predictions and trace differ in length");
  auto code_of = [&](const std::string& name) {
    const auto s = model.state_index(name);
    if (!s) throw InvalidParameter("activity '" + name + "' is not a model state");
    return model.states[*s].compendium_code;
  };
  std::vector<int> minutes, pred_codes, true_codes;
  std::vector<std::string> pred_names, true_names;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (preds[i].minute != trace.steps[i].minute) throw InvalidParameter("predictions and trace cover different minutes");
    minutes.push_back(trace.steps[i].minute);
    pred_codes.push_back(code_of(preds[i].activity));
    pred_names.push_back(preds[i].activity);
    true_codes.push_back(code_of(trace.steps[i].activity));
    true_names.push_back(trace.steps[i].activity);
  }
  const auto predicted = energy::timeline_from_codes(minutes, pred_codes, pred_names, cfg.weight_kg, comp);
  const auto expected = energy::timeline_from_codes(minutes, true_codes, true_names, cfg.weight_kg, comp);
  const auto metrics = energy::ee_error(predicted, expected);
  detail::write_file((out / "ee_predicted.csv").string(), energy::timeline_csv_string(predicted));
  detail::write_file((out / "ee_expected.csv").string(), energy::timeline_csv_string(expected));
  detail::write_file((out / "ee_plot.csv").string(), energy::plot_data_csv_string(expected, predicted));
  detail::write_file((out / "ee_plot.svg").string(), energy::plot_svg_string(expected, predicted));
  write_json(out / "ee_metrics.json", {{"mean_absolute_pct", metrics.mean_absolute_pct},
                                       {"end_of_day_pct", metrics.end_of_day_pct},
                                       {"min_pct", metrics.min_pct},
                                       {"max_pct", metrics.max_pct},
                                       {"segments_compared", metrics.segments_compared},
                                       {"segments_excluded", metrics.segments_excluded},
                                       {"expected_kcal", expected.total_kcal()},
                                       {"predicted_kcal", predicted.total_kcal()}});
  for (const char* f : {"ee_predicted.csv", "ee_expected.csv", "ee_plot.csv", "ee_plot.svg", "ee_metrics.json"}) {
    res.outputs.push_back(f);
  }
  manifest.write(out, res);
  os << "Energy Expenditure Estimation Results\n"
     << energy::ee_metrics_table(metrics) << "expected " << detail::format_fixed(expected.total_kcal(), 1) << " kcal, predicted "
     << detail::format_fixed(predicted.total_kcal(), 1) << " kcal";
  if (metrics.segments_excluded) os << " (" << metrics.segments_excluded << " zero-energy segments excluded)";
  os << "\n";
  res.report = os.str();
  return res;
}

}  // namespace eetrack::pipeline
