// eetrack: batch command-line front end.
//
//   eetrack simulate    [--template t.json] --out DIR
//   eetrack features    INPUT... --out DIR [--binary]
//   eetrack train-pa    --features F --out DIR
//   eetrack eval-pa     --features F --out DIR [--folds K]
//   eetrack train-pomdp TRACE... [--states S.json] --out DIR
//   eetrack infer-day   --model M --trace T --out DIR
//   eetrack estimate-ee (--segments S.csv | --model M --predictions P --trace T) --out DIR
//
// Every subcommand also takes --config <json> and --seed <int>. Failures
// print one line "error: <kind>: <message>" to stderr and exit with 1.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eetrack/eetrack.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "pipeline configuration JSON")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "base seed (overrides the config)");
  cmd->add_option("--out", f.out, "output directory")->required();
}

eetrack::pipeline::PipelineConfig resolve(const CommonFlags& f) {
  auto cfg = f.config.empty() ? eetrack::pipeline::PipelineConfig{} : eetrack::pipeline::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  return cfg;
}

std::optional<std::string> opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  namespace pl = eetrack::pipeline;
  CLI::App app{"Energy expenditure from smartphone activity recognition"};
  app.set_version_flag("--version", std::string(eetrack::kToolName) + " " + eetrack::kVersion);
  app.require_subcommand(1);

  CommonFlags common;
  std::string template_path, features_path, states_path, model_path, trace_path, predictions_path, segments_path,
      compendium_path;
  std::vector<std::string> inputs;
  bool binary = false, met_from_speed = false;
  std::optional<std::size_t> folds, min_leaf;
  std::optional<int> max_depth;
  std::optional<double> weight;

  auto* sim = app.add_subcommand("simulate", "generate synthetic sensor sessions and day traces");
  add_common(sim, common);
  sim->add_option("--template", template_path, "day schedule template JSON")->check(CLI::ExistingFile);

  auto* feat = app.add_subcommand("features", "sensor CSVs or manifests -> feature matrix");
  add_common(feat, common);
  feat->add_option("inputs", inputs, "sensor CSV files or manifest JSON files")->required();
  feat->add_flag("--binary", binary, "also write the binary feature cache");

  auto* tpa = app.add_subcommand("train-pa", "train the physical-activity decision tree");
  add_common(tpa, common);
  tpa->add_option("--features", features_path, "feature matrix (CSV or binary cache)")->required()->check(CLI::ExistingFile);
  tpa->add_option("--max-depth", max_depth);
  tpa->add_option("--min-samples-leaf", min_leaf);

  auto* epa = app.add_subcommand("eval-pa", "cross-validate the decision tree and print the confusion matrix");
  add_common(epa, common);
  epa->add_option("--features", features_path, "feature matrix (CSV or binary cache)")->required()->check(CLI::ExistingFile);
  epa->add_option("--folds", folds);
  epa->add_option("--max-depth", max_depth);
  epa->add_option("--min-samples-leaf", min_leaf);

  auto* tpo = app.add_subcommand("train-pomdp", "estimate the daily-activity POMDP from day traces");
  add_common(tpo, common);
  tpo->add_option("traces", inputs, "trace CSV files")->required()->check(CLI::ExistingFile);
  tpo->add_option("--states", states_path, "daily-activity catalogue JSON")->check(CLI::ExistingFile);

  auto* inf = app.add_subcommand("infer-day", "decode one day of observations");
  add_common(inf, common);
  inf->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  inf->add_option("--trace", trace_path)->required()->check(CLI::ExistingFile);

  auto* ee = app.add_subcommand("estimate-ee", "energy expenditure from predicted daily activities");
  add_common(ee, common);
  ee->add_option("--segments", segments_path, "bouts CSV: code,minutes[,speed_kmh,phys_activity]")->check(CLI::ExistingFile);
  ee->add_option("--model", model_path)->check(CLI::ExistingFile);
  ee->add_option("--predictions", predictions_path)->check(CLI::ExistingFile);
  ee->add_option("--trace", trace_path)->check(CLI::ExistingFile);
  ee->add_option("--compendium", compendium_path, "compendium CSV (code,description,met)")->check(CLI::ExistingFile);
  ee->add_option("--weight", weight, "subject weight in kg");
  ee->add_flag("--met-from-speed", met_from_speed, "use walking speed (km/h) as the MET multiplier for walking bouts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    auto cfg = resolve(common);
    if (max_depth) cfg.tree.max_depth = *max_depth;
    if (min_leaf) cfg.tree.min_samples_leaf = *min_leaf;
    if (folds) cfg.cv_folds = *folds;
    if (weight) cfg.weight_kg = *weight;
    if (met_from_speed) cfg.met_from_speed = true;

    pl::StageResult res;
    if (sim->parsed()) {
      res = pl::simulate(cfg, opt(template_path), common.out);
    } else if (feat->parsed()) {
      res = pl::features(cfg, inputs, common.out, binary);
    } else if (tpa->parsed()) {
      res = pl::train_pa(cfg, features_path, common.out);
    } else if (epa->parsed()) {
      res = pl::eval_pa(cfg, features_path, common.out);
    } else if (tpo->parsed()) {
      res = pl::train_pomdp(cfg, inputs, opt(states_path), common.out);
    } else if (inf->parsed()) {
      res = pl::infer_day(cfg, model_path, trace_path, common.out);
    } else if (ee->parsed()) {
      res = pl::estimate_ee(cfg,
                            {opt(model_path), opt(predictions_path), opt(trace_path), opt(segments_path), opt(compendium_path)},
                            common.out);
    }
    std::cout << res.report;
    return 0;
  } catch (const eetrack::ParseError& e) {
    std::cerr << "error: parse: " << e.what() << "\n";
  } catch (const eetrack::SchemaError& e) {
    std::cerr << "error: schema: " << e.what() << "\n";
  } catch (const eetrack::InvalidParameter& e) {
    std::cerr << "error: invalid-parameter: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
  }
  return 1;
}
