// mcb: command-line front end for matrix completion bandit experiments.
//
// Subcommands: simulate, normality, regret-scaling, replay, infer. Each takes
// a JSON config plus --out; --seed and --workers override config values. All
// randomness flows from the config seed, so outputs are reproducible
// byte-for-byte for a given build (the manifest, which records timings, is the
// one file excluded from that guarantee).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcb/checkpoint.hpp"
#include "mcb/errors.hpp"
#include "mcb/inference.hpp"
#include "mcb/replay.hpp"
#include "mcb/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "mcb 0.1.0";
constexpr const char* kConfigSchema = "mcb-config-v1";

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mcb::ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw mcb::ConfigError("config parse error in " + path + ": " + e.what());
  }
  if (j.contains("schema") && j["schema"] != kConfigSchema)
    throw mcb::ConfigError("config: unexpected schema '" +
                           j["schema"].get<std::string>() + "'");
  return j;
}

const json& require(const json& j, const std::string& key) {
  if (!j.contains(key))
    throw mcb::ConfigError("config: missing required field '" + key + "'");
  return j.at(key);
}

// Schedule constants are always explicit in the config; only plumbing
// fields carry defaults.
mcb::BanditConfig parse_bandit(const json& j) {
  mcb::BanditConfig config;
  config.d1 = require(j, "d1").get<int>();
  config.d2 = require(j, "d2").get<int>();
  config.r = require(j, "rank").get<int>();
  config.k_arms = require(j, "arms").get<int>();
  config.horizon_T = require(j, "horizon_T").get<std::int64_t>();
  config.phase1_len_T0 = require(j, "phase1_len_T0").get<std::int64_t>();
  config.gamma = require(j, "gamma").get<double>();
  config.epsilon_phase1 = require(j, "epsilon").get<double>();
  config.c2 = require(j, "c2").get<double>();
  config.seed = require(j, "seed").get<std::uint64_t>();
  if (!j.contains("eta") && !j.contains("c1"))
    throw mcb::ConfigError("config: missing required field 'eta' (or 'c1')");
  config.eta_phase1 = j.value("eta", 0.0);
  if (j.contains("sampling_weights") && !j["sampling_weights"].is_null()) {
    config.sampling_weights = std::make_shared<mcb::SamplingWeights>(
        mcb::matrix_from_json(j["sampling_weights"], config.d1, config.d2));
  }
  return config;
}

mcb::ExperimentConfig parse_experiment(const json& j) {
  mcb::ExperimentConfig config;
  config.bandit = parse_bandit(j);
  config.c1 = j.value("c1", 0.025);
  config.debias = j.value("debias", true);

  const json init = j.value("init", json::object());
  const std::string mode = init.value("mode", "soft_impute");
  if (mode == "soft_impute")
    config.init_mode = mcb::InitMode::kSoftImpute;
  else if (mode == "truth_noise")
    config.init_mode = mcb::InitMode::kTruthPlusNoise;
  else
    throw mcb::ConfigError("config: unknown init mode '" + mode + "'");
  config.n_forced = init.value("n_forced", std::int64_t{0});
  config.init_noise_sd = init.value("noise_sd", 1.0);
  config.soft_impute.max_iters = init.value("max_iters", 100);
  config.soft_impute.tol = init.value("tol", 1e-5);
  if (init.contains("lambda_seq"))
    config.soft_impute.lambda_seq =
        init["lambda_seq"].get<std::vector<double>>();
  return config;
}

mcb::GroundTruth parse_truth(const json& j, const mcb::BanditConfig& bandit) {
  const json t = require(j, "truth");
  const double perturbation = require(t, "perturbation").get<double>();
  std::vector<double> sigmas = require(t, "sigmas").get<std::vector<double>>();
  mcb::NoiseFamily noise = mcb::NoiseFamily::kGaussian;
  const std::string family = t.value("noise", "gaussian");
  if (family == "uniform")
    noise = mcb::NoiseFamily::kUniform;
  else if (family != "gaussian")
    throw mcb::ConfigError("config: unknown noise family '" + family + "'");
  mcb::Rng rng(bandit.seed, 0);  // truth owns stream 0
  return mcb::generate_truth(bandit.d1, bandit.d2, bandit.r, bandit.k_arms,
                             perturbation, rng, std::move(sigmas), noise);
}

std::vector<mcb::StudyForm> parse_forms(const json& j,
                                        const mcb::BanditConfig& bandit) {
  std::vector<mcb::StudyForm> forms;
  for (const auto& f : require(j, "forms")) {
    mcb::StudyForm form;
    form.label = require(f, "label").get<std::string>();
    for (const auto& e : require(f, "entries")) {
      if (!e.is_array() || e.size() != 3)
        throw mcb::ConfigError("config: form entry must be [j1, j2, coeff]");
      form.q.entries.push_back(
          {e[0].get<int>(), e[1].get<int>(), e[2].get<double>()});
    }
    form.q.validate(bandit.d1, bandit.d2);
    const json target = require(f, "target");
    const std::string mode = require(target, "mode").get<std::string>();
    if (mode == "single")
      form.target = mcb::InferenceTarget::single(require(target, "arm").get<int>());
    else if (mode == "difference")
      form.target = mcb::InferenceTarget::difference(
          require(target, "g").get<int>(), require(target, "h").get<int>());
    else
      throw mcb::ConfigError("config: unknown target mode '" + mode + "'");
    forms.push_back(std::move(form));
  }
  return forms;
}

struct OutputWriter {
  fs::path dir;
  std::vector<std::string> written;

  explicit OutputWriter(const std::string& out_dir) : dir(out_dir) {
    fs::create_directories(dir);
  }

  std::ofstream open(const std::string& name) {
    std::ofstream out(dir / name);
    if (!out) throw mcb::DataError("cannot write " + (dir / name).string());
    written.push_back(name);
    return out;
  }

  void write_json(const std::string& name, const json& j) {
    auto out = open(name);
    out << j.dump(2) << "\n";
  }
};

struct Timings {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

void write_manifest(OutputWriter& out, const std::string& command,
                    const json& config, std::uint64_t seed, int workers,
                    const Timings& timings, json resolved = json::object()) {
  json manifest;
  manifest["schema"] = "mcb-manifest-v1";
  manifest["tool"] = kToolVersion;
  manifest["command"] = command;
  manifest["config"] = config;
  manifest["resolved"] = std::move(resolved);
  manifest["seed"] = seed;
  manifest["workers"] = workers;
  manifest["outputs"] = out.written;
  manifest["timings_sec"] = json{{"total", timings.seconds()}};
  out.write_json("manifest.json", manifest);
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed_override;
  std::optional<int> workers_override;

  json load_and_resolve() const {
    json config = load_config(config_path);
    if (seed_override) config["seed"] = *seed_override;
    return config;
  }

  int workers(const json& config) const {
    if (workers_override) return *workers_override;
    if (config.contains("workers")) return config["workers"].get<int>();
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file")->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed_override, "override config seed");
  cmd->add_option("--workers", args.workers_override, "worker thread count");
}

json diagnostics_json(const mcb::LearnerDiagnostics& diag) {
  if (!diag.zero_init_arms.empty()) {
    std::cerr << "warning: all-zero initialization for arm(s)";
    for (int a : diag.zero_init_arms) std::cerr << ' ' << a;
    std::cerr << "; those arms cannot learn (zero gradient)\n";
  }
  return json{{"max_incoherence", diag.max_incoherence},
              {"rebalance_degeneracies", diag.rebalance_degeneracies},
              {"zero_init_arms", diag.zero_init_arms}};
}

json ledger_summary(const mcb::RegretLedger& ledger) {
  return json{{"cumulative_regret", ledger.cumulative},
              {"pulls_optimal", ledger.pulls_optimal},
              {"pulls_suboptimal", ledger.pulls_suboptimal}};
}

int cmd_simulate(const CommonArgs& args) {
  Timings timings;
  const json config_json = args.load_and_resolve();
  mcb::ExperimentConfig config = parse_experiment(config_json);
  const mcb::GroundTruth truth = parse_truth(config_json, config.bandit);
  const mcb::BanditConfig resolved =
      mcb::resolve_bandit_config(truth, config);

  mcb::Rng rng(resolved.seed, 1);
  mcb::ExperimentResult result = mcb::run_experiment(truth, config, rng);

  OutputWriter out(args.out_dir);
  {
    auto csv = out.open("regret.csv");
    csv << "# schema: mcb-regret-v1\n";
    csv << "step,instant_regret,cumulative_regret\n";
    double cum = 0.0;
    for (std::size_t i = 0; i < result.ledger.instantaneous.size(); ++i) {
      cum += result.ledger.instantaneous[i];
      csv << (i + 1) << ',' << fmt_double(result.ledger.instantaneous[i])
          << ',' << fmt_double(cum) << '\n';
    }
  }

  json summary;
  summary["schema"] = "mcb-simulate-v1";
  summary["regret"] = ledger_summary(result.ledger);
  summary["pulls"] = result.pulls;
  summary["forced_samples"] = result.forced_samples;
  summary["lambda_max"] = truth.lambda_max;
  summary["lambda_min"] = truth.lambda_min;
  summary["diagnostics"] = diagnostics_json(result.state.diagnostics);
  json errors = json::array();
  for (const auto& err : mcb::estimation_errors(result.state, truth.matrices))
    errors.push_back(json{{"frobenius_sq", err.frobenius_sq},
                          {"max_sq", err.max_sq}});
  summary["final_errors"] = std::move(errors);
  if (result.debias) {
    json sigma = json::array();
    for (int a = 0; a < resolved.k_arms; ++a)
      sigma.push_back(mcb::estimate_sigma_sq(*result.debias, a));
    summary["sigma_sq"] = std::move(sigma);
  }
  out.write_json("result.json", summary);

  if (config_json.value("checkpoint", false)) {
    const fs::path path = out.dir / "checkpoint.json";
    mcb::save_checkpoint(path.string(), result.state,
                         result.debias ? &*result.debias : nullptr);
    out.written.push_back("checkpoint.json");
  }

  write_manifest(out, "simulate", config_json, resolved.seed,
                 args.workers(config_json), timings,
                 json{{"eta_phase1", resolved.eta_phase1}});
  return 0;
}

int cmd_normality(const CommonArgs& args) {
  Timings timings;
  const json config_json = args.load_and_resolve();
  mcb::ExperimentConfig config = parse_experiment(config_json);
  const mcb::GroundTruth truth = parse_truth(config_json, config.bandit);
  const std::vector<mcb::StudyForm> forms =
      parse_forms(config_json, config.bandit);
  const int trials = require(config_json, "trials").get<int>();
  const double alpha = config_json.value("alpha", 0.05);
  const int workers = args.workers(config_json);

  const mcb::NormalityStudyResult result = mcb::normality_study(
      truth, config, forms, trials, workers, config.bandit.seed, alpha);

  OutputWriter out(args.out_dir);
  {
    auto csv = out.open("normality_trials.csv");
    csv << "# schema: mcb-normality-trials-v1\n";
    csv << "trial,form,estimate,std_error,statistic,covered\n";
    for (std::size_t f = 0; f < result.forms.size(); ++f) {
      const auto& fr = result.forms[f];
      std::size_t stat_idx = 0;
      for (std::size_t i = 0; i < fr.estimates.size(); ++i) {
        const bool degenerate = fr.std_errors[i] == 0.0;
        csv << i << ',' << fr.label << ',' << fmt_double(fr.estimates[i])
            << ',' << fmt_double(fr.std_errors[i]) << ',';
        if (degenerate)
          csv << "degenerate";
        else
          csv << fmt_double(fr.statistics[stat_idx++]);
        csv << ',' << (fr.covered[i] ? 1 : 0) << '\n';
      }
    }
  }

  json summary;
  summary["schema"] = "mcb-normality-v1";
  summary["trials"] = trials;
  summary["alpha"] = alpha;
  summary["ambiguous_cell_fraction"] = result.ambiguous_fraction;
  json per_form = json::array();
  for (const auto& fr : result.forms)
    per_form.push_back(json{{"form", fr.label},
                            {"truth_value", fr.truth_value},
                            {"ks_distance", fr.ks_distance},
                            {"coverage", fr.coverage},
                            {"degenerate_trials", fr.degenerate_trials}});
  summary["forms"] = std::move(per_form);
  out.write_json("normality_summary.json", summary);

  write_manifest(out, "normality", config_json, config.bandit.seed, workers,
                 timings);
  return 0;
}

int cmd_regret_scaling(const CommonArgs& args) {
  Timings timings;
  const json config_json = args.load_and_resolve();
  mcb::ExperimentConfig config = parse_experiment(config_json);
  const mcb::GroundTruth truth = parse_truth(config_json, config.bandit);
  const std::vector<std::int64_t> t_grid =
      require(config_json, "t_grid").get<std::vector<std::int64_t>>();
  const int trials = require(config_json, "trials").get<int>();
  const int workers = args.workers(config_json);

  const mcb::RegretScalingResult result = mcb::regret_scaling_study(
      truth, config, t_grid, trials, workers, config.bandit.seed);

  OutputWriter out(args.out_dir);
  {
    auto csv = out.open("regret_scaling.csv");
    csv << "# schema: mcb-regret-scaling-v1\n";
    csv << "T,T0,mean_cumulative_regret,sd_cumulative_regret,trials\n";
    for (const auto& row : result.rows)
      csv << row.horizon << ',' << row.t0 << ','
          << fmt_double(row.mean_cumulative_regret) << ','
          << fmt_double(row.sd_cumulative_regret) << ',' << row.trials << '\n';
  }
  out.write_json("regret_scaling_fit.json",
                 json{{"schema", "mcb-regret-fit-v1"},
                      {"exponent", result.exponent},
                      {"slope", result.slope},
                      {"intercept", result.intercept},
                      {"r_squared", result.r_squared}});

  write_manifest(out, "regret-scaling", config_json, config.bandit.seed,
                 workers, timings);
  return 0;
}

int cmd_replay(const CommonArgs& args) {
  Timings timings;
  const json config_json = args.load_and_resolve();

  mcb::ReplayConfig config;
  config.bandit = parse_bandit(config_json);
  if (!config_json.contains("eta"))
    throw mcb::ConfigError(
        "config: replay requires an explicit 'eta' (no ground truth to derive "
        "it from; 0 freezes the learner)");
  const json rj = require(config_json, "replay");
  const std::string log_path = require(rj, "log").get<std::string>();
  if (rj.contains("columns")) {
    const json& cols = rj["columns"];
    config.schema.col_j1 = cols.value("j1", config.schema.col_j1);
    config.schema.col_j2 = cols.value("j2", config.schema.col_j2);
    config.schema.col_action = cols.value("action", config.schema.col_action);
    config.schema.col_reward = cols.value("reward", config.schema.col_reward);
    config.schema.col_order = cols.value("order", config.schema.col_order);
    config.schema.col_outcome = cols.value("outcome", config.schema.col_outcome);
  }
  config.schema.one_based = rj.value("one_based", false);
  config.init_records = rj.value("init_records", std::int64_t{0});
  const json init = config_json.value("init", json::object());
  config.soft_impute.max_iters = init.value("max_iters", 100);
  config.soft_impute.tol = init.value("tol", 1e-5);

  const std::vector<mcb::LogRecord> records = mcb::ingest_log(
      log_path, config.schema, config.bandit.d1, config.bandit.d2,
      config.bandit.k_arms);

  mcb::Rng rng(config.bandit.seed, 1);
  mcb::ReplayStats stats = mcb::replay_run(records, config, rng);

  OutputWriter out(args.out_dir);
  json summary;
  summary["schema"] = "mcb-replay-v1";
  summary["total_records"] = stats.total_records;
  summary["matched"] = stats.matched;
  summary["skipped"] = stats.skipped;
  summary["init_records"] = stats.init_records;
  summary["matched_per_arm"] = stats.matched_per_arm;
  summary["diagnostics"] = diagnostics_json(stats.state.diagnostics);
  if (rj.contains("band")) {
    const auto band = rj["band"].get<std::vector<double>>();
    if (band.size() != 2)
      throw mcb::ConfigError("config: replay band must be [lo, hi]");
    summary["target_band"] = band;
    summary["target_band_fraction"] =
        mcb::target_band_metric(stats.matched_outcomes, band[0], band[1]);
  }

  if (config_json.contains("forms") && stats.debias) {
    const std::vector<mcb::StudyForm> forms =
        parse_forms(config_json, config.bandit);
    const double alpha = config_json.value("alpha", 0.05);
    json reports = json::array();
    for (const auto& form : forms) {
      const mcb::InferenceReport rep =
          mcb::infer_linear_form(*stats.debias, stats.state.arms, form.q,
                                 config.bandit, form.target, alpha);
      json r = mcb::report_to_json(rep);
      r["form"] = form.label;
      reports.push_back(std::move(r));
    }
    summary["reports"] = std::move(reports);
  }
  out.write_json("replay_stats.json", summary);

  if (config_json.value("checkpoint", false)) {
    const fs::path path = out.dir / "checkpoint.json";
    mcb::save_checkpoint(path.string(), stats.state,
                         stats.debias ? &*stats.debias : nullptr);
    out.written.push_back("checkpoint.json");
  }

  write_manifest(out, "replay", config_json, config.bandit.seed,
                 args.workers(config_json), timings);
  return 0;
}

int cmd_infer(const std::string& checkpoint_path, const CommonArgs& args) {
  Timings timings;
  const json config_json = args.load_and_resolve();
  const mcb::Checkpoint cp = mcb::load_checkpoint(checkpoint_path);
  if (!cp.debias)
    throw mcb::DataError("checkpoint has no debias state; rerun with debiasing");

  const std::vector<mcb::StudyForm> forms =
      parse_forms(config_json, cp.state.config);
  const double alpha = config_json.value("alpha", 0.05);

  OutputWriter out(args.out_dir);
  json reports = json::array();
  for (const auto& form : forms) {
    const mcb::InferenceReport rep =
        mcb::infer_linear_form(*cp.debias, cp.state.arms, form.q,
                               cp.state.config, form.target, alpha);
    json r = mcb::report_to_json(rep);
    r["form"] = form.label;
    reports.push_back(std::move(r));
  }
  out.write_json("reports.json", json{{"schema", "mcb-infer-v1"},
                                      {"checkpoint", checkpoint_path},
                                      {"reports", std::move(reports)}});

  write_manifest(out, "infer", config_json, cp.state.config.seed,
                 args.workers(config_json), timings);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"matrix completion bandit experiments"};
  app.require_subcommand(1);

  CommonArgs sim_args, norm_args, regret_args, replay_args, infer_args;
  std::string checkpoint_path;

  add_common(app.add_subcommand("simulate", "run one seeded episode"),
             sim_args);
  add_common(app.add_subcommand("normality",
                                "studentized-statistic study across trials"),
             norm_args);
  add_common(app.add_subcommand("regret-scaling",
                                "mean cumulative regret across a horizon grid"),
             regret_args);
  add_common(app.add_subcommand("replay", "replay a logged bandit CSV"),
             replay_args);
  auto* infer = app.add_subcommand("infer", "evaluate linear forms on a checkpoint");
  infer->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")
      ->required();
  add_common(infer, infer_args);

  try {
    app.parse(argc, argv);
    if (app.got_subcommand("simulate")) return cmd_simulate(sim_args);
    if (app.got_subcommand("normality")) return cmd_normality(norm_args);
    if (app.got_subcommand("regret-scaling")) return cmd_regret_scaling(regret_args);
    if (app.got_subcommand("replay")) return cmd_replay(replay_args);
    if (app.got_subcommand("infer")) return cmd_infer(checkpoint_path, infer_args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const mcb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mcb::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const mcb::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
