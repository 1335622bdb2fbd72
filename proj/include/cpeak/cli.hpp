#pragma once

// Command-line front end. Every file-producing command also writes
// manifest.json, which `cpeak replay` turns back into the identical run.
//
// Exit codes: 0 ok, 2 configuration/usage, 3 bad input, 4 output I/O, 1 other.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cpeak/config.hpp"
#include "cpeak/eval.hpp"
#include "cpeak/neural.hpp"
#include "cpeak/oracle.hpp"
#include "cpeak/reward.hpp"
#include "cpeak/sampler.hpp"

namespace cpeak::cli {

inline constexpr const char* kToolVersion = "cpeak 1.0.0";

enum ExitCode : int { kOk = 0, kOther = 1, kConfig = 2, kInput = 3, kIo = 4 };

/// Resolved options of one run; serialized verbatim into the manifest.
struct RunOptions {
  std::string command;
  std::string config_path;
  std::string config_text;  ///< resolved scenario, `key = value` form
  unsigned threads = 1;
  std::string out = ".";
  // dataset
  int rollouts = 100;
  int action_grid = 25;
  int samples = 1000;
  bool charge_past_peak = true;
  // train
  std::string dataset;
  double learning_rate = 0.05;
  int batch = 32;
  int epochs = 2000;
  double validation_fraction = 0.1;
  // grid
  int nx = 101;
  int ns = 101;
  // eval / slice
  std::vector<std::string> policies;
  std::vector<int> horizons;
  std::size_t episodes = 100000;
  double x_fixed = 0.3;
  std::vector<int> t_values;
  double s_min = -3.0;
  double s_max = 3.0;
  int s_points = 61;
};

inline nlohmann::json to_json(const RunOptions& o) {
  return {{"command", o.command},
          {"config_path", o.config_path},
          {"config", o.config_text},
          {"threads", o.threads},
          {"out", o.out},
          {"rollouts", o.rollouts},
          {"action_grid", o.action_grid},
          {"samples", o.samples},
          {"charge_past_peak", o.charge_past_peak},
          {"dataset", o.dataset},
          {"learning_rate", o.learning_rate},
          {"batch", o.batch},
          {"epochs", o.epochs},
          {"validation_fraction", o.validation_fraction},
          {"nx", o.nx},
          {"ns", o.ns},
          {"policies", o.policies},
          {"horizons", o.horizons},
          {"episodes", o.episodes},
          {"x_fixed", o.x_fixed},
          {"t_values", o.t_values},
          {"s_min", o.s_min},
          {"s_max", o.s_max},
          {"s_points", o.s_points}};
}

inline RunOptions options_from_json(const nlohmann::json& j) {
  RunOptions o;
  j.at("command").get_to(o.command);
  j.at("config_path").get_to(o.config_path);
  j.at("config").get_to(o.config_text);
  j.at("threads").get_to(o.threads);
  j.at("out").get_to(o.out);
  j.at("rollouts").get_to(o.rollouts);
  j.at("action_grid").get_to(o.action_grid);
  j.at("samples").get_to(o.samples);
  j.at("charge_past_peak").get_to(o.charge_past_peak);
  j.at("dataset").get_to(o.dataset);
  j.at("learning_rate").get_to(o.learning_rate);
  j.at("batch").get_to(o.batch);
  j.at("epochs").get_to(o.epochs);
  j.at("validation_fraction").get_to(o.validation_fraction);
  j.at("nx").get_to(o.nx);
  j.at("ns").get_to(o.ns);
  j.at("policies").get_to(o.policies);
  j.at("horizons").get_to(o.horizons);
  j.at("episodes").get_to(o.episodes);
  j.at("x_fixed").get_to(o.x_fixed);
  j.at("t_values").get_to(o.t_values);
  j.at("s_min").get_to(o.s_min);
  j.at("s_max").get_to(o.s_max);
  j.at("s_points").get_to(o.s_points);
  return o;
}

namespace detail {

inline std::string read_input(const std::filesystem::path& path) {
  try {
    return read_file(path);
  } catch (const IoError&) {
    throw ParseError("cannot read input file " + path.string());
  }
}

/// Output file name -> contents, written only after the whole run succeeded.
using Outputs = std::vector<std::pair<std::string, std::string>>;

inline std::string substitute_horizon(std::string spec, int T) {
  const std::string key = "{T}";
  for (auto pos = spec.find(key); pos != std::string::npos; pos = spec.find(key, pos))
    spec.replace(pos, key.size(), std::to_string(T));
  return spec;
}

inline PolicyHandle make_policy(const std::string& raw_spec, const ScenarioConfig& cfg, const RunOptions& o) {
  const std::string spec = substitute_horizon(raw_spec, cfg.horizon_T);
  if (spec == "naive") return PolicyHandle::naive(cfg);
  if (spec == "random") return PolicyHandle::random();
  if (spec == "grid") {
    auto grid = make_grid(cfg, static_cast<std::size_t>(o.nx), static_cast<std::size_t>(o.ns));
    return PolicyHandle::grid(std::make_shared<const PolicyTable>(solve_grid_dp(cfg, grid, o.threads)));
  }
  if (spec.starts_with("grid:")) {
    auto table = parse_policy_table(read_input(spec.substr(5)));
    if (table.horizon_T != cfg.horizon_T)
      throw HorizonMismatch("table " + spec.substr(5) + " was built for T=" + std::to_string(table.horizon_T) +
                            " but the scenario has T=" + std::to_string(cfg.horizon_T));
    return PolicyHandle::grid(std::make_shared<const PolicyTable>(std::move(table)));
  }
  if (spec.starts_with("nn:")) {
    auto policy = parse_policy(read_input(spec.substr(3)));
    check_policy_horizon(policy, cfg);
    return PolicyHandle::neural(std::move(policy));
  }
  throw ConfigError("unknown policy spec '" + raw_spec + "' (naive | random | grid | grid:<file> | nn:<file>)");
}

inline Outputs run_dataset(const ScenarioConfig& cfg, const RunOptions& o, std::ostream& out) {
  SamplerParams params{o.rollouts, o.action_grid, o.samples, o.charge_past_peak};
  params.validate();
  const auto samples = generate_dataset(cfg, params, cfg.rng_seed, o.threads);
  out << "samples " << samples.size() << '\n';
  return {{"dataset.csv", dataset_to_csv(samples)}};
}

inline Outputs run_train(const ScenarioConfig& cfg, const RunOptions& o, std::ostream& out) {
  if (o.dataset.empty()) throw ConfigError("train requires --dataset");
  const auto samples = dataset_from_csv(read_input(o.dataset));
  for (const auto& s : samples)
    if (s.rounds_left >= cfg.horizon_T)
      throw HorizonMismatch("dataset contains rounds_left=" + std::to_string(s.rounds_left) +
                            ", impossible for T=" + std::to_string(cfg.horizon_T));
  const TrainHyper hyper{o.learning_rate, o.batch, o.epochs, cfg.rng_seed, o.validation_fraction};
  const auto result = train(samples, cfg, hyper);
  out << "final_training_loss " << format_double(result.policy.training_meta.final_loss) << '\n';
  out << "validation_loss " << format_double(result.report.validation_loss) << '\n';
  return {{"policy.cpnn", serialize_policy(result.policy)}, {"loss.csv", loss_curve_csv(result.report)}};
}

inline Outputs run_grid(const ScenarioConfig& cfg, const RunOptions& o, std::ostream& out) {
  const auto grid = make_grid(cfg, static_cast<std::size_t>(o.nx), static_cast<std::size_t>(o.ns));
  const auto table = solve_grid_dp(cfg, grid, o.threads);
  out << "best_initial_x " << format_double(grid_best_initial(table, grid, cfg)) << '\n';
  return {{"table.cpdp", serialize_policy_table(table)}};
}

inline Outputs run_eval(const ScenarioConfig& base, const RunOptions& o, std::ostream& out) {
  if (o.policies.empty()) throw ConfigError("eval requires at least one --policy");
  std::vector<int> horizons = o.horizons.empty() ? std::vector<int>{base.horizon_T} : o.horizons;
  std::vector<ComparisonReport> reports;
  for (int T : horizons) {
    ScenarioConfig cfg = base;
    cfg.horizon_T = T;
    cfg.validate();
    std::vector<PolicyHandle> handles;
    for (const auto& spec : o.policies) handles.push_back(make_policy(spec, cfg, o));
    reports.push_back(compare_policies(handles, cfg, o.episodes, cfg.rng_seed, o.threads));
    for (const auto& e : reports.back().entries)
      out << "T=" << T << ' ' << e.name << " mean " << format_fixed(e.mean, 6) << " stderr "
          << format_fixed(e.stderr_, 6) << '\n';
  }
  return {{"report.csv", report_csv(reports)}, {"reward_vs_T.svg", reward_chart_svg(reports)}};
}

inline Outputs run_slice(const ScenarioConfig& cfg, const RunOptions& o, std::ostream& out) {
  if (o.policies.size() != 1) throw ConfigError("slice takes exactly one --policy");
  if (o.s_points < 2 || !(o.s_max > o.s_min)) throw ConfigError("slice needs s_max > s_min and s_points >= 2");
  std::vector<int> ts = o.t_values;
  if (ts.empty())
    for (int t = 1; t < cfg.horizon_T; ++t) ts.push_back(t);
  for (int t : ts)
    if (t < 1 || t >= cfg.horizon_T) throw ConfigError("slice rounds must satisfy 1 <= t < T");
  const auto policy = make_policy(o.policies.front(), cfg, o);
  const auto s_grid = linspace(o.s_min, o.s_max, static_cast<std::size_t>(o.s_points));
  const auto actions = policy_slice(policy, o.x_fixed, ts, s_grid, cfg);
  out << "slice rows " << ts.size() * s_grid.size() << '\n';
  return {{"slice.csv", slice_csv(ts, s_grid, actions)}};
}

inline void write_outputs(const RunOptions& o, const Outputs& files, double wall_time) {
  const std::filesystem::path dir(o.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  nlohmann::json manifest;
  manifest["tool"] = kToolVersion;
  manifest["command"] = o.command;
  manifest["options"] = to_json(o);
  manifest["outputs"] = nlohmann::json::array();
  for (const auto& [name, data] : files) {
    write_file_atomic(dir / name, data);
    manifest["outputs"].push_back(name);
  }
  manifest["wall_time_s"] = wall_time;
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace detail

/// Runs a resolved command. Returns the process exit code.
inline int execute(const RunOptions& o, std::ostream& out, std::ostream& err) {
  try {
    const auto cfg = parse_config(o.config_text);
    if (o.threads < 1) throw ConfigError("--threads must be >= 1");
    if (o.command == "naive") {
      out << "naive_consumption " << format_fixed(naive_consumption(cfg), 6) << '\n';
      out << "naive_reward " << format_fixed(naive_reward(cfg), 6) << '\n';
      return kOk;
    }
    const auto start = std::chrono::steady_clock::now();
    detail::Outputs files;
    if (o.command == "dataset")
      files = detail::run_dataset(cfg, o, out);
    else if (o.command == "train")
      files = detail::run_train(cfg, o, out);
    else if (o.command == "grid")
      files = detail::run_grid(cfg, o, out);
    else if (o.command == "eval")
      files = detail::run_eval(cfg, o, out);
    else if (o.command == "slice")
      files = detail::run_slice(cfg, o, out);
    else
      throw ConfigError("unknown command '" + o.command + "'");
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    detail::write_outputs(o, files, wall);
    for (const auto& [name, data] : files) out << "wrote " << (std::filesystem::path(o.out) / name).string() << '\n';
    return kOk;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const HorizonMismatch& e) {
    err << "horizon mismatch: " << e.what() << '\n';
    return kInput;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << '\n';
    return kInput;
  } catch (const DomainError& e) {
    err << "input error: " << e.what() << '\n';
    return kInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kOther;
  }
}

/// Resolves a manifest back into its run; `out_override` and `threads_override` may redirect it.
inline RunOptions options_from_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_input(path));
    return options_from_json(j.at("options"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed manifest " + path.string() + ": " + e.what());
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Coincident-peak charge mitigation: naive benchmark, grid oracle and neural policy"};
  app.require_subcommand(1);
  RunOptions o;
  std::optional<std::uint64_t> seed;
  std::optional<int> horizon;
  std::string manifest_path;

  const auto common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", o.config_path, "scenario file (key = value)")->required();
    sub->add_option("--seed", seed, "master RNG seed (overrides rng_seed)");
    sub->add_option("--T", horizon, "horizon override");
    sub->add_option("--threads", o.threads, "worker threads")->default_val(default_threads());
    if (needs_out) sub->add_option("--out", o.out, "output directory")->default_val(".");
  };

  auto* naive = app.add_subcommand("naive", "print the naive benchmark consumption and reward");
  common(naive, false);

  auto* dataset = app.add_subcommand("dataset", "generate Monte Carlo training samples");
  common(dataset, true);
  dataset->add_option("--C", o.rollouts, "rollouts per candidate")->default_val(100);
  dataset->add_option("--samples", o.samples, "samples per round")->default_val(1000);
  dataset->add_option("--action-grid", o.action_grid, "candidate actions per state")->default_val(25);
  dataset->add_flag("!--no-past-peak-charge", o.charge_past_peak, "do not charge x_t when s_m stays the peak");

  auto* trainc = app.add_subcommand("train", "fit the neural policy to a dataset");
  common(trainc, true);
  trainc->add_option("--dataset", o.dataset, "dataset CSV")->required();
  trainc->add_option("--lr", o.learning_rate, "learning rate")->default_val(0.05);
  trainc->add_option("--batch", o.batch, "minibatch size")->default_val(32);
  trainc->add_option("--epochs", o.epochs, "epochs")->default_val(2000);
  trainc->add_option("--validation", o.validation_fraction, "held-out fraction")->default_val(0.1);

  auto* grid = app.add_subcommand("grid", "solve the grid dynamic program");
  common(grid, true);
  grid->add_option("--nx", o.nx, "consumption grid points")->default_val(101);
  grid->add_option("--ns", o.ns, "load grid points")->default_val(101);

  auto* eval = app.add_subcommand("eval", "paired comparison of policies");
  common(eval, true);
  eval->add_option("--policy", o.policies, "naive | random | grid | grid:<file> | nn:<file>; {T} expands")->required();
  eval->add_option("--T-list", o.horizons, "horizons to sweep")->delimiter(',');
  eval->add_option("--episodes", o.episodes, "episodes per policy")->default_val(100000);
  eval->add_option("--nx", o.nx, "grid points for an in-process grid policy")->default_val(101);
  eval->add_option("--ns", o.ns, "load grid points for an in-process grid policy")->default_val(101);

  auto* slice = app.add_subcommand("slice", "policy action against s_m at fixed x_t");
  common(slice, true);
  slice->add_option("--policy", o.policies, "single policy spec")->required();
  slice->add_option("--x-fixed", o.x_fixed, "current consumption")->default_val(0.3);
  slice->add_option("--t-values", o.t_values, "rounds (default 1..T-1)")->delimiter(',');
  slice->add_option("--s-min", o.s_min)->default_val(-3.0);
  slice->add_option("--s-max", o.s_max)->default_val(3.0);
  slice->add_option("--s-points", o.s_points)->default_val(61);
  slice->add_option("--nx", o.nx)->default_val(101);
  slice->add_option("--ns", o.ns)->default_val(101);

  auto* replay = app.add_subcommand("replay", "re-run a command from its manifest.json");
  std::optional<std::string> replay_out;
  std::optional<unsigned> replay_threads;
  replay->add_option("--manifest", manifest_path, "manifest.json of a previous run")->required();
  replay->add_option("--out", replay_out, "output directory (default: the recorded one)");
  replay->add_option("--threads", replay_threads, "worker threads (results do not depend on it)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kConfig;
  }

  if (replay->parsed()) {
    RunOptions replayed;
    try {
      replayed = options_from_manifest(manifest_path);
    } catch (const ParseError& e) {
      err << "input error: " << e.what() << '\n';
      return kInput;
    }
    if (replay_out) replayed.out = *replay_out;
    if (replay_threads) replayed.threads = *replay_threads;
    return execute(replayed, out, err);
  }

  o.command = app.get_subcommands().front()->get_name();
  try {
    ScenarioConfig cfg = load_config(o.config_path);
    if (seed) cfg.rng_seed = *seed;
    if (horizon) cfg.horizon_T = *horizon;
    cfg.validate();
    o.config_text = serialize_config(cfg);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kConfig;
  }
  return execute(o, out, err);
}

}  // namespace cpeak::cli
