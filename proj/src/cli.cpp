#include "ikp/cli.hpp"

#include "ikp/bench.hpp"
#include "ikp/io.hpp"
#include "ikp/optimizer.hpp"
#include "ikp/predictor.hpp"
#include "ikp/synth.hpp"
#include "ikp/sysid.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

namespace ikp::cli {
namespace {

namespace fs = std::filesystem;

// Flags shared by all subcommands plus per-command overrides. Unset optionals
// leave the configuration-file value in place.
struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";

  std::optional<std::string> kind;
  std::optional<int> steps;
  std::optional<double> sigma2;
  std::optional<std::string> input;
  std::optional<std::string> state_dim;
  std::optional<int> train_steps;
  std::optional<std::string> model;
  std::optional<int> horizon;
  std::optional<int> budget;
  std::optional<double> budget_fraction;
  std::optional<int> warmup;
  std::optional<std::string> method;
  std::optional<int> generations;
  std::optional<int> population;
  std::optional<std::string> schedule;
  std::optional<std::string> measurements;
  std::optional<int> offset;
  std::optional<int> replications;
};

template <typename T>
void override_key(Json& section, const char* key, const std::optional<T>& value) {
  if (value) section[key] = *value;
}

template <typename T>
T get_or(const Json& section, const char* key, T fallback) {
  if (!section.contains(key)) return fallback;
  try {
    return section.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ValidationError(std::string("config key \"") + key + "\" has the wrong type");
  }
}

std::string require_path(const Json& section, const char* key) {
  const auto path = get_or<std::string>(section, key, "");
  if (path.empty()) throw ValidationError(std::string("missing required \"") + key + "\" path");
  if (!fs::exists(path)) throw ValidationError(std::string("\"") + key + "\" path does not exist: " + path);
  return path;
}

GaConfig ga_from_json(const Json& j, GaConfig base) {
  base.population_size = get_or(j, "population_size", base.population_size);
  base.generations = get_or(j, "generations", base.generations);
  base.crossover_rate = get_or(j, "crossover_rate", base.crossover_rate);
  if (j.contains("mutation_rate")) base.mutation_rate = get_or(j, "mutation_rate", 0.0);
  base.elitism_count = get_or(j, "elitism_count", base.elitism_count);
  base.tournament_size = get_or(j, "tournament_size", base.tournament_size);
  base.seed_with_regular = get_or(j, "seed_with_regular", base.seed_with_regular);
  base.workers = get_or(j, "workers", base.workers);
  base.rng_seed = get_or(j, "rng_seed", base.rng_seed);
  validate(base);
  return base;
}

EmConfig em_from_json(const Json& j, EmConfig base) {
  base.max_iters = get_or(j, "max_iters", base.max_iters);
  base.loglik_rel_tol = get_or(j, "loglik_rel_tol", base.loglik_rel_tol);
  base.restarts = get_or(j, "restarts", base.restarts);
  return base;
}

// "state_dim": integer, or "auto" to select among "candidates".
std::vector<int> state_dim_choice(const Json& j, int& fixed) {
  if (!j.contains("state_dim")) return {};
  const Json& v = j.at("state_dim");
  if (v.is_string() && v.get<std::string>() == "auto") {
    return get_or(j, "candidates", std::vector<int>{2, 3, 4, 5, 6});
  }
  if (v.is_number_integer()) {
    fixed = v.get<int>();
    return {};
  }
  if (v.is_string()) {
    try {
      std::size_t pos = 0;
      fixed = std::stoi(v.get<std::string>(), &pos);
      if (pos == v.get<std::string>().size()) return {};
    } catch (const std::exception&) {
    }
  }
  throw ValidationError("\"state_dim\" must be an integer or \"auto\"");
}

void echo_config(const fs::path& dir, const std::string& command, std::uint64_t seed, const Json& section) {
  write_json(dir / (command + "_config.json"), Json{{"command", command}, {"seed", seed}, {command, section}});
}

int cmd_simulate(const Json& section, std::uint64_t seed, const fs::path& dir, std::ostream& out) {
  const auto kind = get_or<std::string>(section, "kind", "mass_spring");
  Trajectory traj;
  if (kind == "mass_spring") {
    MassSpringConfig c;
    c.mass_kg = get_or(section, "mass_kg", c.mass_kg);
    c.stiffness_N_per_m = get_or(section, "stiffness_N_per_m", c.stiffness_N_per_m);
    c.delta_s = get_or(section, "delta_s", c.delta_s);
    c.steps_T = get_or(section, "steps_T", c.steps_T);
    c.q_psd = get_or(section, "q_psd", c.q_psd);
    c.r_var = get_or(section, "r_var", c.r_var);
    if (section.contains("x0_mean")) {
      const auto v = get_or<std::vector<double>>(section, "x0_mean", {});
      c.x0_mean = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    if (section.contains("x0_cov")) {
      const auto rows = get_or<std::vector<std::vector<double>>>(section, "x0_cov", {});
      c.x0_cov = Mat::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size()) throw ValidationError("\"x0_cov\" must be square");
        for (std::size_t k = 0; k < rows.size(); ++k) {
          c.x0_cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
        }
      }
    }
    c.rng_seed = seed;
    validate(c);
    auto [sim, model] = simulate_mass_spring(c);
    traj = std::move(sim);
    write_json(dir / "model.json", model_to_json(model));
  } else if (kind == "model") {
    const auto model = model_from_json(read_json(require_path(section, "model")));
    const int steps = get_or(section, "steps", 0);
    if (steps < 1) throw ValidationError("\"steps\" must be positive for kind \"model\"");
    traj = simulate_model(model, steps, seed, get_or(section, "dt", 1.0));
    write_json(dir / "model.json", model_to_json(model));
  } else if (kind == "surrogate") {
    SurrogateConfig c;
    c.steps = get_or(section, "steps", c.steps);
    c.dt = get_or(section, "dt", c.dt);
    c.base_frequency_hz = get_or(section, "base_frequency_hz", c.base_frequency_hz);
    c.phase_jitter = get_or(section, "phase_jitter", c.phase_jitter);
    c.amplitude_jitter = get_or(section, "amplitude_jitter", c.amplitude_jitter);
    c.rng_seed = seed;
    if (c.steps < 1) throw ValidationError("\"steps\" must be positive");
    traj = respiratory_surrogate(c);
  } else {
    throw ValidationError("unknown simulate kind \"" + kind + "\" (expected mass_spring, model or surrogate)");
  }
  if (section.contains("sigma2")) traj = inject_noise(traj, get_or(section, "sigma2", 0.0), seed + 1);

  write_trajectory_csv(dir / "trajectory.csv", traj.dt, traj.truth);
  if (traj.has_noisy()) write_trajectory_csv(dir / "noisy.csv", traj.dt, traj.noisy);
  out << "simulate: " << traj.size() << " steps (dt=" << traj.dt << ") -> " << (dir / "trajectory.csv").string() << '\n';
  return kExitOk;
}

int cmd_identify(const Json& section, std::uint64_t seed, const fs::path& dir, std::ostream& out) {
  const auto traj = load_trajectory_csv(require_path(section, "input"));
  const int train = get_or(section, "train_steps", static_cast<int>(traj.size()));
  if (train < 2 || static_cast<std::size_t>(train) > traj.size()) {
    throw ValidationError("\"train_steps\" must be in [2, " + std::to_string(traj.size()) + "]");
  }
  const std::span<const Vec> obs(traj.truth.data(), static_cast<std::size_t>(train));
  EmConfig em = em_from_json(section, EmConfig{});
  em.rng_seed = seed;
  const auto candidates = state_dim_choice(section, em.state_dim_n);
  validate(em);

  Json diag;
  StateSpaceModel model;
  if (candidates.empty()) {
    auto result = fit(obs, em);
    model = std::move(result.model);
    diag = diagnostics_to_json(result.diagnostics);
  } else {
    auto sel = select_and_fit(obs, em, candidates);
    model = std::move(sel.fit.model);
    diag = diagnostics_to_json(sel.fit.diagnostics);
    diag["candidates"] = sel.candidates;
    Json scores = Json::array();
    for (double s : sel.holdout_rms) scores.push_back(std::isfinite(s) ? Json(s) : Json(nullptr));
    diag["holdout_rms"] = scores;
  }
  write_json(dir / "model.json", model_to_json(model));
  write_json(dir / "diagnostics.json", diag);
  out << "identify: n=" << model.state_dim() << ", " << diag["iterations"].get<int>() << " EM iterations, loglik "
      << diag["loglik_history"].back().get<double>() << '\n';
  return kExitOk;
}

int cmd_optimize(const Json& section, std::uint64_t seed, const fs::path& dir, std::ostream& out) {
  const auto model = model_from_json(read_json(require_path(section, "model")));
  const int horizon = get_or(section, "horizon_T", 0);
  if (horizon < 1) throw ValidationError("\"horizon_T\" must be positive");
  int budget = get_or(section, "budget_N", 0);
  if (budget == 0 && section.contains("budget_fraction")) {
    budget = budget_for_fraction(horizon, get_or(section, "budget_fraction", 0.0));
  }
  const WarmupConfig warmup{get_or(section, "warmup_t0", 0)};
  const auto method = get_or<std::string>(section, "method", "ga");

  OptimizationResult result;
  if (method == "ga") {
    GaConfig ga = ga_from_json(section.value("ga", Json::object()), GaConfig{});
    ga.rng_seed = seed;
    result = genetic_search(model, horizon, budget, warmup, ga);
  } else if (method == "exhaustive") {
    const auto cap = get_or<std::uint64_t>(section, "exhaustive_cap", kDefaultExhaustiveCap);
    result = exhaustive_search(model, horizon, budget, warmup, cap);
  } else {
    throw ValidationError("unknown optimize method \"" + method + "\" (expected ga or exhaustive)");
  }
  Json j = result_to_json(result);
  const double regular = objective(model, regular_schedule(horizon, budget), warmup);
  j["regular_objective"] = regular;
  j["method"] = method;
  j["warmup_t0"] = warmup.t0;
  write_json(dir / "schedule.json", j);
  out << "optimize: N=" << budget << " T=" << horizon << " objective " << result.best_objective << " (regular "
      << regular << ", ratio " << result.best_objective / regular << ")\n";
  return kExitOk;
}

int cmd_predict(const Json& section, const fs::path& dir, std::ostream& out) {
  const auto model = model_from_json(read_json(require_path(section, "model")));
  const auto schedule = schedule_from_json(read_json(require_path(section, "schedule")));
  std::vector<Measurement> meas;
  if (schedule.budget() > 0) {
    const auto traj = load_trajectory_csv(require_path(section, "measurements"));
    const int offset = get_or(section, "offset", 0);
    if (offset < 0) throw ValidationError("\"offset\" must be non-negative");
    for (int t : schedule.times()) {
      const auto row = static_cast<std::size_t>(offset) + static_cast<std::size_t>(t);
      if (row >= traj.size()) {
        throw ValidationError("scheduled time t=" + std::to_string(t) + " has no measurement row (file has " +
                              std::to_string(traj.size()) + " rows, offset " + std::to_string(offset) + ")");
      }
      meas.push_back({t, traj.truth[row]});
    }
  }
  const auto belief = run_predictor(model, schedule, meas);
  std::ofstream os(dir / "belief.csv");
  if (!os) throw ValidationError("cannot write " + (dir / "belief.csv").string());
  write_belief_csv(os, model, belief);
  out << "predict: " << belief.size() << " steps, " << schedule.budget() << " measurements -> "
      << (dir / "belief.csv").string() << '\n';
  return kExitOk;
}

int cmd_bench(const Json& section, std::uint64_t seed, const fs::path& dir, std::ostream& out) {
  BenchConfig c;
  c.sigma2_grid = get_or(section, "sigma2_grid", c.sigma2_grid);
  c.budget_fraction_grid = get_or(section, "budget_fraction_grid", c.budget_fraction_grid);
  c.horizon_T = get_or(section, "horizon_T", c.horizon_T);
  c.train_steps = get_or(section, "train_steps", c.train_steps);
  c.warmup_t0 = get_or(section, "warmup_t0", c.warmup_t0);
  c.replications = get_or(section, "replications", c.replications);
  c.workers = get_or(section, "workers", c.workers);
  c.em = em_from_json(section.value("em", Json::object()), c.em);
  c.state_dim_candidates = state_dim_choice(section, c.em.state_dim_n);
  c.ga = ga_from_json(section.value("ga", Json::object()), c.ga);
  c.rng_seed = seed;

  Trajectory traj;
  if (section.contains("input")) {
    traj = load_trajectory_csv(require_path(section, "input"));
  } else {
    SurrogateConfig s;
    s.steps = c.train_steps + c.horizon_T + 1;
    s.rng_seed = seed;
    traj = respiratory_surrogate(s);
  }
  const auto report = run_benchmark(c, traj);
  {
    std::ofstream os(dir / "bench.csv");
    if (!os) throw ValidationError("cannot write " + (dir / "bench.csv").string());
    write_bench_csv(os, report);
  }
  std::ofstream table(dir / "bench_table.txt");
  write_bench_table(table, report, 1.0 / traj.dt);
  write_bench_table(out, report, 1.0 / traj.dt);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal intermittent Kalman predictor: measurement scheduling under a budget"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed_value = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON run configuration");
    sub->add_option("--seed", seed_value, "Master RNG seed (overrides the config file)");
    sub->add_option("--out", o.out_dir, "Output directory");
  };

  auto* simulate = app.add_subcommand("simulate", "Generate a trajectory (mass_spring, model or surrogate)");
  add_common(simulate);
  simulate->add_option("--kind", o.kind, "mass_spring | model | surrogate");
  simulate->add_option("--steps", o.steps, "Number of steps");
  simulate->add_option("--sigma2", o.sigma2, "Inject N(0, sigma2 I) measurement noise");
  simulate->add_option("--model", o.model, "Model JSON for kind=model");

  auto* identify = app.add_subcommand("identify", "Fit a state-space model to a trajectory by EM");
  add_common(identify);
  identify->add_option("--input", o.input, "Noisy trajectory CSV");
  identify->add_option("--state-dim", o.state_dim, "State dimension n, or 'auto'");
  identify->add_option("--train-steps", o.train_steps, "Use only the first K rows");

  auto* optimize = app.add_subcommand("optimize", "Find the measurement schedule for a budget");
  add_common(optimize);
  optimize->add_option("--model", o.model, "Model JSON");
  optimize->add_option("--horizon", o.horizon, "Horizon T");
  optimize->add_option("--budget", o.budget, "Budget N");
  optimize->add_option("--budget-fraction", o.budget_fraction, "Budget as a fraction of T");
  optimize->add_option("--warmup", o.warmup, "Warm-up end t0");
  optimize->add_option("--method", o.method, "ga | exhaustive");
  optimize->add_option("--generations", o.generations, "GA generations");
  optimize->add_option("--population", o.population, "GA population size");

  auto* predict = app.add_subcommand("predict", "Run the intermittent predictor on measurements");
  add_common(predict);
  predict->add_option("--model", o.model, "Model JSON");
  predict->add_option("--schedule", o.schedule, "Schedule JSON");
  predict->add_option("--measurements", o.measurements, "Noisy trajectory CSV");
  predict->add_option("--offset", o.offset, "Row of the CSV that corresponds to t=0");

  auto* bench = app.add_subcommand("bench", "Compare RMWP, IMWP, RKP and IKP over sigma2 x budget grids");
  add_common(bench);
  bench->add_option("--input", o.input, "Ground-truth trajectory CSV (default: synthetic surrogate)");
  bench->add_option("--replications", o.replications, "Noise replications per cell");

  std::vector<std::string> argv_rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv_rest.begin(), argv_rest.end());
  try {
    app.parse(argv_rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed") > 0) o.seed = seed_value;
  const std::string command = sub->get_name();
  try {
    Json config = o.config_path.empty() ? Json::object() : read_json(o.config_path);
    if (!config.is_object()) throw ValidationError("configuration must be a JSON object");
    const std::uint64_t seed = o.seed ? *o.seed : get_or<std::uint64_t>(config, "seed", 0);
    Json section = config.value(command, Json::object());
    if (!section.is_object()) throw ValidationError("config section \"" + command + "\" must be an object");
    override_key(section, "kind", o.kind);
    override_key(section, "model", o.model);
    override_key(section, "sigma2", o.sigma2);
    override_key(section, "input", o.input);
    override_key(section, "train_steps", o.train_steps);
    override_key(section, "horizon_T", o.horizon);
    override_key(section, "budget_N", o.budget);
    override_key(section, "budget_fraction", o.budget_fraction);
    override_key(section, "warmup_t0", o.warmup);
    override_key(section, "method", o.method);
    override_key(section, "schedule", o.schedule);
    override_key(section, "measurements", o.measurements);
    override_key(section, "offset", o.offset);
    override_key(section, "replications", o.replications);
    if (o.steps) section[section.value("kind", std::string("mass_spring")) == "mass_spring" ? "steps_T" : "steps"] = *o.steps;
    override_key(section, "state_dim", o.state_dim);
    if (o.generations || o.population) {
      Json ga = section.value("ga", Json::object());
      override_key(ga, "generations", o.generations);
      override_key(ga, "population_size", o.population);
      section["ga"] = ga;
    }

    const fs::path dir = o.out_dir.empty() ? fs::path(".") : fs::path(o.out_dir);
    fs::create_directories(dir);
    echo_config(dir, command, seed, section);
    if (command == "simulate") return cmd_simulate(section, seed, dir, out);
    if (command == "identify") return cmd_identify(section, seed, dir, out);
    if (command == "optimize") return cmd_optimize(section, seed, dir, out);
    if (command == "predict") return cmd_predict(section, dir, out);
    return cmd_bench(section, seed, dir, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Json::exception& e) {
    err << "error: configuration: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace ikp::cli
