#include "ikp/bench.hpp"

#include "ikp/detail/parallel.hpp"
#include "ikp/predictor.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace ikp {

std::string_view method_name(Method method) {
  switch (method) {
    case Method::kRmwp: return "RMWP";
    case Method::kImwp: return "IMWP";
    case Method::kRkp: return "RKP";
    case Method::kIkp: return "IKP";
  }
  return "?";
}

void validate(const BenchConfig& c) {
  if (c.sigma2_grid.empty() || c.budget_fraction_grid.empty()) throw ValidationError("benchmark grids must be non-empty");
  for (double s : c.sigma2_grid) {
    if (!(s >= 0.0)) throw ValidationError("sigma2 values must be non-negative");
  }
  for (double f : c.budget_fraction_grid) {
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("budget fractions must be in (0, 1]");
  }
  if (c.horizon_T < 1) throw ValidationError("horizon_T must be positive");
  if (c.warmup_t0 < 0 || c.warmup_t0 >= c.horizon_T) throw ValidationError("warmup_t0 must be in [0, horizon_T)");
  if (c.train_steps < 2) throw ValidationError("train_steps must be at least 2");
  if (c.replications < 1) throw ValidationError("replications must be positive");
  validate(c.em);
  validate(c.ga);
}

int budget_for_fraction(int horizon, double fraction) {
  const auto n = static_cast<int>(std::lround(fraction * horizon));
  return std::clamp(n, 1, horizon);
}

double rms_error(std::span<const Vec> predicted, std::span<const Vec> truth, std::size_t from_t) {
  if (predicted.size() != truth.size()) throw ValidationError("prediction and truth lengths differ");
  if (from_t >= truth.size()) throw ValidationError("RMS window is empty");
  double sum = 0.0;
  for (std::size_t t = from_t; t < truth.size(); ++t) sum += (predicted[t] - truth[t]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(truth.size() - from_t));
}

std::vector<Vec> run_baseline_hold(std::span<const Vec> noisy, const Schedule& schedule, const Vec& fallback) {
  const auto steps = static_cast<std::size_t>(schedule.horizon()) + 1;
  if (noisy.size() < static_cast<std::size_t>(schedule.horizon())) {
    throw ValidationError("hold baseline needs noisy values for every schedule time");
  }
  const auto mask = schedule.mask();
  std::vector<Vec> out;
  out.reserve(steps);
  Vec held = fallback;
  for (std::size_t t = 0; t < steps; ++t) {
    out.push_back(held);
    if (t < mask.size() && mask[t] != 0) held = noisy[t];
  }
  return out;
}

namespace {

struct JobResult {
  // rms[method][budget]
  std::array<std::vector<double>, 4> rms;
};

JobResult run_job(const BenchConfig& config, const Trajectory& traj, double sigma2, std::size_t sigma_index,
                  int replication) {
  const auto train = static_cast<std::size_t>(config.train_steps);
  const int horizon = config.horizon_T;
  const Trajectory noisy = inject_noise(
      traj, sigma2, detail::derive_seed(config.rng_seed, {1, sigma_index, static_cast<std::uint64_t>(replication)}));
  const std::span<const Vec> training(noisy.noisy.data(), train);
  const std::span<const Vec> window_noisy(noisy.noisy.data() + train, static_cast<std::size_t>(horizon) + 1);
  const std::span<const Vec> window_truth(noisy.truth.data() + train, static_cast<std::size_t>(horizon) + 1);

  EmConfig em = config.em;
  em.rng_seed = detail::derive_seed(config.rng_seed, {2, sigma_index, static_cast<std::uint64_t>(replication)});
  const StateSpaceModel fitted = config.state_dim_candidates.empty()
                                     ? fit(training, em).model
                                     : select_and_fit(training, em, config.state_dim_candidates).fit.model;
  const StateSpaceModel model = continue_after(fitted, training);

  Vec training_mean = Vec::Zero(traj.dim());
  for (const auto& z : training) training_mean += z;
  training_mean /= static_cast<double>(train);

  const WarmupConfig warmup{config.warmup_t0};
  const auto from = static_cast<std::size_t>(config.warmup_t0) + 1;
  auto kalman_rms = [&](const Schedule& schedule) {
    std::vector<Measurement> meas;
    meas.reserve(schedule.times().size());
    for (int t : schedule.times()) meas.push_back({t, window_noisy[static_cast<std::size_t>(t)]});
    const auto belief = run_predictor(model, schedule, meas);
    return rms_error(belief.pred_pos, window_truth, from);
  };
  auto hold_rms = [&](const Schedule& schedule) {
    return rms_error(run_baseline_hold(window_noisy, schedule, training_mean), window_truth, from);
  };

  JobResult out;
  for (std::size_t b = 0; b < config.budget_fraction_grid.size(); ++b) {
    const int budget = budget_for_fraction(horizon, config.budget_fraction_grid[b]);
    const Schedule regular = regular_schedule(horizon, budget);
    GaConfig ga = config.ga;
    ga.workers = 1;
    ga.rng_seed = detail::derive_seed(config.rng_seed, {3, sigma_index, static_cast<std::uint64_t>(replication), b});
    const Schedule optimized = genetic_search(model, horizon, budget, warmup, ga).best_schedule;
    out.rms[static_cast<std::size_t>(Method::kRmwp)].push_back(hold_rms(regular));
    out.rms[static_cast<std::size_t>(Method::kImwp)].push_back(hold_rms(optimized));
    out.rms[static_cast<std::size_t>(Method::kRkp)].push_back(kalman_rms(regular));
    out.rms[static_cast<std::size_t>(Method::kIkp)].push_back(kalman_rms(optimized));
  }
  return out;
}

}  // namespace

BenchReport run_benchmark(const BenchConfig& config, const Trajectory& traj) {
  validate(config);
  const auto needed = static_cast<std::size_t>(config.train_steps) + static_cast<std::size_t>(config.horizon_T) + 1;
  if (traj.size() < needed) {
    throw ValidationError("benchmark needs a trajectory of at least train_steps + horizon_T + 1 = " +
                          std::to_string(needed) + " steps, got " + std::to_string(traj.size()));
  }

  const std::size_t n_sigma = config.sigma2_grid.size();
  const std::size_t n_budget = config.budget_fraction_grid.size();
  const auto reps = static_cast<std::size_t>(config.replications);
  std::vector<JobResult> jobs(n_sigma * reps);
  detail::parallel_for(jobs.size(), detail::resolve_workers(config.workers), [&](std::size_t j) {
    const std::size_t s = j / reps;
    jobs[j] = run_job(config, traj, config.sigma2_grid[s], s, static_cast<int>(j % reps));
  });

  BenchReport report;
  report.sigma2_grid = config.sigma2_grid;
  report.budget_fraction_grid = config.budget_fraction_grid;
  report.replications = config.replications;
  for (auto& m : report.mean) m.assign(n_sigma, std::vector<double>(n_budget, 0.0));
  for (auto& m : report.std_error) m.assign(n_sigma, std::vector<double>(n_budget, 0.0));

  for (Method method : kAllMethods) {
    const auto mi = static_cast<std::size_t>(method);
    for (std::size_t b = 0; b < n_budget; ++b) {
      for (std::size_t s = 0; s < n_sigma; ++s) {
        double sum = 0.0;
        double sum_sq = 0.0;
        for (std::size_t r = 0; r < reps; ++r) {
          const double v = jobs[s * reps + r].rms[mi][b];
          report.records.push_back({method, config.sigma2_grid[s], config.budget_fraction_grid[b], static_cast<int>(r), v});
          sum += v;
          sum_sq += v * v;
        }
        const double mean = sum / static_cast<double>(reps);
        report.mean[mi][s][b] = mean;
        if (reps > 1) {
          const double var = std::max(0.0, (sum_sq - sum * mean) / static_cast<double>(reps - 1));
          report.std_error[mi][s][b] = std::sqrt(var / static_cast<double>(reps));
        }
      }
    }
  }

  double improvement = 0.0;
  for (std::size_t s = 0; s < n_sigma; ++s) {
    for (std::size_t b = 0; b < n_budget; ++b) {
      const double rkp = report.mean_rms(Method::kRkp, s, b);
      const double ikp = report.mean_rms(Method::kIkp, s, b);
      improvement += rkp > 0.0 ? (rkp - ikp) / rkp : 0.0;
    }
  }
  report.mean_relative_improvement = improvement / static_cast<double>(n_sigma * n_budget);
  return report;
}

void write_bench_csv(std::ostream& os, const BenchReport& report) {
  os << "method,sigma2,budget_fraction,replication,rms\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : report.records) {
    os << method_name(r.method) << ',' << r.sigma2 << ',' << r.budget_fraction << ',' << r.replication << ','
       << r.rms << '\n';
  }
}

void write_bench_table(std::ostream& os, const BenchReport& report, double base_rate_hz) {
  constexpr int kCol = 9;
  std::ostringstream header;
  header << std::setw(22) << std::right << "sigma2 [mm^2]";
  for (double s : report.sigma2_grid) header << std::setw(kCol) << std::fixed << std::setprecision(0) << s;
  const std::string rule(header.str().size(), '-');
  os << rule << '\n' << header.str() << '\n' << rule << '\n';
  for (std::size_t b = 0; b < report.budget_fraction_grid.size(); ++b) {
    const double f = report.budget_fraction_grid[b];
    for (Method method : kAllMethods) {
      std::ostringstream label;
      if (method == Method::kRmwp) {
        label << std::fixed << std::setprecision(2) << f;
      } else if (method == Method::kImwp) {
        label << '(' << std::fixed << std::setprecision(1) << f * base_rate_hz << " Hz)";
      }
      os << std::left << std::setw(16) << label.str() << std::setw(6) << method_name(method) << std::right;
      for (std::size_t s = 0; s < report.sigma2_grid.size(); ++s) {
        os << std::setw(kCol) << std::fixed << std::setprecision(2) << report.mean_rms(method, s, b);
      }
      os << '\n';
    }
    os << rule << '\n';
  }
  os << "mean relative improvement of IKP over RKP: " << std::fixed << std::setprecision(2)
     << 100.0 * report.mean_relative_improvement << " %\n";
}

}  // namespace ikp
