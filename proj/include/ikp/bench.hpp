// Benchmark of the intermittent predictor against regular-rate and
// measurement-hold baselines over grids of noise level and budget.
#pragma once

#include "ikp/model.hpp"
#include "ikp/optimizer.hpp"
#include "ikp/synth.hpp"
#include "ikp/sysid.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace ikp {

enum class Method { kRmwp = 0, kImwp = 1, kRkp = 2, kIkp = 3 };
inline constexpr std::array<Method, 4> kAllMethods{Method::kRmwp, Method::kImwp, Method::kRkp, Method::kIkp};

/// "RMWP", "IMWP", "RKP", "IKP".
[[nodiscard]] std::string_view method_name(Method method);

struct BenchConfig {
  std::vector<double> sigma2_grid{1.0, 4.0, 25.0, 100.0};
  std::vector<double> budget_fraction_grid{0.1, 0.2, 0.3, 0.4, 0.5};
  int horizon_T = 800;
  int train_steps = 600;
  int warmup_t0 = 300;
  int replications = 20;
  std::uint64_t rng_seed = 0;
  /// Identification settings; state_dim_n is used unless `state_dim_candidates` is non-empty.
  EmConfig em{.state_dim_n = 6, .max_iters = 200, .loglik_rel_tol = 1e-7, .rng_seed = 0};
  std::vector<int> state_dim_candidates{2, 3, 4, 5, 6};
  /// Per-cell schedule search; rng_seed is replaced by a per-cell derived seed.
  GaConfig ga{.population_size = 20, .generations = 1200, .mutation_rate = std::nullopt};
  /// Concurrent (sigma2, replication) jobs; 0 picks the hardware concurrency.
  int workers = 0;
};

void validate(const BenchConfig& config);

/// Budget N for a fraction of the horizon, at least 1 and at most T.
[[nodiscard]] int budget_for_fraction(int horizon, double fraction);

/// sqrt(mean over t >= from_t of |predicted(t) - truth(t)|^2). Throws on an empty window.
[[nodiscard]] double rms_error(std::span<const Vec> predicted, std::span<const Vec> truth, std::size_t from_t);

/**
 * Measurement-hold predictions for t = 0..T: the latest scheduled noisy value
 * strictly before t, or `fallback` before the first measurement.
 */
[[nodiscard]] std::vector<Vec> run_baseline_hold(std::span<const Vec> noisy, const Schedule& schedule,
                                                 const Vec& fallback);

struct BenchRecord {
  Method method;
  double sigma2;
  double budget_fraction;
  int replication;
  double rms;
};

struct BenchReport {
  std::vector<double> sigma2_grid;
  std::vector<double> budget_fraction_grid;
  int replications = 0;
  std::vector<BenchRecord> records;
  /// mean[method][sigma index][budget index]
  std::array<std::vector<std::vector<double>>, 4> mean;
  std::array<std::vector<std::vector<double>>, 4> std_error;
  /// Mean over grid cells of (RKP - IKP) / RKP on the replication-averaged RMS.
  double mean_relative_improvement = 0.0;

  [[nodiscard]] double mean_rms(Method method, std::size_t sigma, std::size_t budget) const {
    return mean[static_cast<std::size_t>(method)][sigma][budget];
  }
};

/**
 * Per (sigma2, replication): noise injection, identification on the first
 * train_steps samples, hand-off of the filtered belief to the treatment
 * window, then for every budget the regular and optimized schedules are run
 * through both the Kalman predictor and the hold baseline. Errors are scored
 * on t = warmup_t0+1 .. T of the treatment window.
 */
[[nodiscard]] BenchReport run_benchmark(const BenchConfig& config, const Trajectory& traj);

/// Long format: method,sigma2,budget_fraction,replication,rms.
void write_bench_csv(std::ostream& os, const BenchReport& report);

/// Aligned table, one block per budget fraction, one column per sigma2.
void write_bench_table(std::ostream& os, const BenchReport& report, double base_rate_hz);

}  // namespace ikp
