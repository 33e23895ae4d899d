// Measurement-schedule optimization: genetic search with duplicate repair and
// an exhaustive reference search for small horizons.
#pragma once

#include "ikp/model.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace ikp {

struct GaConfig {
  int population_size = 200;
  int generations = 500;
  double crossover_rate = 0.9;
  /// Per-gene mutation probability; defaults to 1/N when unset.
  std::optional<double> mutation_rate;
  int elitism_count = 2;
  int tournament_size = 3;
  std::uint64_t rng_seed = 0;
  bool seed_with_regular = true;
  /// Fitness-evaluation threads; 0 picks std::thread::hardware_concurrency().
  int workers = 0;
};

/// Throws ValidationError on out-of-range fields.
void validate(const GaConfig& config);

struct OptimizationResult {
  Schedule best_schedule;
  /// objective(model, best_schedule, warmup), recomputed with the step-wise recursion.
  double best_objective = 0.0;
  /// Best-so-far objective after each generation; history[0] is the initial population.
  std::vector<double> history;
  std::size_t evaluations = 0;
};

/**
 * Replaces repeated entries of `candidate` with times drawn uniformly from
 * {0..horizon-1} minus the values present in `candidate`. The first occurrence
 * of every value is kept. Returns the sorted schedule.
 */
[[nodiscard]] Schedule repair_duplicates(std::vector<int> candidate, int horizon, std::mt19937_64& rng);

/// Number of N-subsets of T times, saturating at `cap + 1`.
[[nodiscard]] std::uint64_t count_subsets(int horizon, int budget, std::uint64_t cap);

inline constexpr std::uint64_t kDefaultExhaustiveCap = 2'000'000;

/**
 * Global minimizer of the schedule objective by enumerating all N-subsets in
 * lexicographic order; ties keep the lexicographically smallest schedule.
 * Throws ValidationError when the subset count exceeds `cap`.
 */
[[nodiscard]] OptimizationResult exhaustive_search(const StateSpaceModel& model, int horizon, int budget,
                                                   const WarmupConfig& warmup,
                                                   std::uint64_t cap = kDefaultExhaustiveCap);

/**
 * Genetic search over budget-N schedules: tournament selection, uniform
 * crossover on the sorted time vectors, per-gene uniform reset mutation and
 * duplicate repair after every variation. Elites carry over unchanged.
 *
 * Deterministic for a given rng_seed regardless of `workers`. With
 * seed_with_regular the regular schedule is in the initial population, so the
 * result is never worse than it; with zero generations that schedule is
 * returned as is.
 */
[[nodiscard]] OptimizationResult genetic_search(const StateSpaceModel& model, int horizon, int budget,
                                                const WarmupConfig& warmup, const GaConfig& config);

}  // namespace ikp
