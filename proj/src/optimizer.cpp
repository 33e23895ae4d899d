#include "ikp/optimizer.hpp"

#include "ikp/detail/parallel.hpp"
#include "ikp/predictor.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <string>

namespace ikp {
namespace {

void check_budget(int horizon, int budget) {
  if (horizon < 1) throw ValidationError("horizon T must be positive, got " + std::to_string(horizon));
  if (budget < 1 || budget > horizon) {
    throw ValidationError("infeasible budget N=" + std::to_string(budget) + " for horizon T=" + std::to_string(horizon));
  }
}

void check_warmup(const WarmupConfig& warmup, int horizon) {
  if (warmup.t0 < 0 || warmup.t0 >= horizon) {
    throw ValidationError("warm-up t0=" + std::to_string(warmup.t0) + " outside [0, " + std::to_string(horizon - 1) + "]");
  }
}

__extension__ using u128 = unsigned __int128;

using Genome = std::vector<int>;

struct Individual {
  Genome genes;
  double fitness = 0.0;
};

}  // namespace

void validate(const GaConfig& c) {
  if (c.population_size < 1) throw ValidationError("population_size must be positive");
  if (c.generations < 0) throw ValidationError("generations must be non-negative");
  if (!(c.crossover_rate >= 0.0 && c.crossover_rate <= 1.0)) throw ValidationError("crossover_rate must be in [0, 1]");
  if (c.mutation_rate && !(*c.mutation_rate >= 0.0 && *c.mutation_rate <= 1.0)) {
    throw ValidationError("mutation_rate must be in [0, 1]");
  }
  if (c.elitism_count < 0 || c.elitism_count >= c.population_size) {
    throw ValidationError("elitism_count must be in [0, population_size)");
  }
  if (c.tournament_size < 1) throw ValidationError("tournament_size must be positive");
  if (c.workers < 0) throw ValidationError("workers must be non-negative");
}

Schedule repair_duplicates(std::vector<int> candidate, int horizon, std::mt19937_64& rng) {
  check_budget(horizon, static_cast<int>(candidate.size()));
  std::vector<char> present(static_cast<std::size_t>(horizon), 0);
  std::vector<std::size_t> repeated;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const int t = candidate[i];
    if (t < 0 || t >= horizon) {
      throw ValidationError("candidate time " + std::to_string(t) + " outside [0, " + std::to_string(horizon - 1) + "]");
    }
    if (present[static_cast<std::size_t>(t)] != 0) {
      repeated.push_back(i);
    } else {
      present[static_cast<std::size_t>(t)] = 1;
    }
  }
  if (!repeated.empty()) {
    std::vector<int> unused;
    unused.reserve(static_cast<std::size_t>(horizon) - candidate.size() + repeated.size());
    for (int t = 0; t < horizon; ++t) {
      if (present[static_cast<std::size_t>(t)] == 0) unused.push_back(t);
    }
    // Partial Fisher-Yates: each repeated slot takes a uniform draw from the remaining unused times.
    for (std::size_t k = 0; k < repeated.size(); ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, unused.size() - 1);
      std::swap(unused[k], unused[pick(rng)]);
      candidate[repeated[k]] = unused[k];
    }
  }
  return Schedule::from_unsorted(std::move(candidate), horizon);
}

std::uint64_t count_subsets(int horizon, int budget, std::uint64_t cap) {
  const int k = std::min(budget, horizon - budget);
  std::uint64_t count = 1;
  for (int i = 1; i <= k; ++i) {
    // count * (T-k+i) / i stays integral at every step.
    const auto num = static_cast<u128>(count) * static_cast<unsigned>(horizon - k + i);
    const auto next = num / static_cast<unsigned>(i);
    if (next > cap) return cap + 1;
    count = static_cast<std::uint64_t>(next);
  }
  return count;
}

OptimizationResult exhaustive_search(const StateSpaceModel& model, int horizon, int budget,
                                     const WarmupConfig& warmup, std::uint64_t cap) {
  check_budget(horizon, budget);
  check_warmup(warmup, horizon);
  const auto count = count_subsets(horizon, budget, cap);
  if (count > cap) {
    throw ValidationError("exhaustive search refused: C(" + std::to_string(horizon) + "," + std::to_string(budget) +
                          ") exceeds the cap of " + std::to_string(cap) + " subsets");
  }

  const CovariancePropagator propagator(model, horizon);
  std::vector<int> times(static_cast<std::size_t>(budget));
  std::iota(times.begin(), times.end(), 0);
  std::vector<int> best = times;
  double best_value = propagator.evaluate(times, warmup);
  std::size_t evaluations = 1;
  const auto n = static_cast<std::size_t>(budget);
  while (true) {
    // Advance to the next combination in lexicographic order.
    std::size_t i = n;
    while (i > 0 && times[i - 1] == horizon - static_cast<int>(n - i) - 1) --i;
    if (i == 0) break;
    ++times[i - 1];
    for (std::size_t j = i; j < n; ++j) times[j] = times[j - 1] + 1;
    const double value = propagator.evaluate(times, warmup);
    ++evaluations;
    if (value < best_value - 1e-12 * std::abs(best_value)) {
      best_value = value;
      best = times;
    }
  }

  OptimizationResult out;
  out.best_schedule = Schedule(std::move(best), horizon);
  out.best_objective = objective(model, out.best_schedule, warmup);
  out.history = {out.best_objective};
  out.evaluations = evaluations;
  return out;
}

OptimizationResult genetic_search(const StateSpaceModel& model, int horizon, int budget,
                                  const WarmupConfig& warmup, const GaConfig& config) {
  validate(config);
  check_budget(horizon, budget);
  check_warmup(warmup, horizon);

  const CovariancePropagator propagator(model, horizon);
  const double mutation_rate = config.mutation_rate.value_or(1.0 / budget);
  const int workers = detail::resolve_workers(config.workers);
  std::mt19937_64 rng(config.rng_seed);
  std::uniform_int_distribution<int> any_time(0, horizon - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::map<Genome, double> memo;
  std::size_t evaluations = 0;
  // Fitness lookup is sequential; only cache misses are computed in parallel.
  auto evaluate = [&](std::vector<Individual>& pop) {
    std::vector<std::size_t> misses;
    std::map<Genome, std::size_t> pending;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (auto it = memo.find(pop[i].genes); it != memo.end()) {
        pop[i].fitness = it->second;
      } else if (pending.emplace(pop[i].genes, i).second) {
        misses.push_back(i);
      }
    }
    detail::parallel_for(misses.size(), workers, [&](std::size_t k) {
      auto& ind = pop[misses[k]];
      ind.fitness = propagator.evaluate(ind.genes, warmup);
    });
    evaluations += misses.size();
    for (std::size_t i : misses) memo.emplace(pop[i].genes, pop[i].fitness);
    for (auto& ind : pop) ind.fitness = memo.at(ind.genes);
  };

  const Schedule regular = regular_schedule(horizon, budget);
  OptimizationResult out;
  Individual best;

  if (config.seed_with_regular && config.generations == 0) {
    best.genes = regular.times();
  } else {
    std::vector<Individual> pop;
    pop.reserve(static_cast<std::size_t>(config.population_size));
    if (config.seed_with_regular) pop.push_back({regular.times(), 0.0});
    while (pop.size() < static_cast<std::size_t>(config.population_size)) {
      Genome g(static_cast<std::size_t>(budget));
      for (auto& t : g) t = any_time(rng);
      pop.push_back({repair_duplicates(std::move(g), horizon, rng).times(), 0.0});
    }
    evaluate(pop);

    auto by_fitness = [](const Individual& a, const Individual& b) { return a.fitness < b.fitness; };
    best = *std::min_element(pop.begin(), pop.end(), by_fitness);
    out.history.push_back(best.fitness);

    std::uniform_int_distribution<std::size_t> any_member(0, pop.size() - 1);
    auto tournament = [&]() -> const Individual& {
      std::size_t winner = any_member(rng);
      for (int k = 1; k < config.tournament_size; ++k) {
        const std::size_t challenger = any_member(rng);
        if (pop[challenger].fitness < pop[winner].fitness ||
            (pop[challenger].fitness == pop[winner].fitness && challenger < winner)) {
          winner = challenger;
        }
      }
      return pop[winner];
    };

    for (int gen = 0; gen < config.generations; ++gen) {
      std::vector<Individual> next;
      next.reserve(pop.size());
      std::vector<std::size_t> order(pop.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return pop[a].fitness < pop[b].fitness; });
      for (int e = 0; e < config.elitism_count; ++e) next.push_back(pop[order[static_cast<std::size_t>(e)]]);

      while (next.size() < pop.size()) {
        const Individual& first = tournament();
        Genome child = first.genes;
        if (unit(rng) < config.crossover_rate) {
          const Individual& second = tournament();
          for (std::size_t i = 0; i < child.size(); ++i) {
            if (unit(rng) < 0.5) child[i] = second.genes[i];
          }
        }
        for (auto& t : child) {
          if (unit(rng) < mutation_rate) t = any_time(rng);
        }
        next.push_back({repair_duplicates(std::move(child), horizon, rng).times(), 0.0});
      }
      pop = std::move(next);
      evaluate(pop);
      const auto& gen_best = *std::min_element(pop.begin(), pop.end(), by_fitness);
      if (gen_best.fitness < best.fitness) best = gen_best;
      out.history.push_back(best.fitness);
    }
  }

  out.best_schedule = Schedule(best.genes, horizon);
  out.best_objective = objective(model, out.best_schedule, warmup);
  if (config.seed_with_regular) {
    const double regular_value = objective(model, regular, warmup);
    if (regular_value < out.best_objective) {
      out.best_schedule = regular;
      out.best_objective = regular_value;
    }
    if (out.history.empty()) out.history.push_back(regular_value);
  }
  out.evaluations = evaluations;
  return out;
}

}  // namespace ikp
