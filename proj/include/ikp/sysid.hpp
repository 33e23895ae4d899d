// Maximum-likelihood identification of a StateSpaceModel from a regularly
// sampled output sequence by expectation maximization (Kalman filter + RTS
// smoother E-step, closed-form M-step).
#pragma once

#include "ikp/model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ikp {

/// Moments of the states given every observation.
struct SmoothedBelief {
  std::vector<Vec> smooth_mean;
  std::vector<Mat> smooth_cov;
  /// Cov(x(t), x(t-1) | all data); entry 0 is zero.
  std::vector<Mat> lag_one_cov;
  std::vector<Vec> filtered_mean;
  std::vector<Mat> filtered_cov;
  /// x(t|t-1), P(t|t-1) of the forward pass.
  std::vector<Vec> predicted_mean;
  std::vector<Mat> predicted_cov;
};

struct EStepResult {
  SmoothedBelief belief;
  double loglik = 0.0;
  /// Steps whose innovation covariance needed diagonal loading.
  int regularized_steps = 0;
};

/// Forward filter on every observation followed by the fixed-interval smoother.
[[nodiscard]] EStepResult e_step(const StateSpaceModel& model, std::span<const Vec> observations);

/// Exact Gaussian log-likelihood of the observations under `model`.
[[nodiscard]] double log_likelihood(const StateSpaceModel& model, std::span<const Vec> observations);

struct MStepResult {
  StateSpaceModel model;
  /// Normal-equation solves that needed ridge loading.
  int ridge_events = 0;
};

/**
 * Closed-form maximizer of the expected complete-data log-likelihood.
 * (A, b) and (C, d) are regressions on the state augmented with a constant 1;
 * G is fixed to the identity so Q carries the full process-noise covariance.
 */
[[nodiscard]] MStepResult m_step(const SmoothedBelief& stats, std::span<const Vec> observations,
                                 const StateSpaceModel& prev);

struct EmConfig {
  int state_dim_n = 2;
  int max_iters = 200;
  double loglik_rel_tol = 1e-7;
  std::uint64_t rng_seed = 0;
  /// Extra EM runs from other initial transitions (see initial_model); the highest final log-likelihood wins.
  int restarts = 0;
};

void validate(const EmConfig& config);

/// Allowed relative log-likelihood drop per EM iteration before fit() aborts.
inline constexpr double kEmMonotoneTolerance = 1e-9;

struct EmDiagnostics {
  /// Log-likelihood of each iterate, starting with the initial model.
  std::vector<double> loglik_history;
  int iterations = 0;
  bool converged = false;
  int state_dim = 0;
  int ridge_events = 0;
  int regularized_steps = 0;
  /// Which start produced the returned model (0 is the default initialization).
  int start = 0;
};

struct FitResult {
  StateSpaceModel model;
  EmDiagnostics diagnostics;
};

/**
 * Deterministic (given the seed) starting point for EM. Start 0 uses A = 0.95 I,
 * start 1 uses A = -0.95 I, later starts 0.95 times a random orthogonal
 * matrix; every start after 0 draws a fresh C.
 */
[[nodiscard]] StateSpaceModel initial_model(std::span<const Vec> observations, int state_dim, std::uint64_t rng_seed,
                                            int start = 0);

/**
 * Runs EM until the relative log-likelihood gain drops below the tolerance or
 * max_iters is reached, once per start (1 + restarts). Requires at least 10*n
 * observations. Throws NumericalError if an iteration lowers the
 * log-likelihood beyond kEmMonotoneTolerance.
 */
[[nodiscard]] FitResult fit(std::span<const Vec> observations, const EmConfig& config);

struct ModelSelection {
  FitResult fit;
  std::vector<int> candidates;
  std::vector<double> holdout_rms;
};

/**
 * Fits every candidate state dimension on the leading part of the window,
 * scores the one-step RMS on the trailing `holdout_fraction`, then refits the
 * winner on the whole window.
 */
[[nodiscard]] ModelSelection select_and_fit(std::span<const Vec> observations, const EmConfig& config,
                                            std::span<const int> candidates, double holdout_fraction = 0.2);

/// RMS of z(t) - (C x(t|t-1) + d) over t >= from_t, filtering every observation.
[[nodiscard]] double one_step_rms(const StateSpaceModel& model, std::span<const Vec> observations, std::size_t from_t);

/**
 * Copy of `model` whose initial belief is the one-step-ahead prediction after
 * filtering `observations`, i.e. the belief at the step that follows them.
 */
[[nodiscard]] StateSpaceModel continue_after(const StateSpaceModel& model, std::span<const Vec> observations);

}  // namespace ikp
