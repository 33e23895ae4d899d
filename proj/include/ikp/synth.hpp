// Trajectory generation: mass-spring process, model-driven sampling, a
// respiratory-motion surrogate, measurement-noise injection and CSV I/O.
#pragma once

#include "ikp/model.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <utility>
#include <vector>

namespace ikp {

/// Position sequences in mm, one m-vector per step.
struct Trajectory {
  double dt = 1.0;
  std::vector<Vec> truth;
  /// Empty until noise is injected (or sampled alongside the truth).
  std::vector<Vec> noisy;

  [[nodiscard]] std::size_t size() const { return truth.size(); }
  [[nodiscard]] int dim() const { return truth.empty() ? 0 : static_cast<int>(truth.front().size()); }
  [[nodiscard]] bool has_noisy() const { return !noisy.empty(); }
};

struct MassSpringConfig {
  double mass_kg = 0.0015;
  double stiffness_N_per_m = 0.000825;
  double delta_s = 0.01;
  int steps_T = 6000;
  /// Power spectral density of the random force.
  double q_psd = 0.05;
  /// Measurement-noise variance (mm^2).
  double r_var = 0.05;
  std::uint64_t rng_seed = 0;
  /// Initial (elongation, velocity); the elongation is in mm.
  Vec x0_mean = (Vec(2) << 1.0, 0.0).finished();
  Mat x0_cov = Mat::Zero(2, 2);
};

void validate(const MassSpringConfig& config);

/// k such that 2*pi*sqrt(m/k) equals `period_s`.
[[nodiscard]] double stiffness_for_period(double mass_kg, double period_s);

/**
 * Explicit-Euler discretization of m y'' = -k y + w:
 *   x(n+1) = (I + A delta) x(n) + G w(n),  w(n) ~ N(0, q delta),
 * A = [[0, 1], [-k/m, 0]], G = (0, 1/m)', C = (1, 0), R = r_var.
 * The recurrence is (mildly) unstable; no exact discretization is attempted.
 */
[[nodiscard]] StateSpaceModel mass_spring_model(const MassSpringConfig& config);

/// Samples the mass-spring process; returns the trajectory (truth and R-noisy) and the model used.
[[nodiscard]] std::pair<Trajectory, StateSpaceModel> simulate_mass_spring(const MassSpringConfig& config);

/**
 * Samples x(0) ~ N(x0_mean, x0_cov), iterates the state equation and emits
 * y(t) = C x(t) + d as truth and z(t) = y(t) + v(t), v ~ N(0, R) as noisy,
 * for t = 0..steps-1.
 */
[[nodiscard]] Trajectory simulate_model(const StateSpaceModel& model, int steps, std::uint64_t rng_seed,
                                        double dt = 1.0);

/// Returns a copy with noisy = truth + N(0, sigma2 I); truth untouched.
[[nodiscard]] Trajectory inject_noise(const Trajectory& traj, double sigma2_mm2, std::uint64_t rng_seed);

/// Draw from N(mean, cov) with a possibly singular PSD covariance.
[[nodiscard]] Vec sample_gaussian(const Vec& mean, const Mat& cov, std::mt19937_64& rng);

/**
 * Synthetic 3-axis breathing trace: per axis a fundamental and a first
 * harmonic plus a constant offset, with a slowly wandering breathing phase
 * and amplitude so cycles are not identical.
 */
struct SurrogateConfig {
  int steps = 1401;
  double dt = 1.0 / 30.0;
  double base_frequency_hz = 0.25;
  /// Fundamental / harmonic amplitudes (mm) per axis (lateral, cephalocaudal, anteroposterior).
  std::vector<double> fundamental_mm{1.5, 7.0, 3.0};
  std::vector<double> harmonic_mm{0.4, 2.5, 1.0};
  std::vector<double> offset_mm{0.5, -2.0, 1.0};
  /// Per-step standard deviation of the breathing-phase random walk (rad).
  double phase_jitter = 0.004;
  /// Per-step standard deviation of the log-amplitude random walk.
  double amplitude_jitter = 0.002;
  std::uint64_t rng_seed = 0;
};

[[nodiscard]] Trajectory respiratory_surrogate(const SurrogateConfig& config);

/// Format: a `dt=<seconds>` header, then one comma-separated row of axis values per step.
[[nodiscard]] Trajectory read_trajectory_csv(std::istream& is);
[[nodiscard]] Trajectory load_trajectory_csv(const std::filesystem::path& path);

/// Writes `rows` (truth by default) with 17 significant digits; exact inverse of the reader.
void write_trajectory_csv(std::ostream& os, double dt, const std::vector<Vec>& rows);
void write_trajectory_csv(const std::filesystem::path& path, double dt, const std::vector<Vec>& rows);

}  // namespace ikp
