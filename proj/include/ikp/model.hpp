// State-space model and measurement schedule types shared across the library.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ikp {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Thrown for invalid inputs (bad dimensions, infeasible budgets, malformed files).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a numerical procedure cannot proceed (e.g. EM log-likelihood decrease).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/**
 * Linear Gaussian state-space model
 *
 *   x(t+1) = A x(t) + b + G w(t),   w ~ N(0, Q)
 *   z(t)   = C x(t) + d + v(t),     v ~ N(0, R)
 *   x(0)   ~ N(x0_mean, x0_cov)
 *
 * The covariance members are symmetrized by make_model(); use validate_model()
 * for the full consistency report.
 */
struct StateSpaceModel {
  Mat A;
  Vec b;
  Mat G;
  Mat Q;
  Mat C;
  Vec d;
  Mat R;
  Vec x0_mean;
  Mat x0_cov;

  [[nodiscard]] int state_dim() const { return static_cast<int>(A.rows()); }
  [[nodiscard]] int output_dim() const { return static_cast<int>(C.rows()); }
  [[nodiscard]] int noise_dim() const { return static_cast<int>(Q.rows()); }
};

struct ValidationResult {
  std::vector<std::string> violations;

  [[nodiscard]] bool ok() const { return violations.empty(); }
};

/// Relative Frobenius asymmetry tolerance applied before symmetrizing.
inline constexpr double kSymmetryTolerance = 1e-9;
/// Eigenvalue floor (relative to the largest eigenvalue) for PSD checks.
inline constexpr double kPsdTolerance = 1e-9;

[[nodiscard]] Mat symmetrize(const Mat& m);

/// Checks dimensions, symmetry and definiteness. Never throws.
[[nodiscard]] ValidationResult validate_model(const StateSpaceModel& model);

/// Symmetrizes Q, R, x0_cov and validates; throws ValidationError listing all violations.
[[nodiscard]] StateSpaceModel make_model(StateSpaceModel model);

/// Sorted, duplicate-free set of measurement times within [0, horizon).
class Schedule {
 public:
  Schedule() = default;
  /// Throws ValidationError unless `times` is strictly increasing inside [0, horizon).
  Schedule(std::vector<int> times, int horizon);

  /// Sorts `times` first; still rejects duplicates and out-of-range entries.
  static Schedule from_unsorted(std::vector<int> times, int horizon);

  [[nodiscard]] const std::vector<int>& times() const { return times_; }
  [[nodiscard]] int horizon() const { return horizon_; }
  [[nodiscard]] int budget() const { return static_cast<int>(times_.size()); }
  [[nodiscard]] bool contains(int t) const;
  /// Per-step indicator of length horizon().
  [[nodiscard]] std::vector<char> mask() const;

  friend bool operator==(const Schedule&, const Schedule&) = default;

 private:
  std::vector<int> times_;
  int horizon_ = 0;
};

/// Warm-up end: the objective and benchmark errors count steps t0+1 .. T.
struct WarmupConfig {
  int t0 = 0;
};

/// N evenly spread times, times[i] = floor(i*T/N).
[[nodiscard]] Schedule regular_schedule(int horizon, int budget);

/// Full schedule {0, ..., T-1}.
[[nodiscard]] Schedule full_schedule(int horizon);

}  // namespace ikp
