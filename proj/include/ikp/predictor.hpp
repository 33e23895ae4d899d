// Intermittent Kalman predictor: covariance recursion, schedule objective and
// the full state recursion driven by measurements taken only at scheduled times.
#pragma once

#include "ikp/model.hpp"

#include <iosfwd>
#include <span>
#include <vector>

namespace ikp {

/// Above this condition number of P(t|t-1) the information-form update is
/// replaced by the covariance form P - P C' (C P C' + R)^-1 C P.
inline constexpr double kInformationFormMaxCondition = 1e12;

/// P(t+1|t) = A P(t|t) A' + G Q G', symmetrized.
[[nodiscard]] Mat time_update_cov(const StateSpaceModel& model, const Mat& post_cov);

/// P(t|t) = [P(t|t-1)^-1 + C' R^-1 C]^-1 if measured, else P(t|t-1) unchanged.
[[nodiscard]] Mat measure_update_cov(const StateSpaceModel& model, const Mat& prior_cov, bool measured);

/// Covariance-form measurement update, used as fallback and as an independent route in tests.
[[nodiscard]] Mat measure_update_cov_gain_form(const StateSpaceModel& model, const Mat& prior_cov);

struct CovarianceTrace {
  /// P(t|t-1) for t = 0..T (T+1 entries); prior_cov[0] = x0_cov.
  std::vector<Mat> prior_cov;
};

/// Measurement-free covariance recursion over the schedule horizon.
[[nodiscard]] CovarianceTrace run_covariance(const StateSpaceModel& model, const Schedule& schedule);

/// Sum over t = t0+1 .. T of Tr[C P(t|t-1) C'].
[[nodiscard]] double objective(const StateSpaceModel& model, const Schedule& schedule, const WarmupConfig& warmup);

/**
 * Segment-wise evaluator of the schedule objective.
 *
 * Between two measurements the prior covariance k steps after a posterior X is
 * A^k X A^k' + S_k with S_k the accumulated process noise, so the traces summed
 * over a gap reduce to Tr[X W] + c using prefix sums W, c precomputed once for
 * the model and horizon. Evaluation then costs O(N n^3) instead of O(T n^3).
 * Immutable after construction; evaluate() may be called concurrently.
 */
class CovariancePropagator {
 public:
  CovariancePropagator(const StateSpaceModel& model, int horizon);

  /// `times` must be strictly increasing inside [0, horizon).
  [[nodiscard]] double evaluate(std::span<const int> times, const WarmupConfig& warmup) const;
  [[nodiscard]] double evaluate(const Schedule& schedule, const WarmupConfig& warmup) const {
    return evaluate(schedule.times(), warmup);
  }

  [[nodiscard]] int horizon() const { return horizon_; }
  [[nodiscard]] const StateSpaceModel& model() const { return model_; }

 private:
  // Sum over t in [lo, hi] of Tr[C P(t|t-1) C'] for a gap anchored at posterior `post` at time `anchor`.
  [[nodiscard]] double gap_sum(const Mat& post, int anchor, int lo, int hi) const;

  StateSpaceModel model_;
  int horizon_;
  std::vector<Mat> powers_;      // A^k
  std::vector<Mat> noise_;       // sum_{j<k} A^j GQG' A^j'
  std::vector<Mat> weight_sum_;  // sum_{j=1..k} A^j' C'C A^j
  std::vector<double> noise_trace_sum_;  // sum_{j=1..k} Tr[C noise_j C']
};

struct Measurement {
  int time = 0;
  Vec z;
};

/// Per-step belief of the intermittent predictor, t = 0..T.
struct BeliefTrajectory {
  std::vector<Vec> prior_mean;  // x(t|t-1)
  std::vector<Mat> prior_cov;   // P(t|t-1)
  std::vector<Vec> post_mean;   // x(t|t)
  std::vector<Mat> post_cov;    // P(t|t)
  std::vector<Vec> pred_pos;    // C x(t|t-1) + d
  std::vector<Vec> post_pos;    // C x(t|t) + d
  std::vector<char> measured;   // 1 where t is in the schedule

  [[nodiscard]] std::size_t size() const { return prior_mean.size(); }
};

/**
 * Runs the intermittent predictor over t = 0..T. `measurements` must carry
 * exactly the schedule's times (any order); throws ValidationError otherwise.
 */
[[nodiscard]] BeliefTrajectory run_predictor(const StateSpaceModel& model, const Schedule& schedule,
                                             std::span<const Measurement> measurements);

/// CSV: t, pred_pos_1..m, post_pos_1..m, trace_prior, measured.
void write_belief_csv(std::ostream& os, const StateSpaceModel& model, const BeliefTrajectory& belief);

}  // namespace ikp
