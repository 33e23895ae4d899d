#include "ikp/predictor.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>

namespace ikp {
namespace {

Mat inverse_spd(const Mat& m) {
  return m.llt().solve(Mat::Identity(m.rows(), m.cols()));
}

void check_cov_shape(const StateSpaceModel& model, const Mat& p) {
  if (p.rows() != model.state_dim() || p.cols() != model.state_dim()) {
    throw ValidationError("covariance is " + std::to_string(p.rows()) + "x" + std::to_string(p.cols()) +
                          ", model state dimension is " + std::to_string(model.state_dim()));
  }
}

}  // namespace

Mat time_update_cov(const StateSpaceModel& model, const Mat& post_cov) {
  check_cov_shape(model, post_cov);
  return symmetrize(model.A * post_cov * model.A.transpose() + model.G * model.Q * model.G.transpose());
}

Mat measure_update_cov_gain_form(const StateSpaceModel& model, const Mat& prior_cov) {
  check_cov_shape(model, prior_cov);
  const Mat pct = prior_cov * model.C.transpose();
  const Mat innov = symmetrize(model.C * pct + model.R);
  return symmetrize(prior_cov - pct * innov.llt().solve(pct.transpose()));
}

Mat measure_update_cov(const StateSpaceModel& model, const Mat& prior_cov, bool measured) {
  check_cov_shape(model, prior_cov);
  if (!measured) return prior_cov;

  const Eigen::SelfAdjointEigenSolver<Mat> es(prior_cov);
  const Vec& ev = es.eigenvalues();
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  if (!(lo > 0.0) || hi > kInformationFormMaxCondition * lo) {
    return measure_update_cov_gain_form(model, prior_cov);
  }
  const Mat& v = es.eigenvectors();
  const Mat prior_info = v * ev.cwiseInverse().asDiagonal() * v.transpose();
  const Mat meas_info = model.C.transpose() * model.R.llt().solve(model.C);
  return symmetrize(inverse_spd(symmetrize(prior_info + meas_info)));
}

CovarianceTrace run_covariance(const StateSpaceModel& model, const Schedule& schedule) {
  const int horizon = schedule.horizon();
  const auto mask = schedule.mask();
  CovarianceTrace out;
  out.prior_cov.reserve(static_cast<std::size_t>(horizon) + 1);
  out.prior_cov.push_back(model.x0_cov);
  for (int t = 0; t < horizon; ++t) {
    const Mat post = measure_update_cov(model, out.prior_cov.back(), mask[static_cast<std::size_t>(t)] != 0);
    out.prior_cov.push_back(time_update_cov(model, post));
  }
  return out;
}

double objective(const StateSpaceModel& model, const Schedule& schedule, const WarmupConfig& warmup) {
  if (warmup.t0 < 0 || warmup.t0 >= schedule.horizon()) {
    throw ValidationError("warm-up t0=" + std::to_string(warmup.t0) + " outside [0, " +
                          std::to_string(schedule.horizon() - 1) + "]");
  }
  const auto trace = run_covariance(model, schedule);
  double sum = 0.0;
  for (int t = warmup.t0 + 1; t <= schedule.horizon(); ++t) {
    sum += (model.C * trace.prior_cov[static_cast<std::size_t>(t)] * model.C.transpose()).trace();
  }
  return sum;
}

CovariancePropagator::CovariancePropagator(const StateSpaceModel& model, int horizon)
    : model_(model), horizon_(horizon) {
  if (horizon < 1) throw ValidationError("propagator horizon must be positive");
  const int n = model.state_dim();
  const auto steps = static_cast<std::size_t>(horizon) + 1;
  const Mat gqg = symmetrize(model.G * model.Q * model.G.transpose());
  const Mat ctc = model.C.transpose() * model.C;

  powers_.reserve(steps);
  noise_.reserve(steps);
  weight_sum_.reserve(steps);
  noise_trace_sum_.reserve(steps);
  powers_.push_back(Mat::Identity(n, n));
  noise_.push_back(Mat::Zero(n, n));
  weight_sum_.push_back(Mat::Zero(n, n));
  noise_trace_sum_.push_back(0.0);
  for (std::size_t k = 1; k < steps; ++k) {
    powers_.push_back(model.A * powers_.back());
    noise_.push_back(symmetrize(model.A * noise_.back() * model.A.transpose() + gqg));
    const Mat& ak = powers_.back();
    weight_sum_.push_back(weight_sum_.back() + symmetrize(ak.transpose() * ctc * ak));
    noise_trace_sum_.push_back(noise_trace_sum_.back() + (model.C * noise_.back() * model.C.transpose()).trace());
  }
}

double CovariancePropagator::gap_sum(const Mat& post, int anchor, int lo, int hi) const {
  if (lo > hi) return 0.0;
  const auto k1 = static_cast<std::size_t>(lo - anchor);
  const auto k2 = static_cast<std::size_t>(hi - anchor);
  return post.cwiseProduct(weight_sum_[k2]).sum() - post.cwiseProduct(weight_sum_[k1 - 1]).sum() +
         (noise_trace_sum_[k2] - noise_trace_sum_[k1 - 1]);
}

double CovariancePropagator::evaluate(std::span<const int> times, const WarmupConfig& warmup) const {
  const int first_counted = warmup.t0 + 1;
  const Eigen::Index n = model_.state_dim();
  const Eigen::Index m = model_.output_dim();
  Mat post = model_.x0_cov;
  Mat prior(n, n);
  Mat tmp(n, n);
  Mat pct(n, m);
  Mat gain(m, n);
  Mat innov(m, m);
  Eigen::LLT<Mat> llt(m);
  // Covariance-form update P - P C' (C P C' + R)^-1 C P, in place on `post`.
  auto update = [&](const Mat& p) {
    pct.noalias() = p * model_.C.transpose();
    innov.noalias() = model_.C * pct;
    innov += model_.R;
    llt.compute(innov);
    gain = llt.solve(pct.transpose());
    tmp = p;
    tmp.noalias() -= pct * gain;
    post = 0.5 * (tmp + tmp.transpose());
  };

  std::size_t i = 0;
  int anchor = 0;
  if (!times.empty() && times.front() == 0) {
    prior = post;
    update(prior);
    i = 1;
  }
  double sum = 0.0;
  for (; i < times.size(); ++i) {
    const int t = times[i];
    sum += gap_sum(post, anchor, std::max(anchor + 1, first_counted), t);
    const auto k = static_cast<std::size_t>(t - anchor);
    tmp.noalias() = powers_[k] * post;
    prior.noalias() = tmp * powers_[k].transpose();
    prior += noise_[k];
    update(prior);
    anchor = t;
  }
  sum += gap_sum(post, anchor, std::max(anchor + 1, first_counted), horizon_);
  return sum;
}

BeliefTrajectory run_predictor(const StateSpaceModel& model, const Schedule& schedule,
                               std::span<const Measurement> measurements) {
  const int horizon = schedule.horizon();
  const int m = model.output_dim();
  std::vector<const Vec*> z(static_cast<std::size_t>(horizon), nullptr);
  for (const auto& meas : measurements) {
    if (!schedule.contains(meas.time)) {
      throw ValidationError("measurement at t=" + std::to_string(meas.time) + " is not in the schedule");
    }
    if (meas.z.size() != m) {
      throw ValidationError("measurement at t=" + std::to_string(meas.time) + " has dimension " +
                            std::to_string(meas.z.size()) + ", expected " + std::to_string(m));
    }
    auto& slot = z[static_cast<std::size_t>(meas.time)];
    if (slot != nullptr) throw ValidationError("duplicate measurement at t=" + std::to_string(meas.time));
    slot = &meas.z;
  }
  for (int t : schedule.times()) {
    if (z[static_cast<std::size_t>(t)] == nullptr) {
      throw ValidationError("scheduled time t=" + std::to_string(t) + " has no measurement");
    }
  }

  const Mat r_inv = inverse_spd(model.R);
  BeliefTrajectory out;
  const auto steps = static_cast<std::size_t>(horizon) + 1;
  out.prior_mean.reserve(steps);
  out.prior_cov.reserve(steps);
  out.post_mean.reserve(steps);
  out.post_cov.reserve(steps);
  out.pred_pos.reserve(steps);
  out.post_pos.reserve(steps);
  out.measured.assign(steps, 0);

  Vec x = model.x0_mean;
  Mat p = model.x0_cov;
  for (std::size_t t = 0; t < steps; ++t) {
    out.prior_mean.push_back(x);
    out.prior_cov.push_back(p);
    out.pred_pos.push_back(model.C * x + model.d);
    const Vec* zt = t < static_cast<std::size_t>(horizon) ? z[t] : nullptr;
    if (zt != nullptr) {
      out.measured[t] = 1;
      p = measure_update_cov(model, p, true);
      x = x + p * model.C.transpose() * r_inv * (*zt - model.d - model.C * x);
    }
    out.post_mean.push_back(x);
    out.post_cov.push_back(p);
    out.post_pos.push_back(model.C * x + model.d);
    if (t + 1 < steps) {
      x = model.A * x + model.b;
      p = time_update_cov(model, p);
    }
  }
  return out;
}

void write_belief_csv(std::ostream& os, const StateSpaceModel& model, const BeliefTrajectory& belief) {
  const int m = model.output_dim();
  os << "t";
  for (int i = 1; i <= m; ++i) os << ",pred_pos_" << i;
  for (int i = 1; i <= m; ++i) os << ",post_pos_" << i;
  os << ",trace_prior,measured\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t t = 0; t < belief.size(); ++t) {
    os << t;
    for (int i = 0; i < m; ++i) os << ',' << belief.pred_pos[t](i);
    for (int i = 0; i < m; ++i) os << ',' << belief.post_pos[t](i);
    os << ',' << (model.C * belief.prior_cov[t] * model.C.transpose()).trace();
    os << ',' << static_cast<int>(belief.measured[t]) << '\n';
  }
}

}  // namespace ikp
