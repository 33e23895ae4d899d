#include "ikp/sysid.hpp"

#include "ikp/detail/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

namespace ikp {
namespace {

constexpr double kMaxInnovationCondition = 1e12;
constexpr double kInnovationLoading = 1e-10;
constexpr double kRidge = 1e-8;
constexpr double kMaxNormalCondition = 1e12;
constexpr double kNoiseFloor = 1e-10;

void check_observations(std::span<const Vec> obs, const StateSpaceModel& model, std::size_t min_len) {
  if (obs.size() < min_len) {
    throw ValidationError("need at least " + std::to_string(min_len) + " observations, got " + std::to_string(obs.size()));
  }
  for (std::size_t t = 0; t < obs.size(); ++t) {
    if (obs[t].size() != model.output_dim()) {
      throw ValidationError("observation " + std::to_string(t) + " has dimension " + std::to_string(obs[t].size()) +
                            ", model output dimension is " + std::to_string(model.output_dim()));
    }
  }
}

// X B^-1 for symmetric PSD B; pseudo-inverse when B is singular.
Mat right_solve_psd(const Mat& x, const Mat& b) {
  const Eigen::LLT<Mat> llt(b);
  if (llt.info() == Eigen::Success) {
    const double diag_min = llt.matrixLLT().diagonal().minCoeff();
    const double diag_max = llt.matrixLLT().diagonal().maxCoeff();
    if (diag_min > 1e-7 * diag_max) return llt.solve(x.transpose()).transpose();
  }
  return b.completeOrthogonalDecomposition().solve(x.transpose()).transpose();
}

// Solves X * normal = rhs with ridge loading when `normal` is ill-conditioned.
Mat regress(const Mat& rhs, Mat normal, int& ridge_events) {
  const Eigen::SelfAdjointEigenSolver<Mat> es(normal, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi > kMaxNormalCondition * lo) {
    normal += kRidge * Mat::Identity(normal.rows(), normal.cols());
    ++ridge_events;
  }
  return normal.llt().solve(rhs.transpose()).transpose();
}

// Maximizer of the Gaussian likelihood over R >= floor * I: clamp the eigenvalues.
Mat clamp_eigenvalues(const Mat& cov, double floor) {
  const Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  if (es.eigenvalues().minCoeff() >= floor) return cov;
  const Vec clamped = es.eigenvalues().cwiseMax(floor);
  return symmetrize(es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose());
}

struct ForwardPass {
  std::vector<Vec> predicted_mean, filtered_mean;
  std::vector<Mat> predicted_cov, filtered_cov;
  double loglik = 0.0;
  int regularized_steps = 0;
};

ForwardPass forward_filter(const StateSpaceModel& model, std::span<const Vec> obs) {
  const auto steps = obs.size();
  const int m = model.output_dim();
  const Mat gqg = symmetrize(model.G * model.Q * model.G.transpose());
  const double log_two_pi = std::log(2.0 * std::numbers::pi);

  ForwardPass out;
  out.predicted_mean.reserve(steps);
  out.predicted_cov.reserve(steps);
  out.filtered_mean.reserve(steps);
  out.filtered_cov.reserve(steps);
  Vec x = model.x0_mean;
  Mat p = model.x0_cov;
  for (std::size_t t = 0; t < steps; ++t) {
    out.predicted_mean.push_back(x);
    out.predicted_cov.push_back(p);

    const Vec innov = obs[t] - model.d - model.C * x;
    const Mat pct = p * model.C.transpose();
    Mat s = symmetrize(model.C * pct + model.R);
    const Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 0.0) ||
        es.eigenvalues().maxCoeff() > kMaxInnovationCondition * es.eigenvalues().minCoeff()) {
      s += kInnovationLoading * s.trace() / m * Mat::Identity(m, m);
      ++out.regularized_steps;
    }
    const Eigen::LLT<Mat> llt(s);
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    out.loglik -= 0.5 * (m * log_two_pi + log_det + innov.dot(llt.solve(innov)));

    const Mat gain = llt.solve(pct.transpose()).transpose();
    x = x + gain * innov;
    p = symmetrize(p - gain * pct.transpose());
    out.filtered_mean.push_back(x);
    out.filtered_cov.push_back(p);

    x = model.A * x + model.b;
    p = symmetrize(model.A * p * model.A.transpose() + gqg);
  }
  return out;
}

}  // namespace

void validate(const EmConfig& c) {
  if (c.state_dim_n < 1) throw ValidationError("state_dim_n must be positive");
  if (c.max_iters < 1) throw ValidationError("max_iters must be positive");
  if (!(c.loglik_rel_tol > 0.0)) throw ValidationError("loglik_rel_tol must be positive");
  if (c.restarts < 0) throw ValidationError("restarts must be non-negative");
}

double log_likelihood(const StateSpaceModel& model, std::span<const Vec> observations) {
  check_observations(observations, model, 1);
  return forward_filter(model, observations).loglik;
}

EStepResult e_step(const StateSpaceModel& model, std::span<const Vec> observations) {
  check_observations(observations, model, 2);
  auto fwd = forward_filter(model, observations);
  const auto steps = observations.size();
  const int n = model.state_dim();

  EStepResult out;
  out.loglik = fwd.loglik;
  out.regularized_steps = fwd.regularized_steps;
  auto& sb = out.belief;
  sb.smooth_mean.resize(steps);
  sb.smooth_cov.resize(steps);
  sb.lag_one_cov.assign(steps, Mat::Zero(n, n));
  sb.smooth_mean[steps - 1] = fwd.filtered_mean[steps - 1];
  sb.smooth_cov[steps - 1] = fwd.filtered_cov[steps - 1];
  for (std::size_t t = steps - 1; t-- > 0;) {
    // J = P(t|t) A' P(t+1|t)^-1
    const Mat gain = right_solve_psd(fwd.filtered_cov[t] * model.A.transpose(), fwd.predicted_cov[t + 1]);
    sb.smooth_mean[t] = fwd.filtered_mean[t] + gain * (sb.smooth_mean[t + 1] - fwd.predicted_mean[t + 1]);
    sb.smooth_cov[t] = symmetrize(fwd.filtered_cov[t] +
                                  gain * (sb.smooth_cov[t + 1] - fwd.predicted_cov[t + 1]) * gain.transpose());
    sb.lag_one_cov[t + 1] = sb.smooth_cov[t + 1] * gain.transpose();
  }
  sb.filtered_mean = std::move(fwd.filtered_mean);
  sb.filtered_cov = std::move(fwd.filtered_cov);
  sb.predicted_mean = std::move(fwd.predicted_mean);
  sb.predicted_cov = std::move(fwd.predicted_cov);
  return out;
}

MStepResult m_step(const SmoothedBelief& stats, std::span<const Vec> observations, const StateSpaceModel& prev) {
  check_observations(observations, prev, 2);
  const auto steps = observations.size();
  if (stats.smooth_mean.size() != steps) throw ValidationError("smoothed statistics do not match the observations");
  const int n = prev.state_dim();
  const int m = prev.output_dim();

  // Second moments of the augmented state [x; 1].
  auto augmented_moment = [&](std::size_t t) {
    Mat out(n + 1, n + 1);
    const Vec& mu = stats.smooth_mean[t];
    out.topLeftCorner(n, n) = stats.smooth_cov[t] + mu * mu.transpose();
    out.topRightCorner(n, 1) = mu;
    out.bottomLeftCorner(1, n) = mu.transpose();
    out(n, n) = 1.0;
    return out;
  };

  Mat s_prev = Mat::Zero(n + 1, n + 1);  // sum_{t<T-1} E[xi_t xi_t']
  Mat s_all = Mat::Zero(n + 1, n + 1);   // sum_t E[xi_t xi_t']
  Mat s_cross = Mat::Zero(n, n + 1);     // sum_{t>=1} E[x_t xi_{t-1}']
  Mat s_next = Mat::Zero(n, n);          // sum_{t>=1} E[x_t x_t']
  Mat s_out = Mat::Zero(m, n + 1);       // sum_t z_t E[xi_t]'
  Mat s_zz = Mat::Zero(m, m);
  for (std::size_t t = 0; t < steps; ++t) {
    const Mat xi = augmented_moment(t);
    s_all += xi;
    if (t + 1 < steps) s_prev += xi;
    if (t >= 1) {
      s_next += xi.topLeftCorner(n, n);
      const Vec& mu = stats.smooth_mean[t];
      s_cross.leftCols(n) += stats.lag_one_cov[t] + mu * stats.smooth_mean[t - 1].transpose();
      s_cross.col(n) += mu;
    }
    const Vec& z = observations[t];
    s_out.leftCols(n) += z * stats.smooth_mean[t].transpose();
    s_out.col(n) += z;
    s_zz += z * z.transpose();
  }

  MStepResult out;
  auto& model = out.model;
  const Mat ab = regress(s_cross, symmetrize(s_prev), out.ridge_events);
  model.A = ab.leftCols(n);
  model.b = ab.col(n);
  model.G = Mat::Identity(n, n);
  model.Q = symmetrize(s_next - ab * s_cross.transpose()) / static_cast<double>(steps - 1);

  const Mat cd = regress(s_out, symmetrize(s_all), out.ridge_events);
  model.C = cd.leftCols(n);
  model.d = cd.col(n);
  model.R = symmetrize(s_zz - cd * s_out.transpose()) / static_cast<double>(steps);
  const double scale = std::max(1.0, s_zz.trace() / static_cast<double>(steps) / static_cast<double>(m));
  model.R = clamp_eigenvalues(model.R, kNoiseFloor * scale);

  model.x0_mean = stats.smooth_mean[0];
  model.x0_cov = symmetrize(stats.smooth_cov[0]);
  return out;
}

StateSpaceModel initial_model(std::span<const Vec> observations, int state_dim, std::uint64_t rng_seed, int start) {
  if (observations.size() < 2) throw ValidationError("need at least 2 observations to initialise EM");
  const int n = state_dim;
  const auto m = observations.front().size();
  const auto steps = static_cast<double>(observations.size());

  Vec mean = Vec::Zero(m);
  for (const auto& z : observations) mean += z;
  mean /= steps;
  Mat diff_cov = Mat::Zero(m, m);
  for (std::size_t t = 1; t < observations.size(); ++t) {
    const Vec dz = observations[t] - observations[t - 1];
    diff_cov += dz * dz.transpose();
  }
  diff_cov /= steps - 1.0;
  // Keep the noise guesses strictly positive even for constant data.
  const double floor = 1e-6 * std::max(1.0, mean.squaredNorm() / static_cast<double>(m));
  diff_cov += floor * Mat::Identity(m, m);

  std::mt19937_64 rng(start == 0 ? rng_seed : detail::derive_seed(rng_seed, {static_cast<std::uint64_t>(start)}));
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat raw(std::max<Eigen::Index>(m, n), std::min<Eigen::Index>(m, n));
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = normal(rng);
  const Mat basis = Eigen::HouseholderQR<Mat>(raw).householderQ() * Mat::Identity(raw.rows(), raw.cols());

  StateSpaceModel model;
  model.C = m <= n ? Mat(basis.transpose()) : basis;  // orthonormal rows, or columns when m > n
  model.d = mean;
  model.A = 0.95 * Mat::Identity(n, n);
  if (start == 1) {
    model.A = -0.95 * Mat::Identity(n, n);
  } else if (start > 1) {
    Mat square(n, n);
    for (Eigen::Index i = 0; i < square.size(); ++i) square.data()[i] = normal(rng);
    const Eigen::HouseholderQR<Mat> qr(square);
    const Vec signs = qr.matrixQR().diagonal().unaryExpr([](double v) { return v < 0.0 ? -1.0 : 1.0; });
    model.A = 0.95 * Mat(qr.householderQ()) * signs.asDiagonal();
  }
  model.b = Vec::Zero(n);
  model.G = Mat::Identity(n, n);
  model.Q = 0.5 * diff_cov.trace() / static_cast<double>(m) * Mat::Identity(n, n);
  model.R = 0.5 * diff_cov;
  model.x0_mean = model.C.completeOrthogonalDecomposition().solve(observations.front() - mean);
  model.x0_cov = Mat::Identity(n, n);
  return make_model(std::move(model));
}

namespace {

FitResult run_em(std::span<const Vec> observations, const EmConfig& config, StateSpaceModel model) {
  FitResult out;
  auto& diag = out.diagnostics;
  diag.state_dim = config.state_dim_n;
  for (int iter = 0; iter < config.max_iters; ++iter) {
    auto estep = e_step(model, observations);
    diag.regularized_steps += estep.regularized_steps;
    if (!std::isfinite(estep.loglik)) throw NumericalError("EM produced a non-finite log-likelihood at iteration " + std::to_string(iter));
    if (!diag.loglik_history.empty()) {
      const double last = diag.loglik_history.back();
      const double gain = estep.loglik - last;
      if (gain < -kEmMonotoneTolerance * std::abs(last)) {
        throw NumericalError("EM log-likelihood decreased at iteration " + std::to_string(iter) + ": " +
                             std::to_string(last) + " -> " + std::to_string(estep.loglik));
      }
      diag.loglik_history.push_back(estep.loglik);
      out.model = model;
      if (gain < config.loglik_rel_tol * std::abs(last)) {
        diag.converged = true;
        break;
      }
    } else {
      diag.loglik_history.push_back(estep.loglik);
      out.model = model;
    }
    auto mstep = m_step(estep.belief, observations, model);
    diag.ridge_events += mstep.ridge_events;
    ++diag.iterations;
    model = std::move(mstep.model);
  }
  if (!diag.converged) {
    // The last M-step result has not been scored yet; keep it if it did not lose likelihood.
    const double ll = log_likelihood(model, observations);
    const double last = diag.loglik_history.back();
    if (ll < last - kEmMonotoneTolerance * std::abs(last)) {
      throw NumericalError("EM log-likelihood decreased at the final iteration: " + std::to_string(last) + " -> " +
                           std::to_string(ll));
    }
    diag.loglik_history.push_back(ll);
    out.model = model;
  }
  out.model = make_model(std::move(out.model));
  return out;
}

}  // namespace

FitResult fit(std::span<const Vec> observations, const EmConfig& config) {
  validate(config);
  const auto min_len = static_cast<std::size_t>(10 * config.state_dim_n);
  if (observations.size() < min_len) {
    throw ValidationError("identification needs at least 10*n = " + std::to_string(min_len) +
                          " observations, got " + std::to_string(observations.size()));
  }
  FitResult best;
  for (int start = 0; start <= config.restarts; ++start) {
    auto run = run_em(observations, config,
                      initial_model(observations, config.state_dim_n, config.rng_seed, start));
    run.diagnostics.start = start;
    if (start == 0 || run.diagnostics.loglik_history.back() > best.diagnostics.loglik_history.back()) {
      best = std::move(run);
    }
  }
  return best;
}

double one_step_rms(const StateSpaceModel& model, std::span<const Vec> observations, std::size_t from_t) {
  check_observations(observations, model, 1);
  if (from_t >= observations.size()) throw ValidationError("one-step RMS window is empty");
  const auto fwd = forward_filter(model, observations);
  double sum = 0.0;
  for (std::size_t t = from_t; t < observations.size(); ++t) {
    sum += (observations[t] - model.C * fwd.predicted_mean[t] - model.d).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(observations.size() - from_t));
}

ModelSelection select_and_fit(std::span<const Vec> observations, const EmConfig& config,
                              std::span<const int> candidates, double holdout_fraction) {
  if (candidates.empty()) throw ValidationError("no candidate state dimensions");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw ValidationError("holdout_fraction must be in (0, 1)");
  const auto split = static_cast<std::size_t>(std::floor(observations.size() * (1.0 - holdout_fraction)));
  ModelSelection out;
  double best = std::numeric_limits<double>::infinity();
  int best_n = candidates.front();
  for (int n : candidates) {
    EmConfig c = config;
    c.state_dim_n = n;
    double score = std::numeric_limits<double>::infinity();
    try {
      const auto trial = fit(observations.first(split), c);
      score = one_step_rms(trial.model, observations, split);
    } catch (const ValidationError&) {
      // Too little data for this n; it stays unscored.
    }
    out.candidates.push_back(n);
    out.holdout_rms.push_back(score);
    if (score < best) {
      best = score;
      best_n = n;
    }
  }
  if (!std::isfinite(best)) throw ValidationError("no candidate state dimension could be fitted on the training window");
  EmConfig c = config;
  c.state_dim_n = best_n;
  out.fit = fit(observations, c);
  return out;
}

StateSpaceModel continue_after(const StateSpaceModel& model, std::span<const Vec> observations) {
  check_observations(observations, model, 1);
  const auto fwd = forward_filter(model, observations);
  StateSpaceModel out = model;
  out.x0_mean = model.A * fwd.filtered_mean.back() + model.b;
  out.x0_cov = symmetrize(model.A * fwd.filtered_cov.back() * model.A.transpose() +
                          model.G * model.Q * model.G.transpose());
  return out;
}

}  // namespace ikp
