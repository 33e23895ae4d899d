#include "ikp/predictor.hpp"
#include "ikp/synth.hpp"
#include "ikp/sysid.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

using namespace ikp;

namespace {

StateSpaceModel random_walk(double p0) {
  StateSpaceModel m;
  m.A = Mat::Ones(1, 1);
  m.b = Vec::Zero(1);
  m.G = Mat::Ones(1, 1);
  m.Q = Mat::Ones(1, 1);
  m.C = Mat::Ones(1, 1);
  m.d = Vec::Zero(1);
  m.R = Mat::Ones(1, 1);
  m.x0_mean = Vec::Zero(1);
  m.x0_cov = Mat::Constant(1, 1, p0);
  return m;
}

std::vector<Vec> scalars(std::initializer_list<double> values) {
  std::vector<Vec> out;
  for (double v : values) out.push_back(Vec::Constant(1, v));
  return out;
}

StateSpaceModel oscillator(double theta, double radius) {
  StateSpaceModel m;
  m.A = radius * (Mat(2, 2) << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta)).finished();
  m.b = Vec::Zero(2);
  m.G = Mat::Identity(2, 2);
  m.Q = 0.05 * Mat::Identity(2, 2);
  m.C = (Mat(1, 2) << 1.0, 0.3).finished();
  m.d = Vec::Constant(1, 2.0);
  m.R = Mat::Constant(1, 1, 0.1);
  m.x0_mean = (Vec(2) << 1.0, 0.0).finished();
  m.x0_cov = 0.1 * Mat::Identity(2, 2);
  return m;
}

}  // namespace

TEST(LogLikelihood, TwoStepClosedForm) {
  // z ~ N(0, [[2, 1], [1, 3]]) for the unit random walk with P0 = 1.
  const auto z = scalars({0.0, 0.0});
  const Mat sigma = (Mat(2, 2) << 2.0, 1.0, 1.0, 3.0).finished();
  const double expected = oracle::gaussian_log_density(Vec::Zero(2), sigma);
  EXPECT_NEAR(expected, -2.642596, 1e-6);
  EXPECT_NEAR(log_likelihood(random_walk(1.0), z), expected, 1e-12);
}

TEST(LogLikelihood, MatchesJointGaussianOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = oracle::random_model(rng, 1 + trial % 3, 1 + trial % 2);
    const auto steps = 6;
    const auto traj = simulate_model(model, steps, static_cast<std::uint64_t>(trial));
    const int n = model.state_dim();
    const int m = model.output_dim();
    // Stack the joint mean and covariance of (z_0..z_{T-1}) directly.
    std::vector<Mat> phi{Mat::Identity(n, n)};
    for (int t = 1; t < steps; ++t) phi.push_back(model.A * phi.back());
    std::vector<Vec> mean{model.x0_mean};
    for (int t = 1; t < steps; ++t) mean.push_back(model.A * mean.back() + model.b);
    const Mat gqg = model.G * model.Q * model.G.transpose();
    auto state_cov = [&](int s, int t) {  // Cov(x_s, x_t), s <= t
      Mat c = phi[static_cast<std::size_t>(t)] * model.x0_cov * phi[static_cast<std::size_t>(s)].transpose();
      for (int j = 0; j < s; ++j) {
        c += phi[static_cast<std::size_t>(t - 1 - j)] * gqg * phi[static_cast<std::size_t>(s - 1 - j)].transpose();
      }
      return Mat(c.transpose());
    };
    Mat big(steps * m, steps * m);
    Vec resid(steps * m);
    for (int s = 0; s < steps; ++s) {
      resid.segment(s * m, m) = traj.noisy[static_cast<std::size_t>(s)] - model.C * mean[static_cast<std::size_t>(s)] - model.d;
      for (int t = s; t < steps; ++t) {
        Mat block = model.C * state_cov(s, t) * model.C.transpose();
        if (s == t) block += model.R;
        big.block(s * m, t * m, m, m) = block;
        big.block(t * m, s * m, m, m) = block.transpose();
      }
    }
    const double expected = oracle::gaussian_log_density(resid, big);
    ASSERT_NEAR(log_likelihood(model, traj.noisy), expected, 1e-8 * std::abs(expected)) << "trial " << trial;
  }
}

TEST(LogLikelihood, ScalingIdentity) {
  // Scaling outputs and output-side parameters by c shifts the log-likelihood by -T m log c.
  std::mt19937_64 rng(3);
  const auto model = oracle::random_model(rng, 2, 2);
  const auto traj = simulate_model(model, 40, 1);
  const double c = 3.5;
  auto scaled = model;
  scaled.C *= c;
  scaled.d *= c;
  scaled.R *= c * c;
  std::vector<Vec> z;
  for (const auto& v : traj.noisy) z.push_back(c * v);
  EXPECT_NEAR(log_likelihood(scaled, z), log_likelihood(model, traj.noisy) - 40.0 * 2.0 * std::log(c), 1e-8);
}

TEST(EStep, FilterMatchesPredictorOnFullSchedule) {
  std::mt19937_64 rng(4);
  const auto model = oracle::random_model(rng, 3, 2);
  const auto traj = simulate_model(model, 30, 5);
  const auto e = e_step(model, traj.noisy);
  std::vector<Measurement> meas;
  for (int t = 0; t < 30; ++t) meas.push_back({t, traj.noisy[static_cast<std::size_t>(t)]});
  const auto belief = run_predictor(model, full_schedule(30), meas);
  for (std::size_t t = 0; t < 30; ++t) {
    ASSERT_LE(oracle::relative_error(e.belief.filtered_mean[t], belief.post_mean[t]), 1e-9);
    ASSERT_LE(oracle::relative_error(e.belief.predicted_mean[t], belief.prior_mean[t]), 1e-9);
  }
  EXPECT_LE((e.belief.smooth_mean.back() - e.belief.filtered_mean.back()).norm(), 1e-12);
  EXPECT_LE((e.belief.smooth_cov.back() - e.belief.filtered_cov.back()).norm(), 1e-12);
  EXPECT_EQ(e.regularized_steps, 0);
}

TEST(EStep, NearNoiseFreeSmoothingTracksObservations) {
  auto model = random_walk(1.0);
  model.R = Mat::Constant(1, 1, 1e-10);
  const auto z = scalars({0.3, -1.2, 0.7, 2.0, 1.5});
  const auto e = e_step(model, z);
  for (std::size_t t = 0; t < z.size(); ++t) {
    EXPECT_NEAR(e.belief.smooth_mean[t](0), z[t](0), 1e-8);
    EXPECT_LT(e.belief.smooth_cov[t](0, 0), 1e-9);
  }
}

TEST(EStep, NoiseFreeDeterministicDynamicsRecoverStates) {
  auto model = oscillator(0.3, 0.99);
  model.Q = Mat::Zero(2, 2);
  model.x0_cov = Mat::Identity(2, 2);
  const auto traj = simulate_model(model, 40, 3);
  // Rebuild the states the output came from by propagating x(0) fitted from the first two outputs.
  Mat obs_map(2, 2);
  obs_map.row(0) = model.C;
  obs_map.row(1) = model.C * model.A;
  Vec rhs(2);
  rhs << traj.truth[0](0) - model.d(0), traj.truth[1](0) - model.d(0) - (model.C * model.b)(0);
  Vec x = obs_map.inverse() * rhs;
  model.R = Mat::Constant(1, 1, 1e-14);
  const auto e = e_step(model, traj.truth);
  for (std::size_t t = 0; t < traj.size(); ++t) {
    ASSERT_LE((e.belief.smooth_mean[t] - x).norm(), 1e-6) << t;
    x = model.A * x + model.b;
  }
}

TEST(MStep, KnownStatesReduceToLeastSquares) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int steps = 200;
  SmoothedBelief stats;
  std::vector<Vec> z;
  double x = 1.0;
  for (int t = 0; t < steps; ++t) {
    stats.smooth_mean.push_back(Vec::Constant(1, x));
    stats.smooth_cov.push_back(Mat::Zero(1, 1));
    stats.lag_one_cov.push_back(Mat::Zero(1, 1));
    z.push_back(Vec::Constant(1, 2.0 * x - 1.0 + 0.1 * normal(rng)));
    x = 0.8 * x + 0.5 + normal(rng);
  }
  // Ordinary least squares by explicit normal equations.
  Mat xa(steps - 1, 2);
  Vec xn(steps - 1);
  for (int t = 0; t + 1 < steps; ++t) {
    xa(t, 0) = stats.smooth_mean[static_cast<std::size_t>(t)](0);
    xa(t, 1) = 1.0;
    xn(t) = stats.smooth_mean[static_cast<std::size_t>(t) + 1](0);
  }
  const Vec ab = (xa.transpose() * xa).inverse() * xa.transpose() * xn;
  const double q = (xn - xa * ab).squaredNorm() / (steps - 1);
  Mat za(steps, 2);
  Vec zz(steps);
  for (int t = 0; t < steps; ++t) {
    za(t, 0) = stats.smooth_mean[static_cast<std::size_t>(t)](0);
    za(t, 1) = 1.0;
    zz(t) = z[static_cast<std::size_t>(t)](0);
  }
  const Vec cd = (za.transpose() * za).inverse() * za.transpose() * zz;
  const double r = (zz - za * cd).squaredNorm() / steps;

  const auto out = m_step(stats, z, random_walk(1.0));
  EXPECT_NEAR(out.model.A(0, 0), ab(0), 1e-9);
  EXPECT_NEAR(out.model.b(0), ab(1), 1e-9);
  EXPECT_NEAR(out.model.Q(0, 0), q, 1e-9);
  EXPECT_NEAR(out.model.C(0, 0), cd(0), 1e-9);
  EXPECT_NEAR(out.model.d(0), cd(1), 1e-9);
  EXPECT_NEAR(out.model.R(0, 0), r, 1e-9);
  EXPECT_EQ(out.ridge_events, 0);
}

TEST(Fit, LogLikelihoodIsMonotone) {
  for (int n = 1; n <= 3; ++n) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(10 + n));
    const auto truth = oracle::random_model(rng, n, 1 + n % 2);
    const auto traj = simulate_model(truth, 300, static_cast<std::uint64_t>(n));
    const auto r = fit(traj.noisy, {.state_dim_n = n, .max_iters = 60, .loglik_rel_tol = 1e-9, .rng_seed = 1});
    const auto& h = r.diagnostics.loglik_history;
    ASSERT_GE(h.size(), 2u);
    for (std::size_t i = 1; i < h.size(); ++i) {
      ASSERT_GE(h[i], h[i - 1] - kEmMonotoneTolerance * std::abs(h[i - 1])) << "n=" << n << " iter " << i;
    }
    EXPECT_EQ(r.diagnostics.state_dim, n);
    EXPECT_TRUE(validate_model(r.model).ok());
  }
}

TEST(Fit, RecoversOscillatorPredictionQuality) {
  const auto truth = oscillator(0.2, 0.98);
  const auto traj = simulate_model(truth, 2000, 9);
  const std::span<const Vec> all(traj.noisy);
  const auto r = fit(all.first(1600), {.state_dim_n = 2, .max_iters = 300, .loglik_rel_tol = 1e-9, .rng_seed = 3});
  const double fitted = one_step_rms(r.model, all, 1600);
  const double reference = one_step_rms(truth, all, 1600);
  EXPECT_LE(std::abs(fitted - reference), 0.10 * reference);
}

TEST(Fit, SinusoidEigenvalues) {
  const double omega = 2.0 * std::numbers::pi / 40.0;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 0.05);
  std::vector<Vec> z;
  for (int t = 0; t < 600; ++t) z.push_back(Vec::Constant(1, 3.0 * std::sin(omega * t) + normal(rng)));
  const auto r = fit(z, {.state_dim_n = 2, .max_iters = 300, .loglik_rel_tol = 1e-10, .rng_seed = 2});
  const auto eig = Eigen::EigenSolver<Mat>(r.model.A).eigenvalues();
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    EXPECT_NEAR(std::abs(std::arg(eig(i))), omega, 0.02 * omega);
    EXPECT_NEAR(std::abs(eig(i)), 1.0, 0.02);
  }
}

TEST(Fit, ConstantDataStaysFinite) {
  const std::vector<Vec> z(100, Vec::Constant(2, 4.0));
  const auto r = fit(z, {.state_dim_n = 1, .max_iters = 20, .loglik_rel_tol = 1e-7, .rng_seed = 0});
  EXPECT_TRUE(r.model.A.allFinite());
  EXPECT_TRUE(r.model.R.allFinite());
  EXPECT_NEAR((r.model.C * r.model.x0_mean + r.model.d)(0), 4.0, 1e-3);
  std::vector<Measurement> meas;
  for (int t = 0; t < 100; ++t) meas.push_back({t, z[static_cast<std::size_t>(t)]});
  const auto belief = run_predictor(r.model, full_schedule(100), meas);
  for (std::size_t t = 1; t < belief.size(); ++t) {
    ASSERT_NEAR(belief.pred_pos[t](0), 4.0, 1e-3);
    ASSERT_NEAR(belief.pred_pos[t](1), 4.0, 1e-3);
  }
}

TEST(Fit, RejectsShortOrInvalidInput) {
  const auto z = scalars({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  EXPECT_THROW((void)fit(z, {.state_dim_n = 2, .max_iters = 10, .loglik_rel_tol = 1e-7, .rng_seed = 0}),
               ValidationError);
  EXPECT_THROW((void)fit(z, {.state_dim_n = 0, .max_iters = 10, .loglik_rel_tol = 1e-7, .rng_seed = 0}),
               ValidationError);
}

TEST(Fit, RestartsEscapeSignMismatchedStart) {
  StateSpaceModel truth;
  truth.A = Mat::Constant(1, 1, -0.8);
  truth.b = Vec::Zero(1);
  truth.G = Mat::Ones(1, 1);
  truth.Q = Mat::Ones(1, 1);
  truth.C = Mat::Ones(1, 1);
  truth.d = Vec::Zero(1);
  truth.R = Mat::Constant(1, 1, 0.3);
  truth.x0_mean = Vec::Zero(1);
  truth.x0_cov = Mat::Ones(1, 1);
  const auto traj = simulate_model(truth, 600, 21);
  EmConfig c{.state_dim_n = 1, .max_iters = 500, .loglik_rel_tol = 1e-9, .rng_seed = 0};
  const auto single = fit(traj.noisy, c);
  c.restarts = 2;
  const auto multi = fit(traj.noisy, c);
  EXPECT_GE(multi.diagnostics.loglik_history.back(), single.diagnostics.loglik_history.back());
  EXPECT_LT(multi.model.A(0, 0), 0.0);
  EXPECT_NEAR(log_likelihood(multi.model, traj.noisy), multi.diagnostics.loglik_history.back(), 1e-6);
  EXPECT_EQ(initial_model(traj.noisy, 1, 0, 1).A(0, 0), -0.95);
  EXPECT_EQ(initial_model(traj.noisy, 1, 0, 0).A(0, 0), 0.95);
  const Mat a = initial_model(traj.noisy, 3, 5, 2).A;
  EXPECT_LE((a * a.transpose() - 0.9025 * Mat::Identity(3, 3)).norm(), 1e-12);
}

TEST(Fit, DeterministicForSeed) {
  const auto traj = simulate_model(oscillator(0.3, 0.95), 200, 4);
  const EmConfig c{.state_dim_n = 2, .max_iters = 30, .loglik_rel_tol = 1e-9, .rng_seed = 8};
  EXPECT_EQ(fit(traj.noisy, c).model.A, fit(traj.noisy, c).model.A);
}

TEST(SelectAndFit, PrefersAdequateDimension) {
  const auto traj = simulate_model(oscillator(0.25, 0.97), 800, 12);
  const std::vector<int> candidates{1, 2};
  const auto sel = select_and_fit(traj.noisy, {.state_dim_n = 1, .max_iters = 100, .loglik_rel_tol = 1e-8, .rng_seed = 0},
                                  candidates);
  ASSERT_EQ(sel.holdout_rms.size(), 2u);
  EXPECT_EQ(sel.fit.diagnostics.state_dim, 2);
  EXPECT_LT(sel.holdout_rms[1], sel.holdout_rms[0]);
}

TEST(ContinueAfter, MatchesFilteredPrediction) {
  std::mt19937_64 rng(13);
  const auto model = oracle::random_model(rng, 2, 1);
  const auto traj = simulate_model(model, 25, 1);
  const auto next = continue_after(model, traj.noisy);
  std::vector<Measurement> meas;
  for (int t = 0; t < 25; ++t) meas.push_back({t, traj.noisy[static_cast<std::size_t>(t)]});
  const auto belief = run_predictor(model, full_schedule(25), meas);
  EXPECT_LE(oracle::relative_error(next.x0_mean, belief.prior_mean[25]), 1e-10);
  EXPECT_LE((next.x0_cov - belief.prior_cov[25]).norm(), 1e-10 * belief.prior_cov[25].norm());
  EXPECT_EQ(next.A, model.A);
}
