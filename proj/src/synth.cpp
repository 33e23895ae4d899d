#include "ikp/synth.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

namespace ikp {
namespace {

Vec standard_normal(Eigen::Index size, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(size);
  for (Eigen::Index i = 0; i < size; ++i) v(i) = normal(rng);
  return v;
}

// Symmetric square root factor L with L L' = cov, tolerant of semi-definite input.
Mat covariance_factor(const Mat& cov) {
  if (cov.size() == 0) return cov;
  const Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(cov));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view text, std::size_t line) {
  text = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ValidationError("line " + std::to_string(line) + ": cannot parse number '" + std::string(text) + "'");
  }
  if (!std::isfinite(value)) {
    throw ValidationError("line " + std::to_string(line) + ": non-finite value '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

void validate(const MassSpringConfig& c) {
  if (!(c.mass_kg > 0.0)) throw ValidationError("mass_kg must be positive");
  if (!(c.stiffness_N_per_m > 0.0)) throw ValidationError("stiffness_N_per_m must be positive");
  if (!(c.delta_s > 0.0)) throw ValidationError("delta_s must be positive");
  if (c.steps_T < 1) throw ValidationError("steps_T must be positive, got " + std::to_string(c.steps_T));
  if (!(c.q_psd >= 0.0)) throw ValidationError("q_psd must be non-negative");
  if (!(c.r_var > 0.0)) throw ValidationError("r_var must be positive");
  if (c.x0_mean.size() != 2 || c.x0_cov.rows() != 2 || c.x0_cov.cols() != 2) {
    throw ValidationError("mass-spring initial state must be 2-dimensional");
  }
}

double stiffness_for_period(double mass_kg, double period_s) {
  return 4.0 * std::numbers::pi * std::numbers::pi * mass_kg / (period_s * period_s);
}

StateSpaceModel mass_spring_model(const MassSpringConfig& c) {
  validate(c);
  StateSpaceModel model;
  model.A = Mat::Identity(2, 2);
  model.A(0, 1) = c.delta_s;
  model.A(1, 0) = -c.stiffness_N_per_m / c.mass_kg * c.delta_s;
  model.b = Vec::Zero(2);
  model.G = (Mat(2, 1) << 0.0, 1.0 / c.mass_kg).finished();
  model.Q = Mat::Constant(1, 1, c.q_psd * c.delta_s);
  model.C = (Mat(1, 2) << 1.0, 0.0).finished();
  model.d = Vec::Zero(1);
  model.R = Mat::Constant(1, 1, c.r_var);
  model.x0_mean = c.x0_mean;
  model.x0_cov = c.x0_cov;
  return make_model(std::move(model));
}

std::pair<Trajectory, StateSpaceModel> simulate_mass_spring(const MassSpringConfig& config) {
  auto model = mass_spring_model(config);
  auto traj = simulate_model(model, config.steps_T, config.rng_seed, config.delta_s);
  return {std::move(traj), std::move(model)};
}

Vec sample_gaussian(const Vec& mean, const Mat& cov, std::mt19937_64& rng) {
  return mean + covariance_factor(cov) * standard_normal(mean.size(), rng);
}

Trajectory simulate_model(const StateSpaceModel& model, int steps, std::uint64_t rng_seed, double dt) {
  if (steps < 1) throw ValidationError("steps must be positive, got " + std::to_string(steps));
  std::mt19937_64 rng(rng_seed);
  const Mat process = covariance_factor(model.Q);
  const Mat measurement = covariance_factor(model.R);
  Trajectory out;
  out.dt = dt;
  out.truth.reserve(static_cast<std::size_t>(steps));
  out.noisy.reserve(static_cast<std::size_t>(steps));
  Vec x = sample_gaussian(model.x0_mean, model.x0_cov, rng);
  for (int t = 0; t < steps; ++t) {
    Vec y = model.C * x + model.d;
    out.noisy.push_back(y + measurement * standard_normal(y.size(), rng));
    out.truth.push_back(std::move(y));
    x = model.A * x + model.b + model.G * (process * standard_normal(model.noise_dim(), rng));
  }
  return out;
}

Trajectory inject_noise(const Trajectory& traj, double sigma2_mm2, std::uint64_t rng_seed) {
  if (!(sigma2_mm2 >= 0.0)) throw ValidationError("noise variance must be non-negative");
  std::mt19937_64 rng(rng_seed);
  const double sigma = std::sqrt(sigma2_mm2);
  Trajectory out;
  out.dt = traj.dt;
  out.truth = traj.truth;
  out.noisy.reserve(traj.size());
  for (const auto& y : traj.truth) out.noisy.push_back(y + sigma * standard_normal(y.size(), rng));
  return out;
}

Trajectory respiratory_surrogate(const SurrogateConfig& c) {
  const std::size_t axes = c.fundamental_mm.size();
  if (axes == 0 || c.harmonic_mm.size() != axes || c.offset_mm.size() != axes) {
    throw ValidationError("surrogate amplitude and offset lists must be non-empty and of equal length");
  }
  if (c.steps < 1 || !(c.dt > 0.0)) throw ValidationError("surrogate needs positive steps and dt");
  std::mt19937_64 rng(c.rng_seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> lag(axes), harmonic_lag(axes);
  for (std::size_t a = 0; a < axes; ++a) {
    lag[a] = 0.3 * angle(rng);
    harmonic_lag[a] = angle(rng);
  }
  Trajectory out;
  out.dt = c.dt;
  out.truth.reserve(static_cast<std::size_t>(c.steps));
  const double omega = 2.0 * std::numbers::pi * c.base_frequency_hz * c.dt;
  double phase = angle(rng);
  double log_amp = 0.0;
  for (int t = 0; t < c.steps; ++t) {
    Vec y(static_cast<Eigen::Index>(axes));
    const double gain = std::exp(log_amp);
    for (std::size_t a = 0; a < axes; ++a) {
      y(static_cast<Eigen::Index>(a)) = c.offset_mm[a] + gain * (c.fundamental_mm[a] * std::sin(phase + lag[a]) +
                                                                  c.harmonic_mm[a] * std::sin(2.0 * phase + harmonic_lag[a]));
    }
    out.truth.push_back(std::move(y));
    phase += omega + c.phase_jitter * normal(rng);
    // Mean-reverting log-amplitude keeps the envelope bounded.
    log_amp = 0.999 * log_amp + c.amplitude_jitter * normal(rng);
  }
  return out;
}

Trajectory read_trajectory_csv(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  Trajectory out;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty()) continue;
    if (!have_header) {
      if (!text.starts_with("dt=")) {
        throw ValidationError("line " + std::to_string(line_no) + ": expected header 'dt=<seconds>'");
      }
      out.dt = parse_number(text.substr(3), line_no);
      if (!(out.dt > 0.0)) throw ValidationError("line " + std::to_string(line_no) + ": dt must be positive");
      have_header = true;
      continue;
    }
    std::vector<double> values;
    std::size_t start = 0;
    while (true) {
      const auto comma = text.find(',', start);
      values.push_back(parse_number(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start), line_no));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (values.size() > 3) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + std::to_string(values.size()) +
                            " columns, at most 3 axes are supported");
    }
    if (!out.truth.empty() && static_cast<Eigen::Index>(values.size()) != out.truth.front().size()) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + std::to_string(values.size()) +
                            " columns, expected " + std::to_string(out.truth.front().size()));
    }
    out.truth.push_back(Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  if (!have_header) throw ValidationError("empty trajectory file");
  if (out.truth.empty()) throw ValidationError("trajectory file has no rows");
  return out;
}

Trajectory load_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open trajectory file " + path.string());
  try {
    return read_trajectory_csv(is);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_trajectory_csv(std::ostream& os, double dt, const std::vector<Vec>& rows) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  os << "dt=" << dt << '\n';
  for (const auto& row : rows) {
    for (Eigen::Index i = 0; i < row.size(); ++i) {
      if (i > 0) os << ',';
      os << row(i);
    }
    os << '\n';
  }
}

void write_trajectory_csv(const std::filesystem::path& path, double dt, const std::vector<Vec>& rows) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write trajectory file " + path.string());
  write_trajectory_csv(os, dt, rows);
}

}  // namespace ikp
