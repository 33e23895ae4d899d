#include "ikp/model.hpp"

#include <algorithm>
#include <sstream>

namespace ikp {
namespace {

std::string shape(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

bool asymmetric(const Mat& m) {
  const double norm = m.norm();
  if (norm == 0.0) return false;
  return (m - m.transpose()).norm() > kSymmetryTolerance * norm;
}

// Smallest eigenvalue relative to the spectral scale; -inf-safe for zero matrices.
bool psd(const Mat& m) {
  const Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 0.0);
  return ev.minCoeff() >= -kPsdTolerance * scale;
}

bool pd(const Mat& m) {
  const Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(m), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  return scale > 0.0 && ev.minCoeff() > kPsdTolerance * scale;
}

}  // namespace

Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

ValidationResult validate_model(const StateSpaceModel& model) {
  ValidationResult res;
  auto fail = [&](std::string msg) { res.violations.push_back(std::move(msg)); };

  const Eigen::Index n = model.A.rows();
  if (model.A.cols() != n) fail("A not square (" + shape(model.A) + ")");
  if (n == 0) fail("state dimension is zero");
  if (model.b.size() != n) fail("b has length " + std::to_string(model.b.size()) + ", expected " + std::to_string(n));
  if (model.G.rows() != n) fail("G has " + std::to_string(model.G.rows()) + " rows, expected " + std::to_string(n));
  const Eigen::Index p = model.G.cols();
  if (model.Q.rows() != p || model.Q.cols() != p) fail("Q is " + shape(model.Q) + ", expected " + std::to_string(p) + "x" + std::to_string(p));
  const Eigen::Index m = model.C.rows();
  if (m == 0) fail("output dimension is zero");
  if (model.C.cols() != n) fail("C has " + std::to_string(model.C.cols()) + " columns, expected " + std::to_string(n));
  if (model.d.size() != m) fail("d has length " + std::to_string(model.d.size()) + ", expected " + std::to_string(m));
  if (model.R.rows() != m || model.R.cols() != m) fail("R is " + shape(model.R) + ", expected " + std::to_string(m) + "x" + std::to_string(m));
  if (model.x0_mean.size() != n) fail("x0_mean has length " + std::to_string(model.x0_mean.size()) + ", expected " + std::to_string(n));
  if (model.x0_cov.rows() != n || model.x0_cov.cols() != n) fail("x0_cov is " + shape(model.x0_cov) + ", expected " + std::to_string(n) + "x" + std::to_string(n));

  auto finite = [&](const auto& x, const char* name) {
    if (!x.allFinite()) fail(std::string(name) + " has non-finite entries");
  };
  finite(model.A, "A");
  finite(model.b, "b");
  finite(model.G, "G");
  finite(model.Q, "Q");
  finite(model.C, "C");
  finite(model.d, "d");
  finite(model.R, "R");
  finite(model.x0_mean, "x0_mean");
  finite(model.x0_cov, "x0_cov");
  if (!res.ok()) return res;

  auto covariance = [&](const Mat& x, const char* name, bool definite) {
    if (asymmetric(x)) fail(std::string(name) + " not symmetric");
    if (definite) {
      if (!pd(x)) fail(std::string(name) + " not positive definite");
    } else if (!psd(x)) {
      fail(std::string(name) + " not positive semi-definite");
    }
  };
  covariance(model.Q, "Q", false);
  covariance(model.R, "R", true);
  covariance(model.x0_cov, "x0_cov", false);
  return res;
}

StateSpaceModel make_model(StateSpaceModel model) {
  // Symmetrize only what is already nearly symmetric; gross asymmetry is reported.
  auto fix = [](Mat& x) {
    if (x.rows() == x.cols() && x.allFinite() && x.norm() > 0.0 &&
        (x - x.transpose()).norm() <= kSymmetryTolerance * x.norm()) {
      x = symmetrize(x);
    }
  };
  fix(model.Q);
  fix(model.R);
  fix(model.x0_cov);
  const auto res = validate_model(model);
  if (!res.ok()) {
    std::string msg = "invalid model:";
    for (const auto& v : res.violations) msg += " " + v + ";";
    throw ValidationError(msg);
  }
  return model;
}

Schedule::Schedule(std::vector<int> times, int horizon) : times_(std::move(times)), horizon_(horizon) {
  if (horizon_ < 1) throw ValidationError("schedule horizon must be positive, got " + std::to_string(horizon_));
  for (std::size_t i = 0; i < times_.size(); ++i) {
    if (times_[i] < 0 || times_[i] >= horizon_) {
      throw ValidationError("schedule time " + std::to_string(times_[i]) + " outside [0, " +
                            std::to_string(horizon_ - 1) + "]");
    }
    if (i > 0 && times_[i] <= times_[i - 1]) {
      throw ValidationError("schedule times must be strictly increasing (at index " + std::to_string(i) + ")");
    }
  }
}

Schedule Schedule::from_unsorted(std::vector<int> times, int horizon) {
  std::sort(times.begin(), times.end());
  return Schedule(std::move(times), horizon);
}

bool Schedule::contains(int t) const { return std::binary_search(times_.begin(), times_.end(), t); }

std::vector<char> Schedule::mask() const {
  std::vector<char> out(static_cast<std::size_t>(horizon_), 0);
  for (int t : times_) out[static_cast<std::size_t>(t)] = 1;
  return out;
}

Schedule regular_schedule(int horizon, int budget) {
  if (budget < 1 || budget > horizon) {
    throw ValidationError("invalid budget N=" + std::to_string(budget) + " for horizon T=" + std::to_string(horizon));
  }
  std::vector<int> times(static_cast<std::size_t>(budget));
  for (int i = 0; i < budget; ++i) {
    times[static_cast<std::size_t>(i)] =
        static_cast<int>(static_cast<std::int64_t>(i) * horizon / budget);
  }
  return Schedule(std::move(times), horizon);
}

Schedule full_schedule(int horizon) { return regular_schedule(horizon, horizon); }

}  // namespace ikp
