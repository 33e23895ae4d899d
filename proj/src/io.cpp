#include "ikp/io.hpp"

#include <fstream>
#include <string>

namespace ikp {
namespace {

Json matrix_to_json(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_to_json(const Vec& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

const Json& member(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("missing key \"") + key + "\"");
  return j.at(key);
}

double number(const Json& j, const char* key) {
  if (!j.is_number()) throw ValidationError(std::string("\"") + key + "\" must contain numbers");
  return j.get<double>();
}

Mat matrix_from_json(const Json& j, const char* key) {
  if (!j.is_array()) throw ValidationError(std::string("\"") + key + "\" must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.front().size());
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ValidationError(std::string("\"") + key + "\" has ragged rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = number(row[static_cast<std::size_t>(c)], key);
  }
  return m;
}

Vec vector_from_json(const Json& j, const char* key) {
  if (!j.is_array()) throw ValidationError(std::string("\"") + key + "\" must be an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], key);
  return v;
}

}  // namespace

Json model_to_json(const StateSpaceModel& model) {
  return Json{{"A", matrix_to_json(model.A)},       {"b", vector_to_json(model.b)},
              {"G", matrix_to_json(model.G)},       {"Q", matrix_to_json(model.Q)},
              {"C", matrix_to_json(model.C)},       {"d", vector_to_json(model.d)},
              {"R", matrix_to_json(model.R)},       {"x0_mean", vector_to_json(model.x0_mean)},
              {"x0_cov", matrix_to_json(model.x0_cov)}};
}

StateSpaceModel model_from_json(const Json& j) {
  StateSpaceModel model;
  model.A = matrix_from_json(member(j, "A"), "A");
  model.b = vector_from_json(member(j, "b"), "b");
  model.G = matrix_from_json(member(j, "G"), "G");
  model.Q = matrix_from_json(member(j, "Q"), "Q");
  model.C = matrix_from_json(member(j, "C"), "C");
  model.d = vector_from_json(member(j, "d"), "d");
  model.R = matrix_from_json(member(j, "R"), "R");
  model.x0_mean = vector_from_json(member(j, "x0_mean"), "x0_mean");
  model.x0_cov = matrix_from_json(member(j, "x0_cov"), "x0_cov");
  return make_model(std::move(model));
}

Json schedule_to_json(const Schedule& schedule) {
  return Json{{"T", schedule.horizon()}, {"times", schedule.times()}};
}

Schedule schedule_from_json(const Json& j) {
  const Json& horizon = member(j, "T");
  const Json& times = member(j, "times");
  if (!horizon.is_number_integer()) throw ValidationError("\"T\" must be an integer");
  if (!times.is_array()) throw ValidationError("\"times\" must be an array of integers");
  std::vector<int> out;
  out.reserve(times.size());
  for (const auto& t : times) {
    if (!t.is_number_integer()) throw ValidationError("\"times\" must be an array of integers");
    out.push_back(t.get<int>());
  }
  return Schedule(std::move(out), horizon.get<int>());
}

Json result_to_json(const OptimizationResult& result) {
  Json j = schedule_to_json(result.best_schedule);
  j["objective"] = result.best_objective;
  j["history"] = result.history;
  j["evaluations"] = result.evaluations;
  return j;
}

Json diagnostics_to_json(const EmDiagnostics& d) {
  return Json{{"loglik_history", d.loglik_history}, {"iterations", d.iterations},
              {"converged", d.converged},           {"state_dim", d.state_dim},
              {"ridge_events", d.ridge_events},     {"regularized_steps", d.regularized_steps},
              {"start", d.start}};
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open " + path.string());
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

}  // namespace ikp
