// JSON serialization of models, schedules and run results.
#pragma once

#include "ikp/model.hpp"
#include "ikp/optimizer.hpp"
#include "ikp/sysid.hpp"

#include "json.hpp"

#include <filesystem>

namespace ikp {

using Json = nlohmann::json;

/// Keys "A","b","G","Q","C","d","R","x0_mean","x0_cov"; matrices as row-major nested arrays.
[[nodiscard]] Json model_to_json(const StateSpaceModel& model);
/// Throws ValidationError on missing keys, ragged rows or an invalid model.
[[nodiscard]] StateSpaceModel model_from_json(const Json& j);

/// {"T": horizon, "times": [...]}
[[nodiscard]] Json schedule_to_json(const Schedule& schedule);
[[nodiscard]] Schedule schedule_from_json(const Json& j);

/// Schedule keys plus "objective" and "history".
[[nodiscard]] Json result_to_json(const OptimizationResult& result);

[[nodiscard]] Json diagnostics_to_json(const EmDiagnostics& diagnostics);

[[nodiscard]] Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

}  // namespace ikp
