#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "hmore/boundary.hpp"
#include "hmore/flows.hpp"
#include "hmore/kinematic.hpp"

namespace hmore {

using Json = nlohmann::json;

/// Nearest double to the value printed with 9 significant digits.
double round9(double v);

/// Copy of `j` with every floating-point number passed through round9.
Json rounded(const Json& j);

/// Sorted keys, 2-space indent, floats at 9 significant digits.
std::string dump_report(const Json& report);

/// {"path": ..., "fnv1a64": ...} for an input file.
Json input_record(const std::filesystem::path& path);

Json to_json(const Hyperparams& hp);
Json to_json(const SolverOptions& opts);
Json to_json(const ConstraintReport& r);
Json to_json(const PatchDistance& d);
Json to_json(const BoundaryReport& r);
Json to_json(const ObjectiveBreakdown& b);
Json to_json(const EndpointError& e);
Json to_json(const SolverStep& s);
Json to_json(const AlignTransform& t);

}  // namespace hmore
