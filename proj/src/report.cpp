#include "hmore/report.hpp"

#include <cstdio>
#include <cstdlib>

#include "hmore/io.hpp"

namespace hmore {

double round9(double v) {
    if (!std::isfinite(v)) {
        return v;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::strtod(buf, nullptr);
}

Json rounded(const Json& j) {
    if (j.is_number_float()) {
        return round9(j.get<double>());
    }
    if (j.is_array()) {
        Json out = Json::array();
        for (const auto& e : j) {
            out.push_back(rounded(e));
        }
        return out;
    }
    if (j.is_object()) {
        Json out = Json::object();
        for (auto it = j.begin(); it != j.end(); ++it) {
            out[it.key()] = rounded(it.value());
        }
        return out;
    }
    return j;
}

std::string dump_report(const Json& report) { return rounded(report).dump(2) + "\n"; }

Json input_record(const std::filesystem::path& path) {
    return {{"path", path.string()}, {"fnv1a64", fnv1a_hex(read_file(path))}};
}

Json to_json(const Hyperparams& hp) { return Json::parse(encode_hyperparams(hp)); }

Json to_json(const SolverOptions& opts) { return Json::parse(encode_solver_options(opts)); }

Json to_json(const ConstraintReport& r) {
    return {{"f_value", r.f_value},
            {"f_matched_normalized", r.f_matched_normalized},
            {"angular_violation_fraction", r.angular_violation_fraction},
            {"intensity_mean_penalty", r.intensity_mean_penalty},
            {"matched_count", r.matched_count},
            {"pixel_count", r.pixel_count}};
}

Json to_json(const PatchDistance& d) {
    return {{"value", d.value}, {"co_occupied", d.co_occupied}, {"total_cells", d.total_cells}, {"valid", d.valid}};
}

Json to_json(const BoundaryReport& r) {
    Json scales = Json::array();
    for (const auto& d : r.per_scale) {
        scales.push_back(to_json(d));
    }
    return {{"g", r.g},
            {"per_scale", std::move(scales)},
            {"edge_count", r.edge_count},
            {"co_occupancy", r.co_occupancy},
            {"valid", r.valid}};
}

Json to_json(const ObjectiveBreakdown& b) {
    return {{"total", b.total},
            {"f", b.f},
            {"g", b.g},
            {"alpha", b.alpha},
            {"skeleton", to_json(b.f_report)},
            {"boundary", to_json(b.g_report)}};
}

Json to_json(const EndpointError& e) {
    return {{"mean_epe", e.mean}, {"max_epe", e.max}, {"count", e.count}};
}

Json to_json(const SolverStep& s) {
    return {{"phase", s.phase},
            {"tau", s.tau},
            {"surrogate_before", s.surrogate_before},
            {"surrogate_after", s.surrogate_after},
            {"max_change", s.max_change},
            {"total", s.hard.total},
            {"f", s.hard.f},
            {"g", s.hard.g}};
}

Json to_json(const AlignTransform& t) {
    const char* kind = t.kind() == AlignKind::homography   ? "homography"
                       : t.kind() == AlignKind::similarity ? "similarity"
                                                           : "translation";
    return {{"kind", kind}, {"matrix", t.matrix()}};
}

}  // namespace hmore
