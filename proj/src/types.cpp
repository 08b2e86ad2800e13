#include "hmore/types.hpp"

#include <algorithm>
#include <sstream>

namespace hmore {

namespace {

void check_dims(int width, int height, const char* what) {
    if (width < 1 || height < 1) {
        std::ostringstream os;
        os << what << " dimensions must be positive, got " << width << "x" << height;
        throw InvalidArgument(os.str());
    }
}

}  // namespace

FlowMap::FlowMap(int width, int height)
    : width_(width), height_(height) {
    check_dims(width, height, "FlowMap");
    vectors_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), Vec2{});
}

FlowMap::FlowMap(int width, int height, std::vector<Vec2> vectors)
    : width_(width), height_(height), vectors_(std::move(vectors)) {
    check_dims(width, height, "FlowMap");
    if (vectors_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw InvalidArgument("FlowMap vector count does not match width*height");
    }
    for (const auto& v : vectors_) {
        require_finite(v.dx, "FlowMap entry");
        require_finite(v.dy, "FlowMap entry");
    }
}

Keypoint::Keypoint(double px, double py, double conf) : x(px), y(py), c(conf) {
    require_finite(x, "Keypoint.x");
    require_finite(y, "Keypoint.y");
    require_finite(c, "Keypoint.c");
    if (c < 0.0 || c > 1.0) {
        throw InvalidArgument("Keypoint confidence must lie in [0, 1]");
    }
}

SubjectMask::SubjectMask(int width, int height)
    : width_(width), height_(height) {
    check_dims(width, height, "SubjectMask");
    labels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
}

SubjectMask::SubjectMask(int width, int height, std::vector<std::uint8_t> labels)
    : width_(width), height_(height), labels_(std::move(labels)) {
    check_dims(width, height, "SubjectMask");
    if (labels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw InvalidArgument("SubjectMask label count does not match width*height");
    }
    std::array<bool, 256> seen{};
    for (auto l : labels_) {
        seen[l] = true;
    }
    int max_label = 0;
    for (int l = 255; l >= 1; --l) {
        if (seen[static_cast<std::size_t>(l)]) {
            max_label = l;
            break;
        }
    }
    for (int l = 1; l <= max_label; ++l) {
        if (!seen[static_cast<std::size_t>(l)]) {
            throw InvalidArgument("SubjectMask labels must form a contiguous range starting at 1 (missing " +
                                  std::to_string(l) + ")");
        }
    }
    subject_count_ = max_label;
}

std::size_t SubjectMask::count(int label) const {
    return static_cast<std::size_t>(
        std::count(labels_.begin(), labels_.end(), static_cast<std::uint8_t>(label)));
}

void Hyperparams::validate() const {
    auto fail = [](const std::string& msg) { throw InvalidArgument("Hyperparams: " + msg); };
    for (double v : {alpha, beta, theta_a, theta_il, theta_ih, edge_theta_i, edge_theta_a}) {
        require_finite(v, "Hyperparams field");
    }
    if (!(alpha >= 0.0)) fail("alpha must be >= 0");
    if (!(beta > 0.0)) fail("beta must be > 0");
    if (!(theta_il > 0.0 && theta_il < theta_ih)) fail("require 0 < theta_il < theta_ih");
    if (!(theta_a > 0.0 && theta_a < 90.0)) fail("theta_a must lie in (0, 90) degrees");
    if (!(edge_theta_i > 0.0)) fail("edge_theta_i must be > 0");
    if (!(edge_theta_a > 0.0 && edge_theta_a < 180.0)) fail("edge_theta_a must lie in (0, 180) degrees");
    if (scales.empty()) fail("scales must be nonempty");
    for (int s : scales) {
        if (s < 2) fail("every scale must be >= 2");
    }
}

void validate_pairing(const FlowMap& flow, const SubjectMask& mask) {
    if (flow.width() != mask.width() || flow.height() != mask.height()) {
        std::ostringstream os;
        os << "flow is " << flow.width() << "x" << flow.height() << " but mask is " << mask.width() << "x"
           << mask.height();
        throw DimensionMismatch(os.str());
    }
}

}  // namespace hmore
