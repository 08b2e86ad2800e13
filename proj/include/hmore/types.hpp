#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hmore/error.hpp"

namespace hmore {

// Pixel convention shared by every module: x grows rightward, y downward, and
// integer coordinates address pixel centers with (0,0) the top-left pixel.

/// Below this norm a displacement counts as static.
inline constexpr double kStaticEps = 1e-6;
/// Lower clamp applied to keypoint confidences when skeleton maps are built.
inline constexpr double kConfidenceEps = 1e-3;
inline constexpr int kNumJoints = 17;

inline void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw NonFiniteValue(std::string(what) + " must be finite");
    }
}

/// Displacement in pixels. The constructor rejects NaN/Inf.
struct Vec2 {
    double dx = 0.0;
    double dy = 0.0;

    constexpr Vec2() = default;
    Vec2(double x, double y) : dx(x), dy(y) {
        require_finite(dx, "Vec2.dx");
        require_finite(dy, "Vec2.dy");
    }

    double norm() const { return std::hypot(dx, dy); }
    double squared_norm() const { return dx * dx + dy * dy; }
    double dot(const Vec2& o) const { return dx * o.dx + dy * o.dy; }
    double cross(const Vec2& o) const { return dx * o.dy - dy * o.dx; }

    friend Vec2 operator+(const Vec2& a, const Vec2& b) { return {a.dx + b.dx, a.dy + b.dy}; }
    friend Vec2 operator-(const Vec2& a, const Vec2& b) { return {a.dx - b.dx, a.dy - b.dy}; }
    friend Vec2 operator*(double s, const Vec2& a) { return {s * a.dx, s * a.dy}; }
    friend bool operator==(const Vec2& a, const Vec2& b) = default;
};

/// Position in pixel coordinates. Non-finite coordinates are rejected.
struct Point2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Point2() = default;
    Point2(double px, double py) : x(px), y(py) {
        require_finite(x, "Point2.x");
        require_finite(y, "Point2.y");
    }

    friend Point2 operator+(const Point2& p, const Vec2& v) { return {p.x + v.dx, p.y + v.dy}; }
    friend Vec2 operator-(const Point2& a, const Point2& b) { return {a.x - b.x, a.y - b.y}; }
    friend bool operator==(const Point2& a, const Point2& b) = default;
};

inline double distance(const Point2& a, const Point2& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

/// Dense per-pixel displacement field stored row-major.
class FlowMap {
public:
    FlowMap() = default;
    FlowMap(int width, int height);
    FlowMap(int width, int height, std::vector<Vec2> vectors);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return vectors_.size(); }
    bool empty() const { return vectors_.empty(); }

    const Vec2& at(int x, int y) const { return vectors_[index(x, y)]; }
    const Vec2& operator[](std::size_t i) const { return vectors_[i]; }
    void set(int x, int y, const Vec2& v) { vectors_[index(x, y)] = v; }
    void set(std::size_t i, const Vec2& v) { vectors_[i] = v; }

    std::span<const Vec2> vectors() const { return vectors_; }
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }
    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

    friend bool operator==(const FlowMap&, const FlowMap&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<Vec2> vectors_;
};

/// A 2D joint with visibility/confidence in [0, 1].
struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    double c = 1.0;

    constexpr Keypoint() = default;
    Keypoint(double px, double py, double conf);

    Point2 position() const { return {x, y}; }
    friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

/// One person: the 17 COCO joints in canonical order.
using Person = std::array<Keypoint, kNumJoints>;

namespace coco {
inline constexpr int kNose = 0;
inline constexpr int kLeftEye = 1;
inline constexpr int kRightEye = 2;
inline constexpr int kLeftEar = 3;
inline constexpr int kRightEar = 4;
inline constexpr int kLeftShoulder = 5;
inline constexpr int kRightShoulder = 6;
inline constexpr int kLeftElbow = 7;
inline constexpr int kRightElbow = 8;
inline constexpr int kLeftWrist = 9;
inline constexpr int kRightWrist = 10;
inline constexpr int kLeftHip = 11;
inline constexpr int kRightHip = 12;
inline constexpr int kLeftKnee = 13;
inline constexpr int kRightKnee = 14;
inline constexpr int kLeftAnkle = 15;
inline constexpr int kRightAnkle = 16;
}  // namespace coco

struct KeypointFrame {
    std::vector<Person> persons;
    friend bool operator==(const KeypointFrame&, const KeypointFrame&) = default;
};

/// Per-pixel instance labels: 0 is background, k >= 1 is subject k. The set of
/// non-zero labels must be exactly {1, ..., subject_count()}.
class SubjectMask {
public:
    SubjectMask() = default;
    SubjectMask(int width, int height);
    SubjectMask(int width, int height, std::vector<std::uint8_t> labels);

    int width() const { return width_; }
    int height() const { return height_; }
    int subject_count() const { return subject_count_; }
    std::size_t size() const { return labels_.size(); }

    std::uint8_t at(int x, int y) const { return labels_[index(x, y)]; }
    std::uint8_t operator[](std::size_t i) const { return labels_[i]; }
    std::span<const std::uint8_t> labels() const { return labels_; }
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }
    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
    std::size_t count(int label) const;

    friend bool operator==(const SubjectMask& a, const SubjectMask& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.labels_ == b.labels_;
    }

private:
    int width_ = 0;
    int height_ = 0;
    int subject_count_ = 0;
    std::vector<std::uint8_t> labels_;
};

struct PointSet {
    std::vector<Point2> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    friend bool operator==(const PointSet&, const PointSet&) = default;
};

/// How the per-scale patch mean is normalised.
enum class PatchNormalization {
    co_occupied,  // mean over cells holding both curves
    all_cells,    // sum over co-occupied cells divided by every cell in the grid
};

struct Hyperparams {
    double alpha = 0.1;     // weight of the boundary term
    double beta = 0.01;     // weight of the intensity sub-term
    double theta_a = 15.0;  // degrees
    double theta_il = 0.8;
    double theta_ih = 1.2;
    double edge_theta_i = 0.5;   // pixels
    double edge_theta_a = 30.0;  // degrees
    bool edge_auto = false;      // derive edge_theta_i from the flow (90th percentile)
    std::vector<int> scales{8, 16, 32};
    PatchNormalization patch_normalization = PatchNormalization::co_occupied;

    /// Throws InvalidArgument when an invariant is violated.
    void validate() const;
    friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

void validate_pairing(const FlowMap& flow, const SubjectMask& mask);

}  // namespace hmore
