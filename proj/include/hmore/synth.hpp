#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hmore/types.hpp"

namespace hmore {

/// Limb segments in kinematic order. Upper segments are angled relative to the
/// torso, lower segments relative to their upper segment. Angle 0 points along
/// the torso's downward axis.
enum Limb : int {
    kLeftUpperArm = 0,
    kLeftForearm,
    kRightUpperArm,
    kRightForearm,
    kLeftThigh,
    kLeftShin,
    kRightThigh,
    kRightShin,
    kLimbCount
};

/// Rigid bodies of a figure: 0 is torso and head, 1 + Limb for each limb.
inline constexpr int kBodyCount = 1 + kLimbCount;

struct FigureSpec {
    // geometry (pixels)
    double torso_length = 26.0;   // hip midpoint to shoulder midpoint
    double shoulder_half = 9.0;
    double hip_half = 6.0;
    double neck_length = 8.0;     // shoulder midpoint to nose
    double head_radius = 5.0;
    double upper_arm = 13.0;
    double forearm = 12.0;
    double thigh = 15.0;
    double shin = 14.0;
    double torso_radius = 6.0;
    double limb_radius = 3.0;

    // root (hip midpoint) pose in both frames
    Point2 root_t{64.0, 64.0};
    Point2 root_t1{64.0, 64.0};
    double angle_t = 0.0;   // radians
    double angle_t1 = 0.0;

    std::array<double, kLimbCount> limb_angles{-0.35, 0.0, 0.35, 0.0, -0.12, 0.0, 0.12, 0.0};
    std::array<double, kLimbCount> limb_rates{};  // radians per frame

    friend bool operator==(const FigureSpec&, const FigureSpec&) = default;
};

struct SceneSpec {
    int width = 128;
    int height = 128;
    std::vector<FigureSpec> subjects;
    Vec2 camera_motion{};        // background flow
    double keypoint_noise = 0.0; // Gaussian sigma (px); confidences become exp(-sigma)
    std::uint64_t seed = 0;

    /// Throws InvalidArgument for malformed values and SpecOutOfBounds when a
    /// figure comes within 2 px of the raster border in either frame.
    void validate() const;
    friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;
    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct SceneTruth {
    std::array<KeypointFrame, 2> keypoints;
    SubjectMask mask_t;
    PointSet boundary_t;
    FlowMap gt_world;
    FlowMap gt_local;
    FlowMap gt_subject;
    std::array<GrayImage, 2> frames;
    std::vector<int> body;  // governing body per pixel, -1 on background

    friend bool operator==(const SceneTruth&, const SceneTruth&) = default;
};

/// Joint positions of a figure in frame 0 (t) or 1 (t+1), COCO order.
std::array<Point2, kNumJoints> figure_joints(const FigureSpec& fig, int frame);

/// Rigid transform of body b in a frame: x = R(angle) local + origin.
struct BodyPose {
    double angle = 0.0;
    Point2 origin;
};
std::array<BodyPose, kBodyCount> body_poses(const FigureSpec& fig, int frame);

SceneTruth generate_scene(const SceneSpec& spec);

/// Outline pixels of subject `label`: subject pixels with a non-subject (or
/// out-of-raster) 8-neighbour, ordered as Moore-neighbour chains. Throws
/// EmptySubject when the label has no pixels.
PointSet trace_boundary(const SubjectMask& mask, int label);

/// Union of trace_boundary over every subject.
PointSet trace_all_boundaries(const SubjectMask& mask);

/// The 128 x 128 single-subject scene used by the solver benchmarks.
SceneSpec reference_scene_spec();

/// A single-subject scene with random root motion and limb rates drawn from `seed`.
SceneSpec random_scene_spec(std::uint64_t seed, int width = 128, int height = 128);

}  // namespace hmore
