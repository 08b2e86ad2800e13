#pragma once

#include <span>
#include <utility>
#include <vector>

#include "hmore/skeleton.hpp"
#include "hmore/types.hpp"

namespace hmore {

/// 1 when u deviates from the skeleton offset k by more than theta_a degrees.
/// Both static (norms < kStaticEps) gives 0; exactly one static gives 1.
int angular_term(const Vec2& u, const Vec2& k, double theta_a_deg);

/// ReLU[(|u| - lo|k|)(|u| - hi|k|)]: zero inside the band [lo|k|, hi|k|].
double intensity_term(const Vec2& u, const Vec2& k, double theta_il, double theta_ih);

struct ConstraintReport {
    double f_value = 0.0;                    // sum over matched pixels / (h*w)
    double f_matched_normalized = 0.0;       // same sum / matched pixel count
    double angular_violation_fraction = 0.0;
    double intensity_mean_penalty = 0.0;
    std::size_t matched_count = 0;
    std::size_t pixel_count = 0;
    std::vector<std::pair<double, double>> per_pixel;  // (F_A, F_I); filled on request
};

/// Skeleton constraint over all matched pixels. `offsets[k - 1]` holds the
/// skeleton offsets of mask label k, indexed like the match table.
ConstraintReport skeleton_constraint(const FlowMap& flow, std::span<const SkeletonOffsets> offsets,
                                     const MatchTable& matches, const SubjectMask& mask, const Hyperparams& hp,
                                     bool keep_per_pixel = false);

/// Differentiable stand-in for angular_term. Uses a logistic step in the
/// cosine, rescaled to be exactly 0 for parallel and 1 for antiparallel
/// vectors, and a cosine whose |u| is softened by tau^2 |k| so the surrogate
/// stays smooth at u = 0. Tends to angular_term as tau -> 0.
double smooth_angular_term(const Vec2& u, const Vec2& k, double theta_a_deg, double tau, Vec2* grad_u = nullptr);

/// intensity_term with its gradient in u (zero on the band and at u = 0).
double intensity_term_with_gradient(const Vec2& u, const Vec2& k, double theta_il, double theta_ih, Vec2* grad_u);

struct SmoothValue {
    double value = 0.0;
    FlowMap gradient;
};

SmoothValue smooth_skeleton_constraint(const FlowMap& flow, std::span<const SkeletonOffsets> offsets,
                                       const MatchTable& matches, const SubjectMask& mask, const Hyperparams& hp,
                                       double tau);

}  // namespace hmore
