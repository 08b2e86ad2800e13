#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "hmore/boundary.hpp"
#include "hmore/kinematic.hpp"
#include "hmore/skeleton.hpp"
#include "hmore/types.hpp"

namespace hmore {

/// Skeleton maps at t and t+1 for every mask label (index label - 1).
struct SubjectSkeletons {
    std::vector<SkeletonMap> k_t;
    std::vector<SkeletonMap> k_t1;
    std::vector<int> person;  // person index per subject
};

/// Pairs each subject with the person whose hip midpoint is nearest to it and
/// interpolates both frames. Throws NoCandidates for a subject without a person,
/// TopologyMismatch when a person is missing from frame t+1.
SubjectSkeletons build_subject_skeletons(const KeypointFrame& frame_t, const KeypointFrame& frame_t1,
                                         const SubjectMask& mask,
                                         const BoneTopology& topology = BoneTopology::coco_default());

/// Everything the objective needs besides the flow.
struct Priors {
    SubjectMask mask;
    MatchTable matches;
    std::vector<SkeletonOffsets> offsets;  // per subject
    PointSet boundary;
};

/// Raw offsets K_{t+1} - K_t.
Priors make_priors(const SubjectSkeletons& sk, const SubjectMask& mask, const PointSet& boundary);

/// Offsets after aligning K_{t+1} onto K_t with `method`, for the local-flow constraint.
Priors make_local_priors(const SubjectSkeletons& sk, const SubjectMask& mask, const PointSet& boundary,
                         AlignMethod method);

struct ObjectiveBreakdown {
    double total = 0.0;
    double f = 0.0;
    double g = 0.0;
    double alpha = 0.0;
    ConstraintReport f_report;
    BoundaryReport g_report;
};

/// F + alpha * G with the hard constraint terms.
ObjectiveBreakdown joint_objective(const FlowMap& flow, const Priors& priors, const Hyperparams& hp);

/// Same machinery on the local flow; priors should come from make_local_priors.
ObjectiveBreakdown local_constraint_objective(const FlowMap& local, const Priors& local_priors,
                                              const Hyperparams& hp);

struct SolverOptions {
    int max_iters = 500;
    double step_size = 1.0;              // initial step, in units of 1 / (h*w)
    double max_pixel_step = 2.0;         // per-pixel displacement cap of one step (px)
    std::vector<double> tau_schedule{0.5, 0.1, 0.02};
    double smoothness_weight = 0.05;
    double background_weight = 1.0;
    double boundary_tau_scale = 1.0;     // soft edge sharpness relative to tau
    // Scale the skeleton term and regularisers by (h*w) / matched pixels, so
    // F is a per-subject-pixel mean like the pixel-valued boundary term.
    bool per_matched_pixel = true;
    double tolerance = 1e-6;             // relative surrogate decrease that ends a phase
    double step_tolerance = 1e-4;        // max |dM| (px) of an accepted step that ends a phase
    std::uint64_t seed = 0;

    void validate() const;
};

struct SolverStep {
    int phase = 0;
    double tau = 0.0;
    double surrogate_before = 0.0;
    double surrogate_after = 0.0;
    double max_change = 0.0;
    ObjectiveBreakdown hard;
};

struct SolveResult {
    FlowMap flow;
    std::vector<SolverStep> trace;  // one entry per accepted step
    int iterations = 0;             // gradient evaluations with a line search
    bool converged = false;
};

/// Value and gradient of the solver's smooth objective:
///   c * (smooth F + smoothness * |grad M|^2 + background * |M|^2 off-subject) + alpha * soft G
/// with c = (h*w) / matched when per_matched_pixel is set, else 1. The
/// smoothness sum skips neighbour pairs with different mask labels; both
/// regularisers are normalised by h*w.
SmoothValue solver_surrogate(const FlowMap& flow, const Priors& priors, const Hyperparams& hp,
                             const SolverOptions& opts, double tau);

/// Gradient descent with backtracking line search, one phase per tau value.
/// Each pixel's move within a step is capped at max_pixel_step; a step is
/// accepted only if it lowers the surrogate by a sufficient amount.
SolveResult solve_world_flow(const FlowMap& init, const Priors& priors, const Hyperparams& hp,
                             const SolverOptions& opts = {});

enum class MotionMethod { mask_mean, alignment_field };

/// Subject motion v_s as a dense field (zero on background). For mask_mean,
/// `per_subject` holds the broadcast vector of each subject.
struct SubjectMotion {
    MotionMethod method = MotionMethod::mask_mean;
    FlowMap field;
    std::vector<Vec2> per_subject;
    std::vector<AlignTransform> transforms;  // alignment_field only
};

SubjectMotion estimate_subject_motion(const FlowMap& world, const SubjectMask& mask, const SubjectSkeletons& sk,
                                      MotionMethod method, AlignMethod align = AlignMethod::head_anchor_similarity);

/// world = local + subject holds bitwise on every pixel, in double and in
/// float32 arithmetic. On subject pixels each component pair (world, subject)
/// is snapped to a common grid of two float32 ulps of the larger magnitude, so
/// all three fields are float32-exact; the stored world may differ from the
/// input by up to one such ulp. Background pixels keep the world flow rounded
/// to float32 and a zero subject motion.
struct Decomposition {
    FlowMap world;
    FlowMap subject;
    FlowMap local;
};

Decomposition decompose_local(const FlowMap& world, const FlowMap& subject_motion, const SubjectMask& mask);

/// Largest |world - (local + subject)| component over all pixels.
double reconstruction_error(const Decomposition& d);

struct EndpointError {
    double mean = 0.0;
    double max = 0.0;
    std::size_t count = 0;
};

/// EPE over all pixels, or over subject pixels when a mask is given.
EndpointError endpoint_error(const FlowMap& pred, const FlowMap& gt, const SubjectMask* mask = nullptr);

}  // namespace hmore
