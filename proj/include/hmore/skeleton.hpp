#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "hmore/types.hpp"

namespace hmore {

/// Bones over COCO joint indices, each sampled uniformly at `samples_per_bone`
/// parameters t = 0, 1/(m-1), ..., 1.
struct BoneTopology {
    std::vector<std::pair<int, int>> edges;
    int samples_per_bone = 15;

    /// 14 bones x 15 samples = 210 points: four arm bones, four leg bones,
    /// shoulders, hips, both torso sides and nose-to-shoulders.
    static BoneTopology coco_default();

    void validate() const;
    std::size_t point_count() const { return edges.size() * static_cast<std::size_t>(samples_per_bone); }
    friend bool operator==(const BoneTopology&, const BoneTopology&) = default;
};

struct SkeletonPoint {
    double x = 0.0;
    double y = 0.0;
    double c = 1.0;

    Point2 position() const { return {x, y}; }
};

/// Dense skeleton samples, edge-major. `joints` keeps the source keypoints
/// (confidences clamped to [kConfidenceEps, 1]) for head-anchored alignment.
struct SkeletonMap {
    std::vector<SkeletonPoint> points;
    BoneTopology topology;
    Person joints{};

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

struct SkeletonOffsets {
    std::vector<Vec2> vectors;
    std::vector<double> confidences;

    std::size_t size() const { return vectors.size(); }
};

SkeletonMap interpolate_skeleton(const Person& frame, const BoneTopology& topology = BoneTopology::coco_default());

/// Per-point K_{t+1} - K_t with confidence min(c_t, c_{t+1}).
SkeletonOffsets skeleton_offsets(const SkeletonMap& k_t, const SkeletonMap& k_t1);

/// Matching score of a candidate skeleton point: distance / max(c, eps_c).
double match_score(const Point2& p, const SkeletonPoint& q);

/// Index of the skeleton point with the lowest match score; ties go to the
/// lowest index. Throws NoCandidates for an empty skeleton.
std::size_t match_body_point(const Point2& p, const SkeletonMap& skeleton);

/// Per-pixel matched skeleton index, or kNone for background pixels. The
/// subject of a pixel is its mask label.
struct MatchTable {
    static constexpr std::int32_t kNone = -1;

    int width = 0;
    int height = 0;
    std::vector<std::int32_t> index;

    std::int32_t at(int x, int y) const {
        return index[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
    }
    std::size_t matched_count() const;
};

/// Matches every subject pixel against the skeleton of its subject.
/// `skeletons[k - 1]` belongs to mask label k.
MatchTable match_all(const SubjectMask& mask, std::span<const SkeletonMap> skeletons);

/// For each mask label k (index k - 1) the person whose hip midpoint lies
/// nearest to a pixel of subject k, or -1 when no person maps to it.
std::vector<int> assign_persons_to_subjects(const KeypointFrame& frame, const SubjectMask& mask);

enum class AlignMethod { full_body_homography, head_anchor_similarity, translation };
enum class AlignKind { homography, similarity, translation };

/// Planar transform applied to homogeneous points. Maps K_{t+1} onto K_t.
class AlignTransform {
public:
    AlignTransform();  // identity translation
    AlignTransform(AlignKind kind, const std::array<double, 9>& matrix);

    static AlignTransform identity() { return {}; }
    static AlignTransform from_translation(double tx, double ty);
    static AlignTransform from_similarity(double scale, double angle, double tx, double ty);

    AlignKind kind() const { return kind_; }
    const std::array<double, 9>& matrix() const { return m_; }
    Point2 apply(const Point2& p) const;
    AlignTransform inverse() const;

    /// Rotation angle of the linear part (meaningful for similarity/translation).
    double rotation_angle() const;
    double scale() const;

private:
    AlignKind kind_;
    std::array<double, 9> m_;
};

/// Fits the transform mapping k_t1 onto k_t.
///  - full_body_homography: confidence-weighted normalised DLT over all points;
///    falls back to a similarity when the system is ill-conditioned (> 1e8).
///  - head_anchor_similarity: weighted least-squares similarity over the head
///    joints (COCO 0-4) whose confidence exceeds eps_c in both frames.
///  - translation: negated confidence-weighted mean offset.
AlignTransform fit_alignment(const SkeletonMap& k_t, const SkeletonMap& k_t1, AlignMethod method);

/// K'_{t+1} - K_t where K'_{t+1} = transform(K_{t+1}).
SkeletonOffsets aligned_offsets(const SkeletonMap& k_t, const SkeletonMap& k_t1, const AlignTransform& transform);

/// Weighted least-squares similarity dst ~ s R src + t (Umeyama). Throws
/// DegenerateConfiguration when the source points coincide.
AlignTransform fit_similarity(std::span<const Point2> src, std::span<const Point2> dst, std::span<const double> weights);

/// Weighted normalised DLT homography dst ~ H src. Throws
/// DegenerateConfiguration for fewer than 4 points; returns a similarity if
/// the DLT system is ill-conditioned.
AlignTransform fit_homography(std::span<const Point2> src, std::span<const Point2> dst, std::span<const double> weights);

}  // namespace hmore
