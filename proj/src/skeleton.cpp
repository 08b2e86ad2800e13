#include "hmore/skeleton.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "hmore/parallel.hpp"

namespace hmore {

namespace {

constexpr double kHomographyConditionLimit = 1e8;

double clamp_confidence(double c) { return std::clamp(c, kConfidenceEps, 1.0); }

void require_same_topology(const SkeletonMap& a, const SkeletonMap& b) {
    if (!(a.topology == b.topology) || a.points.size() != b.points.size()) {
        throw TopologyMismatch("skeleton maps have different topology or length");
    }
}

struct Normalizer {
    double cx = 0.0;
    double cy = 0.0;
    double s = 1.0;

    Eigen::Matrix3d matrix() const {
        Eigen::Matrix3d t;
        t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
        return t;
    }
};

Normalizer hartley_normalizer(std::span<const Point2> pts, std::span<const double> w) {
    double sw = 0.0;
    Normalizer n;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        sw += w[i];
        n.cx += w[i] * pts[i].x;
        n.cy += w[i] * pts[i].y;
    }
    n.cx /= sw;
    n.cy /= sw;
    double mean_dist = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        mean_dist += w[i] * std::hypot(pts[i].x - n.cx, pts[i].y - n.cy);
    }
    mean_dist /= sw;
    if (!(mean_dist > 0.0)) {
        throw DegenerateConfiguration("all alignment points coincide");
    }
    n.s = std::sqrt(2.0) / mean_dist;
    return n;
}

void check_fit_inputs(std::span<const Point2> src, std::span<const Point2> dst, std::span<const double> w) {
    if (src.size() != dst.size() || src.size() != w.size()) {
        throw InvalidArgument("alignment inputs must have equal length");
    }
    for (double v : w) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw InvalidArgument("alignment weights must be finite and non-negative");
        }
    }
}

AlignTransform checked(AlignKind kind, const Eigen::Matrix3d& m) {
    std::array<double, 9> a{};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            a[static_cast<std::size_t>(r * 3 + c)] = m(r, c);
        }
    }
    for (double v : a) {
        if (!std::isfinite(v)) {
            throw DegenerateConfiguration("alignment produced a non-finite transform");
        }
    }
    return AlignTransform(kind, a);
}

}  // namespace

BoneTopology BoneTopology::coco_default() {
    using namespace coco;
    BoneTopology t;
    t.edges = {
        {kLeftShoulder, kLeftElbow},  {kLeftElbow, kLeftWrist},   {kRightShoulder, kRightElbow},
        {kRightElbow, kRightWrist},   {kLeftHip, kLeftKnee},      {kLeftKnee, kLeftAnkle},
        {kRightHip, kRightKnee},      {kRightKnee, kRightAnkle},  {kLeftShoulder, kRightShoulder},
        {kLeftHip, kRightHip},        {kLeftShoulder, kLeftHip},  {kRightShoulder, kRightHip},
        {kNose, kLeftShoulder},       {kNose, kRightShoulder},
    };
    t.samples_per_bone = 15;
    return t;
}

void BoneTopology::validate() const {
    if (samples_per_bone < 2) {
        throw InvalidArgument("samples_per_bone must be >= 2");
    }
    if (edges.empty()) {
        throw InvalidArgument("topology needs at least one bone");
    }
    std::set<std::pair<int, int>> seen;
    for (auto [a, b] : edges) {
        if (a < 0 || a >= kNumJoints || b < 0 || b >= kNumJoints) {
            throw InvalidArgument("bone joint index outside [0, 16]");
        }
        if (!seen.insert({a, b}).second) {
            throw InvalidArgument("duplicate bone in topology");
        }
    }
}

SkeletonMap interpolate_skeleton(const Person& frame, const BoneTopology& topology) {
    topology.validate();
    SkeletonMap map;
    map.topology = topology;
    for (std::size_t j = 0; j < frame.size(); ++j) {
        map.joints[j] = Keypoint(frame[j].x, frame[j].y, clamp_confidence(frame[j].c));
    }
    const int m = topology.samples_per_bone;
    map.points.reserve(topology.point_count());
    for (auto [ia, ib] : topology.edges) {
        const Keypoint& a = map.joints[static_cast<std::size_t>(ia)];
        const Keypoint& b = map.joints[static_cast<std::size_t>(ib)];
        const double c = std::min(a.c, b.c);
        for (int i = 0; i < m; ++i) {
            SkeletonPoint p;
            if (i == 0) {
                p = {a.x, a.y, c};
            } else if (i == m - 1) {
                p = {b.x, b.y, c};
            } else {
                const double t = static_cast<double>(i) / static_cast<double>(m - 1);
                p = {(1.0 - t) * a.x + t * b.x, (1.0 - t) * a.y + t * b.y, c};
            }
            map.points.push_back(p);
        }
    }
    return map;
}

SkeletonOffsets skeleton_offsets(const SkeletonMap& k_t, const SkeletonMap& k_t1) {
    require_same_topology(k_t, k_t1);
    SkeletonOffsets out;
    out.vectors.reserve(k_t.size());
    out.confidences.reserve(k_t.size());
    for (std::size_t i = 0; i < k_t.size(); ++i) {
        const auto& a = k_t.points[i];
        const auto& b = k_t1.points[i];
        out.vectors.emplace_back(b.x - a.x, b.y - a.y);
        out.confidences.push_back(std::min(a.c, b.c));
    }
    return out;
}

double match_score(const Point2& p, const SkeletonPoint& q) {
    const double dx = p.x - q.x;
    const double dy = p.y - q.y;
    return std::sqrt(dx * dx + dy * dy) / std::max(q.c, kConfidenceEps);
}

std::size_t match_body_point(const Point2& p, const SkeletonMap& skeleton) {
    if (skeleton.points.empty()) {
        throw NoCandidates("subject has no skeleton points");
    }
    std::size_t best = 0;
    double best_score = match_score(p, skeleton.points[0]);
    for (std::size_t i = 1; i < skeleton.points.size(); ++i) {
        const double s = match_score(p, skeleton.points[i]);
        if (s < best_score) {
            best_score = s;
            best = i;
        }
    }
    return best;
}

std::size_t MatchTable::matched_count() const {
    return static_cast<std::size_t>(std::count_if(index.begin(), index.end(), [](std::int32_t v) { return v != kNone; }));
}

MatchTable match_all(const SubjectMask& mask, std::span<const SkeletonMap> skeletons) {
    for (int label = 1; label <= mask.subject_count(); ++label) {
        if (static_cast<std::size_t>(label) > skeletons.size() ||
            skeletons[static_cast<std::size_t>(label - 1)].points.empty()) {
            throw NoCandidates("subject " + std::to_string(label) + " has no skeleton points");
        }
    }
    MatchTable table;
    table.width = mask.width();
    table.height = mask.height();
    table.index.assign(mask.size(), MatchTable::kNone);
    parallel_for(static_cast<std::size_t>(mask.height()), [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < mask.width(); ++x) {
            const int label = mask.at(x, y);
            if (label == 0) {
                continue;
            }
            const auto& skel = skeletons[static_cast<std::size_t>(label - 1)];
            table.index[mask.index(x, y)] = static_cast<std::int32_t>(
                match_body_point(Point2(x, y), skel));
        }
    });
    return table;
}

std::vector<int> assign_persons_to_subjects(const KeypointFrame& frame, const SubjectMask& mask) {
    const int k = mask.subject_count();
    std::vector<int> person_for_label(static_cast<std::size_t>(k), -1);
    std::vector<double> best_dist(static_cast<std::size_t>(k), std::numeric_limits<double>::infinity());
    if (k == 0) {
        return person_for_label;
    }
    for (std::size_t pi = 0; pi < frame.persons.size(); ++pi) {
        const auto& person = frame.persons[pi];
        const double hx = 0.5 * (person[coco::kLeftHip].x + person[coco::kRightHip].x);
        const double hy = 0.5 * (person[coco::kLeftHip].y + person[coco::kRightHip].y);
        double nearest = std::numeric_limits<double>::infinity();
        int label = 0;
        for (int y = 0; y < mask.height(); ++y) {
            for (int x = 0; x < mask.width(); ++x) {
                const int l = mask.at(x, y);
                if (l == 0) {
                    continue;
                }
                const double d = (x - hx) * (x - hx) + (y - hy) * (y - hy);
                if (d < nearest) {
                    nearest = d;
                    label = l;
                }
            }
        }
        if (label == 0) {
            continue;
        }
        auto slot = static_cast<std::size_t>(label - 1);
        if (nearest < best_dist[slot]) {
            best_dist[slot] = nearest;
            person_for_label[slot] = static_cast<int>(pi);
        }
    }
    return person_for_label;
}

AlignTransform::AlignTransform() : kind_(AlignKind::translation), m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

AlignTransform::AlignTransform(AlignKind kind, const std::array<double, 9>& matrix) : kind_(kind), m_(matrix) {
    for (double v : m_) {
        require_finite(v, "AlignTransform entry");
    }
    if (kind_ != AlignKind::homography && (m_[6] != 0.0 || m_[7] != 0.0 || m_[8] != 1.0)) {
        throw InvalidArgument("affine alignment transforms need bottom row (0, 0, 1)");
    }
    const double det2 = m_[0] * m_[4] - m_[1] * m_[3];
    if (det2 == 0.0) {
        throw DegenerateConfiguration("alignment transform has a singular linear part");
    }
    Eigen::Matrix3d m;
    m << m_[0], m_[1], m_[2], m_[3], m_[4], m_[5], m_[6], m_[7], m_[8];
    if (m.determinant() == 0.0) {
        throw DegenerateConfiguration("alignment transform is not invertible");
    }
}

AlignTransform AlignTransform::from_translation(double tx, double ty) {
    return AlignTransform(AlignKind::translation, {1, 0, tx, 0, 1, ty, 0, 0, 1});
}

AlignTransform AlignTransform::from_similarity(double scale, double angle, double tx, double ty) {
    const double c = scale * std::cos(angle);
    const double s = scale * std::sin(angle);
    return AlignTransform(AlignKind::similarity, {c, -s, tx, s, c, ty, 0, 0, 1});
}

Point2 AlignTransform::apply(const Point2& p) const {
    const double x = m_[0] * p.x + m_[1] * p.y + m_[2];
    const double y = m_[3] * p.x + m_[4] * p.y + m_[5];
    if (kind_ != AlignKind::homography) {
        return {x, y};
    }
    const double w = m_[6] * p.x + m_[7] * p.y + m_[8];
    return {x / w, y / w};
}

AlignTransform AlignTransform::inverse() const {
    Eigen::Matrix3d m;
    m << m_[0], m_[1], m_[2], m_[3], m_[4], m_[5], m_[6], m_[7], m_[8];
    Eigen::Matrix3d inv = m.inverse();
    if (kind_ != AlignKind::homography) {
        inv.row(2) << 0.0, 0.0, 1.0;
    }
    return checked(kind_, inv);
}

double AlignTransform::rotation_angle() const { return std::atan2(m_[3], m_[0]); }

double AlignTransform::scale() const { return std::sqrt(std::abs(m_[0] * m_[4] - m_[1] * m_[3])); }

AlignTransform fit_similarity(std::span<const Point2> src, std::span<const Point2> dst, std::span<const double> weights) {
    check_fit_inputs(src, dst, weights);
    double sw = 0.0;
    Eigen::Vector2d mu_s = Eigen::Vector2d::Zero();
    Eigen::Vector2d mu_d = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) {
        sw += weights[i];
        mu_s += weights[i] * Eigen::Vector2d(src[i].x, src[i].y);
        mu_d += weights[i] * Eigen::Vector2d(dst[i].x, dst[i].y);
    }
    if (!(sw > 0.0)) {
        throw DegenerateConfiguration("similarity fit needs positive total weight");
    }
    mu_s /= sw;
    mu_d /= sw;
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    double var_s = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const Eigen::Vector2d a = Eigen::Vector2d(src[i].x, src[i].y) - mu_s;
        const Eigen::Vector2d b = Eigen::Vector2d(dst[i].x, dst[i].y) - mu_d;
        cov += weights[i] * b * a.transpose();
        var_s += weights[i] * a.squaredNorm();
    }
    cov /= sw;
    var_s /= sw;
    const double extent = std::max(mu_s.cwiseAbs().maxCoeff(), 1.0);
    if (!(var_s > 1e-20 * extent * extent)) {
        throw DegenerateConfiguration("similarity fit: source points coincide");
    }
    Eigen::JacobiSVD<Eigen::Matrix2d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix2d s = Eigen::Matrix2d::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
        s(1, 1) = -1.0;
    }
    const Eigen::Matrix2d r = svd.matrixU() * s * svd.matrixV().transpose();
    const double scale = (svd.singularValues().asDiagonal() * s).trace() / var_s;
    if (!(scale > 0.0)) {
        throw DegenerateConfiguration("similarity fit: destination points coincide");
    }
    const Eigen::Vector2d t = mu_d - scale * r * mu_s;
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m.topLeftCorner<2, 2>() = scale * r;
    m.topRightCorner<2, 1>() = t;
    return checked(AlignKind::similarity, m);
}

AlignTransform fit_homography(std::span<const Point2> src, std::span<const Point2> dst, std::span<const double> weights) {
    check_fit_inputs(src, dst, weights);
    std::size_t usable = 0;
    for (double w : weights) {
        usable += w > 0.0 ? 1 : 0;
    }
    if (usable < 4) {
        throw DegenerateConfiguration("homography needs at least 4 weighted point pairs");
    }
    const Normalizer ns = hartley_normalizer(src, weights);
    const Normalizer nd = hartley_normalizer(dst, weights);

    Eigen::MatrixXd a(2 * src.size(), 9);
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double sw = std::sqrt(weights[i]);
        const double x = ns.s * (src[i].x - ns.cx);
        const double y = ns.s * (src[i].y - ns.cy);
        const double u = nd.s * (dst[i].x - nd.cx);
        const double v = nd.s * (dst[i].y - nd.cy);
        const auto r0 = static_cast<Eigen::Index>(2 * i);
        a.row(r0) << x, y, 1, 0, 0, 0, -u * x, -u * y, -u;
        a.row(r0 + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y, -v;
        a.row(r0) *= sw;
        a.row(r0 + 1) *= sw;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv.size() < 9 || !(sv(7) > 0.0) || sv(0) / sv(7) > kHomographyConditionLimit) {
        return fit_similarity(src, dst, weights);
    }
    const Eigen::VectorXd h = svd.matrixV().col(8);
    Eigen::Matrix3d hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    Eigen::Matrix3d hm = nd.matrix().inverse() * hn * ns.matrix();
    if (std::abs(hm(2, 2)) > 1e-12 * hm.cwiseAbs().maxCoeff()) {
        hm /= hm(2, 2);
    } else {
        hm /= hm.norm();
    }
    return checked(AlignKind::homography, hm);
}

AlignTransform fit_alignment(const SkeletonMap& k_t, const SkeletonMap& k_t1, AlignMethod method) {
    require_same_topology(k_t, k_t1);
    std::vector<Point2> src;
    std::vector<Point2> dst;
    std::vector<double> w;

    if (method == AlignMethod::head_anchor_similarity) {
        for (int j = coco::kNose; j <= coco::kRightEar; ++j) {
            const auto& a = k_t.joints[static_cast<std::size_t>(j)];
            const auto& b = k_t1.joints[static_cast<std::size_t>(j)];
            if (a.c > kConfidenceEps && b.c > kConfidenceEps) {
                src.emplace_back(b.x, b.y);
                dst.emplace_back(a.x, a.y);
                w.push_back(std::min(a.c, b.c));
            }
        }
        if (src.size() < 2) {
            throw InsufficientHeadPoints("head-anchor alignment needs >= 2 visible head keypoints, found " +
                                         std::to_string(src.size()));
        }
        return fit_similarity(src, dst, w);
    }

    src.reserve(k_t.size());
    dst.reserve(k_t.size());
    w.reserve(k_t.size());
    for (std::size_t i = 0; i < k_t.size(); ++i) {
        src.push_back(k_t1.points[i].position());
        dst.push_back(k_t.points[i].position());
        w.push_back(std::min(k_t.points[i].c, k_t1.points[i].c));
    }

    if (method == AlignMethod::translation) {
        double sw = 0.0;
        double tx = 0.0;
        double ty = 0.0;
        for (std::size_t i = 0; i < src.size(); ++i) {
            sw += w[i];
            tx += w[i] * (dst[i].x - src[i].x);
            ty += w[i] * (dst[i].y - src[i].y);
        }
        if (!(sw > 0.0)) {
            throw DegenerateConfiguration("translation fit needs positive total weight");
        }
        return AlignTransform::from_translation(tx / sw, ty / sw);
    }
    return fit_homography(src, dst, w);
}

SkeletonOffsets aligned_offsets(const SkeletonMap& k_t, const SkeletonMap& k_t1, const AlignTransform& transform) {
    require_same_topology(k_t, k_t1);
    SkeletonOffsets out;
    out.vectors.reserve(k_t.size());
    out.confidences.reserve(k_t.size());
    for (std::size_t i = 0; i < k_t.size(); ++i) {
        const Point2 moved = transform.apply(k_t1.points[i].position());
        out.vectors.emplace_back(moved.x - k_t.points[i].x, moved.y - k_t.points[i].y);
        out.confidences.push_back(std::min(k_t.points[i].c, k_t1.points[i].c));
    }
    return out;
}

}  // namespace hmore
