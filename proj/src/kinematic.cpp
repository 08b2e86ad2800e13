#include "hmore/kinematic.hpp"

#include <cmath>
#include <numbers>

#include "hmore/parallel.hpp"

namespace hmore {

namespace {

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void check_inputs(const FlowMap& flow, std::span<const SkeletonOffsets> offsets, const MatchTable& matches,
                  const SubjectMask& mask) {
    validate_pairing(flow, mask);
    if (matches.width != flow.width() || matches.height != flow.height() || matches.index.size() != flow.size()) {
        throw DimensionMismatch("match table does not match the flow dimensions");
    }
    if (offsets.size() < static_cast<std::size_t>(mask.subject_count())) {
        throw NoCandidates("missing skeleton offsets for a subject");
    }
}

const Vec2& matched_offset(std::span<const SkeletonOffsets> offsets, const SubjectMask& mask, std::size_t i,
                           std::int32_t idx) {
    const auto& subject = offsets[static_cast<std::size_t>(mask[i]) - 1];
    if (idx < 0 || static_cast<std::size_t>(idx) >= subject.vectors.size()) {
        throw DimensionMismatch("match index outside the subject's skeleton offsets");
    }
    return subject.vectors[static_cast<std::size_t>(idx)];
}

}  // namespace

int angular_term(const Vec2& u, const Vec2& k, double theta_a_deg) {
    const double nu = u.norm();
    const double nk = k.norm();
    const bool u_static = nu < kStaticEps;
    const bool k_static = nk < kStaticEps;
    if (u_static && k_static) {
        return 0;
    }
    if (u_static || k_static) {
        return 1;
    }
    const double cosine = u.dot(k) / (nu * nk);
    return cosine < std::cos(deg2rad(theta_a_deg)) ? 1 : 0;
}

double intensity_term(const Vec2& u, const Vec2& k, double theta_il, double theta_ih) {
    const double nu = u.norm();
    const double nk = k.norm();
    const double q = (nu - theta_il * nk) * (nu - theta_ih * nk);
    return q > 0.0 ? q : 0.0;
}

ConstraintReport skeleton_constraint(const FlowMap& flow, std::span<const SkeletonOffsets> offsets,
                                     const MatchTable& matches, const SubjectMask& mask, const Hyperparams& hp,
                                     bool keep_per_pixel) {
    check_inputs(flow, offsets, matches, mask);
    const int w = flow.width();
    const auto rows = static_cast<std::size_t>(flow.height());

    struct RowSums {
        double angular = 0.0;
        double intensity = 0.0;
        std::size_t matched = 0;
    };
    std::vector<RowSums> sums(rows);
    ConstraintReport report;
    if (keep_per_pixel) {
        report.per_pixel.assign(flow.size(), {0.0, 0.0});
    }
    parallel_for(rows, [&](std::size_t row) {
        RowSums s;
        for (int x = 0; x < w; ++x) {
            const std::size_t i = row * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
            const std::int32_t idx = matches.index[i];
            if (idx == MatchTable::kNone || mask[i] == 0) {
                continue;
            }
            const Vec2& k = matched_offset(offsets, mask, i, idx);
            const int fa = angular_term(flow[i], k, hp.theta_a);
            const double fi = intensity_term(flow[i], k, hp.theta_il, hp.theta_ih);
            s.angular += fa;
            s.intensity += fi;
            ++s.matched;
            if (keep_per_pixel) {
                report.per_pixel[i] = {static_cast<double>(fa), fi};
            }
        }
        sums[row] = s;
    });

    double angular = 0.0;
    double intensity = 0.0;
    double total = 0.0;
    for (const auto& s : sums) {
        angular += s.angular;
        intensity += s.intensity;
        total += s.angular + hp.beta * s.intensity;
        report.matched_count += s.matched;
    }
    report.pixel_count = flow.size();
    report.f_value = total / static_cast<double>(report.pixel_count);
    if (report.matched_count > 0) {
        const auto m = static_cast<double>(report.matched_count);
        report.f_matched_normalized = total / m;
        report.angular_violation_fraction = angular / m;
        report.intensity_mean_penalty = intensity / m;
    }
    return report;
}

double smooth_angular_term(const Vec2& u, const Vec2& k, double theta_a_deg, double tau, Vec2* grad_u) {
    if (!(tau > 0.0)) {
        throw InvalidArgument("surrogate sharpness tau must be > 0");
    }
    if (grad_u) {
        *grad_u = Vec2{};
    }
    const double nk = k.norm();
    if (nk < kStaticEps) {
        return u.norm() < kStaticEps ? 0.0 : 1.0;
    }
    const double cos_t = std::cos(deg2rad(theta_a_deg));
    const double soft = tau * tau * nk;
    const double r = std::sqrt(u.squared_norm() + soft * soft);
    const double cosine = u.dot(k) / (r * nk);

    const double s_lo = sigmoid((cos_t - 1.0) / tau);
    const double s_hi = sigmoid((cos_t + 1.0) / tau);
    const double z = (cos_t - cosine) / tau;
    const double s = sigmoid(z);
    const double span = s_hi - s_lo;
    const double value = (s - s_lo) / span;
    if (grad_u) {
        // d value / d cosine
        const double dv_dc = -(s * (1.0 - s)) / (tau * span);
        const double inv = 1.0 / (r * nk);
        const double udk = u.dot(k);
        const double r2 = r * r;
        const double gx = inv * (k.dx - udk * u.dx / r2);
        const double gy = inv * (k.dy - udk * u.dy / r2);
        *grad_u = Vec2(dv_dc * gx, dv_dc * gy);
    }
    return value;
}

double intensity_term_with_gradient(const Vec2& u, const Vec2& k, double theta_il, double theta_ih, Vec2* grad_u) {
    if (grad_u) {
        *grad_u = Vec2{};
    }
    const double nu = u.norm();
    const double nk = k.norm();
    const double lo = theta_il * nk;
    const double hi = theta_ih * nk;
    const double q = (nu - lo) * (nu - hi);
    if (!(q > 0.0)) {
        return 0.0;
    }
    if (grad_u && nu > 0.0) {
        const double dq = (2.0 * nu - lo - hi) / nu;
        *grad_u = Vec2(dq * u.dx, dq * u.dy);
    }
    return q;
}

SmoothValue smooth_skeleton_constraint(const FlowMap& flow, std::span<const SkeletonOffsets> offsets,
                                       const MatchTable& matches, const SubjectMask& mask, const Hyperparams& hp,
                                       double tau) {
    check_inputs(flow, offsets, matches, mask);
    if (!(tau > 0.0)) {
        throw InvalidArgument("surrogate sharpness tau must be > 0");
    }
    const int w = flow.width();
    const auto rows = static_cast<std::size_t>(flow.height());
    const double norm = 1.0 / static_cast<double>(flow.size());

    SmoothValue out;
    out.gradient = FlowMap(flow.width(), flow.height());
    std::vector<double> row_sums(rows, 0.0);
    parallel_for(rows, [&](std::size_t row) {
        double sum = 0.0;
        for (int x = 0; x < w; ++x) {
            const std::size_t i = row * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
            const std::int32_t idx = matches.index[i];
            if (idx == MatchTable::kNone || mask[i] == 0) {
                continue;
            }
            const Vec2& k = matched_offset(offsets, mask, i, idx);
            Vec2 ga;
            Vec2 gi;
            const double fa = smooth_angular_term(flow[i], k, hp.theta_a, tau, &ga);
            const double fi = intensity_term_with_gradient(flow[i], k, hp.theta_il, hp.theta_ih, &gi);
            sum += fa + hp.beta * fi;
            out.gradient.set(i, Vec2(norm * (ga.dx + hp.beta * gi.dx), norm * (ga.dy + hp.beta * gi.dy)));
        }
        row_sums[row] = sum;
    });
    double total = 0.0;
    for (double s : row_sums) {
        total += s;
    }
    out.value = total * norm;
    return out;
}

}  // namespace hmore
