#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "hmore/types.hpp"

namespace testing {

inline hmore::FlowMap random_flow(int w, int h, std::mt19937_64& rng, double scale = 2.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    hmore::FlowMap f(w, h);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double dx = u(rng);
        const double dy = u(rng);
        f.set(i, hmore::Vec2(dx, dy));
    }
    return f;
}

inline hmore::FlowMap constant_flow(int w, int h, hmore::Vec2 v) {
    return hmore::FlowMap(w, h, std::vector<hmore::Vec2>(static_cast<std::size_t>(w) * h, v));
}

inline bool bitwise_equal(const hmore::FlowMap& a, const hmore::FlowMap& b) {
    if (a.width() != b.width() || a.height() != b.height()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::signbit(a[i].dx) != std::signbit(b[i].dx) || a[i].dx != b[i].dx ||
            std::signbit(a[i].dy) != std::signbit(b[i].dy) || a[i].dy != b[i].dy) {
            return false;
        }
    }
    return true;
}


/// Concentric circular arcs: s at radius r, e at r + d over the same angles,
/// sampled every 0.5 px of arc length and clipped to a 64 x 64 raster.
/// r in [12, 26], d in [1, 3], span in [90, 360] degrees, centre within 3 px
/// of the raster centre.
struct CurvePair {
    hmore::PointSet s;
    hmore::PointSet e;
};

inline CurvePair concentric_arc_pair(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = 12.0 + 14.0 * u(rng);
    const double d = 1.0 + 2.0 * u(rng);
    const double span = 0.5 * std::numbers::pi + 1.5 * std::numbers::pi * u(rng);
    const double t0 = 2.0 * std::numbers::pi * u(rng);
    const double cx = 32.0 + 6.0 * (u(rng) - 0.5);
    const double cy = 32.0 + 6.0 * (u(rng) - 0.5);
    auto arc = [&](double radius) {
        hmore::PointSet ps;
        const int n = std::max(2, static_cast<int>(radius * span / 0.5));
        for (int i = 0; i <= n; ++i) {
            const double t = t0 + span * i / n;
            const double x = cx + radius * std::cos(t);
            const double y = cy + radius * std::sin(t);
            if (x >= 0.0 && y >= 0.0 && x < 64.0 && y < 64.0) ps.points.emplace_back(x, y);
        }
        return ps;
    };
    return {arc(r), arc(r + d)};
}

}  // namespace testing
