#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "doctest.h"
#include "helpers.hpp"

#include "hmore/flows.hpp"
#include "hmore/synth.hpp"

using namespace hmore;

namespace {

SceneSpec single(const FigureSpec& f, int w = 96, int h = 96) {
    SceneSpec spec;
    spec.width = w;
    spec.height = h;
    spec.subjects.push_back(f);
    return spec;
}

FigureSpec still_figure() {
    FigureSpec f;
    f.root_t = Point2(48.0, 52.0);
    f.root_t1 = f.root_t;
    return f;
}

// Outline by definition: subject pixels with an off-subject or off-raster 8-neighbour.
std::set<std::pair<int, int>> outline_oracle(const SubjectMask& m, int label) {
    std::set<std::pair<int, int>> out;
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (m.at(x, y) != label) continue;
            bool edge = false;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= m.width() || ny >= m.height() || m.at(nx, ny) != label) edge = true;
                }
            if (edge) out.insert({x, y});
        }
    }
    return out;
}

std::set<std::pair<int, int>> as_set(const PointSet& ps) {
    std::set<std::pair<int, int>> out;
    for (const auto& p : ps.points) out.insert({static_cast<int>(p.x), static_cast<int>(p.y)});
    return out;
}

SubjectMask random_blobs(std::mt19937_64& rng, int w, int h, int labels) {
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w * h), 0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int l = 1; l <= labels; ++l) {
        const int discs = 1 + static_cast<int>(u(rng) * 4);
        for (int d = 0; d < discs; ++d) {
            const double cx = u(rng) * w, cy = u(rng) * h, r = 1.0 + u(rng) * 5.0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    if (std::hypot(x - cx, y - cy) <= r) px[static_cast<std::size_t>(y * w + x)] = static_cast<std::uint8_t>(l);
        }
        // speckle
        for (int k = 0; k < 10; ++k) {
            const int x = static_cast<int>(u(rng) * w), y = static_cast<int>(u(rng) * h);
            px[static_cast<std::size_t>(y * w + x)] = static_cast<std::uint8_t>(l);
        }
    }
    // relabel so labels stay contiguous
    std::vector<int> remap(256, 0);
    int next = 0;
    for (auto& p : px) {
        if (p == 0) continue;
        if (remap[p] == 0) remap[p] = ++next;
    }
    for (auto& p : px)
        if (p) p = static_cast<std::uint8_t>(remap[p]);
    return SubjectMask(w, h, px);
}

}  // namespace

TEST_CASE("static figure") {
    const auto spec = single(still_figure());
    const auto t = generate_scene(spec);
    for (const auto& v : t.gt_world.vectors()) CHECK(v == Vec2{});
    CHECK_FALSE(t.boundary_t.empty());
    const auto sk = build_subject_skeletons(t.keypoints[0], t.keypoints[1], t.mask_t);
    const auto pri = make_priors(sk, t.mask_t, t.boundary_t);
    CHECK(joint_objective(t.gt_world, pri, Hyperparams{}).f == 0.0);
}

TEST_CASE("rigid root translation") {
    auto f = still_figure();
    f.root_t1 = Point2(f.root_t.x + 4.0, f.root_t.y);
    const auto t = generate_scene(single(f));
    for (std::size_t i = 0; i < t.gt_world.size(); ++i) {
        if (t.mask_t.labels()[i] == 0) {
            CHECK(t.gt_world[i] == Vec2{});
            continue;
        }
        CHECK(t.gt_world[i] == Vec2(4, 0));
        CHECK(t.gt_local[i] == Vec2{});
        CHECK(t.gt_subject[i] == Vec2(4, 0));
    }
}

TEST_CASE("forearm rotation about the elbow") {
    auto f = still_figure();
    f.limb_rates[kLeftForearm] = 20.0 * std::numbers::pi / 180.0;
    const auto t = generate_scene(single(f));
    const auto p0 = body_poses(f, 0);
    const auto p1 = body_poses(f, 1);
    const int fore = 1 + kLeftForearm;
    const double turn = p1[static_cast<std::size_t>(fore)].angle - p0[static_cast<std::size_t>(fore)].angle;
    CHECK(std::abs(std::abs(turn) - 20.0 * std::numbers::pi / 180.0) < 1e-12);
    const Point2 elbow = figure_joints(f, 0)[7];
    const double c = std::cos(turn), s = std::sin(turn);
    std::size_t forearm_pixels = 0;
    for (int y = 0; y < t.mask_t.height(); ++y) {
        for (int x = 0; x < t.mask_t.width(); ++x) {
            const std::size_t i = t.mask_t.index(x, y);
            if (t.mask_t.labels()[i] == 0) continue;
            const Vec2 m = t.gt_world[i];
            if (t.body[i] == fore) {
                ++forearm_pixels;
                const double px = x - elbow.x, py = y - elbow.y;
                const Vec2 expect(c * px - s * py + elbow.x - x, s * px + c * py + elbow.y - y);
                CHECK(std::abs(m.dx - expect.dx) < 1e-6);
                CHECK(std::abs(m.dy - expect.dy) < 1e-6);
            } else {
                CHECK(m == Vec2{});
            }
        }
    }
    CHECK(forearm_pixels > 20);
}

TEST_CASE("scene truth invariants") {
    for (std::uint64_t seed = 1; seed < 6; ++seed) {
        auto spec = random_scene_spec(seed);
        spec.camera_motion = Vec2(0.75, -0.5);
        const auto t = generate_scene(spec);
        CAPTURE(seed);
        CHECK(t.frames[0].width == spec.width);
        CHECK(t.frames[1].pixels.size() == static_cast<std::size_t>(spec.width * spec.height));
        CHECK(as_set(t.boundary_t) == outline_oracle(t.mask_t, 1));
        for (std::size_t i = 0; i < t.gt_world.size(); ++i) {
            if (t.mask_t.labels()[i] == 0) {
                CHECK(t.gt_world[i] == Vec2(0.75, -0.5));
                CHECK(t.gt_subject[i] == Vec2{});
                CHECK(t.body[i] == -1);
            } else {
                CHECK(t.gt_world[i].dx - t.gt_local[i].dx == t.gt_subject[i].dx);
                CHECK(t.gt_world[i].dy - t.gt_local[i].dy == t.gt_subject[i].dy);
                CHECK(t.body[i] >= 0);
            }
        }
        for (const auto& k : t.keypoints[0].persons[0]) {
            CHECK(k.c == 1.0);
            CHECK(t.mask_t.at(static_cast<int>(std::lround(k.x)), static_cast<int>(std::lround(k.y))) == 1);
        }
    }
}

TEST_CASE("keypoint noise") {
    auto spec = reference_scene_spec();
    spec.keypoint_noise = 0.5;
    const auto noisy = generate_scene(spec);
    const auto clean = generate_scene(reference_scene_spec());
    double moved = 0.0;
    for (int f = 0; f < 2; ++f) {
        const auto& a = noisy.keypoints[static_cast<std::size_t>(f)].persons[0];
        const auto& b = clean.keypoints[static_cast<std::size_t>(f)].persons[0];
        for (std::size_t j = 0; j < a.size(); ++j) {
            CHECK(a[j].c == doctest::Approx(std::exp(-0.5)));
            moved = std::max(moved, std::hypot(a[j].x - b[j].x, a[j].y - b[j].y));
        }
    }
    CHECK(moved > 0.0);
    CHECK(moved < 5.0);
    CHECK(noisy.gt_world == clean.gt_world);
}

TEST_CASE("scenes are reproducible") {
    const auto spec = random_scene_spec(42);
    CHECK(generate_scene(spec) == generate_scene(spec));
    CHECK(random_scene_spec(42) == spec);
    CHECK_FALSE(random_scene_spec(43) == spec);
    auto noisy = spec;
    noisy.keypoint_noise = 1.0;
    CHECK(generate_scene(noisy) == generate_scene(noisy));
}

TEST_CASE("scene spec validation") {
    auto f = still_figure();
    f.root_t = Point2(10.0, 52.0);
    CHECK_THROWS_AS(generate_scene(single(f)), SpecOutOfBounds);
    auto g = still_figure();
    g.root_t1 = Point2(48.0, 90.0);
    CHECK_THROWS_AS(single(g).validate(), SpecOutOfBounds);
    CHECK_THROWS_AS(generate_scene(single(still_figure(), 16, 96)), InvalidArgument);
    auto neg = single(still_figure());
    neg.keypoint_noise = -1.0;
    CHECK_THROWS_AS(neg.validate(), InvalidArgument);
    CHECK_NOTHROW(reference_scene_spec().validate());
}

TEST_CASE("trace boundary on hand-made masks") {
    std::vector<std::uint8_t> sq(25, 0);
    for (int y = 1; y <= 3; ++y)
        for (int x = 1; x <= 3; ++x) sq[static_cast<std::size_t>(y * 5 + x)] = 1;
    const auto b = trace_boundary(SubjectMask(5, 5, sq), 1);
    CHECK(b.size() == 8);
    std::set<std::pair<int, int>> expect;
    for (int y = 1; y <= 3; ++y)
        for (int x = 1; x <= 3; ++x)
            if (x != 2 || y != 2) expect.insert({x, y});
    CHECK(as_set(b) == expect);
    // consecutive outline pixels are 8-neighbours, and the chain closes
    for (std::size_t i = 0; i < b.size(); ++i) {
        const auto& p = b.points[i];
        const auto& q = b.points[(i + 1) % b.size()];
        CHECK(std::max(std::abs(p.x - q.x), std::abs(p.y - q.y)) == 1.0);
    }

    std::vector<std::uint8_t> one(25, 0);
    one[12] = 1;
    const auto s = trace_boundary(SubjectMask(5, 5, one), 1);
    REQUIRE(s.size() == 1);
    CHECK(s.points[0] == Point2(2, 2));

    CHECK_THROWS_AS(trace_boundary(SubjectMask(5, 5, one), 2), EmptySubject);
    CHECK_THROWS_AS(trace_boundary(SubjectMask(5, 5, one), 0), EmptySubject);
}

TEST_CASE("trace boundary matches the per-pixel scan on random blobs") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        std::mt19937_64 rng(seed);
        const auto m = random_blobs(rng, 24, 20, 3);
        std::set<std::pair<int, int>> all;
        for (int l = 1; l <= m.subject_count(); ++l) {
            const auto b = trace_boundary(m, l);
            CAPTURE(seed);
            CAPTURE(l);
            CHECK(as_set(b) == outline_oracle(m, l));
            for (const auto& p : b.points) CHECK(m.at(static_cast<int>(p.x), static_cast<int>(p.y)) == l);
            const auto o = outline_oracle(m, l);
            all.insert(o.begin(), o.end());
        }
        CHECK(as_set(trace_all_boundaries(m)) == all);
    }
}
