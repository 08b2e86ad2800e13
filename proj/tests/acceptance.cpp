// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "helpers.hpp"

#include "hmore/boundary.hpp"
#include "hmore/flows.hpp"
#include "hmore/io.hpp"
#include "hmore/kinematic.hpp"
#include "hmore/parallel.hpp"
#include "hmore/skeleton.hpp"
#include "hmore/synth.hpp"

using namespace hmore;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

Vec2 polar(double r, double deg) {
    const double a = deg * std::numbers::pi / 180.0;
    return {r * std::cos(a), r * std::sin(a)};
}

void constraint_arithmetic(Outcome& o) {
    const Hyperparams hp;
    o.require(hp.theta_a == 15.0 && hp.theta_il == 0.8 && hp.theta_ih == 1.2, "threshold defaults");
    o.require(hp.alpha == 0.1 && hp.beta == 0.01, "weight defaults");

    o.require(std::abs(intensity_term({2, 0}, {1, 0}, 0.8, 1.2) - 0.96) <= 1e-15, "intensity 0.96");
    o.require(std::abs(intensity_term({0.5, 0}, {1, 0}, 0.8, 1.2) - 0.21) <= 1e-15, "intensity 0.21");
    o.require(intensity_term({1, 0}, {1, 0}, 0.8, 1.2) == 0.0, "intensity in band");
    o.require(intensity_term({0.8, 0}, {1, 0}, 0.8, 1.2) == 0.0, "intensity at band edge");

    o.require(angular_term({1, 0}, {1, 0}, 15) == 0, "angle 0");
    o.require(angular_term(polar(1, 10), {1, 0}, 15) == 0, "angle 10");
    o.require(angular_term(polar(1, 20), {1, 0}, 15) == 1, "angle 20");
    o.require(angular_term({0, 1}, {1, 0}, 15) == 1, "angle 90");
    o.require(angular_term({-1, 0}, {1, 0}, 15) == 1, "angle 180");
    o.require(angular_term({0, 0}, {0, 0}, 15) == 0, "both static");
    o.require(angular_term({0, 0}, {1, 0}, 15) == 1, "flow static");
    o.require(angular_term({1, 0}, {0, 0}, 15) == 1, "offset static");
    o.detail << "0.96/0.21 and sector cases exact";
}

double brute_chamfer(const PointSet& s, const PointSet& e) {
    double sum = 0.0;
    for (const auto& p : s.points) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : e.points) {
            const double dx = p.x - q.x;
            const double dy = p.y - q.y;
            best = std::min(best, std::sqrt(dx * dx + dy * dy));
        }
        sum += best;
    }
    return sum / static_cast<double>(s.size());
}

PointSet random_points(std::mt19937_64& rng, int n, double extent) {
    std::uniform_real_distribution<double> u(0.0, extent);
    PointSet ps;
    for (int i = 0; i < n; ++i) {
        const double x = u(rng);
        const double y = u(rng);
        ps.points.emplace_back(x, y);
    }
    return ps;
}

void chamfer_oracle(Outcome& o) {
    int exact = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        const auto s = random_points(rng, 30, 64.0);
        const auto e = random_points(rng, 30, 64.0);
        if (exact_chamfer(s, e) == brute_chamfer(s, e)) ++exact;
    }
    o.require(exact == 100, "kd-tree vs double loop");
    o.detail << "double loop equal " << exact << "/100; ";

    std::mt19937_64 rng(2024);
    double worst = 0.0;
    int within = 0;
    for (int i = 0; i < 50; ++i) {
        const auto pair = testing::concentric_arc_pair(rng);
        const double ex = exact_chamfer(pair.s, pair.e);
        const double approx = patch_centroid_distance(build_patch_grid(pair.s, pair.e, 8, 64, 64)).value;
        const double rel = std::abs(approx - ex) / ex;
        worst = std::max(worst, rel);
        if (rel <= 0.2) ++within;
    }
    o.require(worst <= 0.2, "patch within 20% on all smooth pairs");
    o.detail << "patch within 20% on " << within << "/50, worst " << worst << "; ";

    bool equal = true;
    for (double d : {0.5, 1.0, 2.0, 3.0}) {
        PointSet s, e;
        for (double x = 0.0; x <= 63.5; x += 0.5) {
            s.points.emplace_back(x, 0.5);
            e.points.emplace_back(x, 0.5 + d);
        }
        equal = equal && patch_centroid_distance(build_patch_grid(s, e, 8, 64, 64)).value == d;
    }
    o.require(equal, "parallel segments");
    o.detail << "parallel segments exact";
}

// Central-difference check at `n` random coordinates; returns the worst relative error.
double gradient_check(const FlowMap& flow, const std::function<SmoothValue(const FlowMap&)>& fn, double h, int n,
                      std::uint64_t seed, int& checked) {
    const auto s = fn(flow);
    double gmax = 0.0;
    for (const auto& g : s.gradient.vectors()) gmax = std::max({gmax, std::abs(g.dx), std::abs(g.dy)});
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, flow.size() - 1);
    double worst = 0.0;
    for (int t = 0; t < n; ++t) {
        const std::size_t i = pick(rng);
        const int comp = t % 2;
        auto plus = flow;
        auto minus = flow;
        const Vec2 v = flow[i];
        plus.set(i, comp == 0 ? Vec2(v.dx + h, v.dy) : Vec2(v.dx, v.dy + h));
        minus.set(i, comp == 0 ? Vec2(v.dx - h, v.dy) : Vec2(v.dx, v.dy - h));
        const double fd = (fn(plus).value - fn(minus).value) / (2 * h);
        const double an = comp == 0 ? s.gradient[i].dx : s.gradient[i].dy;
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6 * gmax});
        worst = std::max(worst, std::abs(fd - an) / denom);
        ++checked;
    }
    return worst;
}

void gradient_checks(Outcome& o) {
    const auto truth = generate_scene(random_scene_spec(5, 64, 80));
    const auto sk = build_subject_skeletons(truth.keypoints[0], truth.keypoints[1], truth.mask_t);
    const auto priors = make_priors(sk, truth.mask_t, truth.boundary_t);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 0.5);
    FlowMap flow = truth.gt_world;
    for (std::size_t i = 0; i < flow.size(); ++i) {
        const Vec2 v = flow[i];
        const double nx = noise(rng);
        const double ny = noise(rng);
        flow.set(i, Vec2(v.dx + nx, v.dy + ny));
    }
    const Hyperparams hp;
    const SolverOptions opts;
    int nf = 0, nj = 0;
    double worst_f = 0.0, worst_j = 0.0;
    for (double tau : {0.5, 0.1}) {
        worst_f = std::max(worst_f, gradient_check(
                                        flow,
                                        [&](const FlowMap& f) {
                                            return smooth_skeleton_constraint(f, priors.offsets, priors.matches,
                                                                              priors.mask, hp, tau);
                                        },
                                        1e-4, 120, 10, nf));
        worst_j = std::max(worst_j, gradient_check(
                                        flow,
                                        [&](const FlowMap& f) { return solver_surrogate(f, priors, hp, opts, tau); },
                                        1e-5, 120, 11, nj));
    }
    o.require(nf >= 200 && worst_f < 1e-4, "F alone below 1e-4");
    o.require(nj >= 200 && worst_j < 1e-3, "F + alpha G below 1e-3");
    o.detail << "F: " << nf << " coords, worst " << worst_f << "; joint: " << nj << " coords, worst " << worst_j;
}

void ground_truth_consistency(Outcome& o) {
    const Hyperparams hp;
    double f_max = 0.0, g_max = 0.0;
    bool bitwise = true;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto t = generate_scene(random_scene_spec(seed));
        const auto sk = build_subject_skeletons(t.keypoints[0], t.keypoints[1], t.mask_t);
        const auto b = joint_objective(t.gt_world, make_priors(sk, t.mask_t, t.boundary_t), hp);
        f_max = std::max(f_max, b.f);
        g_max = std::max(g_max, b.g);
        const auto d = decompose_local(t.gt_world, t.gt_subject, t.mask_t);
        bitwise = bitwise && reconstruction_error(d) == 0.0 && testing::bitwise_equal(d.world, t.gt_world);
        for (std::size_t i = 0; i < d.world.size(); ++i) {
            bitwise = bitwise &&
                      static_cast<float>(d.local[i].dx) + static_cast<float>(d.subject[i].dx) ==
                          static_cast<float>(d.world[i].dx) &&
                      static_cast<float>(d.local[i].dy) + static_cast<float>(d.subject[i].dy) ==
                          static_cast<float>(d.world[i].dy);
        }
    }
    o.require(f_max <= 0.02, "F <= 0.02");
    o.require(g_max <= 1.5, "G <= 1.5");
    o.require(bitwise, "bitwise reconstruction");
    o.detail << "max F " << f_max << ", max G " << g_max << ", reconstruction bitwise on 10 scenes";
}

void solver_efficacy(Outcome& o) {
    const auto t = generate_scene(reference_scene_spec());
    const auto sk = build_subject_skeletons(t.keypoints[0], t.keypoints[1], t.mask_t);
    const auto priors = make_priors(sk, t.mask_t, t.boundary_t);
    const FlowMap zero(t.gt_world.width(), t.gt_world.height());
    SolverOptions opts;
    opts.max_iters = 500;
    FlowMap ref;
    SolveResult r;
    {
        ScopedThreadCount one(1);
        r = solve_world_flow(zero, priors, Hyperparams{}, opts);
    }
    const double before = endpoint_error(zero, t.gt_world, &t.mask_t).mean;
    const double after = endpoint_error(r.flow, t.gt_world, &t.mask_t).mean;
    bool monotone = true;
    for (const auto& step : r.trace) monotone = monotone && step.surrogate_after <= step.surrogate_before;
    bool same = true;
    for (int n : {2, 8}) {
        ScopedThreadCount threads(n);
        same = same && testing::bitwise_equal(solve_world_flow(zero, priors, Hyperparams{}, opts).flow, r.flow);
    }
    o.require(after <= 0.5 * before, "EPE halved");
    o.require(r.iterations <= 500, "iteration budget");
    o.require(monotone, "monotone surrogate");
    o.require(same, "thread reproducibility");
    o.detail << "masked EPE " << before << " -> " << after << " in " << r.iterations << " iterations, "
             << r.trace.size() << " monotone steps, bit-identical on 1/2/8 threads";
}

Person upright_person(double x0, double y0) {
    const double xs[kNumJoints] = {0, -2, 2, -4, 4, -9, 9, -12, 12, -14, 14, -6, 6, -6, 6, -6, 6};
    const double ys[kNumJoints] = {-34, -36, -36, -34, -34, -26, -26, -14, -14, -2, -2, 0, 0, 15, 15, 29, 29};
    Person p;
    for (int j = 0; j < kNumJoints; ++j) p[static_cast<std::size_t>(j)] = Keypoint(x0 + xs[j], y0 + ys[j], 1.0);
    return p;
}

void alignment_recovery(Outcome& o) {
    const auto kt = interpolate_skeleton(upright_person(60, 70));

    const AlignTransform H(AlignKind::homography, {1.05, 0.08, -3.0, -0.06, 0.97, 2.0, 4e-4, -3e-4, 1.0});
    auto warped = kt;
    for (auto& q : warped.points) {
        const Point2 r = H.apply(q.position());
        q.x = r.x;
        q.y = r.y;
    }
    const auto th = fit_alignment(kt, warped, AlignMethod::full_body_homography);
    double reproj = 0.0;
    for (std::size_t i = 0; i < kt.size(); ++i)
        reproj = std::max(reproj, distance(th.apply(warped.points[i].position()), kt.points[i].position()));
    o.require(th.kind() == AlignKind::homography && reproj < 1e-3, "homography reprojection");

    const auto p = upright_person(60, 70);
    Point2 head(0, 0);
    for (std::size_t j = 0; j < 5; ++j) head = head + Vec2(p[j].x / 5, p[j].y / 5);
    const double angle = std::numbers::pi / 6.0;
    Person turned;
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double c = std::cos(angle), s = std::sin(angle);
        const double dx = p[j].x - head.x, dy = p[j].y - head.y;
        turned[j] = Keypoint(head.x + c * dx - s * dy, head.y + s * dx + c * dy, 1.0);
    }
    const auto ts = fit_alignment(kt, interpolate_skeleton(turned), AlignMethod::head_anchor_similarity);
    const double angle_err = std::abs(ts.rotation_angle() + angle);
    o.require(angle_err < 1e-6, "30 degree rotation");

    const Hyperparams hp;
    bool ordered = true;
    std::ostringstream fs;
    for (double body : {0.0, 0.1, 0.2, 0.3, 0.4}) {
        SceneSpec spec;
        spec.width = 96;
        spec.height = 96;
        FigureSpec f;
        f.root_t = Point2(48.0, 54.0);
        f.root_t1 = Point2(49.0, 54.0);
        f.angle_t1 = body;
        f.limb_rates = {0.2, -0.15, -0.2, 0.1, 0.1, -0.1, -0.1, 0.1};
        spec.subjects.push_back(f);
        const auto t = generate_scene(spec);
        const auto sk = build_subject_skeletons(t.keypoints[0], t.keypoints[1], t.mask_t);
        const double raw = local_constraint_objective(t.gt_local, make_priors(sk, t.mask_t, t.boundary_t), hp).f;
        const double aligned =
            local_constraint_objective(
                t.gt_local, make_local_priors(sk, t.mask_t, t.boundary_t, AlignMethod::head_anchor_similarity), hp)
                .f;
        ordered = ordered && aligned <= raw;
        fs << " " << aligned << "/" << raw;
    }
    o.require(ordered, "F' <= F on rotating scenes");
    o.detail << "reprojection " << reproj << " px, angle error " << angle_err << " rad, F'/F:" << fs.str();
}

void morph_experiment(Outcome& o) {
    const double r = 20.0, c = 32.0;
    PointSet circle, square;
    for (int i = 0; i < 250; ++i) {
        const double a = 2 * std::numbers::pi * i / 250;
        circle.points.emplace_back(c + r * std::cos(a), c + r * std::sin(a));
    }
    const double h = std::numbers::pi * r / 4;
    for (int i = 0; i < 62; ++i) {
        const double u = -h + 2 * h * i / 62;
        square.points.emplace_back(c + u, c - h);
        square.points.emplace_back(c + h, c + u);
        square.points.emplace_back(c - u, c + h);
        square.points.emplace_back(c - h, c - u);
    }
    const double before = exact_chamfer(circle, square);
    const auto res = morph_curve_fit(circle, square, 64, 64);
    const double after = exact_chamfer(res.moved, square);
    o.require(after <= 0.2 * before, "80% reduction");
    o.detail << "chamfer " << before << " -> " << after << " (" << 100.0 * (1.0 - after / before) << "% lower)";
}

void io_round_trips(Outcome& o) {
    std::mt19937_64 rng(8);
    auto flow = testing::random_flow(33, 17, rng, 40.0);
    for (std::size_t i = 0; i < flow.size(); ++i)
        flow.set(i, Vec2(static_cast<float>(flow[i].dx), static_cast<float>(flow[i].dy)));
    o.require(testing::bitwise_equal(decode_flo(encode_flo(flow)), flow), ".flo");

    const auto t = generate_scene(reference_scene_spec());
    o.require(decode_pgm(encode_pgm(t.frames[0])) == t.frames[0], "PGM image");
    const auto mask = decode_mask(encode_mask(t.mask_t));
    o.require(std::ranges::equal(mask.labels(), t.mask_t.labels()), "PGM mask");

    std::vector<KeypointFrame> frames{t.keypoints[0], t.keypoints[1]};
    const auto text = encode_keypoints(frames);
    o.require(encode_keypoints(decode_keypoints(text)) == text, "keypoint JSON");

    const Bytes flo = encode_flo(flow);
    const Bytes pgm = encode_mask(t.mask_t);
    const Bytes kp(text.begin(), text.end());
    std::uniform_int_distribution<int> byte(0, 255);
    int typed = 0, accepted = 0, untyped = 0;
    for (int i = 0; i < 1000; ++i) {
        Bytes b = i % 3 == 0 ? flo : i % 3 == 1 ? pgm : kp;
        std::uniform_int_distribution<std::size_t> at(0, b.size() - 1);
        if (i % 2 == 0) {
            b.resize(at(rng));
        } else {
            for (int k = 0; k < 3; ++k) b[at(rng)] = static_cast<std::uint8_t>(byte(rng));
        }
        try {
            if (i % 3 == 0) decode_flo(b);
            else if (i % 3 == 1) decode_mask(b);
            else decode_keypoints(std::string(b.begin(), b.end()));
            ++accepted;
        } catch (const Error&) {
            ++typed;
        } catch (...) {
            ++untyped;
        }
    }
    o.require(untyped == 0, "typed errors only");
    o.detail << "round trips bitwise; fuzz: " << typed << " typed errors, " << accepted << " accepted, " << untyped
             << " untyped";
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        double budget_s;
        void (*run)(Outcome&);
    };
    const Criterion criteria[] = {
        {"constraint arithmetic", 1.0, constraint_arithmetic},
        {"chamfer oracle equivalence", 10.0, chamfer_oracle},
        {"gradient checks", 30.0, gradient_checks},
        {"ground-truth consistency", 20.0, ground_truth_consistency},
        {"solver efficacy", 300.0, solver_efficacy},
        {"alignment recovery", 10.0, alignment_recovery},
        {"morph experiment", 120.0, morph_experiment},
        {"I/O round trips", 30.0, io_round_trips},
    };
    int failed = 0;
    int index = 0;
    for (const auto& c : criteria) {
        ++index;
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "[threw: " << e.what() << "]";
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > c.budget_s) o.require(false, "runtime budget");
        if (!o.pass) ++failed;
        std::printf("%s  criterion %d  %-28s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", index, c.name, secs,
                    o.detail.str().c_str());
    }
    std::printf("%d/%d criteria pass\n", 8 - failed, 8);
    return failed == 0 ? 0 : 1;
}
