#include "hmore/flows.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hmore/parallel.hpp"

namespace hmore {

namespace {

void require_priors(const FlowMap& flow, const Priors& priors) {
    validate_pairing(flow, priors.mask);
    if (priors.matches.width != flow.width() || priors.matches.height != flow.height()) {
        throw DimensionMismatch("match table does not match the flow dimensions");
    }
}

ObjectiveBreakdown evaluate(const FlowMap& flow, const Priors& priors, const Hyperparams& hp) {
    hp.validate();
    require_priors(flow, priors);
    ObjectiveBreakdown out;
    out.alpha = hp.alpha;
    out.f_report = skeleton_constraint(flow, priors.offsets, priors.matches, priors.mask, hp);
    out.g_report = boundary_constraint(flow, priors.boundary, hp);
    out.f = out.f_report.f_value;
    out.g = out.g_report.g;
    out.total = out.f + out.alpha * out.g;
    return out;
}

// Rounds to float32 precision.
double to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

// Below this magnitude a component pair is flushed to zero (keeps the grid
// step well clear of float32 subnormals).
constexpr double kFlushBelow = 0x1p-100;

// Snaps w and v onto the grid 2^(E-22), where 2^E <= max(|w|, |v|) < 2^(E+1).
// Every multiple of that step up to 2^(E+2) in magnitude is a float32, so w,
// v and w - v are all exact float32 values.
void snap_pair(double w, double v, double& w_out, double& v_out) {
    const double m = std::max(std::abs(w), std::abs(v));
    if (m < kFlushBelow) {
        w_out = 0.0;
        v_out = 0.0;
        return;
    }
    int e = 0;
    std::frexp(m, &e);  // m = f * 2^e, f in [0.5, 1)
    const double step = std::ldexp(1.0, e - 1 - 22);
    w_out = std::nearbyint(w / step) * step;
    v_out = std::nearbyint(v / step) * step;
}

}  // namespace

SubjectSkeletons build_subject_skeletons(const KeypointFrame& frame_t, const KeypointFrame& frame_t1,
                                         const SubjectMask& mask, const BoneTopology& topology) {
    topology.validate();
    SubjectSkeletons out;
    out.person = assign_persons_to_subjects(frame_t, mask);
    for (std::size_t s = 0; s < out.person.size(); ++s) {
        const int p = out.person[s];
        if (p < 0) {
            throw NoCandidates("no person maps to subject " + std::to_string(s + 1));
        }
        if (static_cast<std::size_t>(p) >= frame_t1.persons.size()) {
            throw TopologyMismatch("person " + std::to_string(p) + " is missing from the second frame");
        }
        out.k_t.push_back(interpolate_skeleton(frame_t.persons[static_cast<std::size_t>(p)], topology));
        out.k_t1.push_back(interpolate_skeleton(frame_t1.persons[static_cast<std::size_t>(p)], topology));
    }
    return out;
}

Priors make_priors(const SubjectSkeletons& sk, const SubjectMask& mask, const PointSet& boundary) {
    Priors p;
    p.mask = mask;
    p.matches = match_all(mask, sk.k_t);
    for (std::size_t s = 0; s < sk.k_t.size(); ++s) {
        p.offsets.push_back(skeleton_offsets(sk.k_t[s], sk.k_t1[s]));
    }
    p.boundary = boundary;
    return p;
}

Priors make_local_priors(const SubjectSkeletons& sk, const SubjectMask& mask, const PointSet& boundary,
                         AlignMethod method) {
    Priors p;
    p.mask = mask;
    p.matches = match_all(mask, sk.k_t);
    for (std::size_t s = 0; s < sk.k_t.size(); ++s) {
        const AlignTransform t = fit_alignment(sk.k_t[s], sk.k_t1[s], method);
        p.offsets.push_back(aligned_offsets(sk.k_t[s], sk.k_t1[s], t));
    }
    p.boundary = boundary;
    return p;
}

ObjectiveBreakdown joint_objective(const FlowMap& flow, const Priors& priors, const Hyperparams& hp) {
    return evaluate(flow, priors, hp);
}

ObjectiveBreakdown local_constraint_objective(const FlowMap& local, const Priors& local_priors,
                                              const Hyperparams& hp) {
    return evaluate(local, local_priors, hp);
}

void SolverOptions::validate() const {
    if (max_iters < 1) {
        throw InvalidArgument("max_iters must be >= 1");
    }
    if (!(step_size > 0.0) || !(tolerance > 0.0) || !(step_tolerance >= 0.0)) {
        throw InvalidArgument("step_size and tolerance must be > 0");
    }
    if (tau_schedule.empty()) {
        throw InvalidArgument("tau_schedule must not be empty");
    }
    for (double t : tau_schedule) {
        if (!(t > 0.0)) {
            throw InvalidArgument("tau values must be > 0");
        }
    }
    if (!(max_pixel_step > 0.0)) {
        throw InvalidArgument("max_pixel_step must be > 0");
    }
    if (!(smoothness_weight >= 0.0) || !(background_weight >= 0.0) || !(boundary_tau_scale > 0.0)) {
        throw InvalidArgument("regulariser weights must be >= 0");
    }
}

SmoothValue solver_surrogate(const FlowMap& flow, const Priors& priors, const Hyperparams& hp,
                             const SolverOptions& opts, double tau) {
    require_priors(flow, priors);
    const int w = flow.width();
    const int h = flow.height();
    const double norm = 1.0 / static_cast<double>(flow.size());
    double c = 1.0;
    if (opts.per_matched_pixel) {
        const std::size_t matched = priors.matches.matched_count();
        if (matched > 0) {
            c = static_cast<double>(flow.size()) / static_cast<double>(matched);
        }
    }

    const SmoothValue f = smooth_skeleton_constraint(flow, priors.offsets, priors.matches, priors.mask, hp, tau);
    SmoothValue g;
    const bool use_g = hp.alpha > 0.0;
    if (use_g) {
        g = soft_boundary_constraint(flow, priors.boundary, hp, tau * opts.boundary_tau_scale);
    }

    std::vector<double> row_sums(static_cast<std::size_t>(h), 0.0);
    FlowMap grad(w, h);
    const SubjectMask& mask = priors.mask;
    const double ks = 2.0 * opts.smoothness_weight * norm;
    const double kb = 2.0 * opts.background_weight * norm;
    parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
        const int y = static_cast<int>(row);
        double sum = 0.0;
        for (int x = 0; x < w; ++x) {
            const std::size_t i = flow.index(x, y);
            const Vec2& m = flow[i];
            double rx = 0.0;
            double ry = 0.0;
            // smoothness over 4-neighbours sharing the label; each pair counted
            // once in the value (right and down) and twice in the gradient
            const int nb[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
            for (int k = 0; k < 4; ++k) {
                const int nx = x + nb[k][0];
                const int ny = y + nb[k][1];
                if (!flow.contains(nx, ny) || mask.at(nx, ny) != mask[i]) {
                    continue;
                }
                const Vec2& mj = flow.at(nx, ny);
                const double dx = m.dx - mj.dx;
                const double dy = m.dy - mj.dy;
                if (k < 2) {
                    sum += opts.smoothness_weight * (dx * dx + dy * dy);
                }
                rx += ks * dx;
                ry += ks * dy;
            }
            if (mask[i] == 0) {
                sum += opts.background_weight * m.squared_norm();
                rx += kb * m.dx;
                ry += kb * m.dy;
            }
            double gx = c * (f.gradient[i].dx + rx);
            double gy = c * (f.gradient[i].dy + ry);
            if (use_g) {
                gx += hp.alpha * g.gradient[i].dx;
                gy += hp.alpha * g.gradient[i].dy;
            }
            grad.set(i, Vec2(gx, gy));
        }
        row_sums[row] = sum;
    });
    double reg = 0.0;
    for (double s : row_sums) {
        reg += s;
    }
    SmoothValue out;
    out.value = c * (f.value + reg * norm) + (use_g ? hp.alpha * g.value : 0.0);
    out.gradient = std::move(grad);
    return out;
}

SolveResult solve_world_flow(const FlowMap& init, const Priors& priors, const Hyperparams& hp,
                             const SolverOptions& opts) {
    hp.validate();
    opts.validate();
    require_priors(init, priors);
    const std::size_t n = init.size();
    const double hw = static_cast<double>(n);

    SolveResult res;
    res.flow = init;
    res.converged = true;
    double t = opts.step_size * hw;
    const double t_max = 1e3 * t;
    const int phases = static_cast<int>(opts.tau_schedule.size());

    for (int phase = 0; phase < phases; ++phase) {
        const double tau = opts.tau_schedule[static_cast<std::size_t>(phase)];
        const int remaining = opts.max_iters - res.iterations;
        const int budget = remaining / (phases - phase);
        bool phase_done = false;
        SmoothValue cur = solver_surrogate(res.flow, priors, hp, opts, tau);
        for (int it = 0; it < budget; ++it) {
            ++res.iterations;
            double g2 = 0.0;
            for (const Vec2& g : cur.gradient.vectors()) {
                g2 += g.squared_norm();
            }
            if (g2 == 0.0) {
                phase_done = true;
                break;
            }
            bool accepted = false;
            FlowMap trial(init.width(), init.height());
            SmoothValue next;
            double max_change = 0.0;
            for (int bt = 0; bt < 60; ++bt) {
                max_change = 0.0;
                double predicted = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const Vec2& m = res.flow[i];
                    const Vec2& g = cur.gradient[i];
                    double dx = t * g.dx;
                    double dy = t * g.dy;
                    const double len = std::sqrt(dx * dx + dy * dy);
                    if (len > opts.max_pixel_step) {
                        dx *= opts.max_pixel_step / len;
                        dy *= opts.max_pixel_step / len;
                    }
                    trial.set(i, Vec2(m.dx - dx, m.dy - dy));
                    predicted += g.dx * dx + g.dy * dy;
                    max_change = std::max({max_change, std::abs(dx), std::abs(dy)});
                }
                next = solver_surrogate(trial, priors, hp, opts, tau);
                if (next.value <= cur.value - 1e-4 * predicted) {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted) {
                phase_done = true;
                break;
            }
            SolverStep step;
            step.phase = phase;
            step.tau = tau;
            step.surrogate_before = cur.value;
            step.surrogate_after = next.value;
            step.max_change = max_change;
            const double drop = cur.value - next.value;
            const double scale = std::max(std::abs(cur.value), 1e-12);
            res.flow = std::move(trial);
            cur = std::move(next);
            step.hard = joint_objective(res.flow, priors, hp);
            res.trace.push_back(std::move(step));
            t = std::min(2.0 * t, t_max);
            if (drop <= opts.tolerance * scale || max_change < opts.step_tolerance) {
                phase_done = true;
                break;
            }
        }
        res.converged = res.converged && phase_done;
    }
    return res;
}

SubjectMotion estimate_subject_motion(const FlowMap& world, const SubjectMask& mask, const SubjectSkeletons& sk,
                                      MotionMethod method, AlignMethod align) {
    validate_pairing(world, mask);
    const int k = mask.subject_count();
    SubjectMotion out;
    out.method = method;
    out.field = FlowMap(world.width(), world.height());
    for (int label = 1; label <= k; ++label) {
        if (mask.count(label) == 0) {
            throw EmptySubject("subject " + std::to_string(label) + " has no pixels");
        }
    }
    if (method == MotionMethod::mask_mean) {
        std::vector<double> sx(static_cast<std::size_t>(k), 0.0);
        std::vector<double> sy(static_cast<std::size_t>(k), 0.0);
        for (std::size_t i = 0; i < world.size(); ++i) {
            if (mask[i] == 0) {
                continue;
            }
            sx[mask[i] - 1u] += world[i].dx;
            sy[mask[i] - 1u] += world[i].dy;
        }
        for (int label = 1; label <= k; ++label) {
            const auto c = static_cast<double>(mask.count(label));
            const auto s = static_cast<std::size_t>(label - 1);
            out.per_subject.emplace_back(sx[s] / c, sy[s] / c);
        }
        for (std::size_t i = 0; i < world.size(); ++i) {
            if (mask[i] != 0) {
                out.field.set(i, out.per_subject[mask[i] - 1u]);
            }
        }
        return out;
    }
    if (sk.k_t.size() < static_cast<std::size_t>(k) || sk.k_t1.size() < static_cast<std::size_t>(k)) {
        throw NoCandidates("missing skeletons for a subject");
    }
    // T maps t+1 onto t; the motion it explains carries x to T^-1(x).
    std::vector<AlignTransform> inverse;
    for (int label = 1; label <= k; ++label) {
        const auto s = static_cast<std::size_t>(label - 1);
        out.transforms.push_back(fit_alignment(sk.k_t[s], sk.k_t1[s], align));
        inverse.push_back(out.transforms.back().inverse());
    }
    const int w = world.width();
    for (int y = 0; y < world.height(); ++y) {
        for (int x = 0; x < w; ++x) {
            const std::uint8_t l = mask.at(x, y);
            if (l == 0) {
                continue;
            }
            const Point2 p(x, y);
            out.field.set(x, y, inverse[l - 1u].apply(p) - p);
        }
    }
    return out;
}

Decomposition decompose_local(const FlowMap& world, const FlowMap& subject_motion, const SubjectMask& mask) {
    validate_pairing(world, mask);
    if (subject_motion.width() != world.width() || subject_motion.height() != world.height()) {
        throw DimensionMismatch("subject motion field does not match the world flow dimensions");
    }
    const std::size_t n = world.size();
    Decomposition d;
    d.world = FlowMap(world.width(), world.height());
    d.subject = FlowMap(world.width(), world.height());
    d.local = FlowMap(world.width(), world.height());
    for (std::size_t i = 0; i < n; ++i) {
        double wx = 0.0;
        double wy = 0.0;
        double vx = 0.0;
        double vy = 0.0;
        if (mask[i] == 0) {
            wx = to_float(world[i].dx);
            wy = to_float(world[i].dy);
        } else {
            snap_pair(world[i].dx, subject_motion[i].dx, wx, vx);
            snap_pair(world[i].dy, subject_motion[i].dy, wy, vy);
        }
        d.world.set(i, Vec2(wx, wy));
        d.subject.set(i, Vec2(vx, vy));
        // exact, and itself a float32 (see snap_pair)
        d.local.set(i, Vec2(wx - vx, wy - vy));
    }
    return d;
}

double reconstruction_error(const Decomposition& d) {
    double worst = 0.0;
    for (std::size_t i = 0; i < d.world.size(); ++i) {
        worst = std::max(worst, std::abs(d.world[i].dx - (d.local[i].dx + d.subject[i].dx)));
        worst = std::max(worst, std::abs(d.world[i].dy - (d.local[i].dy + d.subject[i].dy)));
    }
    return worst;
}

EndpointError endpoint_error(const FlowMap& pred, const FlowMap& gt, const SubjectMask* mask) {
    if (pred.width() != gt.width() || pred.height() != gt.height()) {
        throw DimensionMismatch("prediction " + std::to_string(pred.width()) + "x" + std::to_string(pred.height()) +
                                " vs ground truth " + std::to_string(gt.width()) + "x" + std::to_string(gt.height()));
    }
    if (mask) {
        validate_pairing(pred, *mask);
    }
    EndpointError out;
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (mask && (*mask)[i] == 0) {
            continue;
        }
        const double dx = pred[i].dx - gt[i].dx;
        const double dy = pred[i].dy - gt[i].dy;
        const double e = std::sqrt(dx * dx + dy * dy);
        sum += e;
        out.max = std::max(out.max, e);
        ++out.count;
    }
    if (out.count == 0) {
        throw EmptySubject("no pixels to evaluate");
    }
    out.mean = sum / static_cast<double>(out.count);
    return out;
}

}  // namespace hmore
