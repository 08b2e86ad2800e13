// hmore: command-line front end for the flow constraint library.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "hmore/boundary.hpp"
#include "hmore/flows.hpp"
#include "hmore/io.hpp"
#include "hmore/render.hpp"
#include "hmore/report.hpp"
#include "hmore/synth.hpp"

namespace fs = std::filesystem;
using namespace hmore;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Hyperparams load_hyperparams(const std::string& path) {
    return path.empty() ? Hyperparams{} : decode_hyperparams(read_text(path));
}

struct Inputs {
    SubjectMask mask;
    SubjectSkeletons sk;
    PointSet boundary;
};

Inputs load_inputs(const std::string& kp_path, const std::string& mask_path, const std::string& boundary_path) {
    const auto frames = read_keypoints(kp_path);
    if (frames.size() < 2) {
        throw SchemaError("/frames: need the keypoints of frames t and t+1");
    }
    Inputs in;
    in.mask = read_mask(mask_path);
    in.sk = build_subject_skeletons(frames[0], frames[1], in.mask);
    if (!boundary_path.empty()) {
        in.boundary = read_points(boundary_path);
    }
    return in;
}

AlignMethod parse_align(const std::string& s) {
    if (s == "homography") return AlignMethod::full_body_homography;
    if (s == "head") return AlignMethod::head_anchor_similarity;
    return AlignMethod::translation;
}

std::vector<int> parse_scales(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(tok, &used));
            if (used != tok.size()) {
                throw std::invalid_argument(tok);
            }
        } catch (const std::exception&) {
            throw InvalidArgument("bad scale list: " + s);
        }
    }
    return out;
}

void emit(const Json& report) { std::cout << dump_report(report); }

// ---- commands ----

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
    const auto spec = decode_scene_spec(read_text(spec_path));
    const auto truth = generate_scene(spec);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create " + out_dir + ": " + ec.message());
    }
    const fs::path d(out_dir);
    write_pgm(d / "frame_t.pgm", truth.frames[0]);
    write_pgm(d / "frame_t1.pgm", truth.frames[1]);
    write_mask(d / "mask_t.pgm", truth.mask_t);
    write_keypoints(d / "keypoints.json", {truth.keypoints[0], truth.keypoints[1]});
    write_flo(d / "gt_world.flo", truth.gt_world);
    write_flo(d / "gt_local.flo", truth.gt_local);
    write_flo(d / "gt_subject.flo", truth.gt_subject);
    write_points(d / "boundary.json", truth.boundary_t);
    return 0;
}

int cmd_eval(const std::string& flow_path, const std::string& kp, const std::string& mask, const std::string& bnd,
             bool local, const std::string& align, const std::string& config) {
    const auto t0 = Clock::now();
    const auto hp = load_hyperparams(config);
    const auto flow = read_flo(flow_path);
    const auto in = load_inputs(kp, mask, bnd);
    ObjectiveBreakdown b;
    if (local) {
        const auto priors = make_local_priors(in.sk, in.mask, in.boundary, parse_align(align));
        b = local_constraint_objective(flow, priors, hp);
    } else {
        b = joint_objective(flow, make_priors(in.sk, in.mask, in.boundary), hp);
    }
    Json report{{"command", "eval"},
                {"inputs", {input_record(flow_path), input_record(kp), input_record(mask), input_record(bnd)}},
                {"hyperparams", to_json(hp)},
                {"mode", local ? "local" : "world"},
                {"metrics", to_json(b)}};
    if (local) {
        report["align"] = align;
    }
    report["wall_time_s"] = seconds_since(t0);
    emit(report);
    return 0;
}

int cmd_edges(const std::string& flow_path, std::optional<double> theta_i, std::optional<double> theta_a, bool autothr,
              const std::string& overlay) {
    const auto t0 = Clock::now();
    const auto flow = read_flo(flow_path);
    Hyperparams hp;
    if (theta_i) hp.edge_theta_i = *theta_i;
    if (theta_a) hp.edge_theta_a = *theta_a;
    hp.edge_auto = autothr;
    hp.validate();
    const auto edges = extract_flow_edges(flow, hp);
    if (!overlay.empty()) {
        write_ppm(overlay, edges_to_rgb(edges, flow.width(), flow.height()));
    }
    auto points = [](const PointSet& ps) { return Json::parse(encode_points(ps))["points"]; };
    Json report{{"command", "edges"},
                {"inputs", {input_record(flow_path)}},
                {"theta_i", edges.theta_i_used},
                {"theta_a", hp.edge_theta_a},
                {"intensity_edges", points(edges.intensity_edges)},
                {"angular_edges", points(edges.angular_edges)},
                {"edges", points(edges.edges)},
                {"wall_time_s", seconds_since(t0)}};
    emit(report);
    return 0;
}

int cmd_chamfer(const std::string& s_path, const std::string& e_path, bool patch, const std::string& scales_str,
                int width, int height) {
    const auto t0 = Clock::now();
    const auto s = read_points(s_path);
    const auto e = read_points(e_path);
    Json report{{"command", "chamfer"}, {"inputs", {input_record(s_path), input_record(e_path)}}};
    report["exact"] = exact_chamfer(s, e);
    if (patch) {
        const auto scales = parse_scales(scales_str);
        if (width <= 0 || height <= 0) {
            // Raster just large enough to hold both sets.
            double mx = 0.0;
            double my = 0.0;
            for (const auto* ps : {&s, &e}) {
                for (const auto& p : ps->points) {
                    mx = std::max(mx, p.x);
                    my = std::max(my, p.y);
                }
            }
            width = static_cast<int>(std::floor(mx)) + 1;
            height = static_cast<int>(std::floor(my)) + 1;
        }
        const auto r = multiscale_patch_distance(s, e, scales, width, height);
        report["patch"] = to_json(r);
        report["raster"] = {width, height};
    }
    report["wall_time_s"] = seconds_since(t0);
    emit(report);
    return 0;
}

int cmd_solve(const std::string& init, const std::string& kp, const std::string& mask, const std::string& bnd,
              const std::string& opts_path, const std::string& config, const std::string& out) {
    const auto t0 = Clock::now();
    const auto hp = load_hyperparams(config);
    const auto opts = opts_path.empty() ? SolverOptions{} : decode_solver_options(read_text(opts_path));
    const auto in = load_inputs(kp, mask, bnd);
    const FlowMap start = init == "zero" ? FlowMap(in.mask.width(), in.mask.height()) : read_flo(init);
    const auto priors = make_priors(in.sk, in.mask, in.boundary);
    const auto result = solve_world_flow(start, priors, hp, opts);
    write_flo(out, result.flow);
    Json inputs = {input_record(kp), input_record(mask), input_record(bnd)};
    if (init != "zero") inputs.push_back(input_record(init));
    Json trace = Json::array();
    for (const auto& step : result.trace) {
        trace.push_back(to_json(step));
    }
    Json report{{"command", "solve"},
                {"inputs", std::move(inputs)},
                {"init", init},
                {"hyperparams", to_json(hp)},
                {"solver", to_json(opts)},
                {"output", out},
                {"iterations", result.iterations},
                {"converged", result.converged},
                {"metrics", to_json(joint_objective(result.flow, priors, hp))},
                {"trace", std::move(trace)},
                {"wall_time_s", seconds_since(t0)}};
    emit(report);
    return 0;
}

int cmd_decompose(const std::string& world_path, const std::string& mask_path, const std::string& kp,
                  const std::string& method, const std::string& out_local, const std::string& out_subject,
                  const std::string& out_world) {
    const auto t0 = Clock::now();
    const auto world = read_flo(world_path);
    const auto in = load_inputs(kp, mask_path, "");
    SubjectMotion motion;
    if (method == "mask-mean") {
        motion = estimate_subject_motion(world, in.mask, in.sk, MotionMethod::mask_mean);
    } else {
        motion = estimate_subject_motion(world, in.mask, in.sk, MotionMethod::alignment_field, parse_align(method));
    }
    const auto d = decompose_local(world, motion.field, in.mask);
    write_flo(out_local, d.local);
    if (!out_subject.empty()) write_flo(out_subject, d.subject);
    if (!out_world.empty()) write_flo(out_world, d.world);
    double snapped = 0.0;
    for (std::size_t i = 0; i < world.size(); ++i) {
        snapped = std::max({snapped, std::abs(world[i].dx - d.world[i].dx), std::abs(world[i].dy - d.world[i].dy)});
    }
    Json subjects = Json::array();
    for (std::size_t s = 0; s < static_cast<std::size_t>(in.mask.subject_count()); ++s) {
        Json rec{{"label", s + 1}, {"person", in.sk.person[s]}};
        if (motion.method == MotionMethod::mask_mean) {
            rec["v_s"] = {motion.per_subject[s].dx, motion.per_subject[s].dy};
        } else {
            rec["transform"] = to_json(motion.transforms[s]);
        }
        subjects.push_back(std::move(rec));
    }
    Json report{{"command", "decompose"},
                {"inputs", {input_record(world_path), input_record(mask_path), input_record(kp)}},
                {"method", method},
                {"subjects", std::move(subjects)},
                {"reconstruction_error", reconstruction_error(d)},
                {"world_snap_max", snapped},
                {"wall_time_s", seconds_since(t0)}};
    emit(report);
    return 0;
}

int cmd_render(const std::string& flow_path, const std::string& out, std::optional<double> max_norm) {
    render_flow(read_flo(flow_path), out, max_norm);
    return 0;
}

int cmd_metrics(const std::string& pred_path, const std::string& gt_path, const std::string& mask_path) {
    const auto t0 = Clock::now();
    const auto pred = read_flo(pred_path);
    const auto gt = read_flo(gt_path);
    Json inputs = {input_record(pred_path), input_record(gt_path)};
    Json report{{"command", "metrics"}};
    if (mask_path.empty()) {
        report["metrics"] = to_json(endpoint_error(pred, gt));
    } else {
        const auto mask = read_mask(mask_path);
        inputs.push_back(input_record(mask_path));
        report["metrics"] = to_json(endpoint_error(pred, gt, &mask));
    }
    report["inputs"] = std::move(inputs);
    report["masked"] = !mask_path.empty();
    report["wall_time_s"] = seconds_since(t0);
    emit(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Flow constraints for human motion: synthesis, evaluation and solving."};
    app.require_subcommand(1);

    std::string spec, out_dir;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic scene with ground truth");
    synth->add_option("--spec", spec, "Scene spec JSON")->required();
    synth->add_option("--out-dir", out_dir, "Output directory")->required();

    std::string flow, kp, mask, bnd, align = "head", config;
    bool local = false;
    auto* eval = app.add_subcommand("eval", "Evaluate the constraint objective of a flow");
    eval->add_option("--flow", flow, "Flow (.flo)")->required();
    eval->add_option("--keypoints", kp, "Keypoints JSON")->required();
    eval->add_option("--mask", mask, "Subject mask (PGM)")->required();
    eval->add_option("--boundary", bnd, "Boundary point set JSON")->required();
    eval->add_flag("--local", local, "Treat the flow as local flow (aligned skeleton offsets)");
    eval->add_option("--align", align, "Alignment for --local")
        ->check(CLI::IsMember({"homography", "head", "translation"}));
    eval->add_option("--config", config, "Hyperparameter JSON");

    std::optional<double> theta_i, theta_a;
    bool autothr = false;
    std::string overlay;
    auto* edges = app.add_subcommand("edges", "Extract flow edges");
    edges->add_option("--flow", flow, "Flow (.flo)")->required();
    auto* ti = edges->add_option("--theta-i", theta_i, "Intensity threshold (px)");
    edges->add_option("--theta-a", theta_a, "Angular threshold (degrees)");
    edges->add_flag("--auto", autothr, "Derive the intensity threshold from the flow")->excludes(ti);
    edges->add_option("--overlay", overlay, "Write an edge image (PPM)");

    std::string s_path, e_path, scales = "8,16,32";
    bool exact = false, patch = false;
    int width = 0, height = 0;
    auto* chamfer = app.add_subcommand("chamfer", "Chamfer distances between two point sets");
    chamfer->add_option("--s", s_path, "Point set S (JSON)")->required();
    chamfer->add_option("--e", e_path, "Point set E (JSON)")->required();
    auto* ex = chamfer->add_flag("--exact", exact, "Exact Chamfer only");
    chamfer->add_flag("--patch", patch, "Also compute the multiscale patch-centroid distance")->excludes(ex);
    chamfer->add_option("--scales", scales, "Comma-separated patch sizes");
    chamfer->add_option("--width", width, "Raster width for --patch (default: fit the points)");
    chamfer->add_option("--height", height, "Raster height for --patch (default: fit the points)");

    std::string init = "zero", opts_path, out;
    auto* solve = app.add_subcommand("solve", "Solve for the world flow");
    solve->add_option("--init", init, "zero or an initial .flo");
    solve->add_option("--keypoints", kp, "Keypoints JSON")->required();
    solve->add_option("--mask", mask, "Subject mask (PGM)")->required();
    solve->add_option("--boundary", bnd, "Boundary point set JSON")->required();
    solve->add_option("--opts", opts_path, "Solver options JSON");
    solve->add_option("--config", config, "Hyperparameter JSON");
    solve->add_option("--out", out, "Output flow (.flo)")->required();

    std::string world, method, out_local, out_subject, out_world;
    auto* decompose = app.add_subcommand("decompose", "Split a world flow into local flow and subject motion");
    decompose->add_option("--world", world, "World flow (.flo)")->required();
    decompose->add_option("--mask", mask, "Subject mask (PGM)")->required();
    decompose->add_option("--keypoints", kp, "Keypoints JSON")->required();
    decompose->add_option("--method", method, "Subject motion estimate")
        ->required()
        ->check(CLI::IsMember({"mask-mean", "homography", "head"}));
    decompose->add_option("--out-local", out_local, "Local flow output (.flo)")->required();
    decompose->add_option("--out-subject", out_subject, "Subject motion output (.flo)");
    decompose->add_option("--out-world", out_world, "World flow as stored by the decomposition (.flo)");

    std::optional<double> max_norm;
    auto* render = app.add_subcommand("render", "Render a flow with the color wheel");
    render->add_option("--flow", flow, "Flow (.flo)")->required();
    render->add_option("--out", out, "Output image (PPM)")->required();
    render->add_option("--max-norm", max_norm, "Norm mapped to full saturation (default: 99th percentile)");

    std::string pred, gt;
    auto* metrics = app.add_subcommand("metrics", "Endpoint error against ground truth");
    metrics->add_option("--pred", pred, "Predicted flow (.flo)")->required();
    metrics->add_option("--gt", gt, "Ground-truth flow (.flo)")->required();
    metrics->add_option("--mask", mask, "Restrict to subject pixels");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*synth) return cmd_synth(spec, out_dir);
        if (*eval) return cmd_eval(flow, kp, mask, bnd, local, align, config);
        if (*edges) return cmd_edges(flow, theta_i, theta_a, autothr, overlay);
        if (*chamfer) return cmd_chamfer(s_path, e_path, patch, scales, width, height);
        if (*solve) return cmd_solve(init, kp, mask, bnd, opts_path, config, out);
        if (*decompose) return cmd_decompose(world, mask, kp, method, out_local, out_subject, out_world);
        if (*render) return cmd_render(flow, out, max_norm);
        if (*metrics) return cmd_metrics(pred, gt, mask);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.is_io() ? 2 : 1;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
