#include "hmore/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "hmore/flows.hpp"
#include "hmore/parallel.hpp"

namespace hmore {

namespace {

constexpr double kMargin = 2.0;

struct Rot {
    double c = 1.0;
    double s = 0.0;
    explicit Rot(double a) : c(std::cos(a)), s(std::sin(a)) {}
    Point2 apply(double x, double y) const { return {c * x - s * y, s * x + c * y}; }
};

Point2 offset(const Point2& p, const Point2& d) { return {p.x + d.x, p.y + d.y}; }

// torso-local point -> world
Point2 torso_point(double angle, const Point2& root, double lx, double ly) {
    return offset(root, Rot(angle).apply(lx, ly));
}

struct Capsule {
    int body = 0;
    Point2 a;
    Point2 b;
    double radius = 0.0;
};

double segment_distance(const Point2& p, const Point2& a, const Point2& b) {
    const double vx = b.x - a.x;
    const double vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = 0.0;
    if (len2 > 0.0) {
        t = std::clamp(((p.x - a.x) * vx + (p.y - a.y) * vy) / len2, 0.0, 1.0);
    }
    const double dx = p.x - (a.x + t * vx);
    const double dy = p.y - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

struct FramePose {
    double angle = 0.0;
    Point2 root;
};

FramePose frame_pose(const FigureSpec& f, int frame) {
    return frame == 0 ? FramePose{f.angle_t, f.root_t} : FramePose{f.angle_t1, f.root_t1};
}

double limb_angle(const FigureSpec& f, int limb, int frame) {
    return f.limb_angles[static_cast<std::size_t>(limb)] + (frame == 0 ? 0.0 : f.limb_rates[static_cast<std::size_t>(limb)]);
}

std::vector<Capsule> figure_capsules(const FigureSpec& f, int frame) {
    const auto j = figure_joints(f, frame);
    const FramePose fp = frame_pose(f, frame);
    const Point2 hip_mid = fp.root;
    const Point2 shoulder_mid = torso_point(fp.angle, fp.root, 0.0, -f.torso_length);
    const Point2& nose = j[coco::kNose];
    const double lr = f.limb_radius;
    return {
        {0, hip_mid, shoulder_mid, f.torso_radius},
        {0, j[coco::kLeftShoulder], j[coco::kRightShoulder], lr},
        {0, j[coco::kLeftHip], j[coco::kRightHip], lr},
        {0, j[coco::kLeftShoulder], j[coco::kLeftHip], lr},
        {0, j[coco::kRightShoulder], j[coco::kRightHip], lr},
        {0, shoulder_mid, nose, lr},
        {0, nose, nose, f.head_radius},
        {1 + kLeftUpperArm, j[coco::kLeftShoulder], j[coco::kLeftElbow], lr},
        {1 + kLeftForearm, j[coco::kLeftElbow], j[coco::kLeftWrist], lr},
        {1 + kRightUpperArm, j[coco::kRightShoulder], j[coco::kRightElbow], lr},
        {1 + kRightForearm, j[coco::kRightElbow], j[coco::kRightWrist], lr},
        {1 + kLeftThigh, j[coco::kLeftHip], j[coco::kLeftKnee], lr},
        {1 + kLeftShin, j[coco::kLeftKnee], j[coco::kLeftAnkle], lr},
        {1 + kRightThigh, j[coco::kRightHip], j[coco::kRightKnee], lr},
        {1 + kRightShin, j[coco::kRightKnee], j[coco::kRightAnkle], lr},
    };
}

void check_figure(const FigureSpec& f) {
    const double values[] = {f.torso_length, f.shoulder_half, f.hip_half, f.neck_length, f.head_radius, f.upper_arm,
                             f.forearm,      f.thigh,         f.shin,     f.torso_radius, f.limb_radius};
    for (double v : values) {
        require_finite(v, "figure dimension");
        if (!(v > 0.0)) {
            throw InvalidArgument("figure dimensions must be > 0");
        }
    }
    require_finite(f.angle_t, "angle_t");
    require_finite(f.angle_t1, "angle_t1");
    for (int i = 0; i < kLimbCount; ++i) {
        require_finite(f.limb_angles[static_cast<std::size_t>(i)], "limb angle");
        require_finite(f.limb_rates[static_cast<std::size_t>(i)], "limb rate");
    }
}

// Index of the capsule containing p with the nearest axis, or -1.
int covering_capsule(const std::vector<Capsule>& caps, const Point2& p, bool& inside) {
    inside = false;
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < caps.size(); ++c) {
        const double d = segment_distance(p, caps[c].a, caps[c].b);
        if (d <= caps[c].radius) {
            inside = true;
        }
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

GrayImage render_frame(const std::vector<std::vector<Capsule>>& caps, int w, int h) {
    GrayImage img{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0)};
    parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < w; ++x) {
            const Point2 p(x, y);
            for (const auto& subject : caps) {
                bool inside = false;
                const int c = covering_capsule(subject, p, inside);
                if (inside) {
                    img.pixels[row * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] =
                        static_cast<std::uint8_t>(60 + 20 * subject[static_cast<std::size_t>(c)].body);
                    break;
                }
            }
        }
    });
    return img;
}

}  // namespace

std::array<Point2, kNumJoints> figure_joints(const FigureSpec& f, int frame) {
    const FramePose fp = frame_pose(f, frame);
    const double a = fp.angle;
    const Point2& r = fp.root;
    const double top = -f.torso_length - f.neck_length;
    const double hr = f.head_radius;
    std::array<Point2, kNumJoints> j{};
    j[coco::kNose] = torso_point(a, r, 0.0, top);
    j[coco::kLeftEye] = torso_point(a, r, 0.4 * hr, top - 0.4 * hr);
    j[coco::kRightEye] = torso_point(a, r, -0.4 * hr, top - 0.4 * hr);
    j[coco::kLeftEar] = torso_point(a, r, 0.8 * hr, top);
    j[coco::kRightEar] = torso_point(a, r, -0.8 * hr, top);
    j[coco::kLeftShoulder] = torso_point(a, r, f.shoulder_half, -f.torso_length);
    j[coco::kRightShoulder] = torso_point(a, r, -f.shoulder_half, -f.torso_length);
    j[coco::kLeftHip] = torso_point(a, r, f.hip_half, 0.0);
    j[coco::kRightHip] = torso_point(a, r, -f.hip_half, 0.0);

    auto chain = [&](int base, int upper, double upper_len, int lower, double lower_len, int mid, int end) {
        const double au = a + limb_angle(f, upper, frame);
        const double al = au + limb_angle(f, lower, frame);
        j[static_cast<std::size_t>(mid)] = offset(j[static_cast<std::size_t>(base)], Rot(au).apply(0.0, upper_len));
        j[static_cast<std::size_t>(end)] = offset(j[static_cast<std::size_t>(mid)], Rot(al).apply(0.0, lower_len));
    };
    chain(coco::kLeftShoulder, kLeftUpperArm, f.upper_arm, kLeftForearm, f.forearm, coco::kLeftElbow,
          coco::kLeftWrist);
    chain(coco::kRightShoulder, kRightUpperArm, f.upper_arm, kRightForearm, f.forearm, coco::kRightElbow,
          coco::kRightWrist);
    chain(coco::kLeftHip, kLeftThigh, f.thigh, kLeftShin, f.shin, coco::kLeftKnee, coco::kLeftAnkle);
    chain(coco::kRightHip, kRightThigh, f.thigh, kRightShin, f.shin, coco::kRightKnee, coco::kRightAnkle);
    return j;
}

std::array<BodyPose, kBodyCount> body_poses(const FigureSpec& f, int frame) {
    const FramePose fp = frame_pose(f, frame);
    const auto j = figure_joints(f, frame);
    std::array<BodyPose, kBodyCount> out{};
    out[0] = {fp.angle, fp.root};
    auto set = [&](int upper, int lower, int base, int mid) {
        const double au = fp.angle + limb_angle(f, upper, frame);
        out[static_cast<std::size_t>(1 + upper)] = {au, j[static_cast<std::size_t>(base)]};
        out[static_cast<std::size_t>(1 + lower)] = {au + limb_angle(f, lower, frame), j[static_cast<std::size_t>(mid)]};
    };
    set(kLeftUpperArm, kLeftForearm, coco::kLeftShoulder, coco::kLeftElbow);
    set(kRightUpperArm, kRightForearm, coco::kRightShoulder, coco::kRightElbow);
    set(kLeftThigh, kLeftShin, coco::kLeftHip, coco::kLeftKnee);
    set(kRightThigh, kRightShin, coco::kRightHip, coco::kRightKnee);
    return out;
}

void SceneSpec::validate() const {
    if (width < 32 || height < 32) {
        throw InvalidArgument("scene dimensions must be >= 32");
    }
    if (width > 4096 || height > 4096) {
        throw InvalidArgument("scene dimensions must be <= 4096");
    }
    if (subjects.empty()) {
        throw InvalidArgument("scene needs at least one subject");
    }
    if (subjects.size() > 255) {
        throw InvalidArgument("at most 255 subjects fit an 8-bit mask");
    }
    if (!(keypoint_noise >= 0.0)) {
        throw InvalidArgument("keypoint_noise must be >= 0");
    }
    require_finite(keypoint_noise, "keypoint_noise");
    for (std::size_t s = 0; s < subjects.size(); ++s) {
        check_figure(subjects[s]);
        for (int frame = 0; frame < 2; ++frame) {
            for (const Capsule& c : figure_capsules(subjects[s], frame)) {
                const double lo_x = std::min(c.a.x, c.b.x) - c.radius;
                const double hi_x = std::max(c.a.x, c.b.x) + c.radius;
                const double lo_y = std::min(c.a.y, c.b.y) - c.radius;
                const double hi_y = std::max(c.a.y, c.b.y) + c.radius;
                if (lo_x < kMargin || lo_y < kMargin || hi_x > width - 1 - kMargin || hi_y > height - 1 - kMargin) {
                    throw SpecOutOfBounds("subject " + std::to_string(s + 1) + " leaves the raster margin in frame " +
                                          std::to_string(frame));
                }
            }
        }
    }
}

SceneTruth generate_scene(const SceneSpec& spec) {
    spec.validate();
    const int w = spec.width;
    const int h = spec.height;
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    const std::size_t ns = spec.subjects.size();

    std::array<std::vector<std::vector<Capsule>>, 2> caps;
    std::array<std::vector<std::array<BodyPose, kBodyCount>>, 2> poses;
    for (int frame = 0; frame < 2; ++frame) {
        for (const FigureSpec& f : spec.subjects) {
            caps[static_cast<std::size_t>(frame)].push_back(figure_capsules(f, frame));
            poses[static_cast<std::size_t>(frame)].push_back(body_poses(f, frame));
        }
    }

    std::vector<std::uint8_t> labels(n, 0);
    std::vector<int> body(n, -1);
    std::vector<Vec2> world(n, spec.camera_motion);
    std::vector<Vec2> subject(n);
    bool overlap = false;
    parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < w; ++x) {
            const std::size_t i = row * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
            const Point2 p(x, y);
            for (std::size_t s = 0; s < ns; ++s) {
                bool inside = false;
                const int c = covering_capsule(caps[0][s], p, inside);
                if (!inside) {
                    continue;
                }
                if (labels[i] != 0) {
                    overlap = true;
                    break;
                }
                labels[i] = static_cast<std::uint8_t>(s + 1);
                const int b = caps[0][s][static_cast<std::size_t>(c)].body;
                body[i] = b;
                const BodyPose& b0 = poses[0][s][static_cast<std::size_t>(b)];
                const BodyPose& b1 = poses[1][s][static_cast<std::size_t>(b)];
                const Point2 moved =
                    offset(b1.origin, Rot(b1.angle - b0.angle).apply(p.x - b0.origin.x, p.y - b0.origin.y));
                world[i] = moved - p;
                const BodyPose& t0 = poses[0][s][0];
                const BodyPose& t1 = poses[1][s][0];
                const Point2 carried =
                    offset(t1.origin, Rot(t1.angle - t0.angle).apply(p.x - t0.origin.x, p.y - t0.origin.y));
                subject[i] = carried - p;
            }
        }
    });
    if (overlap) {
        throw SpecOutOfBounds("subjects overlap");
    }

    SceneTruth out;
    out.mask_t = SubjectMask(w, h, labels);
    for (std::size_t s = 0; s < ns; ++s) {
        if (out.mask_t.count(static_cast<int>(s + 1)) == 0) {
            throw SpecOutOfBounds("subject " + std::to_string(s + 1) + " covers no pixel");
        }
    }
    const Decomposition d = decompose_local(FlowMap(w, h, world), FlowMap(w, h, subject), out.mask_t);
    out.gt_world = d.world;
    out.gt_subject = d.subject;
    out.gt_local = d.local;
    out.body = std::move(body);
    out.boundary_t = trace_all_boundaries(out.mask_t);
    out.frames[0] = render_frame(caps[0], w, h);
    out.frames[1] = render_frame(caps[1], w, h);

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.keypoint_noise > 0.0 ? spec.keypoint_noise : 1.0);
    const double conf = spec.keypoint_noise > 0.0 ? std::exp(-spec.keypoint_noise) : 1.0;
    for (int frame = 0; frame < 2; ++frame) {
        for (const FigureSpec& f : spec.subjects) {
            const auto joints = figure_joints(f, frame);
            Person person{};
            for (int k = 0; k < kNumJoints; ++k) {
                double x = joints[static_cast<std::size_t>(k)].x;
                double y = joints[static_cast<std::size_t>(k)].y;
                if (spec.keypoint_noise > 0.0) {
                    x += noise(rng);
                    y += noise(rng);
                }
                person[static_cast<std::size_t>(k)] = Keypoint(x, y, conf);
            }
            out.keypoints[static_cast<std::size_t>(frame)].persons.push_back(person);
        }
    }
    return out;
}

PointSet trace_boundary(const SubjectMask& mask, int label) {
    if (label < 1 || mask.count(label) == 0) {
        throw EmptySubject("subject " + std::to_string(label) + " has no pixels");
    }
    const int w = mask.width();
    const int h = mask.height();
    auto is_subject = [&](int x, int y) { return mask.contains(x, y) && mask.at(x, y) == label; };
    // Moore neighbourhood, clockwise from west
    constexpr int mx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
    constexpr int my[8] = {0, -1, -1, -1, 0, 1, 1, 1};
    std::vector<std::uint8_t> outline(mask.size(), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!is_subject(x, y)) {
                continue;
            }
            for (int k = 0; k < 8; ++k) {
                if (!is_subject(x + mx[k], y + my[k])) {
                    outline[mask.index(x, y)] = 1;
                    break;
                }
            }
        }
    }
    PointSet out;
    std::vector<std::uint8_t> visited(mask.size(), 0);
    for (int sy = 0; sy < h; ++sy) {
        for (int sx = 0; sx < w; ++sx) {
            if (!outline[mask.index(sx, sy)] || visited[mask.index(sx, sy)]) {
                continue;
            }
            // follow one chain, scanning clockwise from the backtrack direction
            int x = sx;
            int y = sy;
            int start = 0;
            while (true) {
                visited[mask.index(x, y)] = 1;
                out.points.emplace_back(x, y);
                int next = -1;
                for (int k = 0; k < 8; ++k) {
                    const int dir = (start + k) % 8;
                    const int nx = x + mx[dir];
                    const int ny = y + my[dir];
                    if (mask.contains(nx, ny) && outline[mask.index(nx, ny)] && !visited[mask.index(nx, ny)]) {
                        next = dir;
                        break;
                    }
                }
                if (next < 0) {
                    break;
                }
                x += mx[next];
                y += my[next];
                start = (next + 6) % 8;
            }
        }
    }
    return out;
}

PointSet trace_all_boundaries(const SubjectMask& mask) {
    PointSet out;
    for (int label = 1; label <= mask.subject_count(); ++label) {
        PointSet part = trace_boundary(mask, label);
        out.points.insert(out.points.end(), part.points.begin(), part.points.end());
    }
    return out;
}

SceneSpec reference_scene_spec() {
    SceneSpec spec;
    FigureSpec f;
    f.root_t = Point2(63.0, 68.0);
    f.root_t1 = Point2(65.0, 68.5);
    f.angle_t = 0.0;
    f.angle_t1 = 0.03;
    f.limb_rates = {-0.15, -0.2, 0.1, 0.15, -0.08, 0.1, 0.1, -0.1};
    spec.subjects.push_back(f);
    spec.seed = 7;
    return spec;
}

SceneSpec random_scene_spec(std::uint64_t seed, int width, int height) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    SceneSpec spec;
    spec.width = width;
    spec.height = height;
    spec.seed = seed;
    FigureSpec f;
    // draws are sequenced explicitly so the stream order is fixed
    const double rx = width / 2.0 + 6.0 * u(rng);
    const double ry = height / 2.0 + 4.0 + 3.0 * u(rng);
    const double tx = 3.0 * u(rng);
    const double ty = 2.0 * u(rng);
    f.root_t = Point2(rx, ry);
    f.root_t1 = Point2(rx + tx, ry + ty);
    f.angle_t = 0.1 * u(rng);
    f.angle_t1 = f.angle_t + 0.06 * u(rng);
    for (int i = 0; i < kLimbCount; ++i) {
        f.limb_angles[static_cast<std::size_t>(i)] += 0.2 * u(rng);
        f.limb_rates[static_cast<std::size_t>(i)] = 0.2 * u(rng);
    }
    spec.subjects.push_back(f);
    return spec;
}

}  // namespace hmore
