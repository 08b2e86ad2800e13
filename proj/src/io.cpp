#include "hmore/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdio>
#include <limits>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"

namespace hmore {

using json = nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

constexpr std::int64_t kMaxDim = 1 << 16;
constexpr std::int64_t kMaxPixels = std::int64_t{1} << 28;

template <typename T>
void put_le(Bytes& out, T value) {
    std::array<std::uint8_t, sizeof(T)> b{};
    std::memcpy(b.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(b.begin(), b.end());
    }
    out.insert(out.end(), b.begin(), b.end());
}

template <typename T>
T get_le(const Bytes& in, std::size_t offset) {
    std::array<std::uint8_t, sizeof(T)> b{};
    std::memcpy(b.data(), in.data() + offset, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(b.begin(), b.end());
    }
    T value;
    std::memcpy(&value, b.data(), sizeof(T));
    return value;
}

void check_raster(std::int64_t w, std::int64_t h, const char* what) {
    if (w <= 0 || h <= 0 || w > kMaxDim || h > kMaxDim || w * h > kMaxPixels) {
        throw FormatError(std::string(what) + ": unsupported dimensions " + std::to_string(w) + "x" +
                          std::to_string(h));
    }
}

// JSON helpers. Every failure names the offending JSON path.

std::string join(const std::string& path, const std::string& key) { return path + "/" + key; }
std::string join(const std::string& path, std::size_t i) { return path + "/" + std::to_string(i); }

json parse_json(std::string_view text) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("invalid JSON: ") + e.what());
    }
}

const json& require_object(const json& j, const std::string& path) {
    if (!j.is_object()) {
        throw SchemaError(path + ": expected an object");
    }
    return j;
}

const json& require_array(const json& j, const std::string& path, std::size_t size = 0) {
    if (!j.is_array()) {
        throw SchemaError(path + ": expected an array");
    }
    if (size != 0 && j.size() != size) {
        throw SchemaError(path + ": expected " + std::to_string(size) + " elements, got " +
                          std::to_string(j.size()));
    }
    return j;
}

const json& require_key(const json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw SchemaError(join(path, key) + ": missing");
    }
    return *it;
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& path) {
    std::set<std::string> names(known.begin(), known.end());
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!names.count(it.key())) {
            throw SchemaError(join(path, it.key()) + ": unknown field");
        }
    }
}

double as_double(const json& j, const std::string& path) {
    if (!j.is_number()) {
        throw SchemaError(path + ": expected a number");
    }
    return j.get<double>();
}

int as_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) {
        throw SchemaError(path + ": expected an integer");
    }
    const auto v = j.get<std::int64_t>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        throw SchemaError(path + ": integer out of range");
    }
    return static_cast<int>(v);
}

std::uint64_t as_u64(const json& j, const std::string& path) {
    if (!j.is_number_unsigned()) {
        throw SchemaError(path + ": expected a non-negative integer");
    }
    return j.get<std::uint64_t>();
}

bool as_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) {
        throw SchemaError(path + ": expected a boolean");
    }
    return j.get<bool>();
}

void read_double(const json& obj, const char* key, const std::string& path, double& out) {
    if (auto it = obj.find(key); it != obj.end()) {
        out = as_double(*it, join(path, key));
    }
}

void read_int(const json& obj, const char* key, const std::string& path, int& out) {
    if (auto it = obj.find(key); it != obj.end()) {
        out = as_int(*it, join(path, key));
    }
}

void read_bool(const json& obj, const char* key, const std::string& path, bool& out) {
    if (auto it = obj.find(key); it != obj.end()) {
        out = as_bool(*it, join(path, key));
    }
}

std::pair<double, double> as_pair(const json& j, const std::string& path) {
    require_array(j, path, 2);
    return {as_double(j[0], join(path, 0)), as_double(j[1], join(path, 1))};
}

template <std::size_t N>
void read_array(const json& obj, const char* key, const std::string& path, std::array<double, N>& out) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        return;
    }
    const auto p = join(path, key);
    require_array(*it, p, N);
    for (std::size_t i = 0; i < N; ++i) {
        out[i] = as_double((*it)[i], join(p, i));
    }
}

template <typename Fn>
auto guarded(const char* what, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error&) {
        throw;
    } catch (const json::exception& e) {
        throw SchemaError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw IoError("error reading " + path.string());
    }
    return data;
}

void write_file(const std::filesystem::path& path, const Bytes& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) {
        throw IoError("error writing " + path.string());
    }
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    write_file(path, Bytes(text.begin(), text.end()));
}

std::string read_text(const std::filesystem::path& path) {
    const auto data = read_file(path);
    return {data.begin(), data.end()};
}

std::string fnv1a_hex(const Bytes& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : data) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---- .flo ----

Bytes encode_flo(const FlowMap& flow) {
    if (flow.empty()) {
        throw InvalidArgument("cannot encode an empty flow");
    }
    Bytes out;
    out.reserve(12 + 8 * flow.size());
    put_le(out, kFloTag);
    put_le(out, static_cast<std::int32_t>(flow.width()));
    put_le(out, static_cast<std::int32_t>(flow.height()));
    for (const auto& v : flow.vectors()) {
        put_le(out, static_cast<float>(v.dx));
        put_le(out, static_cast<float>(v.dy));
    }
    return out;
}

FlowMap decode_flo(const Bytes& data) {
    if (data.size() < 4) {
        throw TruncatedFile(".flo: missing tag");
    }
    if (get_le<float>(data, 0) != kFloTag) {
        throw BadMagic(".flo: bad sanity tag");
    }
    if (data.size() < 12) {
        throw TruncatedFile(".flo: missing header");
    }
    const std::int64_t w = get_le<std::int32_t>(data, 4);
    const std::int64_t h = get_le<std::int32_t>(data, 8);
    check_raster(w, h, ".flo");
    const auto expected = 12 + static_cast<std::size_t>(w * h) * 8;
    if (data.size() < expected) {
        throw TruncatedFile(".flo: expected " + std::to_string(expected) + " bytes, got " +
                            std::to_string(data.size()));
    }
    if (data.size() > expected) {
        throw FormatError(".flo: trailing bytes");
    }
    std::vector<Vec2> vectors;
    vectors.reserve(static_cast<std::size_t>(w * h));
    for (std::size_t off = 12; off < expected; off += 8) {
        const float dx = get_le<float>(data, off);
        const float dy = get_le<float>(data, off + 4);
        vectors.emplace_back(dx, dy);  // throws NonFiniteValue
    }
    return FlowMap(static_cast<int>(w), static_cast<int>(h), std::move(vectors));
}

void write_flo(const std::filesystem::path& path, const FlowMap& flow) { write_file(path, encode_flo(flow)); }
FlowMap read_flo(const std::filesystem::path& path) { return decode_flo(read_file(path)); }

// ---- keypoints ----

std::string encode_keypoints(const std::vector<KeypointFrame>& frames) {
    json jf = json::array();
    for (const auto& f : frames) {
        json persons = json::array();
        for (const auto& p : f.persons) {
            json joints = json::array();
            for (const auto& k : p) {
                joints.push_back({k.x, k.y, k.c});
            }
            persons.push_back(std::move(joints));
        }
        jf.push_back({{"persons", std::move(persons)}});
    }
    return json{{"frames", std::move(jf)}}.dump() + "\n";
}

std::vector<KeypointFrame> decode_keypoints(std::string_view text) {
    return guarded("keypoints", [&] {
        const json root = parse_json(text);
        require_object(root, "");
        reject_unknown(root, {"frames"}, "");
        const auto& jf = require_array(require_key(root, "frames", ""), "/frames");
        std::vector<KeypointFrame> frames;
        for (std::size_t fi = 0; fi < jf.size(); ++fi) {
            const auto fpath = join("/frames", fi);
            require_object(jf[fi], fpath);
            reject_unknown(jf[fi], {"persons"}, fpath);
            const auto ppath = join(fpath, "persons");
            const auto& jp = require_array(require_key(jf[fi], "persons", fpath), ppath);
            KeypointFrame frame;
            for (std::size_t pi = 0; pi < jp.size(); ++pi) {
                const auto path = join(ppath, pi);
                require_array(jp[pi], path, kNumJoints);
                Person person;
                for (std::size_t k = 0; k < kNumJoints; ++k) {
                    const auto kpath = join(path, k);
                    require_array(jp[pi][k], kpath, 3);
                    const double x = as_double(jp[pi][k][0], join(kpath, 0));
                    const double y = as_double(jp[pi][k][1], join(kpath, 1));
                    const double c = as_double(jp[pi][k][2], join(kpath, 2));
                    if (!(c >= 0.0 && c <= 1.0)) {
                        throw SchemaError(join(kpath, 2) + ": confidence outside [0, 1]");
                    }
                    person[k] = Keypoint(x, y, c);
                }
                frame.persons.push_back(person);
            }
            frames.push_back(std::move(frame));
        }
        return frames;
    });
}

void write_keypoints(const std::filesystem::path& path, const std::vector<KeypointFrame>& frames) {
    write_text(path, encode_keypoints(frames));
}

std::vector<KeypointFrame> read_keypoints(const std::filesystem::path& path) {
    return decode_keypoints(read_text(path));
}

// ---- PGM ----

Bytes encode_pgm(const GrayImage& image) {
    check_raster(image.width, image.height, "PGM");
    if (image.pixels.size() != static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height)) {
        throw DimensionMismatch("PGM: pixel count does not match width*height");
    }
    const std::string header =
        "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    Bytes out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

GrayImage decode_pgm(const Bytes& data) {
    if (data.size() < 2) {
        throw TruncatedFile("PGM: missing magic");
    }
    if (data[0] != 'P' || data[1] < '1' || data[1] > '7') {
        throw BadMagic("PGM: not a netpbm file");
    }
    if (data[1] != '5') {
        throw FormatError(std::string("PGM: only binary P5 is supported, got P") + static_cast<char>(data[1]));
    }
    std::size_t pos = 2;
    auto is_space = [](std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; };
    auto next_number = [&]() -> std::int64_t {
        bool saw_space = false;
        while (pos < data.size()) {
            if (is_space(data[pos])) {
                saw_space = true;
                ++pos;
            } else if (data[pos] == '#') {
                while (pos < data.size() && data[pos] != '\n') {
                    ++pos;
                }
            } else {
                break;
            }
        }
        if (pos >= data.size()) {
            throw TruncatedFile("PGM: truncated header");
        }
        if (!saw_space || data[pos] < '0' || data[pos] > '9') {
            throw FormatError("PGM: malformed header");
        }
        std::int64_t v = 0;
        int digits = 0;
        while (pos < data.size() && data[pos] >= '0' && data[pos] <= '9') {
            if (++digits > 9) {
                throw FormatError("PGM: header value too large");
            }
            v = v * 10 + (data[pos] - '0');
            ++pos;
        }
        return v;
    };
    const auto w = next_number();
    const auto h = next_number();
    const auto maxval = next_number();
    if (pos >= data.size()) {
        throw TruncatedFile("PGM: truncated header");
    }
    if (!is_space(data[pos])) {
        throw FormatError("PGM: malformed header");
    }
    ++pos;
    check_raster(w, h, "PGM");
    if (maxval < 1 || maxval > 255) {
        throw FormatError("PGM: only 8-bit images are supported");
    }
    const auto n = static_cast<std::size_t>(w * h);
    if (data.size() - pos < n) {
        throw TruncatedFile("PGM: expected " + std::to_string(n) + " pixels");
    }
    if (data.size() - pos > n) {
        throw FormatError("PGM: trailing bytes");
    }
    GrayImage img{static_cast<int>(w), static_cast<int>(h),
                  std::vector<std::uint8_t>(data.begin() + static_cast<std::ptrdiff_t>(pos), data.end())};
    for (auto p : img.pixels) {
        if (p > maxval) {
            throw FormatError("PGM: pixel exceeds maxval");
        }
    }
    return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) { write_file(path, encode_pgm(image)); }
GrayImage read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

Bytes encode_mask(const SubjectMask& mask) {
    return encode_pgm({mask.width(), mask.height(), {mask.labels().begin(), mask.labels().end()}});
}

SubjectMask decode_mask(const Bytes& data) {
    auto img = decode_pgm(data);
    try {
        return SubjectMask(img.width, img.height, std::move(img.pixels));
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("mask: ") + e.what());
    }
}

void write_mask(const std::filesystem::path& path, const SubjectMask& mask) { write_file(path, encode_mask(mask)); }
SubjectMask read_mask(const std::filesystem::path& path) { return decode_mask(read_file(path)); }

// ---- point sets ----

std::string encode_points(const PointSet& points) {
    json arr = json::array();
    for (const auto& p : points.points) {
        arr.push_back({p.x, p.y});
    }
    return json{{"points", std::move(arr)}}.dump() + "\n";
}

PointSet decode_points(std::string_view text) {
    return guarded("points", [&] {
        const json root = parse_json(text);
        require_object(root, "");
        reject_unknown(root, {"points"}, "");
        const auto& arr = require_array(require_key(root, "points", ""), "/points");
        PointSet out;
        out.points.reserve(arr.size());
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto [x, y] = as_pair(arr[i], join("/points", i));
            out.points.emplace_back(x, y);
        }
        return out;
    });
}

void write_points(const std::filesystem::path& path, const PointSet& points) {
    write_text(path, encode_points(points));
}

PointSet read_points(const std::filesystem::path& path) { return decode_points(read_text(path)); }

// ---- configuration ----

std::string encode_hyperparams(const Hyperparams& hp) {
    json j{{"alpha", hp.alpha},
           {"beta", hp.beta},
           {"theta_a", hp.theta_a},
           {"theta_il", hp.theta_il},
           {"theta_ih", hp.theta_ih},
           {"edge_theta_i", hp.edge_theta_i},
           {"edge_theta_a", hp.edge_theta_a},
           {"edge_auto", hp.edge_auto},
           {"scales", hp.scales},
           {"patch_normalization",
            hp.patch_normalization == PatchNormalization::co_occupied ? "co_occupied" : "all_cells"}};
    return j.dump(2) + "\n";
}

Hyperparams decode_hyperparams(std::string_view text) {
    return guarded("hyperparams", [&] {
        const json j = parse_json(text);
        require_object(j, "");
        reject_unknown(j,
                       {"alpha", "beta", "theta_a", "theta_il", "theta_ih", "edge_theta_i", "edge_theta_a",
                        "edge_auto", "scales", "patch_normalization"},
                       "");
        Hyperparams hp;
        read_double(j, "alpha", "", hp.alpha);
        read_double(j, "beta", "", hp.beta);
        read_double(j, "theta_a", "", hp.theta_a);
        read_double(j, "theta_il", "", hp.theta_il);
        read_double(j, "theta_ih", "", hp.theta_ih);
        read_double(j, "edge_theta_i", "", hp.edge_theta_i);
        read_double(j, "edge_theta_a", "", hp.edge_theta_a);
        read_bool(j, "edge_auto", "", hp.edge_auto);
        if (auto it = j.find("scales"); it != j.end()) {
            require_array(*it, "/scales");
            hp.scales.clear();
            for (std::size_t i = 0; i < it->size(); ++i) {
                hp.scales.push_back(as_int((*it)[i], join("/scales", i)));
            }
        }
        if (auto it = j.find("patch_normalization"); it != j.end()) {
            const auto s = it->is_string() ? it->get<std::string>() : std::string();
            if (s == "co_occupied") {
                hp.patch_normalization = PatchNormalization::co_occupied;
            } else if (s == "all_cells") {
                hp.patch_normalization = PatchNormalization::all_cells;
            } else {
                throw SchemaError("/patch_normalization: expected \"co_occupied\" or \"all_cells\"");
            }
        }
        hp.validate();
        return hp;
    });
}

std::string encode_solver_options(const SolverOptions& o) {
    json j{{"max_iters", o.max_iters},
           {"step_size", o.step_size},
           {"max_pixel_step", o.max_pixel_step},
           {"tau_schedule", o.tau_schedule},
           {"smoothness_weight", o.smoothness_weight},
           {"background_weight", o.background_weight},
           {"boundary_tau_scale", o.boundary_tau_scale},
           {"per_matched_pixel", o.per_matched_pixel},
           {"tolerance", o.tolerance},
           {"step_tolerance", o.step_tolerance},
           {"seed", o.seed}};
    return j.dump(2) + "\n";
}

SolverOptions decode_solver_options(std::string_view text) {
    return guarded("solver options", [&] {
        const json j = parse_json(text);
        require_object(j, "");
        reject_unknown(j,
                       {"max_iters", "step_size", "max_pixel_step", "tau_schedule", "smoothness_weight",
                        "background_weight", "boundary_tau_scale", "per_matched_pixel", "tolerance",
                        "step_tolerance", "seed"},
                       "");
        SolverOptions o;
        read_int(j, "max_iters", "", o.max_iters);
        read_double(j, "step_size", "", o.step_size);
        read_double(j, "max_pixel_step", "", o.max_pixel_step);
        if (auto it = j.find("tau_schedule"); it != j.end()) {
            require_array(*it, "/tau_schedule");
            o.tau_schedule.clear();
            for (std::size_t i = 0; i < it->size(); ++i) {
                o.tau_schedule.push_back(as_double((*it)[i], join("/tau_schedule", i)));
            }
        }
        read_double(j, "smoothness_weight", "", o.smoothness_weight);
        read_double(j, "background_weight", "", o.background_weight);
        read_double(j, "boundary_tau_scale", "", o.boundary_tau_scale);
        read_bool(j, "per_matched_pixel", "", o.per_matched_pixel);
        read_double(j, "tolerance", "", o.tolerance);
        read_double(j, "step_tolerance", "", o.step_tolerance);
        if (auto it = j.find("seed"); it != j.end()) {
            o.seed = as_u64(*it, "/seed");
        }
        o.validate();
        return o;
    });
}

std::string encode_scene_spec(const SceneSpec& spec) {
    json subjects = json::array();
    for (const auto& f : spec.subjects) {
        subjects.push_back({{"torso_length", f.torso_length},
                            {"shoulder_half", f.shoulder_half},
                            {"hip_half", f.hip_half},
                            {"neck_length", f.neck_length},
                            {"head_radius", f.head_radius},
                            {"upper_arm", f.upper_arm},
                            {"forearm", f.forearm},
                            {"thigh", f.thigh},
                            {"shin", f.shin},
                            {"torso_radius", f.torso_radius},
                            {"limb_radius", f.limb_radius},
                            {"root_t", {f.root_t.x, f.root_t.y}},
                            {"root_t1", {f.root_t1.x, f.root_t1.y}},
                            {"angle_t", f.angle_t},
                            {"angle_t1", f.angle_t1},
                            {"limb_angles", f.limb_angles},
                            {"limb_rates", f.limb_rates}});
    }
    json j{{"width", spec.width},
           {"height", spec.height},
           {"camera_motion", {spec.camera_motion.dx, spec.camera_motion.dy}},
           {"keypoint_noise", spec.keypoint_noise},
           {"seed", spec.seed},
           {"subjects", std::move(subjects)}};
    return j.dump(2) + "\n";
}

SceneSpec decode_scene_spec(std::string_view text) {
    return guarded("scene spec", [&] {
        const json j = parse_json(text);
        require_object(j, "");
        reject_unknown(j, {"width", "height", "camera_motion", "keypoint_noise", "seed", "subjects"}, "");
        SceneSpec spec;
        read_int(j, "width", "", spec.width);
        read_int(j, "height", "", spec.height);
        if (auto it = j.find("camera_motion"); it != j.end()) {
            const auto [dx, dy] = as_pair(*it, "/camera_motion");
            spec.camera_motion = Vec2(dx, dy);
        }
        read_double(j, "keypoint_noise", "", spec.keypoint_noise);
        if (auto it = j.find("seed"); it != j.end()) {
            spec.seed = as_u64(*it, "/seed");
        }
        if (auto it = j.find("subjects"); it != j.end()) {
            require_array(*it, "/subjects");
            for (std::size_t i = 0; i < it->size(); ++i) {
                const auto path = join("/subjects", i);
                const auto& s = require_object((*it)[i], path);
                reject_unknown(s,
                               {"torso_length", "shoulder_half", "hip_half", "neck_length", "head_radius",
                                "upper_arm", "forearm", "thigh", "shin", "torso_radius", "limb_radius", "root_t",
                                "root_t1", "angle_t", "angle_t1", "limb_angles", "limb_rates"},
                               path);
                FigureSpec f;
                read_double(s, "torso_length", path, f.torso_length);
                read_double(s, "shoulder_half", path, f.shoulder_half);
                read_double(s, "hip_half", path, f.hip_half);
                read_double(s, "neck_length", path, f.neck_length);
                read_double(s, "head_radius", path, f.head_radius);
                read_double(s, "upper_arm", path, f.upper_arm);
                read_double(s, "forearm", path, f.forearm);
                read_double(s, "thigh", path, f.thigh);
                read_double(s, "shin", path, f.shin);
                read_double(s, "torso_radius", path, f.torso_radius);
                read_double(s, "limb_radius", path, f.limb_radius);
                if (auto r = s.find("root_t"); r != s.end()) {
                    const auto [x, y] = as_pair(*r, join(path, "root_t"));
                    f.root_t = Point2(x, y);
                }
                if (auto r = s.find("root_t1"); r != s.end()) {
                    const auto [x, y] = as_pair(*r, join(path, "root_t1"));
                    f.root_t1 = Point2(x, y);
                }
                read_double(s, "angle_t", path, f.angle_t);
                read_double(s, "angle_t1", path, f.angle_t1);
                read_array(s, "limb_angles", path, f.limb_angles);
                read_array(s, "limb_rates", path, f.limb_rates);
                spec.subjects.push_back(f);
            }
        }
        spec.validate();
        return spec;
    });
}

}  // namespace hmore
