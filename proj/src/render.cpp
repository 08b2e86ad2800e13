#include "hmore/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace hmore {

namespace {

// Middlebury color wheel: red-yellow-green-cyan-blue-magenta segments.
constexpr int kRY = 15, kYG = 6, kGC = 4, kCB = 11, kBM = 13, kMR = 6;
constexpr int kNumCols = kRY + kYG + kGC + kCB + kBM + kMR;

using Wheel = std::array<std::array<int, 3>, kNumCols>;

Wheel make_wheel() {
    Wheel w{};
    int k = 0;
    for (int i = 0; i < kRY; ++i) w[k++] = {255, 255 * i / kRY, 0};
    for (int i = 0; i < kYG; ++i) w[k++] = {255 - 255 * i / kYG, 255, 0};
    for (int i = 0; i < kGC; ++i) w[k++] = {0, 255, 255 * i / kGC};
    for (int i = 0; i < kCB; ++i) w[k++] = {0, 255 - 255 * i / kCB, 255};
    for (int i = 0; i < kBM; ++i) w[k++] = {255 * i / kBM, 0, 255};
    for (int i = 0; i < kMR; ++i) w[k++] = {255, 0, 255 - 255 * i / kMR};
    return w;
}

const Wheel& wheel() {
    static const Wheel w = make_wheel();
    return w;
}

}  // namespace

std::array<std::uint8_t, 3> flow_color(double u, double v) {
    const double rad = std::sqrt(u * u + v * v);
    const double a = std::atan2(-v, -u) / std::numbers::pi;
    const double fk = (a + 1.0) / 2.0 * (kNumCols - 1);
    const int k0 = static_cast<int>(fk);
    const int k1 = (k0 + 1) % kNumCols;
    const double f = fk - k0;
    std::array<std::uint8_t, 3> out{};
    for (int b = 0; b < 3; ++b) {
        const double c0 = wheel()[static_cast<std::size_t>(k0)][static_cast<std::size_t>(b)] / 255.0;
        const double c1 = wheel()[static_cast<std::size_t>(k1)][static_cast<std::size_t>(b)] / 255.0;
        double col = (1.0 - f) * c0 + f * c1;
        if (rad <= 1.0) {
            col = 1.0 - rad * (1.0 - col);
        } else {
            col *= 0.75;
        }
        out[static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(255.0 * col);
    }
    return out;
}

double auto_max_norm(const FlowMap& flow) {
    if (flow.empty()) {
        return 1.0;
    }
    std::vector<double> norms;
    norms.reserve(flow.size());
    for (const auto& v : flow.vectors()) {
        norms.push_back(v.norm());
    }
    const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(norms.size())));
    const auto idx = std::max<std::size_t>(rank, 1) - 1;
    std::nth_element(norms.begin(), norms.begin() + static_cast<std::ptrdiff_t>(idx), norms.end());
    const double m = norms[idx];
    return m > 0.0 ? m : 1.0;
}

RgbImage flow_to_rgb(const FlowMap& flow, std::optional<double> max_norm) {
    if (flow.empty()) {
        throw InvalidArgument("cannot render an empty flow");
    }
    const double norm = max_norm ? *max_norm : auto_max_norm(flow);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw InvalidArgument("max_norm must be positive and finite");
    }
    RgbImage img{flow.width(), flow.height(), {}};
    img.rgb.reserve(flow.size() * 3);
    for (const auto& v : flow.vectors()) {
        const auto c = flow_color(v.dx / norm, v.dy / norm);
        img.rgb.insert(img.rgb.end(), c.begin(), c.end());
    }
    return img;
}

RgbImage edges_to_rgb(const EdgeMap& edges, int width, int height) {
    if (width <= 0 || height <= 0) {
        throw InvalidArgument("edge image needs positive dimensions");
    }
    RgbImage img{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3, 0)};
    auto paint = [&](const PointSet& ps, int channel) {
        for (const auto& p : ps.points) {
            const int x = static_cast<int>(std::lround(p.x));
            const int y = static_cast<int>(std::lround(p.y));
            if (x >= 0 && y >= 0 && x < width && y < height) {
                img.rgb[(static_cast<std::size_t>(y) * width + x) * 3 + static_cast<std::size_t>(channel)] = 255;
            }
        }
    };
    paint(edges.intensity_edges, 0);
    paint(edges.angular_edges, 2);
    return img;
}

Bytes encode_ppm(const RgbImage& image) {
    if (image.width <= 0 || image.height <= 0 ||
        image.rgb.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
        throw DimensionMismatch("PPM: pixel data does not match dimensions");
    }
    const std::string header =
        "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    Bytes out(header.begin(), header.end());
    out.insert(out.end(), image.rgb.begin(), image.rgb.end());
    return out;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) { write_file(path, encode_ppm(image)); }

void render_flow(const FlowMap& flow, const std::filesystem::path& path, std::optional<double> max_norm) {
    write_ppm(path, flow_to_rgb(flow, max_norm));
}

}  // namespace hmore
