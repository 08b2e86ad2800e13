#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "hmore/boundary.hpp"
#include "hmore/io.hpp"
#include "hmore/types.hpp"

namespace hmore {

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Color of a flow vector already divided by the normalising norm: hue from
/// the Middlebury wheel, saturation growing with the norm, white at zero.
/// Vectors beyond unit norm are darkened.
std::array<std::uint8_t, 3> flow_color(double u, double v);

/// 99th percentile (nearest rank) of the vector norms, or 1 when that is zero.
double auto_max_norm(const FlowMap& flow);

RgbImage flow_to_rgb(const FlowMap& flow, std::optional<double> max_norm = std::nullopt);

/// Hard edges on black: intensity edges red, angular edges blue, both magenta.
RgbImage edges_to_rgb(const EdgeMap& edges, int width, int height);

Bytes encode_ppm(const RgbImage& image);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

void render_flow(const FlowMap& flow, const std::filesystem::path& path,
                 std::optional<double> max_norm = std::nullopt);

}  // namespace hmore
