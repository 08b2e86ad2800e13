#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hmore/flows.hpp"
#include "hmore/synth.hpp"
#include "hmore/types.hpp"

namespace hmore {

using Bytes = std::vector<std::uint8_t>;

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Bytes& data);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

/// 64-bit FNV-1a of a byte buffer, as 16 lowercase hex digits.
std::string fnv1a_hex(const Bytes& data);

// Middlebury .flo: float32 tag 202021.25, int32 width, int32 height, then
// row-major interleaved float32 (dx, dy), all little-endian. Vectors are
// stored at float32 precision.
inline constexpr float kFloTag = 202021.25f;
Bytes encode_flo(const FlowMap& flow);
FlowMap decode_flo(const Bytes& data);
void write_flo(const std::filesystem::path& path, const FlowMap& flow);
FlowMap read_flo(const std::filesystem::path& path);

// Keypoints: {"frames":[{"persons":[[[x,y,c] x 17], ...]}, ...]}
std::string encode_keypoints(const std::vector<KeypointFrame>& frames);
std::vector<KeypointFrame> decode_keypoints(std::string_view text);
void write_keypoints(const std::filesystem::path& path, const std::vector<KeypointFrame>& frames);
std::vector<KeypointFrame> read_keypoints(const std::filesystem::path& path);

// Binary 8-bit PGM (P5). Masks store the label as the pixel value.
Bytes encode_pgm(const GrayImage& image);
GrayImage decode_pgm(const Bytes& data);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

Bytes encode_mask(const SubjectMask& mask);
SubjectMask decode_mask(const Bytes& data);
void write_mask(const std::filesystem::path& path, const SubjectMask& mask);
SubjectMask read_mask(const std::filesystem::path& path);

// Point sets: {"points":[[x,y], ...]}
std::string encode_points(const PointSet& points);
PointSet decode_points(std::string_view text);
void write_points(const std::filesystem::path& path, const PointSet& points);
PointSet read_points(const std::filesystem::path& path);

// Configuration objects. Missing fields keep their defaults; unknown fields
// are rejected.
std::string encode_hyperparams(const Hyperparams& hp);
Hyperparams decode_hyperparams(std::string_view text);
std::string encode_solver_options(const SolverOptions& opts);
SolverOptions decode_solver_options(std::string_view text);
std::string encode_scene_spec(const SceneSpec& spec);
SceneSpec decode_scene_spec(std::string_view text);

}  // namespace hmore
