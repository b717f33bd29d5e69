#pragma once

// A dataset is a list of rendered scenes split into train and test sets.
// On disk it is a directory holding manifest.json plus, per frame, raw
// little-endian rasters:
//   scene_XXXX/frame_YY.rgb      8-bit RGB triplets, row-major
//   scene_XXXX/frame_YY.depth    float32 z-depth in metres (0 = invalid)
//   scene_XXXX/frame_YY.normals  float32 xyz camera-frame normals
//   scene_XXXX/frame_YY.labels   uint16 semantic ids
//   scene_XXXX/frame_YY.cam      text: "fx fy cx cy" then a 3x4 row-major
//                                camera-to-world matrix
// In-memory frames are quantized exactly as stored, so a write/read round
// trip reproduces them bit-for-bit.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geoemerge/scenegen.hpp"

namespace geoemerge {

struct SceneRecord {
    std::string name;
    Scene scene;
    std::vector<Frame> frames;
};

struct Dataset {
    std::uint64_t seed = 0;
    SceneConfig config;
    std::vector<SceneRecord> scenes;
    std::vector<int> train; // indices into scenes
    std::vector<int> test;
};

// Renders n_train + n_test scenes; scene i uses seed mix_seed(seed, i).
Dataset generate_dataset(std::uint64_t seed, int n_train, int n_test, const SceneConfig& config = {});

// Applies the on-disk quantization (8-bit colour, float32 depth/normals).
void quantize_frame(Frame& frame);

void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

// Token-level targets derived from ground truth.
std::vector<int> token_labels(const Frame& frame, int patch);          // majority label
std::vector<double> token_depth(const Frame& frame, int patch);        // mean valid depth, NaN if none
std::vector<Vec3> token_normals(const Frame& frame, int patch);        // mean normal renormalized, zero if none

} // namespace geoemerge
