#pragma once

// Explicit 3D-coordinate injection (the baseline that adds an encoding of
// pooled world coordinates to visual tokens) and measurements of how much
// geometry that pipeline discards through patch pooling and voxelization.

#include <cstdint>
#include <map>
#include <vector>

#include "geoemerge/geometry.hpp"
#include "geoemerge/scenegen.hpp"
#include "geoemerge/tokens.hpp"

namespace geoemerge {

inline constexpr int kDefaultPatch = 8;
inline constexpr double kDefaultVoxelSize = 0.1;

struct TokenPool {
    Vec3 mean = Vec3::Zero();
    double spread = 0.0;      // diameter of the patch's valid points
    int distinct_voxels = 0;  // voxels touched by the patch's points
    int valid_pixels = 0;
    bool valid = false;
};

struct PatchPoolSummary {
    int grid_w = 0;
    int grid_h = 0;
    int patch = kDefaultPatch;
    double voxel_size = kDefaultVoxelSize;
    std::vector<TokenPool> tokens;

    const TokenPool& at(int gx, int gy) const { return tokens[static_cast<std::size_t>(gy) * grid_w + gx]; }
};

PatchPoolSummary pool_coordinates(const PointMap& pm, int patch = kDefaultPatch,
                                  double voxel_size = kDefaultVoxelSize);

struct VoxelKey {
    std::int64_t x = 0, y = 0, z = 0;
    auto operator<=>(const VoxelKey&) const = default;
};

VoxelKey voxel_of(const Vec3& p, double voxel_size);

struct LabeledPoint {
    Vec3 position;
    int label = 0;
};

struct VoxelizationReport {
    double voxel_size = 0.0;
    std::size_t point_count = 0;
    std::size_t occupied_voxels = 0;
    std::vector<std::size_t> points_per_voxel; // one entry per occupied voxel, key order
    std::map<std::size_t, std::size_t> collision_histogram; // points-in-voxel -> voxel count
    std::vector<VoxelKey> label_merging_voxels;
};

VoxelizationReport voxelize(const std::vector<LabeledPoint>& points, double voxel_size);

// Sinusoidal encoding of a world coordinate expanded to `channels`.
// Channel c encodes axis c % 3; along an axis, slots alternate sin/cos and
// the frequency grows geometrically from 1 to 1e4 cycles per 100 m.
std::vector<double> coordinate_encoding(const Vec3& p, int channels);

// tokens + coordinate_encoding(pooled mean). Tokens whose patch had no
// valid point receive the zero-coordinate code.
TokenGrid inject(const TokenGrid& tokens, const PatchPoolSummary& pooled);

// Same as inject but with every coordinate withheld (encoded as zero).
TokenGrid inject_withheld(const TokenGrid& tokens);

struct InformationLossReport {
    int patches = 0;
    int valid_patches = 0;
    int patches_spread_exceeding = 0;
    double fraction_spread_exceeding = 0.0;
    std::size_t centroid_voxels = 0;
    std::size_t centroid_voxels_merged = 0; // voxels holding >= 2 patch centroids
    double fraction_centroid_voxels_merged = 0.0;
    std::size_t point_voxels = 0;
    std::size_t label_merging_voxels = 0;   // per-pixel voxels mixing labels
    double fraction_label_merging = 0.0;
    PatchPoolSummary pooled;
};

InformationLossReport information_loss_report(const Frame& frame, int patch = kDefaultPatch,
                                              double voxel_size = kDefaultVoxelSize);

} // namespace geoemerge
