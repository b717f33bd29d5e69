#include "geoemerge/injection.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace geoemerge {

PatchPoolSummary pool_coordinates(const PointMap& pm, int patch, double voxel_size)
{
    const int w = pm.points.width();
    const int h = pm.points.height();
    require(patch > 0 && w % patch == 0 && h % patch == 0, "pool_coordinates: raster not divisible by patch");
    require(voxel_size > 0.0, "pool_coordinates: voxel size must be positive");

    PatchPoolSummary out;
    out.grid_w = w / patch;
    out.grid_h = h / patch;
    out.patch = patch;
    out.voxel_size = voxel_size;
    out.tokens.resize(static_cast<std::size_t>(out.grid_w) * out.grid_h);

    std::vector<Vec3> pts;
    for (int gy = 0; gy < out.grid_h; ++gy) {
        for (int gx = 0; gx < out.grid_w; ++gx) {
            pts.clear();
            for (int v = gy * patch; v < (gy + 1) * patch; ++v)
                for (int u = gx * patch; u < (gx + 1) * patch; ++u)
                    if (pm.valid(u, v)) pts.push_back(pm.points(u, v));

            TokenPool& tok = out.tokens[static_cast<std::size_t>(gy) * out.grid_w + gx];
            tok.valid_pixels = static_cast<int>(pts.size());
            if (pts.empty()) continue;
            tok.valid = true;
            Vec3 sum = Vec3::Zero();
            std::set<VoxelKey> voxels;
            for (const Vec3& p : pts) {
                sum += p;
                voxels.insert(voxel_of(p, voxel_size));
            }
            tok.mean = sum / static_cast<double>(pts.size());
            tok.distinct_voxels = static_cast<int>(voxels.size());
            double diameter = 0.0;
            for (std::size_t i = 0; i < pts.size(); ++i)
                for (std::size_t j = i + 1; j < pts.size(); ++j)
                    diameter = std::max(diameter, (pts[i] - pts[j]).norm());
            tok.spread = diameter;
        }
    }
    return out;
}

VoxelKey voxel_of(const Vec3& p, double voxel_size)
{
    const auto cell = [&](double c) { return static_cast<std::int64_t>(std::floor(c / voxel_size)); };
    return {cell(p.x()), cell(p.y()), cell(p.z())};
}

VoxelizationReport voxelize(const std::vector<LabeledPoint>& points, double voxel_size)
{
    require(voxel_size > 0.0, "voxelize: voxel size must be positive");
    struct Cell {
        std::size_t count = 0;
        std::set<int> labels;
    };
    std::map<VoxelKey, Cell> cells;
    for (const LabeledPoint& lp : points) {
        Cell& c = cells[voxel_of(lp.position, voxel_size)];
        ++c.count;
        c.labels.insert(lp.label);
    }

    VoxelizationReport r;
    r.voxel_size = voxel_size;
    r.point_count = points.size();
    r.occupied_voxels = cells.size();
    for (const auto& [key, cell] : cells) {
        r.points_per_voxel.push_back(cell.count);
        ++r.collision_histogram[cell.count];
        if (cell.labels.size() > 1) r.label_merging_voxels.push_back(key);
    }
    return r;
}

std::vector<double> coordinate_encoding(const Vec3& p, int channels)
{
    require(channels > 0, "coordinate_encoding: channels must be positive");
    const int slots_per_axis = (channels + 2) / 3;
    const int frequencies = (slots_per_axis + 1) / 2;
    std::vector<double> code(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) {
        const int axis = c % 3;
        const int slot = c / 3;
        const int k = slot / 2;
        const double exponent = frequencies > 1 ? 4.0 * k / (frequencies - 1) : 0.0;
        const double cycles_per_metre = 0.01 * std::pow(10.0, exponent);
        const double phase = 2.0 * std::numbers::pi * cycles_per_metre * p[axis];
        code[static_cast<std::size_t>(c)] = (slot % 2 == 0) ? std::sin(phase) : std::cos(phase);
    }
    return code;
}

TokenGrid inject(const TokenGrid& tokens, const PatchPoolSummary& pooled)
{
    require(tokens.grid_w == pooled.grid_w && tokens.grid_h == pooled.grid_h,
            "inject: token grid and pooled grid do not align");
    TokenGrid out = tokens;
    for (int t = 0; t < tokens.count(); ++t) {
        const TokenPool& tp = pooled.tokens[static_cast<std::size_t>(t)];
        const std::vector<double> code = coordinate_encoding(tp.valid ? tp.mean : Vec3::Zero(), tokens.channels);
        auto dst = out.token(t);
        for (int c = 0; c < tokens.channels; ++c) dst[c] += code[static_cast<std::size_t>(c)];
    }
    return out;
}

TokenGrid inject_withheld(const TokenGrid& tokens)
{
    TokenGrid out = tokens;
    const std::vector<double> code = coordinate_encoding(Vec3::Zero(), tokens.channels);
    for (int t = 0; t < tokens.count(); ++t) {
        auto dst = out.token(t);
        for (int c = 0; c < tokens.channels; ++c) dst[c] += code[static_cast<std::size_t>(c)];
    }
    return out;
}

InformationLossReport information_loss_report(const Frame& frame, int patch, double voxel_size)
{
    require(frame.depth.valid_count() > 0, "information_loss_report: frame has no valid depth");
    const PointMap pm = backproject(frame.depth, frame.camera.intrinsics, frame.camera.pose);

    InformationLossReport r;
    r.pooled = pool_coordinates(pm, patch, voxel_size);
    r.patches = static_cast<int>(r.pooled.tokens.size());

    std::map<VoxelKey, int> centroid_cells;
    for (const TokenPool& tp : r.pooled.tokens) {
        if (!tp.valid) continue;
        ++r.valid_patches;
        if (tp.spread > voxel_size) ++r.patches_spread_exceeding;
        ++centroid_cells[voxel_of(tp.mean, voxel_size)];
    }
    r.fraction_spread_exceeding = r.valid_patches ? double(r.patches_spread_exceeding) / r.valid_patches : 0.0;
    r.centroid_voxels = centroid_cells.size();
    r.centroid_voxels_merged = static_cast<std::size_t>(
        std::count_if(centroid_cells.begin(), centroid_cells.end(), [](const auto& kv) { return kv.second >= 2; }));
    r.fraction_centroid_voxels_merged =
        r.centroid_voxels ? double(r.centroid_voxels_merged) / double(r.centroid_voxels) : 0.0;

    std::vector<LabeledPoint> pts;
    for (int v = 0; v < pm.points.height(); ++v)
        for (int u = 0; u < pm.points.width(); ++u)
            if (pm.valid(u, v)) pts.push_back({pm.points(u, v), frame.labels(u, v)});
    const VoxelizationReport vr = voxelize(pts, voxel_size);
    r.point_voxels = vr.occupied_voxels;
    r.label_merging_voxels = vr.label_merging_voxels.size();
    r.fraction_label_merging = r.point_voxels ? double(r.label_merging_voxels) / double(r.point_voxels) : 0.0;
    return r;
}

} // namespace geoemerge
