#pragma once

// Pinhole cameras, rigid poses and the per-pixel geometric operations
// built on them. Conventions:
//   * pixel (u, v) is sampled at its integer index (no half-pixel offset),
//   * depth is z along the optical axis, not ray length,
//   * camera frame is x right, y down, z forward,
//   * Pose stores camera-to-world: world = R * camera + t.

#include <cstdint>
#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "geoemerge/grid.hpp"

namespace geoemerge {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kDefaultZMin = 1e-6;

struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    void validate() const;
    // Camera-frame direction with unit z through pixel (u, v).
    Vec3 ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }
    bool operator==(const Intrinsics&) const = default;
};

struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static Pose identity() { return {}; }
    static Pose from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    Pose inverse() const;
    // (a * b).apply(p) == a.apply(b.apply(p))
    Pose operator*(const Pose& other) const;

    // Checks orthonormality and det = +1 within tol.
    bool is_valid(double tol = 1e-9) const;
    // Rotation angle of this pose in degrees.
    double rotation_angle_deg() const;

    bool operator==(const Pose& o) const { return rotation == o.rotation && translation == o.translation; }
};

struct DepthMap {
    Grid<double> values;
    Mask valid;

    DepthMap() = default;
    DepthMap(int width, int height) : values(width, height, 0.0), valid(width, height, 0) {}

    // Valid wherever the value is finite and strictly positive.
    static DepthMap from_values(Grid<double> values);

    int width() const { return values.width(); }
    int height() const { return values.height(); }
    bool is_valid(int u, int v) const { return valid(u, v) != 0; }
    std::size_t valid_count() const;
};

struct PointMap {
    Grid<Vec3> points;
    Mask valid;
};

struct NormalMap {
    Grid<Vec3> normals;
    Mask valid;

    int width() const { return normals.width(); }
    int height() const { return normals.height(); }
};

struct Projection {
    double u = 0.0;
    double v = 0.0;
    double z = 0.0;
};

PointMap backproject(const DepthMap& depth, const Intrinsics& k, const Pose& pose);

// World point to continuous pixel coordinates of the camera at `pose`.
// Empty when the camera-frame z does not exceed z_min.
std::optional<Projection> project(const Vec3& point_world, const Intrinsics& k, const Pose& pose,
                                  double z_min = kDefaultZMin);

// Transform mapping src-camera coordinates to tgt-camera coordinates.
Pose relative_pose(const Pose& src, const Pose& tgt);

struct WarpResult {
    DepthMap depth;              // splatted target-frame z; valid == mask
    Grid<std::int32_t> source;   // winning source pixel index per target pixel, -1 if none
    std::uint64_t signature = 0; // hash of every discrete splat decision
};

// Forward-splats each valid source pixel into the target raster (nearest
// pixel of the continuous projection) and keeps the minimum z per target
// pixel.
WarpResult warp_depth(const DepthMap& src_depth, const Pose& src_to_tgt, const Intrinsics& k,
                      double z_min = kDefaultZMin);

// Unit normals in the camera frame from central differences of the
// back-projected points, oriented toward the camera.
NormalMap normals_from_depth(const DepthMap& depth, const Intrinsics& k);

// Angle between two unit vectors in degrees, argument clamped.
double angle_deg(const Vec3& a, const Vec3& b);

} // namespace geoemerge
