#pragma once

// Procedural indoor rooms made of axis-aligned boxes and at most one
// sphere, rendered by exact analytic ray casting. World frame is z-up with
// the room spanning [0, extent] on every axis.

#include <cstdint>
#include <optional>
#include <vector>

#include "geoemerge/geometry.hpp"

namespace geoemerge {

namespace label {
inline constexpr int floor = 0;
inline constexpr int ceiling = 1;
inline constexpr int wall = 2;
inline constexpr int first_object = 3;
inline constexpr int object_classes = 5; // 3..7
inline constexpr int sphere = 8;
inline constexpr int count = 9;
} // namespace label

struct Box3 {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    bool contains(const Vec3& p) const { return (p.array() >= min.array()).all() && (p.array() <= max.array()).all(); }
    bool overlaps(const Box3& o) const { return (min.array() < o.max.array()).all() && (o.min.array() < max.array()).all(); }
    Vec3 extent() const { return max - min; }
    bool operator==(const Box3&) const = default;
};

struct SceneObject {
    Box3 box;
    int label = label::first_object;
    bool operator==(const SceneObject&) const = default;
};

struct Sphere {
    Vec3 center = Vec3::Zero();
    double radius = 0.0;
    bool operator==(const Sphere&) const = default;
};

struct Scene {
    Box3 room;
    std::vector<SceneObject> objects;
    std::optional<Sphere> sphere;
    Vec3 light_direction = Vec3::UnitZ(); // unit, pointing toward the light
    std::uint64_t seed = 0;

    // All labelled instances (boxes plus the sphere's bounding box).
    std::vector<SceneObject> instances() const;
    bool operator==(const Scene&) const = default;
};

struct SceneConfig {
    double room_min = 4.0;
    double room_max = 8.0;
    int objects_min = 3;
    int objects_max = 6;
    double object_size_min = 0.4;
    double object_size_max = 1.4;
    double object_height_min = 0.3;
    double object_height_max = 1.4; // stays below the camera ring
    double sphere_probability = 0.5;
    double sphere_radius_min = 0.25;
    double sphere_radius_max = 0.5;
    double wall_margin = 0.1;

    int width = 64;
    int height = 64;
    int frames = 8;
    double orbit_radius_fraction = 0.35;
    double camera_height = 1.6;
    double target_height = 0.8;
    double jitter_deg = 5.0;
    double depth_noise_sigma = 0.0;

    void validate() const;
    bool operator==(const SceneConfig&) const = default;
};

struct Camera {
    Intrinsics intrinsics;
    Pose pose;
};

struct Frame {
    Grid<double> rgb; // width*3 x height, interleaved, in [0, 1]
    DepthMap depth;
    NormalMap normals;
    Grid<std::uint16_t> labels;
    Camera camera;

    int width() const { return depth.width(); }
    int height() const { return depth.height(); }
    double rgb_at(int u, int v, int c) const { return rgb(3 * u + c, v); }
};

Scene generate_scene(std::uint64_t seed, const SceneConfig& config = {});

// Inward-facing orbit; fixed intrinsics fx = fy = 0.8 W, principal point
// at the raster centre.
std::vector<Camera> sample_trajectory(const Scene& scene, int n_frames, const SceneConfig& config = {});

Intrinsics default_intrinsics(int width, int height);

// Look-at camera pose (camera-to-world) with world z up.
Pose look_at(const Vec3& eye, const Vec3& target);

Frame render_frame(const Scene& scene, const Camera& camera);

struct RayHit {
    double t = 0.0;
    Vec3 normal = Vec3::Zero(); // world frame, facing the ray origin
    int label = -1;
};

// Nearest intersection of origin + t * direction (t > 0) with the scene.
std::optional<RayHit> cast_ray(const Scene& scene, const Vec3& origin, const Vec3& direction);

Vec3 albedo(int label);

} // namespace geoemerge
