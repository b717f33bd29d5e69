#include "geoemerge/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "geoemerge/random.hpp"

namespace geoemerge {

namespace {

constexpr double kHitEpsilon = 1e-9;
constexpr int kPlacementAttempts = 1000;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

void fail_config(bool ok, const std::string& what)
{
    if (!ok) throw GenerationError("invalid scene config: " + what);
}

// Exit point of a ray that starts inside the room box.
std::optional<RayHit> hit_room(const Box3& room, const Vec3& o, const Vec3& d)
{
    RayHit best;
    best.t = std::numeric_limits<double>::infinity();
    for (int axis = 0; axis < 3; ++axis) {
        if (d[axis] == 0.0) continue;
        const bool positive = d[axis] > 0.0;
        const double bound = positive ? room.max[axis] : room.min[axis];
        const double t = (bound - o[axis]) / d[axis];
        if (t > kHitEpsilon && t < best.t) {
            best.t = t;
            best.normal = Vec3::Zero();
            best.normal[axis] = positive ? -1.0 : 1.0;
            if (axis == 2) best.label = positive ? label::ceiling : label::floor;
            else best.label = label::wall;
        }
    }
    if (!std::isfinite(best.t)) return std::nullopt;
    return best;
}

// Entry point of a ray hitting a box from outside.
std::optional<RayHit> hit_box(const Box3& box, const Vec3& o, const Vec3& d)
{
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    int near_axis = -1;
    for (int axis = 0; axis < 3; ++axis) {
        if (d[axis] == 0.0) {
            if (o[axis] < box.min[axis] || o[axis] > box.max[axis]) return std::nullopt;
            continue;
        }
        double t0 = (box.min[axis] - o[axis]) / d[axis];
        double t1 = (box.max[axis] - o[axis]) / d[axis];
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > t_near) {
            t_near = t0;
            near_axis = axis;
        }
        t_far = std::min(t_far, t1);
    }
    if (near_axis < 0 || t_near > t_far || t_near <= kHitEpsilon) return std::nullopt;
    RayHit hit;
    hit.t = t_near;
    hit.normal[near_axis] = d[near_axis] > 0.0 ? -1.0 : 1.0;
    return hit;
}

std::optional<RayHit> hit_sphere(const Sphere& s, const Vec3& o, const Vec3& d)
{
    const Vec3 oc = o - s.center;
    const double a = d.squaredNorm();
    const double b = oc.dot(d);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - a * c;
    if (disc < 0.0) return std::nullopt;
    const double t = (-b - std::sqrt(disc)) / a;
    if (t <= kHitEpsilon) return std::nullopt;
    RayHit hit;
    hit.t = t;
    hit.normal = (o + t * d - s.center).normalized();
    hit.label = label::sphere;
    return hit;
}

} // namespace

std::vector<SceneObject> Scene::instances() const
{
    std::vector<SceneObject> out = objects;
    if (sphere) {
        const Vec3 r = Vec3::Constant(sphere->radius);
        out.push_back({{sphere->center - r, sphere->center + r}, label::sphere});
    }
    return out;
}

void SceneConfig::validate() const
{
    fail_config(room_min > 0.0 && room_min <= room_max, "room extent range");
    fail_config(objects_min >= 1 && objects_min <= objects_max && objects_max <= 8, "object count range");
    fail_config(object_size_min > 0.0 && object_size_min <= object_size_max, "object size range");
    fail_config(object_size_max + 2.0 * wall_margin < room_min, "objects larger than the room");
    fail_config(object_height_min > 0.0 && object_height_min <= object_height_max, "object height range");
    fail_config(object_height_max < camera_height && camera_height < room_min, "camera height");
    fail_config(sphere_probability >= 0.0 && sphere_probability <= 1.0, "sphere probability");
    fail_config(sphere_radius_min > 0.0 && sphere_radius_min <= sphere_radius_max
                    && 2.0 * sphere_radius_max < camera_height,
                "sphere radius range");
    fail_config(wall_margin >= 0.0, "wall margin");
    fail_config(width > 0 && height > 0 && frames >= 2, "raster or frame count");
    fail_config(orbit_radius_fraction > 0.0 && orbit_radius_fraction < 0.5, "orbit radius");
    fail_config(jitter_deg >= 0.0 && depth_noise_sigma >= 0.0, "jitter or noise");
}

Scene generate_scene(std::uint64_t seed, const SceneConfig& config)
{
    config.validate();
    Rng rng(mix_seed(seed, 0x5343454e45ULL));
    Scene scene;
    scene.seed = seed;
    const Vec3 extent(uniform(rng, config.room_min, config.room_max), uniform(rng, config.room_min, config.room_max),
                      uniform(rng, config.room_min, config.room_max));
    scene.room = {Vec3::Zero(), extent};

    const double azimuth = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double elevation = uniform(rng, deg2rad(35.0), deg2rad(65.0));
    scene.light_direction = Vec3(std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
                                 std::sin(elevation));

    const int n_objects =
        config.objects_min + static_cast<int>(uniform_index(rng, config.objects_max - config.objects_min + 1));
    const double margin = config.wall_margin;
    std::vector<Box3> placed;

    const auto place = [&](auto&& propose) {
        for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
            const Box3 candidate = propose();
            const bool free = std::none_of(placed.begin(), placed.end(),
                                           [&](const Box3& b) { return b.overlaps(candidate); });
            if (free) {
                placed.push_back(candidate);
                return candidate;
            }
        }
        throw GenerationError("object placement failed after 1000 attempts (config too dense)");
    };

    for (int i = 0; i < n_objects; ++i) {
        const int lbl = label::first_object + static_cast<int>(uniform_index(rng, label::object_classes));
        // The footprint is redrawn with the position so a crowded room can
        // still take a smaller object.
        const Box3 box = place([&] {
            const double sx = uniform(rng, config.object_size_min, config.object_size_max);
            const double sy = uniform(rng, config.object_size_min, config.object_size_max);
            const double sz = uniform(rng, config.object_height_min, config.object_height_max);
            const double x = uniform(rng, margin, extent.x() - margin - sx);
            const double y = uniform(rng, margin, extent.y() - margin - sy);
            return Box3{Vec3(x, y, 0.0), Vec3(x + sx, y + sy, sz)};
        });
        scene.objects.push_back({box, lbl});
    }

    if (uniform01(rng) < config.sphere_probability) {
        const Box3 bounds = place([&] {
            const double r = uniform(rng, config.sphere_radius_min, config.sphere_radius_max);
            const double x = uniform(rng, margin + r, extent.x() - margin - r);
            const double y = uniform(rng, margin + r, extent.y() - margin - r);
            const Vec3 c(x, y, r);
            return Box3{c - Vec3::Constant(r), c + Vec3::Constant(r)};
        });
        const Vec3 centre = 0.5 * (bounds.min + bounds.max);
        scene.sphere = Sphere{centre, centre.z()};
    }
    return scene;
}

Intrinsics default_intrinsics(int width, int height)
{
    const double f = 0.8 * width;
    return {f, f, width / 2.0, height / 2.0, width, height};
}

Pose look_at(const Vec3& eye, const Vec3& target)
{
    const Vec3 forward = (target - eye).normalized();
    Vec3 up = Vec3::UnitZ();
    if (std::fabs(forward.dot(up)) > 1.0 - 1e-9) up = Vec3::UnitY();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    Pose p;
    p.rotation.col(0) = right;
    p.rotation.col(1) = down;
    p.rotation.col(2) = forward;
    p.translation = eye;
    return p;
}

std::vector<Camera> sample_trajectory(const Scene& scene, int n_frames, const SceneConfig& config)
{
    require(n_frames >= 2, "sample_trajectory: need at least two frames");
    Rng rng(mix_seed(scene.seed, 0x54524a43ULL));
    const Vec3 extent = scene.room.extent();
    const Vec3 centre = scene.room.min + 0.5 * extent;
    const double radius = config.orbit_radius_fraction * std::min(extent.x(), extent.y());
    const Vec3 target(centre.x(), centre.y(), config.target_height);
    const Intrinsics k = default_intrinsics(config.width, config.height);

    const double start = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    std::vector<Camera> cams;
    cams.reserve(n_frames);
    for (int i = 0; i < n_frames; ++i) {
        const double jitter = deg2rad(uniform(rng, -config.jitter_deg, config.jitter_deg));
        const double theta = start + 2.0 * std::numbers::pi * i / n_frames + jitter;
        const Vec3 eye(centre.x() + radius * std::cos(theta), centre.y() + radius * std::sin(theta),
                       config.camera_height);
        cams.push_back({k, look_at(eye, target)});
    }
    return cams;
}

std::optional<RayHit> cast_ray(const Scene& scene, const Vec3& origin, const Vec3& direction)
{
    std::optional<RayHit> best = hit_room(scene.room, origin, direction);
    if (!best) return std::nullopt;
    for (const SceneObject& obj : scene.objects) {
        if (auto h = hit_box(obj.box, origin, direction); h && h->t < best->t) {
            h->label = obj.label;
            best = h;
        }
    }
    if (scene.sphere) {
        if (auto h = hit_sphere(*scene.sphere, origin, direction); h && h->t < best->t) best = h;
    }
    return best;
}

Vec3 albedo(int lbl)
{
    static const Vec3 palette[label::count] = {
        {0.55, 0.45, 0.35}, // floor
        {0.90, 0.90, 0.85}, // ceiling
        {0.75, 0.75, 0.70}, // wall
        {0.80, 0.20, 0.20}, {0.20, 0.70, 0.25}, {0.20, 0.35, 0.85}, {0.85, 0.75, 0.15}, {0.60, 0.25, 0.70},
        {0.95, 0.55, 0.10}, // sphere
    };
    require(lbl >= 0 && lbl < label::count, "albedo: unknown label");
    return palette[lbl];
}

Frame render_frame(const Scene& scene, const Camera& camera)
{
    const Intrinsics& k = camera.intrinsics;
    k.validate();
    const Vec3 eye = camera.pose.translation;
    require((eye.array() > scene.room.min.array()).all() && (eye.array() < scene.room.max.array()).all(),
            "render_frame: camera outside the room");

    Frame f;
    f.camera = camera;
    f.rgb = Grid<double>(3 * k.width, k.height, 0.0);
    f.depth = DepthMap(k.width, k.height);
    f.normals = NormalMap{Grid<Vec3>(k.width, k.height, Vec3::Zero()), Mask(k.width, k.height, 0)};
    f.labels = Grid<std::uint16_t>(k.width, k.height, 0);
    const Mat3& r = camera.pose.rotation;

    for (int v = 0; v < k.height; ++v) {
        for (int u = 0; u < k.width; ++u) {
            const Vec3 dir = r * k.ray(u, v);
            const auto hit = cast_ray(scene, eye, dir);
            if (!hit) continue;
            // The camera-frame ray has unit z, so the ray parameter is the z-depth.
            f.depth.values(u, v) = hit->t;
            f.depth.valid(u, v) = 1;
            f.normals.normals(u, v) = r.transpose() * hit->normal;
            f.normals.valid(u, v) = 1;
            f.labels(u, v) = static_cast<std::uint16_t>(hit->label);
            const double shade = std::max(0.0, hit->normal.dot(scene.light_direction)) + 0.2;
            const Vec3 c = (shade * albedo(hit->label)).cwiseMin(1.0);
            for (int ch = 0; ch < 3; ++ch) f.rgb(3 * u + ch, v) = c[ch];
        }
    }
    return f;
}

} // namespace geoemerge
