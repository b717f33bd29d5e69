#include <doctest.h>

#include <cmath>

#include "geoemerge/random.hpp"
#include "geoemerge/scenegen.hpp"

using namespace geoemerge;

TEST_CASE("generated scenes satisfy placement invariants over 1000 seeds")
{
    const SceneConfig cfg;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const Scene s = generate_scene(seed, cfg);
        CAPTURE(seed);
        const Vec3 e = s.room.extent();
        REQUIRE((e.array() >= cfg.room_min).all());
        REQUIRE((e.array() <= cfg.room_max).all());
        REQUIRE(s.objects.size() >= static_cast<std::size_t>(cfg.objects_min));
        REQUIRE(s.objects.size() <= static_cast<std::size_t>(cfg.objects_max));
        REQUIRE(std::fabs(s.light_direction.norm() - 1.0) < 1e-12);
        const std::vector<SceneObject> inst = s.instances();
        for (std::size_t i = 0; i < inst.size(); ++i) {
            const Box3& b = inst[i].box;
            REQUIRE((b.min.array() < b.max.array()).all());
            REQUIRE(b.min.x() >= cfg.wall_margin - 1e-12);
            REQUIRE(b.min.y() >= cfg.wall_margin - 1e-12);
            REQUIRE(b.max.x() <= e.x() - cfg.wall_margin + 1e-12);
            REQUIRE(b.max.y() <= e.y() - cfg.wall_margin + 1e-12);
            REQUIRE(b.min.z() >= -1e-12);
            REQUIRE(b.max.z() < cfg.camera_height);
            REQUIRE(inst[i].label >= label::first_object);
            REQUIRE(inst[i].label < label::count);
            for (std::size_t j = i + 1; j < inst.size(); ++j) REQUIRE_FALSE(b.overlaps(inst[j].box));
        }
        if (s.sphere) {
            REQUIRE(s.sphere->radius >= cfg.sphere_radius_min);
            REQUIRE(s.sphere->center.z() == doctest::Approx(s.sphere->radius));
        }
    }
}

TEST_CASE("generation is a pure function of the seed")
{
    CHECK(generate_scene(17) == generate_scene(17));
    CHECK_FALSE(generate_scene(17) == generate_scene(18));
    const Scene s = generate_scene(3);
    const auto a = sample_trajectory(s, 8), b = sample_trajectory(s, 8);
    for (int i = 0; i < 8; ++i) CHECK(a[i].pose == b[i].pose);
}

TEST_CASE("over-dense configurations fail loudly")
{
    SceneConfig cfg;
    cfg.room_min = cfg.room_max = 4.0;
    cfg.objects_min = cfg.objects_max = 8;
    cfg.object_size_min = cfg.object_size_max = 1.8;
    CHECK_THROWS_AS(generate_scene(0, cfg), GenerationError);
    SceneConfig bad;
    bad.frames = 1;
    CHECK_THROWS_AS(generate_scene(0, bad), GenerationError);
}

TEST_CASE("trajectory cameras look at the room centre and are evenly spaced")
{
    const SceneConfig cfg;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Scene s = generate_scene(seed, cfg);
        const auto cams = sample_trajectory(s, cfg.frames, cfg);
        const Vec3 c = s.room.min + 0.5 * s.room.extent();
        const Vec3 target(c.x(), c.y(), cfg.target_height);
        for (std::size_t i = 0; i < cams.size(); ++i) {
            const Pose& p = cams[i].pose;
            CHECK(p.is_valid());
            const Vec3 axis = p.rotation.col(2);
            const Vec3 to_target = target - p.translation;
            // Distance from the target to the optical axis.
            CHECK((to_target - axis * axis.dot(to_target)).norm() < 1e-9);
            CHECK(axis.dot(to_target) > 0.0);
            const Pose& q = cams[(i + 1) % cams.size()].pose;
            CHECK(relative_pose(p, q).rotation_angle_deg() <= 360.0 / cfg.frames + 10.0);
        }
    }
}

TEST_CASE("rendered sphere depth matches the analytic intersection")
{
    Scene s;
    s.room = {Vec3::Zero(), Vec3(6, 6, 4)};
    s.sphere = Sphere{Vec3(3.0, 3.2, 0.45), 0.45};
    s.seed = 5;
    const Camera cam{default_intrinsics(64, 64), look_at(Vec3(3.1, 1.0, 1.4), Vec3(3.0, 3.2, 0.45))};
    const Frame f = render_frame(s, cam);
    int count = 0;
    double worst = 0.0;
    for (int v = 0; v < 64; ++v)
        for (int u = 0; u < 64; ++u) {
            if (f.labels(u, v) != label::sphere) continue;
            // |o + t d - c|^2 = r^2 with d the unit-z camera ray in world coordinates.
            const Vec3 d = cam.pose.rotation * cam.intrinsics.ray(u, v);
            const Vec3 oc = cam.pose.translation - s.sphere->center;
            const double a = d.dot(d), b = 2.0 * oc.dot(d), c = oc.dot(oc) - s.sphere->radius * s.sphere->radius;
            const double t = (-b - std::sqrt(b * b - 4.0 * a * c)) / (2.0 * a);
            worst = std::max(worst, std::fabs(t - f.depth.values(u, v)));
            ++count;
        }
    CHECK(count > 50);
    CHECK(worst <= 1e-12);
}

TEST_CASE("rendered frames are fully covered and consistent")
{
    const Scene s = generate_scene(9);
    const auto cams = sample_trajectory(s, 4);
    for (const Camera& c : cams) {
        const Frame f = render_frame(s, c);
        CHECK(f.depth.valid_count() == 64u * 64u);
        for (std::size_t i = 0; i < f.depth.values.size(); ++i) {
            REQUIRE(f.depth.values[i] > 0.0);
            REQUIRE(f.labels[i] < label::count);
            // Normals face the camera.
            const int u = static_cast<int>(i % 64), v = static_cast<int>(i / 64);
            REQUIRE(f.normals.normals[i].dot(c.intrinsics.ray(u, v)) < 0.0);
        }
        for (double x : f.rgb.values()) REQUIRE((x >= 0.0 && x <= 1.0));
    }
}
