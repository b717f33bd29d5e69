#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "geoemerge/geometry.hpp"
#include "geoemerge/random.hpp"
#include "geoemerge/scenegen.hpp"

using namespace geoemerge;

namespace {

Pose random_pose(Rng& rng)
{
    Vec3 axis(normal(rng), normal(rng), normal(rng));
    axis.normalize();
    const Mat3 r = Eigen::AngleAxisd(uniform(rng, -3.0, 3.0), axis).toRotationMatrix();
    return {r, Vec3(normal(rng), normal(rng), normal(rng))};
}

DepthMap constant_depth(int w, int h, double d)
{
    DepthMap m(w, h);
    std::fill(m.values.storage().begin(), m.values.storage().end(), d);
    std::fill(m.valid.storage().begin(), m.valid.storage().end(), 1);
    return m;
}

} // namespace

TEST_CASE("back-projection of a single pixel")
{
    const Intrinsics k{100, 100, 0, 0, 64, 4};
    DepthMap d(64, 4);
    d.values(50, 0) = 2.0;
    d.valid(50, 0) = 1;
    const PointMap pm = backproject(d, k, Pose::identity());
    CHECK(pm.valid(50, 0) == 1);
    CHECK(pm.valid(49, 0) == 0);
    CHECK(pm.points(50, 0).isApprox(Vec3(1.0, 0.0, 2.0), 1e-15));
}

TEST_CASE("projection of a single point")
{
    const Intrinsics k{100, 100, 50, 50, 128, 128};
    const auto p = project(Vec3(1, 0, 2), k, Pose::identity());
    REQUIRE(p.has_value());
    CHECK(p->u == doctest::Approx(100.0).epsilon(1e-15));
    CHECK(p->v == doctest::Approx(50.0).epsilon(1e-15));
    CHECK(p->z == 2.0);
    CHECK_FALSE(project(Vec3(1, 0, -2), k, Pose::identity()).has_value());
    CHECK_FALSE(project(Vec3(1, 0, 0), k, Pose::identity()).has_value());
}

TEST_CASE("relative pose of a translated target")
{
    const Pose rel = relative_pose(Pose::identity(), Pose::from_translation(Vec3(0, 0, 1)));
    CHECK(rel.rotation == Mat3::Identity());
    CHECK(rel.translation == Vec3(0, 0, -1));
}

TEST_CASE("pose algebra")
{
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const Pose a = random_pose(rng), b = random_pose(rng);
        const Vec3 p(normal(rng), normal(rng), normal(rng));
        CHECK(a.is_valid());
        CHECK(((a * b).apply(p) - a.apply(b.apply(p))).norm() < 1e-12);
        CHECK((a.inverse().apply(a.apply(p)) - p).norm() < 1e-12);
        const Pose rel = relative_pose(a, b);
        CHECK((rel.apply(p) - b.inverse().apply(a.apply(p))).norm() < 1e-12);
    }
    const Pose turn{Eigen::AngleAxisd(0.5, Vec3::UnitX()).toRotationMatrix(), Vec3::Zero()};
    CHECK(turn.rotation_angle_deg() == doctest::Approx(0.5 * 180.0 / std::numbers::pi).epsilon(1e-12));
}

TEST_CASE("projection inverts back-projection")
{
    Rng rng(11);
    const Intrinsics k{57.3, 61.2, 31.7, 23.9, 64, 48};
    DepthMap d(64, 48);
    for (std::size_t i = 0; i < d.values.size(); ++i) {
        d.values[i] = uniform(rng, 0.3, 20.0);
        d.valid[i] = 1;
    }
    for (int trial = 0; trial < 20; ++trial) {
        const Pose pose = random_pose(rng);
        const PointMap pm = backproject(d, k, pose);
        double worst = 0.0;
        for (int v = 0; v < 48; ++v)
            for (int u = 0; u < 64; ++u) {
                const auto p = project(pm.points(u, v), k, pose);
                REQUIRE(p.has_value());
                worst = std::max({worst, std::fabs(p->u - u), std::fabs(p->v - v), std::fabs(p->z - d.values(u, v))});
            }
        CHECK(worst <= 1e-9);
    }
}

TEST_CASE("identity warp reproduces the source bit for bit")
{
    Rng rng(5);
    const Intrinsics k{40, 40, 16, 12, 32, 24};
    DepthMap d(32, 24);
    for (std::size_t i = 0; i < d.values.size(); ++i) {
        d.valid[i] = uniform01(rng) < 0.8 ? 1 : 0;
        d.values[i] = d.valid[i] ? uniform(rng, 0.5, 6.0) : 0.0;
    }
    const WarpResult w = warp_depth(d, Pose::identity(), k);
    CHECK(w.depth.valid == d.valid);
    CHECK(w.depth.values == d.values);
    for (std::size_t i = 0; i < d.values.size(); ++i)
        CHECK(w.source[i] == (d.valid[i] ? static_cast<std::int32_t>(i) : -1));
}

TEST_CASE("axial translation of a fronto-parallel plane shifts depth by the translation")
{
    const Intrinsics k{30, 30, 16, 16, 32, 32};
    for (double delta : {0.25, 0.5, 1.0, 1.9}) {
        const double depth = 2.0;
        const WarpResult w = warp_depth(constant_depth(32, 32, depth), Pose::from_translation(Vec3(0, 0, -delta)), k);
        std::size_t covered = 0;
        for (std::size_t i = 0; i < w.depth.values.size(); ++i) {
            if (!w.depth.valid[i]) continue;
            ++covered;
            CHECK(w.depth.values[i] == depth - delta);
        }
        CHECK(covered > 0);
    }
}

TEST_CASE("warp keeps the nearest surface")
{
    // Two source pixels that land on the same target pixel: the nearer wins.
    const Intrinsics k{10, 10, 2, 2, 5, 5};
    DepthMap d(5, 5);
    d.values(2, 2) = 4.0;
    d.valid(2, 2) = 1;
    d.values(3, 2) = 2.0;
    d.valid(3, 2) = 1;
    const Pose shift = Pose::from_translation(Vec3(-0.2, 0, 0));
    const WarpResult w = warp_depth(d, shift, k);
    // (2,2) at depth 4 moves by -0.5 px -> floor(1.5 + 0.5) = 2; (3,2) at depth 2 moves by -1 px -> 2.
    CHECK(w.depth.valid(2, 2) == 1);
    CHECK(w.depth.values(2, 2) == 2.0);
    CHECK(w.source(2, 2) == static_cast<std::int32_t>(d.values.index(3, 2)));
}

TEST_CASE("normals of an inclined plane")
{
    const Intrinsics k{50, 50, 16, 16, 32, 32};
    DepthMap d(32, 32);
    for (int v = 0; v < 32; ++v)
        for (int u = 0; u < 32; ++u) {
            // Z = 2 + 0.5 X with X = (u - cx) Z / fx
            d.values(u, v) = 2.0 / (1.0 - 0.5 * (u - k.cx) / k.fx);
            d.valid(u, v) = 1;
        }
    const NormalMap n = normals_from_depth(d, k);
    const Vec3 expected = Vec3(0.5, 0.0, -1.0).normalized();
    for (int v = 0; v < 32; ++v)
        for (int u = 0; u < 32; ++u) {
            REQUIRE(n.valid(u, v) == 1);
            CHECK((n.normals(u, v) - expected).norm() < 1e-6);
        }
}

TEST_CASE("normals of a rendered sphere")
{
    Scene scene;
    scene.room = {Vec3::Zero(), Vec3(6, 6, 4)};
    scene.sphere = Sphere{Vec3(3, 3, 0.5), 0.5};
    scene.seed = 1;
    const Camera cam{default_intrinsics(64, 64), look_at(Vec3(3, 1.2, 1.2), Vec3(3, 3, 0.5))};
    const Frame f = render_frame(scene, cam);
    const NormalMap est = normals_from_depth(f.depth, cam.intrinsics);
    std::vector<double> errors;
    for (int v = 1; v < 63; ++v)
        for (int u = 1; u < 63; ++u) {
            bool interior = true;
            for (int dv = -1; dv <= 1; ++dv)
                for (int du = -1; du <= 1; ++du) interior &= f.labels(u + du, v + dv) == label::sphere;
            if (interior && est.valid(u, v)) errors.push_back(angle_deg(est.normals(u, v), f.normals.normals(u, v)));
        }
    REQUIRE(errors.size() > 100);
    std::nth_element(errors.begin(), errors.begin() + errors.size() / 2, errors.end());
    CHECK(errors[errors.size() / 2] < 2.0);
}

TEST_CASE("ground-truth warp closes in an occlusion-free room")
{
    // A bare room is convex, so every surface point is seen unoccluded.
    Scene scene;
    scene.room = {Vec3::Zero(), Vec3(6, 5, 3.5)};
    scene.seed = 42;
    SceneConfig cfg;
    const std::vector<Camera> cams = sample_trajectory(scene, 8, cfg);
    for (int i = 0; i + 1 < 8; ++i) {
        const Frame a = render_frame(scene, cams[i]);
        const Frame b = render_frame(scene, cams[i + 1]);
        const WarpResult w = warp_depth(a.depth, relative_pose(a.camera.pose, b.camera.pose), a.camera.intrinsics);
        double err = 0.0, depth = 0.0;
        std::size_t n = 0;
        for (std::size_t p = 0; p < w.depth.values.size(); ++p) {
            if (!w.depth.valid[p] || !b.depth.valid[p]) continue;
            err += std::fabs(w.depth.values[p] - b.depth.values[p]);
            depth += b.depth.values[p];
            ++n;
        }
        REQUIRE(n > 0);
        CHECK(err / n <= 0.01 * depth / n);
    }
}

TEST_CASE("angles and contracts")
{
    CHECK(angle_deg(Vec3::UnitX(), Vec3::UnitY()) == doctest::Approx(90.0));
    CHECK(angle_deg(Vec3::UnitX(), Vec3::UnitX()) == 0.0);
    CHECK(angle_deg(Vec3::UnitX(), -Vec3::UnitX()) == doctest::Approx(180.0));
    CHECK_THROWS_AS(Intrinsics({0, 1, 0, 0, 4, 4}).validate(), ContractViolation);
    CHECK_THROWS_AS(backproject(DepthMap(3, 3), Intrinsics{1, 1, 0, 0, 4, 4}, Pose::identity()), ContractViolation);
    const DepthMap from = DepthMap::from_values(Grid<double>(2, 1, 0.0));
    CHECK(from.valid_count() == 0);
}
