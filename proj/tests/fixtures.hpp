#pragma once

// Hand-built scenes shared by the unit tests and the acceptance run.

#include <algorithm>

#include "geoemerge/scenegen.hpp"

namespace geoemerge::fixtures {

// Fronto-parallel wall 1 m in front of a 64x64 camera with fx = 200: every
// 8x8 patch covers about 5 cm of a single surface.
inline Frame bare_plane()
{
    Frame f;
    const Intrinsics k{200, 200, 32, 32, 64, 64};
    f.camera = {k, Pose::identity()};
    f.rgb = Grid<double>(3 * 64, 64, 0.5);
    f.depth = DepthMap(64, 64);
    std::fill(f.depth.values.storage().begin(), f.depth.values.storage().end(), 1.0);
    std::fill(f.depth.valid.storage().begin(), f.depth.valid.storage().end(), 1);
    f.normals = NormalMap{Grid<Vec3>(64, 64, Vec3(0, 0, -1)), Mask(64, 64, 1)};
    f.labels = Grid<std::uint16_t>(64, 64, label::wall);
    return f;
}

// A box standing on the floor 2 m in front of the far wall, seen from a
// camera pitched down toward it.
inline Scene box_before_wall()
{
    Scene s;
    s.room = {Vec3::Zero(), Vec3(6, 6, 3)};
    s.objects.push_back({{Vec3(2.4, 3.2, 0.0), Vec3(3.6, 4.0, 1.2)}, label::first_object});
    s.seed = 7;
    return s;
}

inline Frame box_before_wall_frame()
{
    const Scene s = box_before_wall();
    return render_frame(s, {default_intrinsics(64, 64), look_at(Vec3(3.0, 0.4, 1.6), Vec3(3.0, 4.0, 0.6))});
}

} // namespace geoemerge::fixtures
