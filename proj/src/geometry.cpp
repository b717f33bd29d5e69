#include "geoemerge/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Geometry>

#include "geoemerge/hash.hpp"

namespace geoemerge {

void Intrinsics::validate() const
{
    require(width > 0 && height > 0, "Intrinsics: raster size must be positive");
    require(fx > 0.0 && fy > 0.0, "Intrinsics: focal lengths must be positive");
    require(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height,
            "Intrinsics: principal point outside the raster");
}

Pose Pose::inverse() const
{
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
}

Pose Pose::operator*(const Pose& other) const
{
    return {rotation * other.rotation, rotation * other.translation + translation};
}

bool Pose::is_valid(double tol) const
{
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const Mat3 gram = rotation.transpose() * rotation;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    return std::fabs(rotation.determinant() - 1.0) <= tol;
}

double Pose::rotation_angle_deg() const
{
    const double c = std::clamp((rotation.trace() - 1.0) * 0.5, -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

DepthMap DepthMap::from_values(Grid<double> values)
{
    DepthMap d;
    d.valid = Mask(values.width(), values.height(), 0);
    for (std::size_t i = 0; i < values.size(); ++i)
        d.valid[i] = (std::isfinite(values[i]) && values[i] > 0.0) ? 1 : 0;
    d.values = std::move(values);
    return d;
}

std::size_t DepthMap::valid_count() const
{
    return static_cast<std::size_t>(std::count(valid.values().begin(), valid.values().end(), 1));
}

PointMap backproject(const DepthMap& depth, const Intrinsics& k, const Pose& pose)
{
    require(depth.values.same_shape(k.width, k.height) && depth.valid.same_shape(depth.values),
            "backproject: depth raster does not match intrinsics");
    PointMap pm{Grid<Vec3>(k.width, k.height, Vec3::Zero()), Mask(k.width, k.height, 0)};
    for (int v = 0; v < k.height; ++v) {
        for (int u = 0; u < k.width; ++u) {
            if (!depth.is_valid(u, v)) continue;
            const double d = depth.values(u, v);
            const Vec3 cam((u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d);
            pm.points(u, v) = pose.apply(cam);
            pm.valid(u, v) = 1;
        }
    }
    return pm;
}

std::optional<Projection> project(const Vec3& point_world, const Intrinsics& k, const Pose& pose, double z_min)
{
    const Vec3 cam = pose.rotation.transpose() * (point_world - pose.translation);
    if (!(cam.z() > z_min)) return std::nullopt;
    return Projection{k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy, cam.z()};
}

Pose relative_pose(const Pose& src, const Pose& tgt)
{
    const Mat3 tgt_rt = tgt.rotation.transpose();
    return {tgt_rt * src.rotation, tgt_rt * (src.translation - tgt.translation)};
}

WarpResult warp_depth(const DepthMap& src_depth, const Pose& src_to_tgt, const Intrinsics& k, double z_min)
{
    require(src_depth.values.same_shape(k.width, k.height) && src_depth.valid.same_shape(src_depth.values),
            "warp_depth: depth raster does not match intrinsics");
    WarpResult out{DepthMap(k.width, k.height), Grid<std::int32_t>(k.width, k.height, -1), 0};
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::fill(out.depth.values.storage().begin(), out.depth.values.storage().end(), inf);

    for (int v = 0; v < k.height; ++v) {
        for (int u = 0; u < k.width; ++u) {
            if (!src_depth.is_valid(u, v)) continue;
            const double d = src_depth.values(u, v);
            const Vec3 cam((u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d);
            const Vec3 p = src_to_tgt.rotation * cam + src_to_tgt.translation;
            if (!(p.z() > z_min)) continue;
            const double ut = k.fx * p.x() / p.z() + k.cx;
            const double vt = k.fy * p.y() / p.z() + k.cy;
            const double ur = std::floor(ut + 0.5);
            const double vr = std::floor(vt + 0.5);
            if (!(ur >= 0.0 && vr >= 0.0 && ur < k.width && vr < k.height)) continue;
            const int ui = static_cast<int>(ur);
            const int vi = static_cast<int>(vr);
            // strict < keeps the first splat on ties (raster order)
            if (p.z() < out.depth.values(ui, vi)) {
                out.depth.values(ui, vi) = p.z();
                out.source(ui, vi) = static_cast<std::int32_t>(src_depth.values.index(u, v));
                out.depth.valid(ui, vi) = 1;
            }
        }
    }
    for (std::size_t i = 0; i < out.depth.values.size(); ++i)
        if (!out.depth.valid[i]) out.depth.values[i] = 0.0;

    Fnv1a h;
    h.add_span(std::span<const std::int32_t>(out.source.values()));
    out.signature = h.digest();
    return out;
}

NormalMap normals_from_depth(const DepthMap& depth, const Intrinsics& k)
{
    require(depth.values.same_shape(k.width, k.height), "normals_from_depth: raster mismatch");
    const PointMap pm = backproject(depth, k, Pose::identity());
    NormalMap nm{Grid<Vec3>(k.width, k.height, Vec3::Zero()), Mask(k.width, k.height, 0)};
    const auto valid = [&](int u, int v) { return pm.valid.in_bounds(u, v) && pm.valid(u, v); };

    // Central difference where both neighbours exist, one-sided otherwise.
    const auto tangent = [&](int u, int v, int du, int dv, Vec3& t) {
        const bool fwd = valid(u + du, v + dv);
        const bool bwd = valid(u - du, v - dv);
        if (fwd && bwd) t = pm.points(u + du, v + dv) - pm.points(u - du, v - dv);
        else if (fwd) t = pm.points(u + du, v + dv) - pm.points(u, v);
        else if (bwd) t = pm.points(u, v) - pm.points(u - du, v - dv);
        else return false;
        return true;
    };

    for (int v = 0; v < k.height; ++v) {
        for (int u = 0; u < k.width; ++u) {
            if (!valid(u, v)) continue;
            Vec3 tx, ty;
            if (!tangent(u, v, 1, 0, tx) || !tangent(u, v, 0, 1, ty)) continue;
            Vec3 n = tx.cross(ty);
            const double len = n.norm();
            if (!(len > 0.0) || !std::isfinite(len)) continue;
            n /= len;
            if (n.dot(pm.points(u, v)) > 0.0) n = -n;
            nm.normals(u, v) = n;
            nm.valid(u, v) = 1;
        }
    }
    return nm;
}

double angle_deg(const Vec3& a, const Vec3& b)
{
    return std::acos(std::clamp(a.dot(b), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

} // namespace geoemerge
