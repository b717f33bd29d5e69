#include "geoemerge/losses.hpp"

#include <algorithm>
#include <cmath>

#include "geoemerge/hash.hpp"
#include "geoemerge/kernels.hpp"

namespace geoemerge {

namespace {

// Subgradient of |x| with 0 at the kink.
inline double sign_of(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

} // namespace

GeometryLoss geometry_loss(const GeometryLossInputs& in)
{
    const int w = in.gt_depth.width();
    const int h = in.gt_depth.height();
    require(in.pred_depth.values.same_shape(w, h) && in.pred_sigma.same_shape(w, h)
                && in.gt_depth.valid.same_shape(w, h),
            "geometry_loss: rasters are not congruent");
    require(in.alpha > 0.0, "geometry_loss: alpha must be positive");

    const std::size_t n = in.gt_depth.valid_count();
    if (n == 0) throw EmptySupport("geometry_loss: no valid ground-truth pixels");

    GeometryLoss out;
    out.grad_depth = Grid<double>(w, h, 0.0);
    out.grad_sigma = Grid<double>(w, h, 0.0);
    out.support = n;
    const double inv_n = 1.0 / static_cast<double>(n);

    const auto in_support = [&](int u, int v) { return in.gt_depth.valid(u, v) != 0; };
    const auto residual = [&](int u, int v) { return in.pred_depth.values(u, v) - in.gt_depth.values(u, v); };

    Fnv1a signs;
    double total = 0.0;
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            if (!in_support(u, v)) continue;
            const double sigma = in.pred_sigma(u, v);
            if (!(sigma > 0.0) || !std::isfinite(sigma))
                throw ContractViolation("geometry_loss: sigma must be strictly positive and finite");
            const double e = residual(u, v);
            if (!std::isfinite(e)) throw ContractViolation("geometry_loss: non-finite depth");

            double magnitude = std::fabs(e);
            const double se = sign_of(e);
            out.grad_depth(u, v) += sigma * se * inv_n;
            signs.add(static_cast<signed char>(se));

            if (u + 1 < w && in_support(u + 1, v)) {
                const double dx = residual(u + 1, v) - e;
                const double s = sign_of(dx);
                magnitude += std::fabs(dx);
                out.grad_depth(u + 1, v) += sigma * s * inv_n;
                out.grad_depth(u, v) -= sigma * s * inv_n;
                signs.add(static_cast<signed char>(s));
            }
            if (v + 1 < h && in_support(u, v + 1)) {
                const double dy = residual(u, v + 1) - e;
                const double s = sign_of(dy);
                magnitude += std::fabs(dy);
                out.grad_depth(u, v + 1) += sigma * s * inv_n;
                out.grad_depth(u, v) -= sigma * s * inv_n;
                signs.add(static_cast<signed char>(s));
            }

            total += sigma * magnitude - in.alpha * std::log(sigma);
            out.grad_sigma(u, v) = (magnitude - in.alpha / sigma) * inv_n;
        }
    }
    out.value = total * inv_n;
    out.signature = signs.digest();
    return out;
}

CrossViewLoss cross_view_loss(const DepthMap& depth_t, const DepthMap& depth_other, const Pose& other_to_t,
                              const Intrinsics& k)
{
    require(depth_t.values.same_shape(k.width, k.height) && depth_other.values.same_shape(k.width, k.height),
            "cross_view_loss: rasters are not congruent with the intrinsics");
    const WarpResult warp = warp_depth(depth_other, other_to_t, k);

    CrossViewLoss out;
    out.grad_depth_t = Grid<double>(k.width, k.height, 0.0);
    out.grad_depth_other = Grid<double>(k.width, k.height, 0.0);

    // Gather the overlap first so the L1 reduction runs on contiguous data.
    std::vector<std::size_t> pixels;
    std::vector<double> reference;
    std::vector<double> warped;
    for (std::size_t i = 0; i < warp.depth.valid.size(); ++i) {
        if (!warp.depth.valid[i] || !depth_t.valid[i]) continue;
        pixels.push_back(i);
        reference.push_back(depth_t.values[i]);
        warped.push_back(warp.depth.values[i]);
    }
    out.overlap = pixels.size();
    Fnv1a signs;
    signs.add(warp.signature);
    if (pixels.empty()) {
        out.empty_overlap = true;
        out.signature = signs.digest();
        return out;
    }

    const double inv_n = 1.0 / static_cast<double>(pixels.size());
    out.value = kernels::sum_abs_diff(reference, warped) * inv_n;

    for (std::size_t j = 0; j < pixels.size(); ++j) {
        const std::size_t p = pixels[j];
        const double s = sign_of(reference[j] - warped[j]);
        signs.add(static_cast<signed char>(s));
        out.grad_depth_t[p] += s * inv_n;
        // warped z = d * (R ray)_z + t_z for the winning source pixel
        const auto src = static_cast<std::size_t>(warp.source[p]);
        const int su = static_cast<int>(src % static_cast<std::size_t>(k.width));
        const int sv = static_cast<int>(src / static_cast<std::size_t>(k.width));
        const double dz_dd = other_to_t.rotation.row(2).dot(k.ray(su, sv));
        out.grad_depth_other[src] -= s * dz_dd * inv_n;
    }
    out.signature = signs.digest();
    return out;
}

GlobalLoss global_loss(std::span<const double> fa, std::span<const double> fb)
{
    require(fa.size() == fb.size() && !fa.empty(), "global_loss: descriptor sizes differ");
    const double na = std::sqrt(kernels::dot(fa, fa));
    const double nb = std::sqrt(kernels::dot(fb, fb));
    require(na > 0.0 && nb > 0.0, "global_loss: zero-norm descriptor");
    const double ab = kernels::dot(fa, fb);
    const double cosine = ab / (na * nb);

    GlobalLoss out;
    out.value = 1.0 - cosine;
    out.grad_fb.resize(fb.size());
    // d(1 - cos)/dfb = -(fa / (|a||b|) - cos * fb / |b|^2)
    const double inv_ab = 1.0 / (na * nb);
    const double c_over_b2 = cosine / (nb * nb);
    for (std::size_t i = 0; i < fb.size(); ++i) out.grad_fb[i] = -(fa[i] * inv_ab - c_over_b2 * fb[i]);
    return out;
}

CeLoss ce_proxy_loss(std::span<const double> logits, std::span<const int> labels, int classes)
{
    require(classes >= 2, "ce_proxy_loss: need at least two classes");
    require(logits.size() == labels.size() * static_cast<std::size_t>(classes),
            "ce_proxy_loss: logits and labels disagree in size");
    std::size_t n = 0;
    for (int l : labels) {
        if (l == kIgnoreLabel) continue;
        require(l >= 0 && l < classes, "ce_proxy_loss: label out of range");
        ++n;
    }
    if (n == 0) throw EmptySupport("ce_proxy_loss: every token is ignored");

    CeLoss out;
    out.support = n;
    out.grad_logits.assign(logits.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    std::vector<double> prob(static_cast<std::size_t>(classes));
    for (std::size_t t = 0; t < labels.size(); ++t) {
        if (labels[t] == kIgnoreLabel) continue;
        const double* row = logits.data() + t * classes;
        const double mx = *std::max_element(row, row + classes);
        double z = 0.0;
        for (int c = 0; c < classes; ++c) {
            prob[c] = std::exp(row[c] - mx);
            z += prob[c];
        }
        total += std::log(z) - (row[labels[t]] - mx);
        double* g = out.grad_logits.data() + t * classes;
        for (int c = 0; c < classes; ++c) g[c] = prob[c] / z * inv_n;
        g[labels[t]] -= inv_n;
    }
    out.value = total * inv_n;
    return out;
}

LossReport composite_loss(LossParts parts, const LossToggles& toggles, const LossWeights& weights)
{
    require(parts.ce.has_value(), "composite_loss: the cross-entropy term is mandatory");
    const auto scaled = [](auto values, double w) {
        if (w != 1.0)
            for (auto& x : values) x *= w;
        return values;
    };

    LossReport r;
    Fnv1a branches;
    r.ce = parts.ce->value;
    r.total = weights.ce * r.ce;
    r.grad_logits = scaled(std::move(parts.ce->grad_logits), weights.ce);

    if (toggles.geometry) {
        require(parts.geometry.has_value(), "composite_loss: geometry enabled but not evaluated");
        r.geometry = parts.geometry->value;
        branches.add(parts.geometry->signature);
        r.total += weights.geometry * *r.geometry;
        r.grad_depth = parts.geometry->grad_depth;
        r.grad_sigma = parts.geometry->grad_sigma;
        for (auto& g : r.grad_depth->storage()) g *= weights.geometry;
        for (auto& g : r.grad_sigma->storage()) g *= weights.geometry;
    }
    if (toggles.cross_view) {
        require(parts.cross_view.has_value(), "composite_loss: cross-view enabled but not evaluated");
        r.cross_view = parts.cross_view->value;
        branches.add(parts.cross_view->signature);
        r.empty_overlap = parts.cross_view->empty_overlap;
        r.total += weights.cross_view * *r.cross_view;
        r.grad_depth_t = parts.cross_view->grad_depth_t;
        r.grad_depth_other = parts.cross_view->grad_depth_other;
        for (auto& g : r.grad_depth_t->storage()) g *= weights.cross_view;
        for (auto& g : r.grad_depth_other->storage()) g *= weights.cross_view;
    }
    if (toggles.global) {
        require(parts.global.has_value(), "composite_loss: global enabled but not evaluated");
        r.global = parts.global->value;
        r.total += weights.global * *r.global;
        r.grad_fb = scaled(std::move(parts.global->grad_fb), weights.global);
    }
    r.signature = branches.digest();
    return r;
}

} // namespace geoemerge
