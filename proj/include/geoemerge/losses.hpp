#pragma once

// Training objectives with exact analytic gradients.
//
// Each loss also reports a branch signature: a hash of every discrete
// decision taken while evaluating it (signs fed to |.|, splat winners).
// Two evaluations with equal signatures lie on the same smooth piece, which
// is what the finite-difference checker needs to know.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "geoemerge/geometry.hpp"

namespace geoemerge {

// Confidence regularizer weight. The optimal confidence is alpha / residual;
// with room-scale depths of a few metres, smaller values let confidence
// collapse toward zero and the cross-view term then shrinks depth.
inline constexpr double kDefaultAlpha = 1.0;
inline constexpr int kIgnoreLabel = -1;

struct GeometryLossInputs {
    const DepthMap& pred_depth;
    const Grid<double>& pred_sigma;
    const DepthMap& gt_depth;
    double alpha = kDefaultAlpha;
};

struct GeometryLoss {
    double value = 0.0;
    Grid<double> grad_depth;
    Grid<double> grad_sigma;
    std::size_t support = 0; // |valid gt pixels|
    std::uint64_t signature = 0;
};

// Per pixel p in the valid ground-truth set:
//   sigma_p * |e_p| + sigma_p * (|dx e_p| + |dy e_p|) - alpha * log(sigma_p)
// with e = pred - gt and forward differences that exist only when both
// stencil pixels are valid. The value is the mean over valid pixels.
GeometryLoss geometry_loss(const GeometryLossInputs& in);

struct CrossViewLoss {
    double value = 0.0;
    Grid<double> grad_depth_t;
    Grid<double> grad_depth_other;
    std::size_t overlap = 0;
    bool empty_overlap = false;
    std::uint64_t signature = 0;
};

// Mean |D_t - warp(D_t')| over pixels where the warp landed. Gradients
// reach D_t' through the splatted z only; the splat location and the mask
// are held fixed.
CrossViewLoss cross_view_loss(const DepthMap& depth_t, const DepthMap& depth_other, const Pose& other_to_t,
                              const Intrinsics& k);

struct GlobalLoss {
    double value = 0.0;
    std::vector<double> grad_fb;
};

// 1 - cos(fa, fb); the teacher descriptor fa is frozen.
GlobalLoss global_loss(std::span<const double> fa, std::span<const double> fb);

struct CeLoss {
    double value = 0.0;
    std::vector<double> grad_logits; // same layout as logits
    std::size_t support = 0;
};

// Mean softmax cross-entropy over tokens whose label is not kIgnoreLabel.
// logits is tokens x classes, row-major.
CeLoss ce_proxy_loss(std::span<const double> logits, std::span<const int> labels, int classes);

struct LossToggles {
    bool global = false;
    bool geometry = false;
    bool cross_view = false;

    bool operator==(const LossToggles&) const = default;
};

struct LossWeights {
    double ce = 1.0;
    double geometry = 1.0;
    double cross_view = 1.0;
    double global = 1.0;
};

// Individually evaluated terms handed to composite_loss. Terms that were
// not evaluated stay empty.
struct LossParts {
    std::optional<CeLoss> ce;
    std::optional<GeometryLoss> geometry;
    std::optional<CrossViewLoss> cross_view;
    std::optional<GlobalLoss> global;
};

struct LossReport {
    double ce = 0.0;
    std::optional<double> geometry;
    std::optional<double> cross_view;
    std::optional<double> global;
    double total = 0.0;

    std::vector<double> grad_logits;
    std::optional<Grid<double>> grad_depth;
    std::optional<Grid<double>> grad_sigma;
    std::optional<Grid<double>> grad_depth_t;
    std::optional<Grid<double>> grad_depth_other;
    std::optional<std::vector<double>> grad_fb;
    bool empty_overlap = false;
    std::uint64_t signature = 0; // combined branch signature of the enabled terms
};

// Sum of the enabled terms. Disabled terms contribute neither value nor
// gradient even if they were evaluated.
LossReport composite_loss(LossParts parts, const LossToggles& toggles, const LossWeights& weights = {});

} // namespace geoemerge
