#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace geoemerge {

struct Evaluation {
    double value = 0.0;
    std::vector<double> gradient; // empty when not requested
    std::uint64_t signature = 0;  // branch signature, see losses.hpp
};

// f(x, want_gradient)
using Objective = std::function<Evaluation(std::span<const double>, bool)>;

struct GradcheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    // Some stencil point crossed a branch (|.| kink, splat change); the
    // caller should resample the point.
    bool degenerate = false;
};

// Compares the analytic gradient with central differences at steps eps,
// eps/2 and eps/4, Richardson-extrapolated twice (truncation error of
// order eps^6), coordinate by coordinate.
// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
GradcheckResult gradcheck(const Objective& fn, std::span<const double> point, double eps = 1e-3);

} // namespace geoemerge
