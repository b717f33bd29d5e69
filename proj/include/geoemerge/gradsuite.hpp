#pragma once

// Finite-difference verification of every analytic gradient in the
// library: the four loss terms in isolation and the full composite
// objective through all network parameters on a 16x16 two-frame scene.

#include <cstdint>
#include <string>
#include <vector>

namespace geoemerge {

struct GradSuiteOptions {
    int points = 100;
    std::uint64_t seed = 0;
    double eps = 1e-3; // loss terms in isolation
    // The composite is O(10) while some parameter gradients are near 1e-8,
    // so a smaller step lets roundoff dominate the difference quotient.
    double end_to_end_eps = 3e-2;
    double tolerance = 1e-4;
    int max_attempts_per_point = 20; // resamples allowed for branch-crossing points
};

struct GradSuiteRow {
    std::string name;
    int points = 0;
    int resampled = 0;
    std::size_t coordinates = 0; // per point
    double max_relative_error = 0.0;
    std::size_t worst_index = 0; // coordinate of the worst point
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

std::vector<GradSuiteRow> run_gradient_suite(const GradSuiteOptions& options = {});
std::string gradient_suite_table(const std::vector<GradSuiteRow>& rows);

} // namespace geoemerge
