#include "geoemerge/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "geoemerge/error.hpp"

namespace geoemerge {

GradcheckResult gradcheck(const Objective& fn, std::span<const double> point, double eps)
{
    require(eps > 0.0 && eps <= 0.1, "gradcheck: eps must lie in (0, 0.1]");
    const Evaluation base = fn(point, true);
    require(base.gradient.size() == point.size(), "gradcheck: gradient size mismatch");

    GradcheckResult r;
    std::vector<double> x(point.begin(), point.end());
    const auto probe = [&](std::size_t i, double offset, bool& crossed) {
        const double saved = x[i];
        x[i] = saved + offset;
        const Evaluation e = fn(x, false);
        x[i] = saved;
        if (e.signature != base.signature) crossed = true;
        return e.value;
    };

    for (std::size_t i = 0; i < x.size(); ++i) {
        bool crossed = false;
        const auto central = [&](double h) { return (probe(i, h, crossed) - probe(i, -h, crossed)) / (2.0 * h); };
        const double d1 = central(eps);
        const double d2 = central(0.5 * eps);
        const double d4 = central(0.25 * eps);
        if (crossed) {
            r.degenerate = true;
            continue;
        }
        const double r1 = (4.0 * d2 - d1) / 3.0;
        const double r2 = (4.0 * d4 - d2) / 3.0;
        const double numeric = (16.0 * r2 - r1) / 15.0;
        const double analytic = base.gradient[i];
        const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
        const double rel = std::fabs(analytic - numeric) / denom;
        if (!(rel <= r.max_relative_error)) {
            r.max_relative_error = rel;
            r.worst_index = i;
            r.analytic_at_worst = analytic;
            r.numeric_at_worst = numeric;
        }
    }
    return r;
}

} // namespace geoemerge
