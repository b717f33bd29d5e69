#include <doctest.h>

#include <cmath>
#include <vector>

#include "geoemerge/kernels.hpp"
#include "geoemerge/random.hpp"

using namespace geoemerge;
namespace k = geoemerge::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n)
{
    std::vector<double> v(n);
    for (double& x : v) x = normal(rng);
    return v;
}

std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

} // namespace

#ifdef GEOEMERGE_HAVE_AVX2_KERNELS
TEST_CASE("avx2 kernels agree with the scalar reference")
{
    if (!k::cpu_supports(k::Isa::avx2)) {
        MESSAGE("CPU lacks AVX2; skipping");
        return;
    }
    Rng rng(7);
    for (std::size_t n = 0; n <= 67; ++n) {
        const auto a = random_vec(rng, n), b = random_vec(rng, n);
        CAPTURE(n);

        const double ds = k::scalar::dot(a.data(), b.data(), n), dv = k::avx2::dot(a.data(), b.data(), n);
        CHECK(std::fabs(ds - dv) <= 1e-12 * (1.0 + std::fabs(ds)));
        const auto af = to_float(a), bf = to_float(b);
        const float fs = k::scalar::dot(af.data(), bf.data(), n), fv = k::avx2::dot(af.data(), bf.data(), n);
        CHECK(std::fabs(fs - fv) <= 1e-4f * (1.0f + std::fabs(fs)));
        const double ss = k::scalar::sum_abs_diff(a.data(), b.data(), n);
        const double sv = k::avx2::sum_abs_diff(a.data(), b.data(), n);
        CHECK(std::fabs(ss - sv) <= 1e-12 * (1.0 + ss));

        // Element-wise kernels are bit-identical.
        auto ys = b, yv = b;
        k::scalar::axpy(0.37, a.data(), ys.data(), n);
        k::avx2::axpy(0.37, a.data(), yv.data(), n);
        CHECK(ys == yv);
        auto yfs = bf, yfv = bf;
        k::scalar::axpy(0.37f, af.data(), yfs.data(), n);
        k::avx2::axpy(0.37f, af.data(), yfv.data(), n);
        CHECK(yfs == yfv);

        k::AdamCoefficients c;
        c.lr = 1e-2;
        c.bias_correction1 = 1.0 - std::pow(0.9, 3);
        c.bias_correction2 = 1.0 - std::pow(0.999, 3);
        auto ps = a, pv = a, ms = b, mv = b;
        std::vector<double> vs(n), vv(n);
        for (std::size_t i = 0; i < n; ++i) vs[i] = vv[i] = std::fabs(b[i]);
        const auto g = random_vec(rng, n);
        k::scalar::adam_update(ps.data(), g.data(), ms.data(), vs.data(), n, c);
        k::avx2::adam_update(pv.data(), g.data(), mv.data(), vv.data(), n, c);
        CHECK(ps == pv);
        CHECK(ms == mv);
        CHECK(vs == vv);
    }
}
#endif

TEST_CASE("dispatch follows force_isa")
{
    const k::Isa original = k::active_isa();
    k::force_isa(k::Isa::scalar);
    CHECK(k::active_isa() == k::Isa::scalar);
    CHECK(k::isa_name(k::Isa::scalar) == "scalar");
    const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
    CHECK(k::dot(a, b) == 32.0);
    CHECK(k::sum_abs_diff(a, b) == 9.0);
    k::force_isa(original);
    CHECK(k::active_isa() == original);
}

TEST_CASE("scalar reference kernels match hand computation")
{
    const std::vector<double> x{1.0, -2.0, 0.5};
    std::vector<double> y{0.0, 1.0, 1.0};
    k::scalar::axpy(2.0, x.data(), y.data(), 3);
    CHECK(y == std::vector<double>{2.0, -3.0, 2.0});

    // One Adam step from zero moments moves each parameter by lr * sign(g).
    std::vector<double> p{1.0, 1.0}, g{0.5, -4.0}, m(2), v(2);
    k::AdamCoefficients c;
    c.lr = 0.1;
    c.epsilon = 0.0;
    c.bias_correction1 = 0.1;
    c.bias_correction2 = 0.001;
    k::scalar::adam_update(p.data(), g.data(), m.data(), v.data(), 2, c);
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(1.1).epsilon(1e-12));
}
