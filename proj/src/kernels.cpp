#include "geoemerge/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>

namespace geoemerge::kernels {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

float dot(const float* a, const float* b, std::size_t n)
{
    float sum = 0.0f;
    for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

void axpy(double alpha, const double* x, double* y, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpy(float alpha, const float* x, float* y, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum_abs_diff(const double* a, const double* b, std::size_t n)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::fabs(a[i] - b[i]);
    return sum;
}

void adam_update(double* param, const double* grad, double* m, double* v, std::size_t n,
                 const AdamCoefficients& c)
{
    const double one_minus_b1 = 1.0 - c.beta1;
    const double one_minus_b2 = 1.0 - c.beta2;
    const double step = c.lr / c.bias_correction1;
    const double inv_bc2 = 1.0 / c.bias_correction2;
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        const double mi = c.beta1 * m[i] + one_minus_b1 * g;
        const double gg = g * g;
        const double vi = c.beta2 * v[i] + one_minus_b2 * gg;
        m[i] = mi;
        v[i] = vi;
        const double vhat = vi * inv_bc2;
        const double denom = std::sqrt(vhat) + c.epsilon;
        param[i] -= step * mi / denom;
    }
}

} // namespace scalar

namespace {

KernelTable make_table(Isa isa)
{
#ifdef GEOEMERGE_HAVE_AVX2_KERNELS
    if (isa == Isa::avx2) {
        return KernelTable{
            static_cast<double (*)(const double*, const double*, std::size_t)>(&avx2::dot),
            static_cast<float (*)(const float*, const float*, std::size_t)>(&avx2::dot),
            static_cast<void (*)(double, const double*, double*, std::size_t)>(&avx2::axpy),
            static_cast<void (*)(float, const float*, float*, std::size_t)>(&avx2::axpy),
            &avx2::sum_abs_diff,
            &avx2::adam_update,
        };
    }
#endif
    (void)isa;
    return KernelTable{
        static_cast<double (*)(const double*, const double*, std::size_t)>(&scalar::dot),
        static_cast<float (*)(const float*, const float*, std::size_t)>(&scalar::dot),
        static_cast<void (*)(double, const double*, double*, std::size_t)>(&scalar::axpy),
        static_cast<void (*)(float, const float*, float*, std::size_t)>(&scalar::axpy),
        &scalar::sum_abs_diff,
        &scalar::adam_update,
    };
}

Isa detect()
{
    if (const char* env = std::getenv("GEOEMERGE_SIMD"); env && std::strcmp(env, "scalar") == 0)
        return Isa::scalar;
    return cpu_supports(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

struct Dispatch {
    Isa isa = detect();
    KernelTable table = make_table(isa);
};

Dispatch& dispatch()
{
    static Dispatch d;
    return d;
}

} // namespace

bool cpu_supports(Isa isa)
{
    switch (isa) {
    case Isa::scalar:
        return true;
    case Isa::avx2:
#if defined(GEOEMERGE_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
        return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
        return false;
#endif
    }
    return false;
}

Isa active_isa() { return dispatch().isa; }

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

void force_isa(Isa isa)
{
    if (!cpu_supports(isa)) isa = Isa::scalar;
    dispatch().isa = isa;
    dispatch().table = make_table(isa);
}

const KernelTable& table() { return dispatch().table; }

} // namespace geoemerge::kernels
