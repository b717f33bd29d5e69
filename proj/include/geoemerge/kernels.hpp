#pragma once

// Data-parallel inner loops used by the network, the optimizer and the
// losses. Every kernel has a portable scalar reference implementation and,
// on x86-64, an AVX2+FMA variant. The active variant is chosen once at
// startup from CPUID; GEOEMERGE_SIMD=scalar forces the reference path.
//
// The AVX2 reductions use a different summation order than the scalar
// loops, so results agree to rounding, not bit-for-bit. Element-wise
// kernels (axpy, scale, adam_update) are bit-identical across variants.

#include <cstddef>
#include <span>
#include <string_view>

namespace geoemerge::kernels {

enum class Isa { scalar, avx2 };

struct AdamCoefficients {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double bias_correction1 = 1.0; // 1 - beta1^t
    double bias_correction2 = 1.0; // 1 - beta2^t
};

struct KernelTable {
    double (*dot_f64)(const double*, const double*, std::size_t);
    float (*dot_f32)(const float*, const float*, std::size_t);
    void (*axpy_f64)(double, const double*, double*, std::size_t);
    void (*axpy_f32)(float, const float*, float*, std::size_t);
    double (*sum_abs_diff_f64)(const double*, const double*, std::size_t);
    void (*adam_update_f64)(double*, const double*, double*, double*, std::size_t, const AdamCoefficients&);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
float dot(const float* a, const float* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
double sum_abs_diff(const double* a, const double* b, std::size_t n);
void adam_update(double* param, const double* grad, double* m, double* v, std::size_t n,
                 const AdamCoefficients& c);
} // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define GEOEMERGE_HAVE_AVX2_KERNELS 1
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
float dot(const float* a, const float* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
double sum_abs_diff(const double* a, const double* b, std::size_t n);
void adam_update(double* param, const double* grad, double* m, double* v, std::size_t n,
                 const AdamCoefficients& c);
} // namespace avx2
#endif

bool cpu_supports(Isa isa);
Isa active_isa();
std::string_view isa_name(Isa isa);

// Replaces the dispatch table. Intended for tests and benchmarks; not
// safe to call while other threads run kernels.
void force_isa(Isa isa);

const KernelTable& table();

inline double dot(std::span<const double> a, std::span<const double> b)
{
    return table().dot_f64(a.data(), b.data(), a.size());
}

inline float dot(std::span<const float> a, std::span<const float> b)
{
    return table().dot_f32(a.data(), b.data(), a.size());
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y)
{
    table().axpy_f64(alpha, x.data(), y.data(), x.size());
}

inline void axpy(float alpha, std::span<const float> x, std::span<float> y)
{
    table().axpy_f32(alpha, x.data(), y.data(), x.size());
}

inline double sum_abs_diff(std::span<const double> a, std::span<const double> b)
{
    return table().sum_abs_diff_f64(a.data(), b.data(), a.size());
}

inline void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                        std::span<double> v, const AdamCoefficients& c)
{
    table().adam_update_f64(param.data(), grad.data(), m.data(), v.data(), param.size(), c);
}

} // namespace geoemerge::kernels
