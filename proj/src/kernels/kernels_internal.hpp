#pragma once

#include <cmath>
#include <cstddef>

#include "siedd/kernels.hpp"

// Shared pieces of the kernel numerics contract. The per-element helpers here
// are used both by the scalar reference loops and by the SIMD variants' tail
// loops, so a lane processed by either path produces identical bits. The
// whole library is built with floating-point contraction disabled; fused
// operations appear only as explicit fma calls.

namespace siedd::kernels::detail {

// --- sincos ---------------------------------------------------------------
// Range reduction happens in double against a 33-bit split of pi/2, so
// dk * kPio2Hi is exact for |dk| < 2^20 and the reduced argument keeps full
// float precision. Inputs are clamped to +/-2^20 first; beyond that adjacent
// floats span whole periods and any answer is equally (un)usable.

inline constexpr float kSincosRange = 1048576.0f;  // 2^20

inline constexpr double kTwoOverPi = 6.36619772367581382433e-01;
inline constexpr double kPio2Hi = 1.57079632673412561417e+00;
inline constexpr double kPio2Lo = 6.07710050650619224932e-11;

// Minimax coefficients for sin/cos on [-pi/4, pi/4].
inline constexpr float kSinC0 = -1.9515295891e-4f;
inline constexpr float kSinC1 = 8.3321608736e-3f;
inline constexpr float kSinC2 = -1.6666654611e-1f;

inline constexpr float kCosC0 = 2.443315711809948e-5f;
inline constexpr float kCosC1 = -1.388731625493765e-3f;
inline constexpr float kCosC2 = 4.166664568298827e-2f;

inline void sincos1(float x, float& out_sin, float& out_cos) {
    const float xi = std::fmin(std::fmax(x, -kSincosRange), kSincosRange);
    const double xd = static_cast<double>(xi);
    const double dk = std::nearbyint(xd * kTwoOverPi);
    const int q = static_cast<int>(dk);
    const double rd = std::fma(dk, -kPio2Lo, std::fma(dk, -kPio2Hi, xd));
    const float r = static_cast<float>(rd);
    const float r2 = r * r;
    const float r4 = r2 * r2;

    float ps = std::fmaf(kSinC0, r2, kSinC1);
    ps = std::fmaf(ps, r2, kSinC2);
    const float sin_r = std::fmaf(r * r2, ps, r);

    float pc = std::fmaf(kCosC0, r2, kCosC1);
    pc = std::fmaf(pc, r2, kCosC2);
    const float cos_r = std::fmaf(pc, r4, std::fmaf(-0.5f, r2, 1.0f));

    // sin(r + q*pi/2), cos(r + q*pi/2); negation is a pure sign-bit flip,
    // matching the SIMD xor-with-sign-mask recombination.
    float sv = (q & 1) ? cos_r : sin_r;
    if (q & 2) sv = -sv;
    float cv = (q & 1) ? sin_r : cos_r;
    if ((q + 1) & 2) cv = -cv;
    out_sin = sv;
    out_cos = cv;
}

// --- schedule-free AdamW --------------------------------------------------

inline void sf_adamw1(float& z, float& x, float& v, float g, float y,
                      const SfAdamWStep& s) {
    v = std::fmaf(s.beta2, v, s.one_minus_beta2 * (g * g));
    const float vhat = v * s.inv_bias_corr;
    const float den = std::sqrt(vhat) + s.eps;  // float overload, correctly rounded
    const float q = g / den;
    const float step = std::fmaf(s.weight_decay, y, q);
    z = std::fmaf(-s.lr, step, z);
    x = std::fmaf(s.c_t, z, s.one_minus_ct * x);
}

// --- dot product ----------------------------------------------------------
// Eight interleaved partial sums (lane l accumulates elements l, l+8, ...),
// reduced pairwise in the order produced by two hadd rounds plus one
// cross-half add, then a sequential fmaf tail on the reduced value.

inline float dot8(const float* x, const float* y, std::size_t k) {
    float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
    float s4 = 0.0f, s5 = 0.0f, s6 = 0.0f, s7 = 0.0f;
    std::size_t kk = 0;
    for (; kk + 8 <= k; kk += 8) {
        s0 = std::fmaf(x[kk + 0], y[kk + 0], s0);
        s1 = std::fmaf(x[kk + 1], y[kk + 1], s1);
        s2 = std::fmaf(x[kk + 2], y[kk + 2], s2);
        s3 = std::fmaf(x[kk + 3], y[kk + 3], s3);
        s4 = std::fmaf(x[kk + 4], y[kk + 4], s4);
        s5 = std::fmaf(x[kk + 5], y[kk + 5], s5);
        s6 = std::fmaf(x[kk + 6], y[kk + 6], s6);
        s7 = std::fmaf(x[kk + 7], y[kk + 7], s7);
    }
    float r = ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7));
    for (; kk < k; ++kk)
        r = std::fmaf(x[kk], y[kk], r);
    return r;
}

#ifdef SIEDD_HAVE_AVX2
// Defined in kernels_avx2.cpp; only dereferenced after a runtime CPU check.
const Ops& avx2_table();
#endif

}  // namespace siedd::kernels::detail
