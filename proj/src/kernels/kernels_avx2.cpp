#include <immintrin.h>

#include <cmath>

#include "kernels_internal.hpp"
#include "siedd/kernels.hpp"

// AVX2+FMA kernel variant. Compiled with -mavx2 -mfma in this one translation
// unit only; the dispatcher checks CPU support before handing out the table.
//
// Bitwise contract with the scalar reference:
//  - gemm accumulation touches each C element in the same k order (row
//    jamming / panel blocking only reorders independent elements),
//  - dot products keep the scalar's 8-lane partial sums; the two hadd rounds
//    plus cross-half add reproduce its pairwise reduction tree exactly
//    (float addition is commutative per lane pair),
//  - vsqrtps/vdivps are correctly rounded, matching sqrtf and scalar division,
//  - vfnmadd on doubles equals fma(a, -b, c),
//  - tail elements run the shared scalar helpers.

namespace siedd::kernels {
namespace {

using detail::dot8;

void gemm_nn_avx2(float* c, const float* a, const float* b,
                  std::size_t m, std::size_t k, std::size_t n) {
    std::size_t i = 0;
    // Four-row jam: one load of B's row serves four C rows.
    for (; i + 4 <= m; i += 4) {
        const float* a0 = a + (i + 0) * k;
        const float* a1 = a + (i + 1) * k;
        const float* a2 = a + (i + 2) * k;
        const float* a3 = a + (i + 3) * k;
        float* c0 = c + (i + 0) * n;
        float* c1 = c + (i + 1) * n;
        float* c2 = c + (i + 2) * n;
        float* c3 = c + (i + 3) * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const float* brow = b + kk * n;
            const __m256 av0 = _mm256_set1_ps(a0[kk]);
            const __m256 av1 = _mm256_set1_ps(a1[kk]);
            const __m256 av2 = _mm256_set1_ps(a2[kk]);
            const __m256 av3 = _mm256_set1_ps(a3[kk]);
            std::size_t j = 0;
            for (; j + 8 <= n; j += 8) {
                const __m256 bv = _mm256_loadu_ps(brow + j);
                _mm256_storeu_ps(c0 + j, _mm256_fmadd_ps(av0, bv, _mm256_loadu_ps(c0 + j)));
                _mm256_storeu_ps(c1 + j, _mm256_fmadd_ps(av1, bv, _mm256_loadu_ps(c1 + j)));
                _mm256_storeu_ps(c2 + j, _mm256_fmadd_ps(av2, bv, _mm256_loadu_ps(c2 + j)));
                _mm256_storeu_ps(c3 + j, _mm256_fmadd_ps(av3, bv, _mm256_loadu_ps(c3 + j)));
            }
            for (; j < n; ++j) {
                c0[j] = std::fmaf(a0[kk], brow[j], c0[j]);
                c1[j] = std::fmaf(a1[kk], brow[j], c1[j]);
                c2[j] = std::fmaf(a2[kk], brow[j], c2[j]);
                c3[j] = std::fmaf(a3[kk], brow[j], c3[j]);
            }
        }
    }
    for (; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const float* brow = b + kk * n;
            const __m256 av = _mm256_set1_ps(arow[kk]);
            std::size_t j = 0;
            for (; j + 8 <= n; j += 8) {
                const __m256 bv = _mm256_loadu_ps(brow + j);
                _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(av, bv, _mm256_loadu_ps(crow + j)));
            }
            for (; j < n; ++j)
                crow[j] = std::fmaf(arow[kk], brow[j], crow[j]);
        }
    }
}

float dot8_avx2(const float* x, const float* y, std::size_t k) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t kk = 0;
    for (; kk + 8 <= k; kk += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + kk), _mm256_loadu_ps(y + kk), acc);
    const __m256 t = _mm256_hadd_ps(acc, acc);
    const __m256 u = _mm256_hadd_ps(t, t);
    const float lo = _mm_cvtss_f32(_mm256_castps256_ps128(u));
    const float hi = _mm_cvtss_f32(_mm256_extractf128_ps(u, 1));
    float r = lo + hi;
    for (; kk < k; ++kk)
        r = std::fmaf(x[kk], y[kk], r);
    return r;
}

void gemm_nt_avx2(float* c, const float* a, const float* b,
                  std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j)
            crow[j] += dot8_avx2(arow, b + j * k, k);
    }
}

void gemm_tn_avx2(float* c, const float* a, const float* b,
                  std::size_t m, std::size_t k, std::size_t n) {
    // Panel over C rows so the working set stays cache-resident while k (the
    // long batch dimension) streams past.
    constexpr std::size_t panel = 64;
    for (std::size_t i0 = 0; i0 < m; i0 += panel) {
        const std::size_t i1 = i0 + panel < m ? i0 + panel : m;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const float* arow = a + kk * m;
            const float* brow = b + kk * n;
            for (std::size_t i = i0; i < i1; ++i) {
                const __m256 av = _mm256_set1_ps(arow[i]);
                float* crow = c + i * n;
                std::size_t j = 0;
                for (; j + 8 <= n; j += 8) {
                    const __m256 bv = _mm256_loadu_ps(brow + j);
                    _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(av, bv, _mm256_loadu_ps(crow + j)));
                }
                for (; j < n; ++j)
                    crow[j] = std::fmaf(arow[i], brow[j], crow[j]);
            }
        }
    }
}

void axpy_avx2(float* y, float alpha, const float* x, std::size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i)
        y[i] = std::fmaf(alpha, x[i], y[i]);
}

void add_bias_avx2(float* y, const float* bias, std::size_t rows, std::size_t n) {
    for (std::size_t r = 0; r < rows; ++r) {
        float* row = y + r * n;
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8)
            _mm256_storeu_ps(row + j, _mm256_add_ps(_mm256_loadu_ps(row + j), _mm256_loadu_ps(bias + j)));
        for (; j < n; ++j)
            row[j] += bias[j];
    }
}

void colsum_avx2(float* out, const float* m, std::size_t rows, std::size_t n) {
    for (std::size_t r = 0; r < rows; ++r) {
        const float* row = m + r * n;
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8)
            _mm256_storeu_ps(out + j, _mm256_add_ps(_mm256_loadu_ps(out + j), _mm256_loadu_ps(row + j)));
        for (; j < n; ++j)
            out[j] += row[j];
    }
}

void lerp_avx2(float* y, const float* a, const float* b, float t, std::size_t n) {
    const float one_minus_t = 1.0f - t;
    const __m256 vt = _mm256_set1_ps(t);
    const __m256 vomt = _mm256_set1_ps(one_minus_t);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 va = _mm256_loadu_ps(a + i);
        const __m256 vb = _mm256_loadu_ps(b + i);
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(vt, vb, _mm256_mul_ps(vomt, va)));
    }
    for (; i < n; ++i)
        y[i] = std::fmaf(t, b[i], one_minus_t * a[i]);
}

void sincos_avx2(const float* x, std::size_t n, float* out_sin, float* out_cos) {
    using namespace detail;
    const __m256 vrange = _mm256_set1_ps(kSincosRange);
    const __m256 vnrange = _mm256_set1_ps(-kSincosRange);
    const __m256d v2opi = _mm256_set1_pd(kTwoOverPi);
    const __m256d vhi = _mm256_set1_pd(kPio2Hi);
    const __m256d vlo = _mm256_set1_pd(kPio2Lo);
    const __m256 vs0 = _mm256_set1_ps(kSinC0);
    const __m256 vs1 = _mm256_set1_ps(kSinC1);
    const __m256 vs2 = _mm256_set1_ps(kSinC2);
    const __m256 vc0 = _mm256_set1_ps(kCosC0);
    const __m256 vc1 = _mm256_set1_ps(kCosC1);
    const __m256 vc2 = _mm256_set1_ps(kCosC2);
    const __m256 vhalf_neg = _mm256_set1_ps(-0.5f);
    const __m256 vone = _mm256_set1_ps(1.0f);
    const __m256 vsignbit = _mm256_set1_ps(-0.0f);
    const __m256i ione = _mm256_set1_epi32(1);
    const __m256i itwo = _mm256_set1_epi32(2);

    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vx = _mm256_loadu_ps(x + i);
        vx = _mm256_max_ps(vx, vnrange);
        vx = _mm256_min_ps(vx, vrange);

        const __m256d xd0 = _mm256_cvtps_pd(_mm256_castps256_ps128(vx));
        const __m256d xd1 = _mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1));
        const __m256d dk0 = _mm256_round_pd(_mm256_mul_pd(xd0, v2opi),
                                            _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
        const __m256d dk1 = _mm256_round_pd(_mm256_mul_pd(xd1, v2opi),
                                            _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
        const __m256i q = _mm256_set_m128i(_mm256_cvtpd_epi32(dk1), _mm256_cvtpd_epi32(dk0));
        const __m256d rd0 = _mm256_fnmadd_pd(dk0, vlo, _mm256_fnmadd_pd(dk0, vhi, xd0));
        const __m256d rd1 = _mm256_fnmadd_pd(dk1, vlo, _mm256_fnmadd_pd(dk1, vhi, xd1));
        const __m256 vr = _mm256_set_m128(_mm256_cvtpd_ps(rd1), _mm256_cvtpd_ps(rd0));

        const __m256 r2 = _mm256_mul_ps(vr, vr);
        const __m256 r4 = _mm256_mul_ps(r2, r2);

        __m256 ps = _mm256_fmadd_ps(vs0, r2, vs1);
        ps = _mm256_fmadd_ps(ps, r2, vs2);
        const __m256 sin_r = _mm256_fmadd_ps(_mm256_mul_ps(vr, r2), ps, vr);

        __m256 pc = _mm256_fmadd_ps(vc0, r2, vc1);
        pc = _mm256_fmadd_ps(pc, r2, vc2);
        const __m256 cos_r =
            _mm256_fmadd_ps(pc, r4, _mm256_fmadd_ps(vhalf_neg, r2, vone));

        const __m256 swap_mask = _mm256_castsi256_ps(
            _mm256_cmpeq_epi32(_mm256_and_si256(q, ione), ione));
        __m256 sv = _mm256_blendv_ps(sin_r, cos_r, swap_mask);
        __m256 cv = _mm256_blendv_ps(cos_r, sin_r, swap_mask);

        const __m256 sneg = _mm256_and_ps(
            _mm256_castsi256_ps(_mm256_cmpeq_epi32(_mm256_and_si256(q, itwo), itwo)), vsignbit);
        sv = _mm256_xor_ps(sv, sneg);
        const __m256i qp1 = _mm256_add_epi32(q, ione);
        const __m256 cneg = _mm256_and_ps(
            _mm256_castsi256_ps(_mm256_cmpeq_epi32(_mm256_and_si256(qp1, itwo), itwo)), vsignbit);
        cv = _mm256_xor_ps(cv, cneg);

        if (out_sin) _mm256_storeu_ps(out_sin + i, sv);
        if (out_cos) _mm256_storeu_ps(out_cos + i, cv);
    }
    for (; i < n; ++i) {
        float sv, cv;
        detail::sincos1(x[i], sv, cv);
        if (out_sin) out_sin[i] = sv;
        if (out_cos) out_cos[i] = cv;
    }
}

void sf_adamw_avx2(float* z, float* x, float* v, const float* g, const float* y,
                   std::size_t n, const SfAdamWStep& s) {
    const __m256 vbeta2 = _mm256_set1_ps(s.beta2);
    const __m256 vomb2 = _mm256_set1_ps(s.one_minus_beta2);
    const __m256 vibc = _mm256_set1_ps(s.inv_bias_corr);
    const __m256 veps = _mm256_set1_ps(s.eps);
    const __m256 vwd = _mm256_set1_ps(s.weight_decay);
    const __m256 vnlr = _mm256_set1_ps(-s.lr);
    const __m256 vct = _mm256_set1_ps(s.c_t);
    const __m256 vomct = _mm256_set1_ps(s.one_minus_ct);

    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 vg = _mm256_loadu_ps(g + i);
        __m256 vv = _mm256_loadu_ps(v + i);
        vv = _mm256_fmadd_ps(vbeta2, vv, _mm256_mul_ps(vomb2, _mm256_mul_ps(vg, vg)));
        _mm256_storeu_ps(v + i, vv);
        const __m256 vhat = _mm256_mul_ps(vv, vibc);
        const __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
        const __m256 q = _mm256_div_ps(vg, den);
        const __m256 step = _mm256_fmadd_ps(vwd, _mm256_loadu_ps(y + i), q);
        const __m256 vz = _mm256_fmadd_ps(vnlr, step, _mm256_loadu_ps(z + i));
        _mm256_storeu_ps(z + i, vz);
        const __m256 vx = _mm256_fmadd_ps(vct, vz, _mm256_mul_ps(vomct, _mm256_loadu_ps(x + i)));
        _mm256_storeu_ps(x + i, vx);
    }
    for (; i < n; ++i)
        detail::sf_adamw1(z[i], x[i], v[i], g[i], y[i], s);
}

}  // namespace

namespace detail {

const Ops& avx2_table() {
    static const Ops ops = {
        "avx2",
        gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2,
        axpy_avx2, add_bias_avx2, colsum_avx2, lerp_avx2,
        sincos_avx2, sf_adamw_avx2,
    };
    return ops;
}

}  // namespace detail
}  // namespace siedd::kernels
