#include "siedd/kernels.hpp"

#include <cmath>

#include "kernels_internal.hpp"

// Scalar reference kernels. This file defines the numeric behaviour of the
// whole library: every operation spells out its fmaf/sqrt/div sequence so
// results are reproducible across builds and the AVX2 variant can match them
// bit for bit.

namespace siedd::kernels {
namespace {

void gemm_nn_scalar(float* c, const float* a, const float* b,
                    std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const float av = arow[kk];
            const float* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] = std::fmaf(av, brow[j], crow[j]);
        }
    }
}

void gemm_nt_scalar(float* c, const float* a, const float* b,
                    std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j)
            crow[j] += detail::dot8(arow, b + j * k, k);
    }
}

void gemm_tn_scalar(float* c, const float* a, const float* b,
                    std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t kk = 0; kk < k; ++kk) {
        const float* arow = a + kk * m;
        const float* brow = b + kk * n;
        for (std::size_t i = 0; i < m; ++i) {
            const float av = arow[i];
            float* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] = std::fmaf(av, brow[j], crow[j]);
        }
    }
}

void axpy_scalar(float* y, float alpha, const float* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        y[i] = std::fmaf(alpha, x[i], y[i]);
}

void add_bias_scalar(float* y, const float* bias, std::size_t rows, std::size_t n) {
    for (std::size_t r = 0; r < rows; ++r) {
        float* row = y + r * n;
        for (std::size_t j = 0; j < n; ++j)
            row[j] += bias[j];
    }
}

void colsum_scalar(float* out, const float* m, std::size_t rows, std::size_t n) {
    for (std::size_t r = 0; r < rows; ++r) {
        const float* row = m + r * n;
        for (std::size_t j = 0; j < n; ++j)
            out[j] += row[j];
    }
}

void lerp_scalar(float* y, const float* a, const float* b, float t, std::size_t n) {
    const float one_minus_t = 1.0f - t;
    for (std::size_t i = 0; i < n; ++i)
        y[i] = std::fmaf(t, b[i], one_minus_t * a[i]);
}

void sincos_scalar(const float* x, std::size_t n, float* out_sin, float* out_cos) {
    for (std::size_t i = 0; i < n; ++i) {
        float sv, cv;
        detail::sincos1(x[i], sv, cv);
        if (out_sin) out_sin[i] = sv;
        if (out_cos) out_cos[i] = cv;
    }
}

void sf_adamw_scalar(float* z, float* x, float* v, const float* g, const float* y,
                     std::size_t n, const SfAdamWStep& s) {
    for (std::size_t i = 0; i < n; ++i)
        detail::sf_adamw1(z[i], x[i], v[i], g[i], y[i], s);
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops ops = {
        "scalar",
        gemm_nn_scalar, gemm_nt_scalar, gemm_tn_scalar,
        axpy_scalar, add_bias_scalar, colsum_scalar, lerp_scalar,
        sincos_scalar, sf_adamw_scalar,
    };
    return ops;
}

}  // namespace siedd::kernels
