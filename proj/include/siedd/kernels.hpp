#pragma once

#include <cstddef>

namespace siedd::kernels {

// Per-step constants for the schedule-free AdamW elementwise update.
// inv_bias_corr = 1 / (1 - beta2^t), c_t = 1/t; precomputed in double and
// narrowed once so every variant sees identical values.
struct SfAdamWStep {
    float lr;
    float beta2;
    float one_minus_beta2;
    float inv_bias_corr;
    float eps;
    float weight_decay;
    float c_t;
    float one_minus_ct;
};

// Kernel table. All variants must be bit-identical to the scalar reference:
// the scalar code pins the floating-point evaluation order (explicit fmaf,
// fixed reduction trees, correctly rounded sqrt/div) and SIMD variants
// reproduce it lane for lane. Equivalence tests assert bitwise equality.
struct Ops {
    const char* name;

    // C[m x n] += A[m x k] * B[k x n]; each C element accumulates in k order.
    void (*gemm_nn)(float* c, const float* a, const float* b,
                    std::size_t m, std::size_t k, std::size_t n);

    // C[m x n] += A[m x k] * B^T with B stored [n x k]. Dot products use 8
    // interleaved partial sums reduced pairwise, then a sequential fmaf tail.
    void (*gemm_nt)(float* c, const float* a, const float* b,
                    std::size_t m, std::size_t k, std::size_t n);

    // C[m x n] += A^T * B with A stored [k x m], B stored [k x n];
    // each C element accumulates in k order.
    void (*gemm_tn)(float* c, const float* a, const float* b,
                    std::size_t m, std::size_t k, std::size_t n);

    // y[i] = fmaf(alpha, x[i], y[i])
    void (*axpy)(float* y, float alpha, const float* x, std::size_t n);

    // y[r][j] += bias[j] for every row
    void (*add_bias)(float* y, const float* bias, std::size_t rows, std::size_t n);

    // out[j] += sum over rows of m[r][j], accumulated in row order
    void (*colsum)(float* out, const float* m, std::size_t rows, std::size_t n);

    // y[i] = fmaf(t, b[i], (1 - t) * a[i])
    void (*lerp)(float* y, const float* a, const float* b, float t, std::size_t n);

    // Simultaneous sine/cosine. Cody-Waite reduction in double against a
    // 33-bit split of pi/2, minimax polynomials on [-pi/4, pi/4]. Inputs are
    // clamped to +/-2^20; beyond that adjacent floats span whole periods.
    // Either output pointer may be null.
    void (*sincos)(const float* x, std::size_t n, float* out_sin, float* out_cos);

    // Schedule-free AdamW inner update. params currently hold the eval point y:
    //   v    = fmaf(beta2, v, (1-beta2) * g * g)
    //   vhat = v * inv_bias_corr
    //   q    = g / (sqrt(vhat) + eps)
    //   z    = fmaf(-lr, fmaf(weight_decay, y, q), z)
    //   x    = fmaf(c_t, z, (1 - c_t) * x)
    void (*sf_adamw)(float* z, float* x, float* v, const float* g, const float* y,
                     std::size_t n, const SfAdamWStep& s);
};

const Ops& scalar_ops();

// nullptr when the CPU lacks AVX2+FMA (or on non-x86 builds).
const Ops* avx2_ops();

// Active table: AVX2 when available, else scalar. SIEDD_KERNELS=scalar|avx2|auto
// overrides; force_variant(nullptr) restores automatic dispatch (test hook).
const Ops& active();
void force_variant(const Ops* ops);

}  // namespace siedd::kernels
