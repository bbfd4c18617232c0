#pragma once

#include <cstdint>
#include <vector>

#include "siedd/rng.hpp"
#include "siedd/tensor.hpp"

// Minimal dense-MLP engine: sine activations, SIREN init, reverse-mode
// gradients via a per-pass tape, and batched per-head last layers. Weights
// are stored [out_dim x in_dim] so the forward pass is a gemm_nt (rows of W
// are contiguous per output unit) and both backward products stay contiguous.

namespace siedd::nn {

struct LinearLayer {
    Tensor2D w;            // [out_dim x in_dim]
    std::vector<float> b;  // out_dim
    bool sine;             // apply sin(omega * (Wx + b)) after the affine map

    LinearLayer(std::size_t out_dim, std::size_t in_dim, bool sine_act)
        : w(out_dim, in_dim), b(out_dim, 0.0f), sine(sine_act) {}

    std::size_t in_dim() const { return w.cols(); }
    std::size_t out_dim() const { return w.rows(); }
};

struct Mlp {
    std::vector<LinearLayer> layers;
    float omega = 30.0f;

    std::size_t in_dim() const;
    std::size_t out_dim() const;
    std::size_t param_count() const;
};

// n_layers affine maps, all sine-activated: in_dim -> dim, then dim -> dim.
// Used for the encoder (output stays sine: it is a hidden layer of the
// composite network) and the decoder trunk.
Mlp make_sine_stack(std::size_t in_dim, std::size_t dim, std::size_t n_layers, float omega);

// General stack for tests/tools: dims = {in, h1, ..., out}; hidden layers
// sine, final layer linear (the standard complete-MLP shape).
Mlp make_mlp(const std::vector<std::size_t>& dims, float omega);

// SIREN scheme: first layer U(+-1/in_dim), subsequent layers
// U(+-sqrt(6/fan_in)/omega), biases zero. Deterministic per seed.
void siren_init(Mlp& mlp, std::uint64_t seed);
// Initialize one layer drawing from an existing stream; `first` selects the
// first-layer bound. Exposed so model assembly can share one seed stream.
void siren_init_layer(LinearLayer& layer, Rng& rng, float omega, bool first);

// Forward activations cached for the backward pass. For sine layers the
// cosine of the scaled preactivation is kept instead of the preactivation
// itself (it is exactly what the derivative needs).
struct GradTape {
    Tensor2D input;                  // batch x in_dim, copy of the forward input
    std::vector<Tensor2D> outputs;   // per layer: batch x out_dim activation
    std::vector<Tensor2D> preact_cos;  // per sine layer: cos(omega*u); empty for linear
};

struct MlpGrads {
    std::vector<Tensor2D> dw;               // mirror layer weight shapes
    std::vector<std::vector<float>> db;     // mirror biases

    static MlpGrads zeros_like(const Mlp& mlp);
};

// y = mlp(x); if tape is non-null it is filled for a subsequent backward.
Tensor2D mlp_forward(const Mlp& mlp, const Tensor2D& x, GradTape* tape = nullptr);

// Accumulates parameter gradients into `grads` and returns dL/dx.
// d_out must match the forward output shape of the taped pass.
Tensor2D mlp_backward(const Mlp& mlp, const GradTape& tape, const Tensor2D& d_out,
                      MlpGrads& grads);

// Per-frame last layers: n_heads independent affine maps sharing the input.
struct BatchLinearLayer {
    std::vector<Tensor2D> w;             // per head [out_dim x in_dim]
    std::vector<std::vector<float>> b;   // per head out_dim

    std::size_t n_heads() const { return w.size(); }
    std::size_t in_dim() const { return w.empty() ? 0 : w.front().cols(); }
    std::size_t out_dim() const { return w.empty() ? 0 : w.front().rows(); }
};

BatchLinearLayer make_batch_linear(std::size_t n_heads, std::size_t out_dim,
                                   std::size_t in_dim);

struct BatchLinearGrads {
    std::vector<Tensor2D> dw;
    std::vector<std::vector<float>> db;

    static BatchLinearGrads zeros_like(const BatchLinearLayer& layer);
};

// Output rows are head-major: head h occupies rows [h*batch, (h+1)*batch).
// Each head's block is bit-identical to a standalone single-head forward.
Tensor2D batch_linear_forward(const BatchLinearLayer& layer, const Tensor2D& z);

// Accumulates per-head gradients and returns dL/dz (summed over heads in
// head order).
Tensor2D batch_linear_backward(const BatchLinearLayer& layer, const Tensor2D& z,
                               const Tensor2D& d_out, BatchLinearGrads& grads);

// FNV-1a over the raw parameter bytes in layer order; used for the
// frozen-encoder invariant.
std::uint64_t param_checksum(const Mlp& mlp);

}  // namespace siedd::nn
