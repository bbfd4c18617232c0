#pragma once

#include <cstdint>
#include <vector>

#include "siedd/model.hpp"
#include "siedd/tensor.hpp"

// Post-training weight quantization: group-wise uniform round-to-nearest and
// a half-quadratic zero-point refinement (generalized l_p shrinkage on the
// residual alternating with per-group zero re-estimation). Decoder trunk
// weights only; the encoder, all biases and the per-frame heads stay full
// precision.

namespace siedd::quant {

enum class Method : std::uint8_t { Uniform = 0, Hqq = 1 };

struct QuantConfig {
    std::size_t bits = 6;        // codes occupy [0, 2^bits - 1]
    std::size_t group_size = 64; // contiguous weights per scale/zero pair
    Method method = Method::Hqq;
    std::size_t hqq_iters = 20;
    float hqq_p = 0.7f;          // shrinkage norm exponent, (0, 1]
    float hqq_beta = 10.0f;      // initial penalty weight of the splitting
    float hqq_kappa = 1.01f;     // beta growth per iteration

    void validate() const;
};

// Group g covers flattened row-major elements [g*group_size, (g+1)*group_size);
// the last group may be short. Reconstruction: w[i] = zeros[g] + scales[g]*code[i].
struct QuantizedTensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t bits = 0;
    std::size_t group_size = 0;
    Method method = Method::Uniform;
    std::vector<std::uint8_t> packed;  // rows*cols codes, `bits` each, LSB-first
    std::vector<float> scales;         // one per group
    std::vector<float> zeros;

    std::size_t size() const { return rows * cols; }
    std::size_t n_groups() const {
        return group_size == 0 ? 0 : (size() + group_size - 1) / group_size;
    }
    // Structural integrity (shape/buffer-length/field-range consistency);
    // throws FormatError so corrupted streams surface as format damage.
    void validate() const;
};

// LSB-first bit packing: code i occupies bit positions [i*bits, (i+1)*bits)
// of the byte stream; unused high bits of the final byte are zero.
std::vector<std::uint8_t> pack_codes(const std::vector<std::uint16_t>& codes,
                                     std::size_t bits);
std::vector<std::uint16_t> unpack_codes(const std::vector<std::uint8_t>& packed,
                                        std::size_t n_codes, std::size_t bits);

// Per group: scale = (max-min)/(2^bits-1), zero = min, codes round-to-nearest
// clamped. A constant group stores scale 1 / all-zero codes and is exact.
QuantizedTensor quantize_uniform(const Tensor2D& w, const QuantConfig& cfg);

// Starts from the uniform solution, then alternates hqq_iters times:
//   e    <- shrink_lp(w - dequant)        (generalized soft threshold, p<1
//                                          keeps outliers in the residual)
//   zero <- mean over group of (w - e - scale*code)
//   code <- round((w - zero)/scale) clamped
// Scales stay fixed. Keeps the best iterate under the robust objective
// mean(|w - dequant|^p) and stops early once it degrades, so the result is
// never worse than the uniform initialization.
QuantizedTensor hqq_quantize(const Tensor2D& w, const QuantConfig& cfg);

// Dispatches on cfg.method.
QuantizedTensor quantize(const Tensor2D& w, const QuantConfig& cfg);

Tensor2D dequantize(const QuantizedTensor& q);

// mean(|w - dequantize(q)|^p); the objective the refinement descends.
double robust_error(const Tensor2D& w, const QuantizedTensor& q, float p);

// One payload per group decoder: its trunk weight matrices in layer order.
struct QuantizedGroup {
    std::vector<QuantizedTensor> trunk_weights;
};

std::vector<QuantizedGroup> quantize_model(const model::SieddModel& m,
                                           const QuantConfig& cfg);

// Copy of `m` with trunk weights replaced by their dequantized values;
// everything else (encoder, biases, heads) is carried over bit-identically.
// This is exactly what a decoder reconstructs from the stored payloads.
model::SieddModel dequantize_model(const model::SieddModel& m,
                                   const std::vector<QuantizedGroup>& payloads);

}  // namespace siedd::quant
