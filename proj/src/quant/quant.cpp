#include "siedd/quant.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "siedd/errors.hpp"

namespace siedd::quant {

namespace {

// Generalized l_p soft threshold: shrinks x toward zero by beta^-1 |x|^(p-1).
// For p < 1 the threshold grows as x -> 0, so small residuals collapse to
// zero while genuine outliers pass through nearly untouched.
float shrink_lp(float x, float beta, float p) {
    const float ax = std::fabs(x);
    if (ax < 1e-12f) return 0.0f;
    const float thr = std::pow(ax, p - 1.0f) / beta;
    const float mag = ax - thr;
    return mag > 0.0f ? std::copysign(mag, x) : 0.0f;
}

std::uint16_t encode_one(float w, float zero, float scale, std::uint16_t max_code) {
    const float q = std::round((w - zero) / scale);
    if (!(q > 0.0f)) return 0;  // also catches NaN
    if (q >= static_cast<float>(max_code)) return max_code;
    return static_cast<std::uint16_t>(q);
}

struct GroupView {
    std::size_t begin;
    std::size_t end;  // exclusive, within the unpadded element count
    std::size_t count() const { return end - begin; }
};

}  // namespace

void QuantConfig::validate() const {
    if (bits < 2 || bits > 8)
        throw ConfigError("quantization bits must be in [2, 8], got " + std::to_string(bits));
    if (group_size == 0) throw ConfigError("quantization group size must be >= 1");
    if (!(hqq_p > 0.0f && hqq_p <= 1.0f))
        throw ConfigError("hqq_p must be in (0, 1]");
    if (!(hqq_beta > 0.0f)) throw ConfigError("hqq_beta must be positive");
    if (!(hqq_kappa >= 1.0f)) throw ConfigError("hqq_kappa must be >= 1");
}

void QuantizedTensor::validate() const {
    if (bits < 2 || bits > 8)
        throw FormatError("quantized tensor: bits " + std::to_string(bits) +
                          " outside [2, 8]");
    if (group_size == 0) throw FormatError("quantized tensor: zero group size");
    if (rows == 0 || cols == 0) throw FormatError("quantized tensor: empty shape");
    const std::size_t expect_packed = (size() * bits + 7) / 8;
    if (packed.size() != expect_packed)
        throw FormatError("quantized tensor: packed code buffer holds " +
                          std::to_string(packed.size()) + " bytes, expected " +
                          std::to_string(expect_packed));
    if (scales.size() != n_groups() || zeros.size() != n_groups())
        throw FormatError("quantized tensor: " + std::to_string(scales.size()) + "/" +
                          std::to_string(zeros.size()) + " scale/zero entries for " +
                          std::to_string(n_groups()) + " groups");
    for (std::size_t g = 0; g < n_groups(); ++g)
        if (!std::isfinite(scales[g]) || !std::isfinite(zeros[g]))
            throw FormatError("quantized tensor: non-finite scale/zero in group " +
                              std::to_string(g));
}

std::vector<std::uint8_t> pack_codes(const std::vector<std::uint16_t>& codes,
                                     std::size_t bits) {
    if (bits < 2 || bits > 8) throw ConfigError("pack_codes: bits must be in [2, 8]");
    const std::uint16_t max_code = static_cast<std::uint16_t>((1u << bits) - 1);
    std::vector<std::uint8_t> out((codes.size() * bits + 7) / 8, 0);
    std::size_t bitpos = 0;
    for (const std::uint16_t c : codes) {
        if (c > max_code)
            throw ConfigError("pack_codes: code " + std::to_string(c) +
                              " does not fit in " + std::to_string(bits) + " bits");
        out[bitpos >> 3] |= static_cast<std::uint8_t>(c << (bitpos & 7));
        const std::size_t spill = (bitpos & 7) + bits;
        if (spill > 8)
            out[(bitpos >> 3) + 1] |= static_cast<std::uint8_t>(c >> (8 - (bitpos & 7)));
        bitpos += bits;
    }
    return out;
}

std::vector<std::uint16_t> unpack_codes(const std::vector<std::uint8_t>& packed,
                                        std::size_t n_codes, std::size_t bits) {
    if (bits < 2 || bits > 8) throw ConfigError("unpack_codes: bits must be in [2, 8]");
    const std::size_t expect = (n_codes * bits + 7) / 8;
    if (packed.size() != expect)
        throw FormatError("unpack_codes: " + std::to_string(packed.size()) +
                          " bytes for " + std::to_string(n_codes) + " " +
                          std::to_string(bits) + "-bit codes, expected " +
                          std::to_string(expect));
    const std::uint16_t mask = static_cast<std::uint16_t>((1u << bits) - 1);
    std::vector<std::uint16_t> codes(n_codes);
    std::size_t bitpos = 0;
    for (std::size_t i = 0; i < n_codes; ++i) {
        std::uint16_t v = static_cast<std::uint16_t>(packed[bitpos >> 3] >> (bitpos & 7));
        const std::size_t spill = (bitpos & 7) + bits;
        if (spill > 8)
            v = static_cast<std::uint16_t>(
                v | (packed[(bitpos >> 3) + 1] << (8 - (bitpos & 7))));
        codes[i] = v & mask;
        bitpos += bits;
    }
    return codes;
}

QuantizedTensor quantize_uniform(const Tensor2D& w, const QuantConfig& cfg) {
    cfg.validate();
    if (w.rows() == 0 || w.cols() == 0)
        throw ShapeError("quantize: empty tensor");

    const std::size_t n = w.size();
    const float* data = w.data();
    const std::uint16_t max_code = static_cast<std::uint16_t>((1u << cfg.bits) - 1);

    QuantizedTensor q;
    q.rows = w.rows();
    q.cols = w.cols();
    q.bits = cfg.bits;
    q.group_size = cfg.group_size;
    q.method = Method::Uniform;

    const std::size_t n_groups = (n + cfg.group_size - 1) / cfg.group_size;
    q.scales.resize(n_groups);
    q.zeros.resize(n_groups);
    std::vector<std::uint16_t> codes(n);

    for (std::size_t g = 0; g < n_groups; ++g) {
        const std::size_t begin = g * cfg.group_size;
        const std::size_t end = std::min(begin + cfg.group_size, n);
        float mn = data[begin], mx = data[begin];
        for (std::size_t i = begin + 1; i < end; ++i) {
            mn = std::min(mn, data[i]);
            mx = std::max(mx, data[i]);
        }
        if (mx == mn) {  // constant group: store exactly
            q.scales[g] = 1.0f;
            q.zeros[g] = mn;
            continue;  // codes already zero-initialized
        }
        const float scale = (mx - mn) / static_cast<float>(max_code);
        q.scales[g] = scale;
        q.zeros[g] = mn;
        for (std::size_t i = begin; i < end; ++i)
            codes[i] = encode_one(data[i], mn, scale, max_code);
    }
    q.packed = pack_codes(codes, cfg.bits);
    return q;
}

QuantizedTensor hqq_quantize(const Tensor2D& w, const QuantConfig& cfg) {
    QuantizedTensor q = quantize_uniform(w, cfg);
    q.method = Method::Hqq;
    if (cfg.hqq_iters == 0) return q;

    const std::size_t n = w.size();
    const float* data = w.data();
    const std::uint16_t max_code = static_cast<std::uint16_t>((1u << cfg.bits) - 1);
    const std::size_t n_groups = q.n_groups();

    std::vector<std::uint16_t> codes = unpack_codes(q.packed, n, cfg.bits);
    std::vector<float> zeros = q.zeros;

    // The spec'd tail padding (repeat the group's last value) enters only the
    // zero-point mean; replicated values carry the same code as the source
    // element, so padding is equivalent to weighting the last element.
    std::vector<GroupView> groups(n_groups);
    for (std::size_t g = 0; g < n_groups; ++g)
        groups[g] = {g * cfg.group_size, std::min((g + 1) * cfg.group_size, n)};

    auto objective = [&](const std::vector<std::uint16_t>& c,
                         const std::vector<float>& z) {
        double acc = 0.0;
        for (std::size_t g = 0; g < n_groups; ++g)
            for (std::size_t i = groups[g].begin; i < groups[g].end; ++i) {
                const double r = double(data[i]) - (double(z[g]) + double(q.scales[g]) *
                                                                       double(c[i]));
                acc += std::pow(std::fabs(r), double(cfg.hqq_p));
            }
        return acc / double(n);
    };

    std::vector<std::uint16_t> best_codes = codes;
    std::vector<float> best_zeros = zeros;
    double best_err = objective(codes, zeros);

    float beta = cfg.hqq_beta;
    for (std::size_t it = 0; it < cfg.hqq_iters; ++it) {
        for (std::size_t g = 0; g < n_groups; ++g) {
            const float scale = q.scales[g];
            const auto& gv = groups[g];
            const std::size_t full = cfg.group_size;  // padded member count
            double zsum = 0.0;
            for (std::size_t i = gv.begin; i < gv.end; ++i) {
                const float recon = zeros[g] + scale * float(codes[i]);
                const float e = shrink_lp(data[i] - recon, beta, cfg.hqq_p);
                const double contrib = double(data[i]) - double(e) -
                                       double(scale) * double(codes[i]);
                // Tail padding repeats the group's final element.
                const std::size_t weight = (i + 1 == gv.end) ? full - gv.count() + 1 : 1;
                zsum += contrib * double(weight);
            }
            zeros[g] = static_cast<float>(zsum / double(full));
            for (std::size_t i = gv.begin; i < gv.end; ++i)
                codes[i] = encode_one(data[i], zeros[g], scale, max_code);
        }
        beta *= cfg.hqq_kappa;

        const double err = objective(codes, zeros);
        if (err < best_err) {
            best_err = err;
            best_codes = codes;
            best_zeros = zeros;
        } else {
            break;  // degrading: keep the best iterate seen
        }
    }

    q.packed = pack_codes(best_codes, cfg.bits);
    q.zeros = std::move(best_zeros);
    return q;
}

QuantizedTensor quantize(const Tensor2D& w, const QuantConfig& cfg) {
    return cfg.method == Method::Hqq ? hqq_quantize(w, cfg) : quantize_uniform(w, cfg);
}

Tensor2D dequantize(const QuantizedTensor& q) {
    q.validate();
    const std::vector<std::uint16_t> codes = unpack_codes(q.packed, q.size(), q.bits);
    Tensor2D out(q.rows, q.cols);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        const std::size_t g = i / q.group_size;
        out.data()[i] = q.zeros[g] + q.scales[g] * float(codes[i]);
    }
    return out;
}

double robust_error(const Tensor2D& w, const QuantizedTensor& q, float p) {
    if (w.rows() != q.rows || w.cols() != q.cols)
        throw ShapeError("robust_error: tensor/quantized shapes differ");
    const Tensor2D recon = dequantize(q);
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
        acc += std::pow(std::fabs(double(w.data()[i]) - double(recon.data()[i])),
                        double(p));
    return acc / double(w.size());
}

std::vector<QuantizedGroup> quantize_model(const model::SieddModel& m,
                                           const QuantConfig& cfg) {
    cfg.validate();
    std::vector<QuantizedGroup> payloads(m.groups.size());
    for (std::size_t g = 0; g < m.groups.size(); ++g) {
        const auto& trunk = m.groups[g].trunk;
        payloads[g].trunk_weights.reserve(trunk.layers.size());
        for (const auto& layer : trunk.layers)
            payloads[g].trunk_weights.push_back(quantize(layer.w, cfg));
    }
    return payloads;
}

model::SieddModel dequantize_model(const model::SieddModel& m,
                                   const std::vector<QuantizedGroup>& payloads) {
    if (payloads.size() != m.groups.size())
        throw ShapeError("dequantize_model: " + std::to_string(payloads.size()) +
                         " payloads for " + std::to_string(m.groups.size()) + " groups");
    model::SieddModel out = m;
    for (std::size_t g = 0; g < out.groups.size(); ++g) {
        auto& trunk = out.groups[g].trunk;
        const auto& pay = payloads[g].trunk_weights;
        if (pay.size() != trunk.layers.size())
            throw ShapeError("dequantize_model: group " + std::to_string(g) + " has " +
                             std::to_string(pay.size()) + " payload tensors for " +
                             std::to_string(trunk.layers.size()) + " trunk layers");
        for (std::size_t l = 0; l < trunk.layers.size(); ++l) {
            Tensor2D w = dequantize(pay[l]);
            if (w.rows() != trunk.layers[l].w.rows() || w.cols() != trunk.layers[l].w.cols())
                throw ShapeError("dequantize_model: payload shape mismatch in group " +
                                 std::to_string(g) + " layer " + std::to_string(l));
            trunk.layers[l].w = std::move(w);
        }
    }
    return out;
}

}  // namespace siedd::quant
