#include "siedd/nn.hpp"

#include <cmath>
#include <cstring>

#include "siedd/errors.hpp"
#include "siedd/kernels.hpp"

namespace siedd::nn {

namespace {

// y[batch x out] = x[batch x in] * W^T + b
void affine_forward(const LinearLayer& layer, const Tensor2D& x, Tensor2D& y) {
    const auto& ops = kernels::active();
    ops.gemm_nt(y.data(), x.data(), layer.w.data(), x.rows(), layer.in_dim(), layer.out_dim());
    ops.add_bias(y.data(), layer.b.data(), y.rows(), y.cols());
}

}  // namespace

std::size_t Mlp::in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
std::size_t Mlp::out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
}

Mlp make_sine_stack(std::size_t in_dim, std::size_t dim, std::size_t n_layers, float omega) {
    if (in_dim == 0 || dim == 0 || n_layers == 0)
        throw ConfigError("sine stack needs in_dim, dim and n_layers all > 0");
    Mlp mlp;
    mlp.omega = omega;
    mlp.layers.reserve(n_layers);
    mlp.layers.emplace_back(dim, in_dim, true);
    for (std::size_t l = 1; l < n_layers; ++l)
        mlp.layers.emplace_back(dim, dim, true);
    return mlp;
}

Mlp make_mlp(const std::vector<std::size_t>& dims, float omega) {
    if (dims.size() < 2)
        throw ConfigError("mlp needs at least input and output dims");
    Mlp mlp;
    mlp.omega = omega;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        if (dims[l] == 0 || dims[l + 1] == 0)
            throw ConfigError("mlp layer dims must be > 0");
        const bool last = l + 2 == dims.size();
        mlp.layers.emplace_back(dims[l + 1], dims[l], !last);
    }
    return mlp;
}

void siren_init_layer(LinearLayer& layer, Rng& rng, float omega, bool first) {
    const std::size_t fan_in = layer.in_dim();
    if (fan_in == 0)
        throw ConfigError("siren_init: zero fan_in");
    const float bound = first
        ? 1.0f / static_cast<float>(fan_in)
        : std::sqrt(6.0f / static_cast<float>(fan_in)) / omega;
    for (std::size_t i = 0; i < layer.w.size(); ++i)
        layer.w.data()[i] = rng.uniform(-bound, bound);
    std::fill(layer.b.begin(), layer.b.end(), 0.0f);
}

void siren_init(Mlp& mlp, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t l = 0; l < mlp.layers.size(); ++l)
        siren_init_layer(mlp.layers[l], rng, mlp.omega, l == 0);
}

MlpGrads MlpGrads::zeros_like(const Mlp& mlp) {
    MlpGrads g;
    g.dw.reserve(mlp.layers.size());
    g.db.reserve(mlp.layers.size());
    for (const auto& l : mlp.layers) {
        g.dw.emplace_back(l.out_dim(), l.in_dim());
        g.db.emplace_back(l.out_dim(), 0.0f);
    }
    return g;
}

Tensor2D mlp_forward(const Mlp& mlp, const Tensor2D& x, GradTape* tape) {
    if (mlp.layers.empty())
        throw ConfigError("mlp_forward: empty network");
    if (x.cols() != mlp.in_dim())
        throw ShapeError("mlp_forward: input has " + std::to_string(x.cols()) +
                         " cols, network expects " + std::to_string(mlp.in_dim()));
    const std::size_t batch = x.rows();
    const auto& ops = kernels::active();

    if (tape) {
        tape->input = x;
        tape->outputs.clear();
        tape->preact_cos.clear();
        tape->outputs.reserve(mlp.layers.size());
        tape->preact_cos.reserve(mlp.layers.size());
    }

    const Tensor2D* cur = &x;
    Tensor2D holder;
    for (const auto& layer : mlp.layers) {
        Tensor2D u(batch, layer.out_dim());
        affine_forward(layer, *cur, u);
        Tensor2D act;
        if (layer.sine) {
            for (std::size_t i = 0; i < u.size(); ++i)
                u.data()[i] *= mlp.omega;
            act = Tensor2D(batch, layer.out_dim());
            if (tape) {
                Tensor2D cos_buf(batch, layer.out_dim());
                ops.sincos(u.data(), u.size(), act.data(), cos_buf.data());
                tape->preact_cos.push_back(std::move(cos_buf));
            } else {
                ops.sincos(u.data(), u.size(), act.data(), nullptr);
            }
        } else {
            if (tape) tape->preact_cos.emplace_back();
            act = std::move(u);
        }
        if (tape) {
            tape->outputs.push_back(std::move(act));
            cur = &tape->outputs.back();
        } else {
            holder = std::move(act);
            cur = &holder;
        }
    }
    return *cur;
}

Tensor2D mlp_backward(const Mlp& mlp, const GradTape& tape, const Tensor2D& d_out,
                      MlpGrads& grads) {
    const std::size_t n_layers = mlp.layers.size();
    if (tape.outputs.size() != n_layers || tape.preact_cos.size() != n_layers)
        throw StateError("mlp_backward: tape does not match network layer count");
    if (grads.dw.size() != n_layers)
        throw ShapeError("mlp_backward: gradient accumulator layer count mismatch");
    const std::size_t batch = tape.input.rows();
    require_shape(d_out, batch, mlp.out_dim(), "mlp_backward d_out");
    const auto& ops = kernels::active();

    Tensor2D d_cur = d_out;
    for (std::size_t li = n_layers; li-- > 0;) {
        const auto& layer = mlp.layers[li];
        if (layer.sine) {
            const Tensor2D& cosbuf = tape.preact_cos[li];
            for (std::size_t i = 0; i < d_cur.size(); ++i)
                d_cur.data()[i] *= mlp.omega * cosbuf.data()[i];
        }
        const Tensor2D& input = li == 0 ? tape.input : tape.outputs[li - 1];
        // dW[out x in] += d_u^T[out x batch] * input[batch x in]
        ops.gemm_tn(grads.dw[li].data(), d_cur.data(), input.data(),
                    layer.out_dim(), batch, layer.in_dim());
        ops.colsum(grads.db[li].data(), d_cur.data(), batch, layer.out_dim());
        // d_in[batch x in] = d_u[batch x out] * W[out x in]
        Tensor2D d_prev(batch, layer.in_dim());
        ops.gemm_nn(d_prev.data(), d_cur.data(), layer.w.data(),
                    batch, layer.out_dim(), layer.in_dim());
        d_cur = std::move(d_prev);
    }
    return d_cur;
}

BatchLinearLayer make_batch_linear(std::size_t n_heads, std::size_t out_dim,
                                   std::size_t in_dim) {
    if (n_heads == 0 || out_dim == 0 || in_dim == 0)
        throw ConfigError("batch linear needs n_heads, out_dim, in_dim all > 0");
    BatchLinearLayer layer;
    layer.w.reserve(n_heads);
    layer.b.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
        layer.w.emplace_back(out_dim, in_dim);
        layer.b.emplace_back(out_dim, 0.0f);
    }
    return layer;
}

BatchLinearGrads BatchLinearGrads::zeros_like(const BatchLinearLayer& layer) {
    BatchLinearGrads g;
    for (std::size_t h = 0; h < layer.n_heads(); ++h) {
        g.dw.emplace_back(layer.out_dim(), layer.in_dim());
        g.db.emplace_back(layer.out_dim(), 0.0f);
    }
    return g;
}

Tensor2D batch_linear_forward(const BatchLinearLayer& layer, const Tensor2D& z) {
    if (layer.n_heads() == 0)
        throw ConfigError("batch_linear_forward: no heads");
    if (z.cols() != layer.in_dim())
        throw ShapeError("batch_linear_forward: input cols " + std::to_string(z.cols()) +
                         " != head in_dim " + std::to_string(layer.in_dim()));
    const std::size_t batch = z.rows();
    const std::size_t out = layer.out_dim();
    const auto& ops = kernels::active();
    Tensor2D result(layer.n_heads() * batch, out);
    for (std::size_t h = 0; h < layer.n_heads(); ++h) {
        float* block = result.data() + h * batch * out;
        ops.gemm_nt(block, z.data(), layer.w[h].data(), batch, layer.in_dim(), out);
        ops.add_bias(block, layer.b[h].data(), batch, out);
    }
    return result;
}

Tensor2D batch_linear_backward(const BatchLinearLayer& layer, const Tensor2D& z,
                               const Tensor2D& d_out, BatchLinearGrads& grads) {
    const std::size_t batch = z.rows();
    const std::size_t out = layer.out_dim();
    require_shape(d_out, layer.n_heads() * batch, out, "batch_linear_backward d_out");
    if (grads.dw.size() != layer.n_heads())
        throw ShapeError("batch_linear_backward: gradient accumulator head count mismatch");
    const auto& ops = kernels::active();
    Tensor2D d_z(batch, layer.in_dim());
    for (std::size_t h = 0; h < layer.n_heads(); ++h) {
        const float* block = d_out.data() + h * batch * out;
        ops.gemm_tn(grads.dw[h].data(), block, z.data(), out, batch, layer.in_dim());
        ops.colsum(grads.db[h].data(), block, batch, out);
        ops.gemm_nn(d_z.data(), block, layer.w[h].data(), batch, out, layer.in_dim());
    }
    return d_z;
}

std::uint64_t param_checksum(const Mlp& mlp) {
    std::uint64_t h = 14695981039346656037ULL;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& l : mlp.layers) {
        mix(l.w.data(), l.w.size() * sizeof(float));
        mix(l.b.data(), l.b.size() * sizeof(float));
    }
    return h;
}

}  // namespace siedd::nn
