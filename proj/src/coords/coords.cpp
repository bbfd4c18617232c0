#include "siedd/coords.hpp"

#include <cmath>
#include <numeric>

#include "siedd/errors.hpp"
#include "siedd/kernels.hpp"
#include "siedd/rng.hpp"

namespace siedd::coords {

CoordGrid make_grid(std::size_t height, std::size_t width, std::size_t patch) {
    if (height == 0 || width == 0)
        throw ConfigError("make_grid: zero frame dimension");
    if (patch == 0 || height % patch != 0 || width % patch != 0)
        throw ConfigError("make_grid: patch " + std::to_string(patch) +
                          " must divide " + std::to_string(height) + "x" + std::to_string(width));
    CoordGrid grid;
    grid.height = height;
    grid.width = width;
    grid.patch = patch;
    const std::size_t ny = grid.cells_y();
    const std::size_t nx = grid.cells_x();
    grid.coords = Tensor2D(ny * nx, 2);
    for (std::size_t cy = 0; cy < ny; ++cy) {
        const float y = static_cast<float>((2.0 * cy + 1.0) / ny - 1.0);
        float* row = grid.coords.row(cy * nx);
        for (std::size_t cx = 0; cx < nx; ++cx) {
            row[cx * 2 + 0] = static_cast<float>((2.0 * cx + 1.0) / nx - 1.0);
            row[cx * 2 + 1] = y;
        }
    }
    return grid;
}

Tensor2D pos_encode(const PosEncoding& enc, const Tensor2D& coords) {
    if (coords.cols() != 2)
        throw ShapeError("pos_encode: coords must have 2 columns, got " +
                         std::to_string(coords.cols()));
    if (enc.n_freqs > 19)
        throw ConfigError("pos_encode: L > 19 would push 2^k*pi*c past the sincos range");
    const std::size_t n = coords.rows();
    const std::size_t L = enc.n_freqs;
    Tensor2D out(n, enc.out_dim());
    const std::size_t base = enc.include_input ? 2 : 0;
    if (enc.include_input) {
        for (std::size_t i = 0; i < n; ++i) {
            out.row(i)[0] = coords.at(i, 0);
            out.row(i)[1] = coords.at(i, 1);
        }
    }
    if (L == 0) return out;

    const auto& ops = kernels::active();
    std::vector<float> arg(n), s(n), c(n);
    const float pi = 3.14159265358979323846f;
    for (std::size_t comp = 0; comp < 2; ++comp) {
        for (std::size_t k = 0; k < L; ++k) {
            const float freq = std::ldexp(pi, static_cast<int>(k));  // 2^k * pi, exact scaling
            for (std::size_t i = 0; i < n; ++i)
                arg[i] = freq * coords.at(i, comp);
            ops.sincos(arg.data(), n, s.data(), c.data());
            const std::size_t col = base + comp * 2 * L + 2 * k;
            for (std::size_t i = 0; i < n; ++i) {
                out.row(i)[col] = s[i];
                out.row(i)[col + 1] = c[i];
            }
        }
    }
    return out;
}

std::size_t default_sample_count(std::size_t height, std::size_t width) {
    const std::size_t c = height * width / 1024;
    return c == 0 ? 1 : c;
}

EpochSampler::EpochSampler(std::size_t n_points, std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size), seed_(seed) {
    if (n_points == 0)
        throw ConfigError("EpochSampler: n_points must be >= 1");
    if (batch_size == 0)
        throw ConfigError("EpochSampler: batch size C must be >= 1");
    perm_.resize(n_points);
    std::iota(perm_.begin(), perm_.end(), 0u);
    reshuffle();
}

void EpochSampler::reshuffle() {
    Rng rng(mix_seed(seed_, epoch_));
    rng.shuffle(perm_);
}

std::vector<std::uint32_t> EpochSampler::next_batch() {
    const std::size_t take = std::min(batch_size_, perm_.size() - cursor_);
    std::vector<std::uint32_t> batch(perm_.begin() + cursor_, perm_.begin() + cursor_ + take);
    cursor_ += take;
    if (cursor_ == perm_.size()) {
        cursor_ = 0;
        ++epoch_;
        reshuffle();
    }
    return batch;
}

}  // namespace siedd::coords
