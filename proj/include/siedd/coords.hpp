#pragma once

#include <cstdint>
#include <vector>

#include "siedd/tensor.hpp"

// Normalized coordinate grids, the frozen positional encoding, and the
// epoch-shuffled coordinate subsampler.

namespace siedd::coords {

// Patch-cell centers of an H x W frame, normalized to (-1, 1) per axis via
// c = (2i + 1)/n - 1. Row-major: y varies slowest, x fastest.
struct CoordGrid {
    std::size_t height = 0;      // pixels
    std::size_t width = 0;       // pixels
    std::size_t patch = 1;       // p; each cell covers p x p pixels
    Tensor2D coords;             // [(H/p)(W/p) x 2], columns (x, y)

    std::size_t cells_x() const { return width / patch; }
    std::size_t cells_y() const { return height / patch; }
    std::size_t n_cells() const { return cells_x() * cells_y(); }
};

CoordGrid make_grid(std::size_t height, std::size_t width, std::size_t patch);

// Deterministic NeRF-style frequency encoding: optionally the raw (x, y),
// then per component [sin(2^k pi c), cos(2^k pi c)] for k = 0..L-1.
struct PosEncoding {
    std::size_t n_freqs = 16;   // L
    bool include_input = true;

    std::size_t out_dim() const { return 4 * n_freqs + (include_input ? 2 : 0); }
};

Tensor2D pos_encode(const PosEncoding& enc, const Tensor2D& coords);

// C defaults to one coordinate per 1024 pixels, the strongest subsampling
// that still trains reliably.
std::size_t default_sample_count(std::size_t height, std::size_t width);

// Emits batches of size C that partition a fresh permutation of [0, n) each
// epoch; the reshuffle is derived deterministically from (seed, epoch).
class EpochSampler {
  public:
    EpochSampler(std::size_t n_points, std::size_t batch_size, std::uint64_t seed);

    // Next <= C indices; never empty. Crossing an epoch boundary reshuffles.
    std::vector<std::uint32_t> next_batch();

    std::size_t n_points() const { return perm_.size(); }
    std::size_t batch_size() const { return batch_size_; }
    std::uint64_t epoch() const { return epoch_; }

  private:
    void reshuffle();

    std::vector<std::uint32_t> perm_;
    std::size_t batch_size_;
    std::size_t cursor_ = 0;
    std::uint64_t seed_;
    std::uint64_t epoch_ = 0;
};

}  // namespace siedd::coords
