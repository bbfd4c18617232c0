#include "siedd/model.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#include "siedd/errors.hpp"
#include "siedd/rng.hpp"

namespace siedd::model {

void ModelConfig::validate() const {
    if (dim == 0) throw ConfigError("model dim must be positive");
    if (patch == 0) throw ConfigError("patch size must be positive");
    if (!(omega > 0.0f)) throw ConfigError("omega must be positive");
    if (dec_hidden_layers == 0)
        throw ConfigError("decoder needs at least one hidden layer");
    if (pos_encoding.n_freqs > 19)
        throw ConfigError("positional encoding L > 19 exceeds the sincos argument range");
    if (pos_encoding.out_dim() == 0)
        throw ConfigError("positional encoding emits zero features");
}

namespace {

// Init streams are fixed offsets from the user seed so that adding groups or
// changing worker counts never perturbs earlier draws.
constexpr std::uint64_t kEncoderStream = 0;
constexpr std::uint64_t kAnchorStream = 1;

nn::Mlp make_encoder(const ModelConfig& cfg) {
    return nn::make_sine_stack(cfg.pos_encoding.out_dim(), cfg.dim,
                               cfg.enc_hidden_layers + 1, cfg.omega);
}

void init_decoder(GroupDecoder& dec, const ModelConfig& cfg, Rng& rng) {
    // Every decoder layer sits mid-network (the raw input enters at the
    // encoder), so all of them use the general SIREN bound, never the
    // first-layer one.
    for (auto& layer : dec.trunk.layers)
        nn::siren_init_layer(layer, rng, cfg.omega, /*first=*/false);
    for (std::size_t h = 0; h < dec.heads.n_heads(); ++h) {
        nn::LinearLayer tmp(cfg.out_channels(), cfg.dim, /*sine_act=*/false);
        nn::siren_init_layer(tmp, rng, cfg.omega, /*first=*/false);
        dec.heads.w[h] = std::move(tmp.w);
        dec.heads.b[h] = std::move(tmp.b);
    }
}

GroupDecoder make_decoder_shell(const ModelConfig& cfg,
                                const std::vector<std::uint32_t>& frames) {
    if (frames.empty()) throw ConfigError("decoder group must cover at least one frame");
    GroupDecoder dec;
    dec.trunk = nn::make_sine_stack(cfg.dim, cfg.dim, cfg.dec_hidden_layers, cfg.omega);
    dec.heads = nn::make_batch_linear(frames.size(), cfg.out_channels(), cfg.dim);
    dec.frames = frames;
    return dec;
}

}  // namespace

SieddModel build_model(const ModelConfig& cfg, const VideoMeta& meta,
                       const std::vector<std::uint32_t>& anchor_frames,
                       std::uint64_t seed) {
    cfg.validate();
    if (meta.height == 0 || meta.width == 0 || meta.n_frames == 0)
        throw ConfigError("video metadata has zero extent");
    if (meta.height % cfg.patch != 0 || meta.width % cfg.patch != 0)
        throw ConfigError("frame size " + std::to_string(meta.height) + "x" +
                          std::to_string(meta.width) + " is not divisible by patch " +
                          std::to_string(cfg.patch));
    for (std::uint32_t f : anchor_frames)
        if (f >= meta.n_frames)
            throw ConfigError("anchor frame " + std::to_string(f) + " out of range (" +
                              std::to_string(meta.n_frames) + " frames)");

    SieddModel model;
    model.config = cfg;
    model.meta = meta;
    model.encoder = make_encoder(cfg);
    Rng enc_rng(mix_seed(seed, kEncoderStream));
    for (std::size_t i = 0; i < model.encoder.layers.size(); ++i)
        nn::siren_init_layer(model.encoder.layers[i], enc_rng, cfg.omega, /*first=*/i == 0);

    model.groups.push_back(random_group_decoder(cfg, anchor_frames, seed, kAnchorStream));
    return model;
}

GroupDecoder random_group_decoder(const ModelConfig& cfg,
                                  const std::vector<std::uint32_t>& frames,
                                  std::uint64_t seed, std::uint64_t stream) {
    GroupDecoder dec = make_decoder_shell(cfg, frames);
    Rng rng(mix_seed(seed, stream));
    init_decoder(dec, cfg, rng);
    return dec;
}

std::vector<std::vector<std::uint32_t>> partition_groups(std::size_t n_frames,
                                                         std::size_t group_size) {
    if (group_size == 0) throw ConfigError("group size must be positive");
    std::vector<std::vector<std::uint32_t>> groups;
    for (std::size_t start = 0; start < n_frames; start += group_size) {
        std::size_t end = std::min(n_frames, start + group_size);
        std::vector<std::uint32_t> frames(end - start);
        for (std::size_t i = 0; i < frames.size(); ++i)
            frames[i] = static_cast<std::uint32_t>(start + i);
        groups.push_back(std::move(frames));
    }
    return groups;
}

GroupDecoder init_group_from_anchor(const SieddModel& stage1,
                                    const std::vector<std::uint32_t>& group_frames) {
    if (stage1.groups.size() != 1)
        throw StateError("anchor transfer needs a stage-1 model with exactly one decoder, got " +
                         std::to_string(stage1.groups.size()));
    const GroupDecoder& anchor = stage1.groups[0];
    GroupDecoder dec = make_decoder_shell(stage1.config, group_frames);
    dec.trunk = anchor.trunk;
    for (std::size_t h = 0; h < group_frames.size(); ++h) {
        // Nearest anchor by |frame - anchor_frame|; ties break toward the
        // lower anchor frame index, which strict < gives us for free when
        // anchors are scanned in ascending frame order.
        std::size_t best = 0;
        std::uint64_t best_dist = UINT64_MAX;
        for (std::size_t a = 0; a < anchor.frames.size(); ++a) {
            std::uint64_t dist = anchor.frames[a] > group_frames[h]
                                     ? anchor.frames[a] - group_frames[h]
                                     : group_frames[h] - anchor.frames[a];
            if (dist < best_dist) {
                best_dist = dist;
                best = a;
            }
        }
        dec.heads.w[h] = anchor.heads.w[best];
        dec.heads.b[h] = anchor.heads.b[best];
    }
    return dec;
}

Tensor2D encode_latent(const SieddModel& model, const Tensor2D& coords) {
    Tensor2D encoded = coords::pos_encode(model.config.pos_encoding, coords);
    return nn::mlp_forward(model.encoder, encoded);
}

Tensor2D decode_group_from_latent(const SieddModel& model, std::size_t group_index,
                                  const Tensor2D& latent) {
    if (group_index >= model.groups.size())
        throw ConfigError("group index " + std::to_string(group_index) + " out of range (" +
                          std::to_string(model.groups.size()) + " groups)");
    const GroupDecoder& dec = model.groups[group_index];
    Tensor2D features = nn::mlp_forward(dec.trunk, latent);
    return nn::batch_linear_forward(dec.heads, features);
}

Tensor2D forward_group(const SieddModel& model, std::size_t group_index,
                       const Tensor2D& coords) {
    return decode_group_from_latent(model, group_index, encode_latent(model, coords));
}

std::vector<video::Frame> assemble_frames(const Tensor2D& predictions,
                                          const coords::CoordGrid& grid,
                                          std::size_t n_heads) {
    const std::size_t p = grid.patch;
    const std::size_t n_cells = grid.n_cells();
    const std::size_t out_ch = 3 * p * p;
    require_shape(predictions, n_heads * n_cells, out_ch, "assemble_frames predictions");

    std::vector<video::Frame> frames;
    frames.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
        video::Frame frame(grid.height, grid.width);
        for (std::size_t cy = 0; cy < grid.cells_y(); ++cy) {
            for (std::size_t cx = 0; cx < grid.cells_x(); ++cx) {
                const float* pred = predictions.row(h * n_cells + cy * grid.cells_x() + cx);
                for (std::size_t dy = 0; dy < p; ++dy) {
                    float* px = frame.pixel(cy * p + dy, cx * p);
                    for (std::size_t k = 0; k < 3 * p; ++k) {
                        float v = pred[dy * 3 * p + k];
                        px[k] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                    }
                }
            }
        }
        frames.push_back(std::move(frame));
    }
    return frames;
}

void gather_cells(const video::Frame& frame, const coords::CoordGrid& grid,
                  const std::uint32_t* cell_indices, std::size_t n_cells, float* out_rows) {
    if (frame.height != grid.height || frame.width != grid.width)
        throw ShapeError("gather_cells frame " + std::to_string(frame.height) + "x" +
                         std::to_string(frame.width) + " does not match grid " +
                         std::to_string(grid.height) + "x" + std::to_string(grid.width));
    const std::size_t p = grid.patch;
    for (std::size_t i = 0; i < n_cells; ++i) {
        std::uint32_t cell = cell_indices[i];
        std::size_t cy = cell / grid.cells_x();
        std::size_t cx = cell % grid.cells_x();
        float* out = out_rows + i * 3 * p * p;
        for (std::size_t dy = 0; dy < p; ++dy) {
            const float* px = frame.pixel(cy * p + dy, cx * p);
            std::copy(px, px + 3 * p, out + dy * 3 * p);
        }
    }
}

std::uint64_t encoder_checksum(const SieddModel& model) {
    return nn::param_checksum(model.encoder);
}

}  // namespace siedd::model
