#pragma once

#include <cstdint>
#include <vector>

#include "siedd/coords.hpp"
#include "siedd/nn.hpp"
#include "siedd/video_io.hpp"

// The assembled network: shared encoder f (positional encoding -> d-dim
// latent), per-group decoder trunks, and per-frame linear heads emitting
// p x p RGB patches.

namespace siedd::model {

struct ModelConfig {
    std::size_t dim = 512;              // latent width d; presets S/M/L = 512/768/1024
    std::size_t enc_hidden_layers = 1;
    std::size_t dec_hidden_layers = 3;
    float omega = 30.0f;
    std::size_t patch = 1;              // p; each coordinate predicts a p x p block
    coords::PosEncoding pos_encoding;

    std::size_t out_channels() const { return 3 * patch * patch; }
    void validate() const;
};

struct VideoMeta {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t n_frames = 0;
    double fps = 30.0;
};

struct GroupDecoder {
    nn::Mlp trunk;                       // dec_hidden_layers sine maps, d -> d
    nn::BatchLinearLayer heads;          // one linear head per frame, d -> 3p^2
    std::vector<std::uint32_t> frames;   // source frame index per head
};

struct SieddModel {
    ModelConfig config;
    VideoMeta meta;
    nn::Mlp encoder;
    std::vector<GroupDecoder> groups;
};

// Stage-1 shape: encoder plus a single GroupDecoder whose heads are the
// anchor frames. Deterministic per seed.
SieddModel build_model(const ModelConfig& cfg, const VideoMeta& meta,
                       const std::vector<std::uint32_t>& anchor_frames, std::uint64_t seed);

// Freshly initialized decoder for `frames`, seeded by (seed, stream); used
// when no stage-1 anchors exist (encoder transfer) and for init ablations.
GroupDecoder random_group_decoder(const ModelConfig& cfg,
                                  const std::vector<std::uint32_t>& frames,
                                  std::uint64_t seed, std::uint64_t stream);

// Contiguous frame blocks of size group_size (last may be smaller).
std::vector<std::vector<std::uint32_t>> partition_groups(std::size_t n_frames,
                                                         std::size_t group_size);

// Trunk copied from the stage-1 trunk; each head copied from the anchor head
// whose source frame is nearest (ties -> lower frame index).
GroupDecoder init_group_from_anchor(const SieddModel& stage1,
                                    const std::vector<std::uint32_t>& group_frames);

// gamma -> encoder. Rows are independent, so any row subset produces bits
// identical to the full grid (this is what makes latent caching and chunked
// decoding exact).
Tensor2D encode_latent(const SieddModel& model, const Tensor2D& coords);

// trunk -> heads on a precomputed latent; output is head-major:
// head h occupies rows [h*n, (h+1)*n).
Tensor2D decode_group_from_latent(const SieddModel& model, std::size_t group_index,
                                  const Tensor2D& latent);

// Full path gamma -> encoder -> trunk -> heads for raw coords [n x 2].
Tensor2D forward_group(const SieddModel& model, std::size_t group_index,
                       const Tensor2D& coords);

// Scatter head-major patch predictions over the full grid into frames,
// clamping to [0,1] (materialization boundary). predictions rows must cover
// grid.n_cells() per head in row-major cell order.
// Patch vector layout: entry (dy*p + dx)*3 + ch for pixel (dy, dx) channel ch.
std::vector<video::Frame> assemble_frames(const Tensor2D& predictions,
                                          const coords::CoordGrid& grid,
                                          std::size_t n_heads);

// Gather the same patch layout from a frame at the given cells; out_rows must
// hold cell_indices.size() * 3p^2 floats.
void gather_cells(const video::Frame& frame, const coords::CoordGrid& grid,
                  const std::uint32_t* cell_indices, std::size_t n_cells, float* out_rows);

std::uint64_t encoder_checksum(const SieddModel& model);

}  // namespace siedd::model
