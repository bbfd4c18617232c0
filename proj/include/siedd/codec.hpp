#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include "siedd/bitstream.hpp"
#include "siedd/metrics.hpp"
#include "siedd/model.hpp"
#include "siedd/quant.hpp"
#include "siedd/trainer.hpp"
#include "siedd/video_io.hpp"

// End-to-end orchestration: encode drives stage 1 -> stage 2 -> quantize ->
// serialize and reports rate/distortion; decode rebuilds frames from a
// .siedd stream at any patch-aligned resolution.

namespace siedd::codec {

struct EncodeConfig {
    model::ModelConfig model;
    train::TrainConfig train;
    quant::QuantConfig quant;
    bool quantize = true;
    // Also measure quality before quantization (slower: one extra decode).
    bool report_prequant = false;
    // C = max(1, H*W/sample_divisor) when train.sample_count is 0 and this is
    // nonzero; presets use it to scale sampling with the frame size.
    std::size_t sample_divisor = 0;
    // Donor .siedd whose encoder is reused frozen; stage 1 is skipped and
    // group decoders start from fresh per-group SIREN draws. The donor also
    // fixes the model shape (its encoder dictates dim/encoding/patch).
    std::string encoder_init;
    // Retain the trained networks in the result (for re-quantization studies
    // or direct decoding without a file round trip).
    bool keep_models = false;
};

// "S" | "M" | "L" (dim 512/768/1024, production schedule) or "toy" (dim 128,
// L=8, 4-frame groups, 2000+2000 iterations, 1/64 sampling; sized so a full
// encode runs in minutes on one core). Unknown names throw ConfigError.
EncodeConfig preset_config(const std::string& name);

struct EncodeResult {
    metrics::RdReport report;           // quality of the shipped (quantized) file
    metrics::RdReport prequant_report;  // filled when report_prequant is set
    bitstream::StreamInfo info;
    // Frozen-encoder invariant witness: the encoder parameter checksum, taken
    // when the encoder was frozen and re-verified after stage 2.
    std::uint64_t encoder_checksum = 0;
    // Filled when cfg.keep_models is set. trained holds the full-precision
    // networks; shipped holds what a decoder reconstructs from the file
    // (identical to trained when quantization is off).
    std::optional<model::SieddModel> trained_model;
    std::optional<model::SieddModel> shipped_model;
};

// Fits `video`, writes `out_file`, and evaluates the written model against
// the source. Any stage failure is rethrown with the stage name prefixed and
// never leaves a partial file. report.encode_seconds covers load-to-serialize
// (evaluation excluded); report.decode_fps comes from the evaluation decode.
EncodeResult encode_video(const video::VideoFrames& video, const EncodeConfig& cfg,
                          const std::string& out_file);

// PNG-directory front end: load_frames + encode_video.
EncodeResult encode(const std::string& frames_dir, const EncodeConfig& cfg,
                    const std::string& out_file);

struct DecodeOptions {
    // Output resolution; 0,0 means the encoded resolution. Must be set (or
    // unset) together and be divisible by the stream's patch size.
    std::size_t height = 0;
    std::size_t width = 0;
    // Inclusive frame range; last clamps to N-1 by default.
    std::size_t first_frame = 0;
    std::size_t last_frame = std::numeric_limits<std::size_t>::max();
    std::size_t workers = 1;  // groups decode in parallel
    // Coordinate chunks per group; 0 = 8, or 32 above 8M output pixels. Any
    // chunking is bitwise-identical (rows are independent).
    std::size_t chunks = 0;
};

struct DecodeResult {
    video::VideoFrames video;  // frames in source order, fps from the stream
    double seconds = 0.0;      // forward + frame assembly (grid setup and
                               // PNG writing excluded; see docs/metrics.md)
    double decode_fps = 0.0;   // frames / seconds
};

// Decode an in-memory model (must carry trained groups).
DecodeResult decode_model(const model::SieddModel& m, const DecodeOptions& opt);

// read_file + decode_model.
DecodeResult decode(const std::string& file, const DecodeOptions& opt);

// Human-readable header dump: dims, configs, per-section sizes, bpp (the
// same number metrics::bpp yields for this file). Format errors pass through.
std::string info_text(const std::string& file);

}  // namespace siedd::codec
