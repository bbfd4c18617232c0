#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "siedd/model.hpp"
#include "siedd/quant.hpp"

// The on-disk .siedd container. Outer layer: magic "SIED", format version,
// CRC-32 of the uncompressed payload, payload length, then the payload inside
// an XZ stream. The payload is self-describing little-endian fields: video
// meta, model/train/quant configs, the full-precision encoder, and one
// section per frame group (quantized trunk codes under a canonical Huffman
// table, or raw weights when quantization is off; biases and heads always
// full precision). Full layout: docs/format.md.

namespace siedd::bitstream {

inline constexpr char kMagic[4] = {'S', 'I', 'E', 'D'};
inline constexpr std::uint16_t kFormatVersion = 1;

// Little-endian primitive serialization. Growable buffer.
class ByteWriter {
  public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    void bytes(const void* p, std::size_t n);
    void bytes_f32(const float* p, std::size_t n);  // raw floats, no prefix
    void f32_array(const float* p, std::size_t n);  // u32 length prefix + data

    std::size_t size() const { return buf_.size(); }
    const std::vector<std::uint8_t>& data() const { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

  private:
    std::vector<std::uint8_t> buf_;
};

// Bounds-checked reader over a byte span; any read past the end throws
// FormatError naming the requested field size.
class ByteReader {
  public:
    ByteReader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    void bytes(void* out, std::size_t n);
    void bytes_f32(float* out, std::size_t n);
    // u32 length prefix + data; max_len caps the claimed length before any
    // allocation happens (fuzz safety).
    std::vector<float> f32_array(std::size_t max_len);

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return n_ - pos_; }

  private:
    void need(std::size_t n) const;
    const std::uint8_t* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

// Reproducibility record carried in the header (decode never needs it).
struct TrainDigest {
    std::uint64_t seed = 0;
    std::uint32_t group_size = 0;
    std::uint32_t n_anchors = 0;
    std::uint64_t sample_count = 0;
    std::uint32_t stage1_iters = 0;
    std::uint32_t stage2_iters = 0;
    float lr = 0.0f;
};

struct StreamInfo {
    std::uint16_t version = 0;
    model::VideoMeta meta;
    model::ModelConfig config;
    TrainDigest train;
    bool quantized = false;
    quant::QuantConfig qcfg;  // meaningful when quantized
    std::size_t n_groups = 0;
    std::uint64_t file_bytes = 0;     // on-disk size (the BPP numerator / 8)
    std::uint64_t payload_bytes = 0;  // uncompressed payload size
    // Uncompressed payload section accounting.
    std::uint64_t header_bytes = 0;
    std::uint64_t encoder_bytes = 0;
    std::uint64_t groups_bytes = 0;
};

// Serializes the model. When `quantized`, trunk weights come from `payloads`
// (one QuantizedGroup per model group, Huffman-coded); otherwise trunks are
// written raw and `payloads` must be empty. Writes via a temporary file and
// renames, so a failed write never leaves a partial .siedd behind.
void write_file(const std::string& path, const model::SieddModel& m,
                const TrainDigest& train, bool quantized,
                const quant::QuantConfig& qcfg,
                const std::vector<quant::QuantizedGroup>& payloads);

struct LoadedStream {
    StreamInfo info;
    model::SieddModel model;  // trunks dequantized, ready for decoding
};

LoadedStream read_file(const std::string& path);

// Header fields and section sizes only (still decompresses and checks the
// CRC, so damage is reported the same way as a full load).
StreamInfo inspect_file(const std::string& path);

}  // namespace siedd::bitstream
