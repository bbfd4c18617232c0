#include "siedd/bitstream.hpp"

#include <lzma.h>
#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "siedd/errors.hpp"
#include "siedd/huffman.hpp"

namespace siedd::bitstream {

namespace {

// Caps on header-claimed sizes, applied before any allocation so a corrupt
// length field cannot balloon memory.
constexpr std::size_t kMaxDim = 1 << 16;
constexpr std::size_t kMaxLayers = 64;
constexpr std::size_t kMaxFrames = 1 << 20;
constexpr std::size_t kMaxExtent = 1 << 16;  // height/width
constexpr std::uint64_t kMaxPayload = 1ULL << 33;
constexpr std::uint32_t kXzPreset = 6;

[[noreturn]] void truncated(std::size_t want, std::size_t have) {
    throw FormatError("truncated stream: needs " + std::to_string(want) +
                      " more bytes, has " + std::to_string(have));
}

std::uint32_t crc_of(const std::vector<std::uint8_t>& data) {
    uLong crc = crc32(0L, Z_NULL, 0);
    std::size_t done = 0;
    while (done < data.size()) {
        const std::size_t chunk = std::min<std::size_t>(data.size() - done, 1u << 30);
        crc = crc32(crc, data.data() + done, static_cast<uInt>(chunk));
        done += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> xz_compress(const std::vector<std::uint8_t>& in) {
    const std::size_t bound = lzma_stream_buffer_bound(in.size());
    std::vector<std::uint8_t> out(bound);
    std::size_t out_pos = 0;
    const lzma_ret r =
        lzma_easy_buffer_encode(kXzPreset, LZMA_CHECK_CRC32, nullptr, in.data(),
                                in.size(), out.data(), &out_pos, bound);
    if (r != LZMA_OK)
        throw StateError("xz compression failed (liblzma code " +
                         std::to_string(static_cast<int>(r)) + ")");
    out.resize(out_pos);
    return out;
}

std::vector<std::uint8_t> xz_decompress(const std::uint8_t* p, std::size_t n,
                                        std::size_t expect) {
    std::vector<std::uint8_t> out(expect);
    std::uint64_t memlimit = UINT64_MAX;
    std::size_t in_pos = 0, out_pos = 0;
    const lzma_ret r = lzma_stream_buffer_decode(&memlimit, 0, nullptr, p, &in_pos, n,
                                                 out.data(), &out_pos, expect);
    if (r != LZMA_OK)
        throw FormatError("corrupt container: xz decode failed (liblzma code " +
                          std::to_string(static_cast<int>(r)) + ")");
    if (out_pos != expect)
        throw FormatError("corrupt container: payload decompressed to " +
                          std::to_string(out_pos) + " bytes, header claims " +
                          std::to_string(expect));
    if (in_pos != n)
        throw FormatError("corrupt container: " + std::to_string(n - in_pos) +
                          " trailing bytes after the xz stream");
    return out;
}

void write_tensor(ByteWriter& w, const Tensor2D& t) {
    w.u32(static_cast<std::uint32_t>(t.rows()));
    w.u32(static_cast<std::uint32_t>(t.cols()));
    w.bytes_f32(t.data(), t.size());
}

Tensor2D read_tensor(ByteReader& r, std::size_t rows, std::size_t cols,
                     const char* what) {
    const std::uint32_t rr = r.u32();
    const std::uint32_t cc = r.u32();
    if (rr != rows || cc != cols)
        throw FormatError(std::string(what) + ": stored shape " + std::to_string(rr) +
                          "x" + std::to_string(cc) + ", expected " +
                          std::to_string(rows) + "x" + std::to_string(cols));
    Tensor2D t(rows, cols);
    r.bytes_f32(t.data(), t.size());
    return t;
}

std::vector<float> read_array(ByteReader& r, std::size_t expect, const char* what) {
    const auto v = r.f32_array(expect);
    if (v.size() != expect)
        throw FormatError(std::string(what) + ": stored " + std::to_string(v.size()) +
                          " values, expected " + std::to_string(expect));
    return v;
}

void write_linear(ByteWriter& w, const nn::LinearLayer& layer) {
    write_tensor(w, layer.w);
    w.f32_array(layer.b.data(), layer.b.size());
}

void read_linear(ByteReader& r, nn::LinearLayer& layer, const char* what) {
    layer.w = read_tensor(r, layer.out_dim(), layer.in_dim(), what);
    layer.b = read_array(r, layer.out_dim(), what);
}

struct ParsedStream {
    StreamInfo info;
    model::SieddModel model;
};

void serialize_payload(ByteWriter& w, const model::SieddModel& m,
                       const TrainDigest& train, bool quantized,
                       const quant::QuantConfig& qcfg,
                       const std::vector<quant::QuantizedGroup>& payloads) {
    // --- meta + configs ---
    w.u32(static_cast<std::uint32_t>(m.meta.height));
    w.u32(static_cast<std::uint32_t>(m.meta.width));
    w.u32(static_cast<std::uint32_t>(m.meta.n_frames));
    w.f64(m.meta.fps);
    w.u32(static_cast<std::uint32_t>(m.config.patch));

    w.u32(static_cast<std::uint32_t>(m.config.dim));
    w.u32(static_cast<std::uint32_t>(m.config.enc_hidden_layers));
    w.u32(static_cast<std::uint32_t>(m.config.dec_hidden_layers));
    w.f32(m.config.omega);
    w.u32(static_cast<std::uint32_t>(m.config.pos_encoding.n_freqs));
    w.u8(m.config.pos_encoding.include_input ? 1 : 0);

    w.u64(train.seed);
    w.u32(train.group_size);
    w.u32(train.n_anchors);
    w.u64(train.sample_count);
    w.u32(train.stage1_iters);
    w.u32(train.stage2_iters);
    w.f32(train.lr);

    w.u8(quantized ? 1 : 0);
    if (quantized) {
        w.u8(static_cast<std::uint8_t>(qcfg.method));
        w.u8(static_cast<std::uint8_t>(qcfg.bits));
        w.u32(static_cast<std::uint32_t>(qcfg.group_size));
        w.u32(static_cast<std::uint32_t>(qcfg.hqq_iters));
        w.f32(qcfg.hqq_p);
        w.f32(qcfg.hqq_beta);
        w.f32(qcfg.hqq_kappa);
    }

    // --- encoder (always full precision) ---
    w.u32(static_cast<std::uint32_t>(m.encoder.layers.size()));
    for (const auto& layer : m.encoder.layers) write_linear(w, layer);

    // --- groups ---
    w.u32(static_cast<std::uint32_t>(m.groups.size()));
    for (std::size_t g = 0; g < m.groups.size(); ++g) {
        const auto& dec = m.groups[g];
        w.u32(static_cast<std::uint32_t>(dec.frames.size()));
        for (const std::uint32_t f : dec.frames) w.u32(f);
        w.u32(static_cast<std::uint32_t>(dec.trunk.layers.size()));

        if (!quantized) {
            for (const auto& layer : dec.trunk.layers) write_linear(w, layer);
        } else {
            const auto& pay = payloads[g].trunk_weights;
            if (pay.size() != dec.trunk.layers.size())
                throw ShapeError("write_file: group " + std::to_string(g) + " has " +
                                 std::to_string(pay.size()) + " quantized tensors for " +
                                 std::to_string(dec.trunk.layers.size()) +
                                 " trunk layers");
            for (const auto& qt : pay)
                if (qt.bits != qcfg.bits || qt.group_size != qcfg.group_size)
                    throw StateError("write_file: quantized tensor settings differ "
                                     "from the stream's quant config");
            for (const auto& layer : dec.trunk.layers)
                w.f32_array(layer.b.data(), layer.b.size());
            for (const auto& qt : pay) {
                w.u32(static_cast<std::uint32_t>(qt.rows));
                w.u32(static_cast<std::uint32_t>(qt.cols));
                w.f32_array(qt.scales.data(), qt.scales.size());
                w.f32_array(qt.zeros.data(), qt.zeros.size());
            }
            // One canonical table per group over every trunk layer's codes.
            std::vector<std::uint16_t> symbols;
            for (const auto& qt : pay) {
                const auto codes = quant::unpack_codes(qt.packed, qt.size(), qt.bits);
                symbols.insert(symbols.end(), codes.begin(), codes.end());
            }
            std::vector<std::uint64_t> freqs(1ULL << qcfg.bits, 0);
            for (const std::uint16_t s : symbols) ++freqs[s];
            const auto table = huffman::build_table(freqs);
            const auto enc = huffman::encode(table, symbols.data(), symbols.size());

            w.u16(static_cast<std::uint16_t>(table.lengths.size()));
            w.bytes(table.lengths.data(), table.lengths.size());
            w.u64(enc.n_bits);
            w.bytes(enc.bytes.data(), enc.bytes.size());
        }

        for (std::size_t h = 0; h < dec.heads.n_heads(); ++h) {
            write_tensor(w, dec.heads.w[h]);
            w.f32_array(dec.heads.b[h].data(), dec.heads.b[h].size());
        }
    }
}

ParsedStream parse_payload(const std::vector<std::uint8_t>& payload, bool want_model) {
    ByteReader r(payload.data(), payload.size());
    ParsedStream out;
    StreamInfo& info = out.info;

    // --- meta + configs ---
    info.meta.height = r.u32();
    info.meta.width = r.u32();
    info.meta.n_frames = r.u32();
    info.meta.fps = r.f64();
    info.config.patch = r.u32();
    if (info.meta.height == 0 || info.meta.height > kMaxExtent ||
        info.meta.width == 0 || info.meta.width > kMaxExtent)
        throw FormatError("implausible frame size " + std::to_string(info.meta.height) +
                          "x" + std::to_string(info.meta.width));
    if (info.meta.n_frames == 0 || info.meta.n_frames > kMaxFrames)
        throw FormatError("implausible frame count " +
                          std::to_string(info.meta.n_frames));
    if (!(info.meta.fps > 0.0 && info.meta.fps <= 10000.0))
        throw FormatError("implausible fps");

    info.config.dim = r.u32();
    info.config.enc_hidden_layers = r.u32();
    info.config.dec_hidden_layers = r.u32();
    info.config.omega = r.f32();
    info.config.pos_encoding.n_freqs = r.u32();
    info.config.pos_encoding.include_input = r.u8() != 0;
    if (info.config.dim > kMaxDim || info.config.enc_hidden_layers > kMaxLayers ||
        info.config.dec_hidden_layers > kMaxLayers)
        throw FormatError("implausible model dimensions");
    try {
        info.config.validate();
        if (info.meta.height % info.config.patch != 0 ||
            info.meta.width % info.config.patch != 0)
            throw ConfigError("patch does not divide the frame size");
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid model config in stream: ") + e.what());
    }

    info.train.seed = r.u64();
    info.train.group_size = r.u32();
    info.train.n_anchors = r.u32();
    info.train.sample_count = r.u64();
    info.train.stage1_iters = r.u32();
    info.train.stage2_iters = r.u32();
    info.train.lr = r.f32();

    info.quantized = r.u8() != 0;
    if (info.quantized) {
        const std::uint8_t method = r.u8();
        if (method > 1) throw FormatError("unknown quantization method tag " +
                                          std::to_string(method));
        info.qcfg.method = static_cast<quant::Method>(method);
        info.qcfg.bits = r.u8();
        info.qcfg.group_size = r.u32();
        info.qcfg.hqq_iters = r.u32();
        info.qcfg.hqq_p = r.f32();
        info.qcfg.hqq_beta = r.f32();
        info.qcfg.hqq_kappa = r.f32();
        try {
            info.qcfg.validate();
        } catch (const ConfigError& e) {
            throw FormatError(std::string("invalid quant config in stream: ") + e.what());
        }
    }
    info.header_bytes = r.pos();

    // --- encoder ---
    const std::size_t dim = info.config.dim;
    const std::size_t enc_in = info.config.pos_encoding.out_dim();
    const std::uint32_t n_enc = r.u32();
    if (n_enc != info.config.enc_hidden_layers + 1)
        throw FormatError("encoder holds " + std::to_string(n_enc) +
                          " layers, config expects " +
                          std::to_string(info.config.enc_hidden_layers + 1));
    nn::Mlp encoder = nn::make_sine_stack(enc_in, dim, n_enc, info.config.omega);
    for (std::size_t l = 0; l < encoder.layers.size(); ++l)
        read_linear(r, encoder.layers[l], "encoder layer");
    info.encoder_bytes = r.pos() - info.header_bytes;

    // --- groups ---
    const std::size_t groups_start = r.pos();
    const std::uint32_t n_groups = r.u32();
    if (n_groups == 0 || n_groups > info.meta.n_frames)
        throw FormatError("implausible group count " + std::to_string(n_groups));
    info.n_groups = n_groups;

    std::vector<model::GroupDecoder> groups;
    groups.reserve(n_groups);
    for (std::uint32_t g = 0; g < n_groups; ++g) {
        model::GroupDecoder dec;
        const std::uint32_t nf = r.u32();
        if (nf == 0 || nf > info.meta.n_frames)
            throw FormatError("group " + std::to_string(g) + " claims " +
                              std::to_string(nf) + " frames");
        dec.frames.resize(nf);
        for (auto& f : dec.frames) {
            f = r.u32();
            if (f >= info.meta.n_frames)
                throw FormatError("group " + std::to_string(g) +
                                  " references frame " + std::to_string(f) +
                                  " outside [0, " + std::to_string(info.meta.n_frames) +
                                  ")");
        }

        const std::uint32_t n_trunk = r.u32();
        if (n_trunk != info.config.dec_hidden_layers)
            throw FormatError("group " + std::to_string(g) + " trunk holds " +
                              std::to_string(n_trunk) + " layers, config expects " +
                              std::to_string(info.config.dec_hidden_layers));
        dec.trunk = nn::make_sine_stack(dim, dim, n_trunk, info.config.omega);

        if (!info.quantized) {
            for (auto& layer : dec.trunk.layers)
                read_linear(r, layer, "trunk layer");
        } else {
            for (auto& layer : dec.trunk.layers)
                layer.b = read_array(r, dim, "trunk bias");

            std::vector<quant::QuantizedTensor> qts(n_trunk);
            std::size_t total_codes = 0;
            for (auto& qt : qts) {
                qt.bits = info.qcfg.bits;
                qt.group_size = info.qcfg.group_size;
                qt.method = info.qcfg.method;
                qt.rows = r.u32();
                qt.cols = r.u32();
                if (qt.rows != dim || qt.cols != dim)
                    throw FormatError("quantized trunk tensor claims shape " +
                                      std::to_string(qt.rows) + "x" +
                                      std::to_string(qt.cols) + ", expected " +
                                      std::to_string(dim) + "x" + std::to_string(dim));
                qt.scales = read_array(r, qt.n_groups(), "trunk scales");
                qt.zeros = read_array(r, qt.n_groups(), "trunk zeros");
                total_codes += qt.size();
            }

            const std::uint16_t alphabet = r.u16();
            if (alphabet != (1u << info.qcfg.bits))
                throw FormatError("huffman alphabet of " + std::to_string(alphabet) +
                                  " symbols does not match " +
                                  std::to_string(info.qcfg.bits) + "-bit codes");
            huffman::HuffmanTable table;
            table.lengths.resize(alphabet);
            r.bytes(table.lengths.data(), alphabet);

            const std::uint64_t n_bits = r.u64();
            if (n_bits > std::uint64_t(total_codes) * huffman::kMaxCodeLength)
                throw FormatError("huffman stream claims " + std::to_string(n_bits) +
                                  " bits for " + std::to_string(total_codes) +
                                  " symbols");
            const std::size_t n_bytes = (n_bits + 7) / 8;
            std::vector<std::uint8_t> bits(n_bytes);
            r.bytes(bits.data(), n_bytes);

            if (want_model) {
                const auto symbols = huffman::decode(table, bits.data(), n_bytes,
                                                     n_bits, total_codes);
                std::size_t cursor = 0;
                for (std::size_t l = 0; l < qts.size(); ++l) {
                    std::vector<std::uint16_t> slice(
                        symbols.begin() + cursor, symbols.begin() + cursor + qts[l].size());
                    cursor += qts[l].size();
                    qts[l].packed = quant::pack_codes(slice, qts[l].bits);
                    dec.trunk.layers[l].w = quant::dequantize(qts[l]);
                }
            }
        }

        dec.heads = nn::make_batch_linear(nf, info.config.out_channels(), dim);
        for (std::uint32_t h = 0; h < nf; ++h) {
            dec.heads.w[h] = read_tensor(r, info.config.out_channels(), dim, "head");
            dec.heads.b[h] = read_array(r, info.config.out_channels(), "head bias");
        }
        groups.push_back(std::move(dec));
    }
    info.groups_bytes = r.pos() - groups_start;

    if (r.remaining() != 0)
        throw FormatError("payload has " + std::to_string(r.remaining()) +
                          " trailing bytes");

    if (want_model) {
        out.model.config = info.config;
        out.model.meta = info.meta;
        out.model.encoder = std::move(encoder);
        out.model.groups = std::move(groups);
    }
    return out;
}

std::vector<std::uint8_t> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    in.seekg(0, std::ios::end);
    const std::streamoff len = in.tellg();
    if (len < 0) throw IoError("cannot stat " + path);
    in.seekg(0);
    std::vector<std::uint8_t> data(static_cast<std::size_t>(len));
    if (len > 0) in.read(reinterpret_cast<char*>(data.data()), len);
    if (!in) throw IoError("cannot read " + path);
    return data;
}

ParsedStream load(const std::string& path, bool want_model) {
    const auto file = read_all(path);
    if (file.size() < 18) throw FormatError(path + ": too short to be a SIEDD stream");

    ByteReader r(file.data(), file.size());
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(path + ": not a SIEDD stream (bad magic)");
    const std::uint16_t version = r.u16();
    if (version != kFormatVersion)
        throw FormatError(path + ": format version " + std::to_string(version) +
                          " unsupported (this build reads version " +
                          std::to_string(kFormatVersion) + ")");
    const std::uint32_t stored_crc = r.u32();
    const std::uint64_t payload_len = r.u64();
    if (payload_len == 0 || payload_len > kMaxPayload)
        throw FormatError(path + ": implausible payload length " +
                          std::to_string(payload_len));

    const auto payload = xz_decompress(file.data() + r.pos(), file.size() - r.pos(),
                                       static_cast<std::size_t>(payload_len));
    const std::uint32_t crc = crc_of(payload);
    if (crc != stored_crc) {
        char buf[96];
        std::snprintf(buf, sizeof(buf),
                      "payload checksum mismatch (stored %08x, computed %08x)",
                      stored_crc, crc);
        throw FormatError(path + ": " + buf);
    }

    ParsedStream parsed = parse_payload(payload, want_model);
    parsed.info.version = version;
    parsed.info.file_bytes = file.size();
    parsed.info.payload_bytes = payload.size();
    return parsed;
}

}  // namespace

void ByteWriter::u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
}
void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
void ByteWriter::bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
}
void ByteWriter::bytes_f32(const float* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) f32(p[i]);
}
void ByteWriter::f32_array(const float* p, std::size_t n) {
    u32(static_cast<std::uint32_t>(n));
    bytes_f32(p, n);
}

void ByteReader::need(std::size_t n) const {
    if (n_ - pos_ < n) truncated(n, n_ - pos_);
}
std::uint8_t ByteReader::u8() {
    need(1);
    return p_[pos_++];
}
std::uint16_t ByteReader::u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p_[pos_] | (p_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
}
std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p_[pos_ + i];
    pos_ += 4;
    return v;
}
std::uint64_t ByteReader::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p_[pos_ + i];
    pos_ += 8;
    return v;
}
float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }
void ByteReader::bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, p_ + pos_, n);
    pos_ += n;
}
void ByteReader::bytes_f32(float* out, std::size_t n) {
    need(4 * n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f32();
}
std::vector<float> ByteReader::f32_array(std::size_t max_len) {
    const std::uint32_t len = u32();
    if (len > max_len)
        throw FormatError("array length " + std::to_string(len) + " exceeds the " +
                          std::to_string(max_len) + "-entry limit");
    std::vector<float> v(len);
    bytes_f32(v.data(), len);
    return v;
}

void write_file(const std::string& path, const model::SieddModel& m,
                const TrainDigest& train, bool quantized,
                const quant::QuantConfig& qcfg,
                const std::vector<quant::QuantizedGroup>& payloads) {
    if (quantized && payloads.size() != m.groups.size())
        throw ShapeError("write_file: " + std::to_string(payloads.size()) +
                         " quantized payloads for " + std::to_string(m.groups.size()) +
                         " groups");
    if (!quantized && !payloads.empty())
        throw StateError("write_file: quantized payloads passed with quantization off");
    if (m.groups.empty()) throw StateError("write_file: model has no trained groups");

    ByteWriter payload;
    serialize_payload(payload, m, train, quantized, qcfg, payloads);
    const std::uint32_t crc = crc_of(payload.data());
    const auto compressed = xz_compress(payload.data());

    ByteWriter outer;
    outer.bytes(kMagic, 4);
    outer.u16(kFormatVersion);
    outer.u32(crc);
    outer.u64(payload.size());
    outer.bytes(compressed.data(), compressed.size());

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot create " + tmp);
        out.write(reinterpret_cast<const char*>(outer.data().data()),
                  static_cast<std::streamsize>(outer.size()));
        if (!out) {
            out.close();
            std::filesystem::remove(tmp);
            throw IoError("cannot write " + tmp);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
    }
}

LoadedStream read_file(const std::string& path) {
    ParsedStream parsed = load(path, true);
    return {parsed.info, std::move(parsed.model)};
}

StreamInfo inspect_file(const std::string& path) { return load(path, false).info; }

}  // namespace siedd::bitstream
