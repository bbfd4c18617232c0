#include <unistd.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "siedd/bitstream.hpp"
#include "siedd/coords.hpp"
#include "siedd/errors.hpp"
#include "siedd/model.hpp"
#include "siedd/quant.hpp"
#include "siedd/rng.hpp"

using namespace siedd;
namespace fs = std::filesystem;

namespace {

// Five 16x16 frames, three groups ({0,1}, {2,3}, {4}), patch 2, dim 32.
model::SieddModel tiny_model(std::uint64_t seed) {
    model::ModelConfig cfg;
    cfg.dim = 32;
    cfg.enc_hidden_layers = 1;
    cfg.dec_hidden_layers = 2;
    cfg.patch = 2;
    cfg.pos_encoding.n_freqs = 4;
    model::VideoMeta meta{16, 16, 5, 24.0};
    auto m = model::build_model(cfg, meta, {0, 4}, seed);
    m.groups.clear();
    std::uint64_t g = 0;
    for (const auto& frames : model::partition_groups(meta.n_frames, 2))
        m.groups.push_back(model::random_group_decoder(cfg, frames, seed, (2ull << 32) + g++));
    return m;
}

bitstream::TrainDigest sample_digest() {
    bitstream::TrainDigest t;
    t.seed = 0xDEADBEEFCAFEF00Dull;
    t.group_size = 2;
    t.n_anchors = 2;
    t.sample_count = 12345;
    t.stage1_iters = 77;
    t.stage2_iters = 88;
    t.lr = 1.5e-5f;
    return t;
}

// Unique per process so parallel test runs never collide in /tmp.
struct TempFile {
    std::string path;
    explicit TempFile(const char* stem)
        : path((fs::temp_directory_path() /
                ("siedd_" + std::to_string(::getpid()) + "_" + stem + ".siedd"))
                   .string()) {}
    ~TempFile() {
        std::error_code ec;
        fs::remove(path, ec);
    }
};

std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    REQUIRE(bool(out));
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

template <typename E, typename Fn>
std::string message_of(Fn&& fn) {
    try {
        fn();
    } catch (const E& e) {
        return e.what();
    }
    return {};
}

bool same_floats(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

bool same_tensor(const Tensor2D& a, const Tensor2D& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

void check_mlp_bitwise(const nn::Mlp& a, const nn::Mlp& b) {
    REQUIRE(a.layers.size() == b.layers.size());
    CHECK(a.omega == b.omega);
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        CHECK(same_tensor(a.layers[i].w, b.layers[i].w));
        CHECK(same_floats(a.layers[i].b, b.layers[i].b));
        CHECK(a.layers[i].sine == b.layers[i].sine);
    }
}

void check_models_bitwise(const model::SieddModel& a, const model::SieddModel& b) {
    CHECK(a.config.dim == b.config.dim);
    CHECK(a.config.enc_hidden_layers == b.config.enc_hidden_layers);
    CHECK(a.config.dec_hidden_layers == b.config.dec_hidden_layers);
    CHECK(a.config.omega == b.config.omega);
    CHECK(a.config.patch == b.config.patch);
    CHECK(a.config.pos_encoding.n_freqs == b.config.pos_encoding.n_freqs);
    CHECK(a.config.pos_encoding.include_input == b.config.pos_encoding.include_input);
    CHECK(a.meta.height == b.meta.height);
    CHECK(a.meta.width == b.meta.width);
    CHECK(a.meta.n_frames == b.meta.n_frames);
    CHECK(a.meta.fps == b.meta.fps);
    check_mlp_bitwise(a.encoder, b.encoder);
    REQUIRE(a.groups.size() == b.groups.size());
    for (std::size_t g = 0; g < a.groups.size(); ++g) {
        CHECK(a.groups[g].frames == b.groups[g].frames);
        check_mlp_bitwise(a.groups[g].trunk, b.groups[g].trunk);
        REQUIRE(a.groups[g].heads.n_heads() == b.groups[g].heads.n_heads());
        for (std::size_t h = 0; h < a.groups[g].heads.n_heads(); ++h) {
            CHECK(same_tensor(a.groups[g].heads.w[h], b.groups[g].heads.w[h]));
            CHECK(same_floats(a.groups[g].heads.b[h], b.groups[g].heads.b[h]));
        }
    }
}

}  // namespace

TEST_SUITE_BEGIN("bitstream");

TEST_CASE("primitive fields round-trip at every width, little-endian") {
    bitstream::ByteWriter w;
    w.u8(0xAB);
    w.u16(0xBEEF);
    w.u32(0xDEADBEEFu);
    w.u64(0x0123456789ABCDEFull);
    w.f32(-0.0f);
    w.f32(std::bit_cast<float>(0x7FC00001u));  // NaN with payload bits
    w.f64(-1.5e-300);
    const float raw[3] = {1.0f, -2.5f, 3.25f};
    w.bytes_f32(raw, 3);
    w.f32_array(raw, 3);
    const char tag[4] = {'a', 'b', 'c', 'd'};
    w.bytes(tag, 4);

    const auto& buf = w.data();
    // Spot-check the wire layout: u16 0xBEEF must be EF BE.
    REQUIRE(buf.size() >= 7);
    CHECK(buf[0] == 0xAB);
    CHECK(buf[1] == 0xEF);
    CHECK(buf[2] == 0xBE);
    CHECK(buf[3] == 0xEF);
    CHECK(buf[4] == 0xBE);
    CHECK(buf[5] == 0xAD);
    CHECK(buf[6] == 0xDE);

    bitstream::ByteReader r(buf.data(), buf.size());
    CHECK(r.u8() == 0xAB);
    CHECK(r.u16() == 0xBEEF);
    CHECK(r.u32() == 0xDEADBEEFu);
    CHECK(r.u64() == 0x0123456789ABCDEFull);
    CHECK(std::bit_cast<std::uint32_t>(r.f32()) == std::bit_cast<std::uint32_t>(-0.0f));
    CHECK(std::bit_cast<std::uint32_t>(r.f32()) == 0x7FC00001u);
    CHECK(r.f64() == -1.5e-300);
    float back[3];
    r.bytes_f32(back, 3);
    CHECK(std::memcmp(back, raw, sizeof raw) == 0);
    CHECK(r.f32_array(16) == std::vector<float>{1.0f, -2.5f, 3.25f});
    char tback[4];
    r.bytes(tback, 4);
    CHECK(std::memcmp(tback, tag, 4) == 0);
    CHECK(r.remaining() == 0);
}

TEST_CASE("reader refuses to run past the end") {
    const std::uint8_t small[2] = {1, 2};
    bitstream::ByteReader r(small, 2);
    CHECK(r.u16() == 0x0201);
    CHECK_THROWS_AS(r.u8(), FormatError);

    // A length prefix larger than the caller's cap is rejected before any
    // allocation; one within the cap but past the end is a bounds error.
    bitstream::ByteWriter w;
    w.u32(1000);
    bitstream::ByteReader r2(w.data().data(), w.size());
    CHECK_THROWS_AS(r2.f32_array(10), FormatError);
    bitstream::ByteReader r3(w.data().data(), w.size());
    CHECK_THROWS_AS(r3.f32_array(4000), FormatError);
}

TEST_CASE("raw streams round-trip every parameter bit") {
    const auto m = tiny_model(11);
    const auto d = sample_digest();
    TempFile f("raw_roundtrip");
    bitstream::write_file(f.path, m, d, false, quant::QuantConfig{}, {});

    const auto loaded = bitstream::read_file(f.path);
    CHECK(loaded.info.version == bitstream::kFormatVersion);
    CHECK_FALSE(loaded.info.quantized);
    CHECK(loaded.info.n_groups == 3);
    CHECK(loaded.info.train.seed == d.seed);
    CHECK(loaded.info.train.group_size == d.group_size);
    CHECK(loaded.info.train.n_anchors == d.n_anchors);
    CHECK(loaded.info.train.sample_count == d.sample_count);
    CHECK(loaded.info.train.stage1_iters == d.stage1_iters);
    CHECK(loaded.info.train.stage2_iters == d.stage2_iters);
    CHECK(loaded.info.train.lr == d.lr);
    check_models_bitwise(loaded.model, m);
    CHECK(model::encoder_checksum(loaded.model) == model::encoder_checksum(m));

    // Size accounting: the payload splits exactly into its three sections,
    // and file_bytes is the on-disk size (the bpp numerator).
    CHECK(loaded.info.header_bytes + loaded.info.encoder_bytes +
              loaded.info.groups_bytes ==
          loaded.info.payload_bytes);
    CHECK(loaded.info.file_bytes == fs::file_size(f.path));

    // Decoding from the reloaded model is bit-identical.
    const auto grid = coords::make_grid(16, 16, 2);
    const auto before = model::forward_group(m, 0, grid.coords);
    const auto after = model::forward_group(loaded.model, 0, grid.coords);
    CHECK(same_tensor(before, after));
    const auto fa = model::assemble_frames(before, grid, m.groups[0].frames.size());
    const auto fb = model::assemble_frames(after, grid, m.groups[0].frames.size());
    REQUIRE(fa.size() == fb.size());
    for (std::size_t i = 0; i < fa.size(); ++i) CHECK(same_floats(fa[i].rgb, fb[i].rgb));
}

TEST_CASE("quantized streams reconstruct the dequantized model exactly") {
    const auto m = tiny_model(12);
    quant::QuantConfig qcfg;
    qcfg.bits = 6;
    qcfg.group_size = 32;
    qcfg.method = quant::Method::Hqq;
    qcfg.hqq_iters = 5;
    const auto payloads = quant::quantize_model(m, qcfg);
    const auto expect = quant::dequantize_model(m, payloads);

    TempFile f("quant_roundtrip");
    bitstream::write_file(f.path, m, sample_digest(), true, qcfg, payloads);
    const auto loaded = bitstream::read_file(f.path);

    CHECK(loaded.info.quantized);
    CHECK(loaded.info.qcfg.bits == qcfg.bits);
    CHECK(loaded.info.qcfg.group_size == qcfg.group_size);
    CHECK(loaded.info.qcfg.method == quant::Method::Hqq);
    CHECK(loaded.info.qcfg.hqq_iters == qcfg.hqq_iters);
    CHECK(loaded.info.qcfg.hqq_p == qcfg.hqq_p);
    CHECK(loaded.info.qcfg.hqq_beta == qcfg.hqq_beta);
    CHECK(loaded.info.qcfg.hqq_kappa == qcfg.hqq_kappa);

    // What comes back is exactly quantize-then-dequantize of the original:
    // trunks carry the grid values, everything else is untouched.
    check_models_bitwise(loaded.model, expect);
    CHECK(model::encoder_checksum(loaded.model) == model::encoder_checksum(m));
    CHECK(loaded.info.header_bytes + loaded.info.encoder_bytes +
              loaded.info.groups_bytes ==
          loaded.info.payload_bytes);
}

TEST_CASE("writing the same model twice produces identical bytes") {
    const auto m = tiny_model(13);
    quant::QuantConfig qcfg;
    qcfg.bits = 6;
    qcfg.group_size = 32;
    const auto payloads = quant::quantize_model(m, qcfg);
    TempFile a("dup_a");
    TempFile b("dup_b");
    bitstream::write_file(a.path, m, sample_digest(), true, qcfg, payloads);
    bitstream::write_file(b.path, m, sample_digest(), true, qcfg, payloads);
    CHECK(slurp(a.path) == slurp(b.path));
}

TEST_CASE("inspect reports the same header as a full load") {
    const auto m = tiny_model(14);
    quant::QuantConfig qcfg;
    qcfg.bits = 4;
    qcfg.group_size = 16;
    const auto payloads = quant::quantize_model(m, qcfg);
    TempFile f("inspect");
    bitstream::write_file(f.path, m, sample_digest(), true, qcfg, payloads);

    const auto full = bitstream::read_file(f.path).info;
    const auto peek = bitstream::inspect_file(f.path);
    CHECK(peek.version == full.version);
    CHECK(peek.meta.height == full.meta.height);
    CHECK(peek.meta.width == full.meta.width);
    CHECK(peek.meta.n_frames == full.meta.n_frames);
    CHECK(peek.meta.fps == full.meta.fps);
    CHECK(peek.config.dim == full.config.dim);
    CHECK(peek.train.seed == full.train.seed);
    CHECK(peek.quantized == full.quantized);
    CHECK(peek.qcfg.bits == full.qcfg.bits);
    CHECK(peek.n_groups == full.n_groups);
    CHECK(peek.file_bytes == full.file_bytes);
    CHECK(peek.payload_bytes == full.payload_bytes);
    CHECK(peek.header_bytes == full.header_bytes);
    CHECK(peek.encoder_bytes == full.encoder_bytes);
    CHECK(peek.groups_bytes == full.groups_bytes);
}

TEST_CASE("fewer bits per weight make a smaller file") {
    const auto m = tiny_model(15);
    quant::QuantConfig q6;
    q6.bits = 6;
    q6.group_size = 32;
    quant::QuantConfig q8 = q6;
    q8.bits = 8;

    TempFile f6("size_b6");
    TempFile f8("size_b8");
    TempFile fraw("size_raw");
    bitstream::write_file(f6.path, m, sample_digest(), true, q6, quant::quantize_model(m, q6));
    bitstream::write_file(f8.path, m, sample_digest(), true, q8, quant::quantize_model(m, q8));
    bitstream::write_file(fraw.path, m, sample_digest(), false, quant::QuantConfig{}, {});

    const auto s6 = fs::file_size(f6.path);
    const auto s8 = fs::file_size(f8.path);
    const auto sraw = fs::file_size(fraw.path);
    CHECK(s6 < s8);
    CHECK(s8 < sraw);
}

TEST_CASE("header damage is reported field by field") {
    const auto m = tiny_model(16);
    TempFile f("tamper");
    bitstream::write_file(f.path, m, sample_digest(), false, quant::QuantConfig{}, {});
    const auto good = slurp(f.path);
    REQUIRE(good.size() > 40);
    TempFile t("tamper_bad");

    // Magic (bytes 0-3).
    auto bad = good;
    bad[0] = 'X';
    spit(t.path, bad);
    CHECK(message_of<FormatError>([&] { bitstream::read_file(t.path); })
              .find("bad magic") != std::string::npos);

    // Version (u16 at byte 4): the message names both versions.
    bad = good;
    bad[4] = 9;
    bad[5] = 0;
    spit(t.path, bad);
    const auto vmsg = message_of<FormatError>([&] { bitstream::read_file(t.path); });
    CHECK(vmsg.find("version 9") != std::string::npos);
    CHECK(vmsg.find("version 1") != std::string::npos);

    // Stored CRC (u32 at byte 6).
    bad = good;
    bad[6] ^= 0xFF;
    spit(t.path, bad);
    CHECK(message_of<FormatError>([&] { bitstream::read_file(t.path); })
              .find("checksum mismatch") != std::string::npos);

    // Payload length (u64 at byte 10): implausibly huge.
    bad = good;
    for (int i = 0; i < 8; ++i) bad[10 + i] = 0xFF;
    spit(t.path, bad);
    CHECK(message_of<FormatError>([&] { bitstream::read_file(t.path); })
              .find("implausible payload length") != std::string::npos);

    // Payload length off by one: the xz stream no longer matches the claim.
    bad = good;
    std::uint64_t plen = 0;
    for (int i = 7; i >= 0; --i) plen = (plen << 8) | bad[10 + i];
    --plen;
    for (int i = 0; i < 8; ++i) bad[10 + i] = static_cast<std::uint8_t>(plen >> (8 * i));
    spit(t.path, bad);
    CHECK_THROWS_AS(bitstream::read_file(t.path), FormatError);

    // Trailing bytes after the xz stream.
    bad = good;
    bad.insert(bad.end(), {0, 0, 0, 0});
    spit(t.path, bad);
    CHECK_THROWS_AS(bitstream::read_file(t.path), FormatError);

    // Truncations.
    bad.assign(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(good.size() / 2));
    spit(t.path, bad);
    CHECK_THROWS_AS(bitstream::read_file(t.path), FormatError);
    bad.assign(good.begin(), good.begin() + 10);
    spit(t.path, bad);
    CHECK(message_of<FormatError>([&] { bitstream::read_file(t.path); })
              .find("too short") != std::string::npos);
    spit(t.path, {});
    CHECK_THROWS_AS(bitstream::read_file(t.path), FormatError);

    // Missing file entirely.
    CHECK_THROWS_AS(bitstream::read_file(t.path + ".does_not_exist"), IoError);
}

TEST_CASE("random corruption never escapes the structured error set") {
    const auto m = tiny_model(17);
    quant::QuantConfig qcfg;
    qcfg.bits = 6;
    qcfg.group_size = 32;
    TempFile f("fuzz_src");
    bitstream::write_file(f.path, m, sample_digest(), true, qcfg,
                          quant::quantize_model(m, qcfg));
    const auto good = slurp(f.path);
    REQUIRE(good.size() > 64);

    TempFile t("fuzz");
    Rng rng(99);
    constexpr int kIters = 150;
    int rejected = 0;
    for (int i = 0; i < kIters; ++i) {
        auto bytes = good;
        if (rng.bounded(4) == 0) {
            bytes.resize(1 + rng.bounded(bytes.size() - 1));
        } else {
            const auto at = rng.bounded(bytes.size());
            bytes[at] ^= static_cast<std::uint8_t>(1 + rng.bounded(255));
        }
        spit(t.path, bytes);
        try {
            bitstream::read_file(t.path);
        } catch (const FormatError&) {
            ++rejected;
        } catch (const IoError&) {
            ++rejected;
        } catch (const std::exception& e) {
            FAIL("unexpected exception type for mutation ", i, ": ", e.what());
        }
    }
    // Every single-byte flip and truncation must be caught: the outer header
    // fields are validated, and both the xz integrity check and the stored
    // CRC cover the payload.
    CHECK(rejected == kIters);
}

TEST_CASE("writer rejects inconsistent inputs before touching the disk") {
    const auto m = tiny_model(18);
    quant::QuantConfig qcfg;
    qcfg.bits = 6;
    qcfg.group_size = 32;
    auto payloads = quant::quantize_model(m, qcfg);
    TempFile f("precondition");

    // One payload per group, exactly.
    auto short_payloads = payloads;
    short_payloads.pop_back();
    CHECK_THROWS_AS(bitstream::write_file(f.path, m, sample_digest(), true, qcfg,
                                          short_payloads),
                    ShapeError);

    // Payloads with quantization off make no sense.
    CHECK_THROWS_AS(bitstream::write_file(f.path, m, sample_digest(), false, qcfg,
                                          payloads),
                    StateError);

    // A model with no groups has nothing to store.
    auto empty = m;
    empty.groups.clear();
    CHECK_THROWS_AS(bitstream::write_file(f.path, empty, sample_digest(), false,
                                          quant::QuantConfig{}, {}),
                    StateError);

    // Per-group tensor count must match the trunk depth.
    auto lame = payloads;
    lame[0].trunk_weights.pop_back();
    CHECK_THROWS_AS(bitstream::write_file(f.path, m, sample_digest(), true, qcfg, lame),
                    ShapeError);

    // Tensors quantized under a different setting than the stream claims.
    quant::QuantConfig other = qcfg;
    other.bits = 8;
    CHECK_THROWS_AS(bitstream::write_file(f.path, m, sample_digest(), true, other,
                                          payloads),
                    StateError);

    // None of the failures may leave a file behind.
    CHECK_FALSE(fs::exists(f.path));

    // Unwritable destination surfaces as an I/O error.
    CHECK_THROWS_AS(bitstream::write_file("/nonexistent_dir/x.siedd", m,
                                          sample_digest(), false,
                                          quant::QuantConfig{}, {}),
                    IoError);
}

TEST_SUITE_END();
