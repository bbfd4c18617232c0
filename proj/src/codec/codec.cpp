#include "siedd/codec.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <mutex>
#include <sstream>
#include <thread>
#include <utility>

#include "siedd/errors.hpp"

namespace siedd::codec {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Rethrows the structured error types with the failing encode stage named, so
// a caller (and the CLI user) can see where the pipeline died.
template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
    auto tag = [&](const char* what) {
        return "encode aborted in " + std::string(stage) + ": " + what;
    };
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError(tag(e.what()));
    } catch (const ShapeError& e) {
        throw ShapeError(tag(e.what()));
    } catch (const StateError& e) {
        throw StateError(tag(e.what()));
    } catch (const FormatError& e) {
        throw FormatError(tag(e.what()));
    } catch (const IoError& e) {
        throw IoError(tag(e.what()));
    }
}

void check_patch_divides(std::size_t h, std::size_t w, std::size_t p, const char* what) {
    if (p == 0) throw ConfigError(std::string(what) + ": patch size is zero");
    if (h % p == 0 && w % p == 0) return;
    // Suggestions touch only the misaligned axes.
    auto down = [p](std::size_t v) {
        const std::size_t d = (v / p) * p;
        return d ? d : d + p;
    };
    auto up = [p](std::size_t v) { return v % p ? (v / p + 1) * p : v; };
    std::ostringstream msg;
    msg << what << ": " << h << "x" << w << " is not divisible by patch " << p
        << "; nearest valid sizes are " << down(h) << "x" << down(w) << " and " << up(h)
        << "x" << up(w);
    throw ConfigError(msg.str());
}

void fill_rate_fields(metrics::RdReport& rd, const bitstream::StreamInfo& info,
                      const model::VideoMeta& meta) {
    rd.file_bytes = info.file_bytes;
    rd.n_frames = meta.n_frames;
    rd.height = meta.height;
    rd.width = meta.width;
    rd.bpp = metrics::bpp(info.file_bytes * 8, meta.n_frames, meta.height, meta.width);
}

}  // namespace

EncodeConfig preset_config(const std::string& name) {
    EncodeConfig c;
    if (name == "S") {
        c.model.dim = 512;
    } else if (name == "M") {
        c.model.dim = 768;
    } else if (name == "L") {
        c.model.dim = 1024;
    } else if (name == "toy") {
        c.model.dim = 128;
        c.model.pos_encoding.n_freqs = 8;
        c.train.group_size = 4;
        c.train.stage1_iters = 2000;
        c.train.stage2_iters = 2000;
        c.sample_divisor = 64;
    } else {
        throw ConfigError("unknown preset \"" + name + "\" (valid: S, M, L, toy)");
    }
    return c;
}

DecodeResult decode_model(const model::SieddModel& m, const DecodeOptions& opt) {
    if (m.groups.empty()) throw StateError("decode: model has no trained groups");
    if ((opt.height == 0) != (opt.width == 0))
        throw ConfigError("decode: --resolution needs both height and width");
    const std::size_t out_h = opt.height ? opt.height : m.meta.height;
    const std::size_t out_w = opt.width ? opt.width : m.meta.width;
    check_patch_divides(out_h, out_w, m.config.patch, "decode resolution");

    const std::size_t n = m.meta.n_frames;
    const std::size_t first = opt.first_frame;
    const std::size_t last = std::min(opt.last_frame, n - 1);
    if (first > last)
        throw ConfigError("decode: frame range " + std::to_string(first) + ".." +
                          std::to_string(last) + " is empty for " + std::to_string(n) +
                          " stored frames (valid: 0.." + std::to_string(n - 1) + ")");

    const auto grid = coords::make_grid(out_h, out_w, m.config.patch);
    const std::size_t n_cells = grid.n_cells();
    const std::size_t auto_chunks = (out_h * out_w > 8'000'000ull) ? 32 : 8;
    const std::size_t k = std::max<std::size_t>(1, opt.chunks ? opt.chunks : auto_chunks);
    const std::size_t chunk_rows = std::max<std::size_t>(1, (n_cells + k - 1) / k);
    const std::size_t out_ch = m.config.out_channels();

    std::vector<video::Frame> out(last - first + 1);
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::string first_error;

    const auto t0 = Clock::now();
    auto worker = [&]() {
        for (;;) {
            const std::size_t g = next.fetch_add(1);
            if (g >= m.groups.size()) return;
            try {
                const auto& dec = m.groups[g];
                // Heads whose source frame falls in the requested range.
                std::vector<std::size_t> sel;
                std::vector<std::uint32_t> sel_frames;
                for (std::size_t h = 0; h < dec.frames.size(); ++h)
                    if (dec.frames[h] >= first && dec.frames[h] <= last) {
                        sel.push_back(h);
                        sel_frames.push_back(dec.frames[h]);
                    }
                if (sel.empty()) continue;

                nn::BatchLinearLayer heads;
                for (const auto h : sel) {
                    heads.w.push_back(dec.heads.w[h]);
                    heads.b.push_back(dec.heads.b[h]);
                }

                // Row independence makes any chunking bit-identical to one
                // full-grid pass; chunks only bound the transient latent.
                Tensor2D predictions(sel.size() * n_cells, out_ch);
                for (std::size_t r0 = 0; r0 < n_cells; r0 += chunk_rows) {
                    const std::size_t nr = std::min(chunk_rows, n_cells - r0);
                    Tensor2D piece(nr, 2);
                    std::memcpy(piece.data(), grid.coords.row(r0), nr * 2 * sizeof(float));
                    const Tensor2D latent = model::encode_latent(m, piece);
                    const Tensor2D z = nn::mlp_forward(dec.trunk, latent);
                    const Tensor2D y = nn::batch_linear_forward(heads, z);
                    for (std::size_t h = 0; h < sel.size(); ++h)
                        std::memcpy(predictions.row(h * n_cells + r0), y.row(h * nr),
                                    nr * out_ch * sizeof(float));
                }
                auto frames = model::assemble_frames(predictions, grid, sel.size());
                for (std::size_t h = 0; h < sel.size(); ++h)
                    out[sel_frames[h] - first] = std::move(frames[h]);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (first_error.empty())
                    first_error = "group " + std::to_string(g) + ": " + e.what();
            }
        }
    };

    const std::size_t n_workers = std::min(std::max<std::size_t>(1, opt.workers),
                                           m.groups.size());
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (!first_error.empty()) throw StateError("decode failed: " + first_error);

    DecodeResult res;
    res.seconds = seconds_since(t0);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i].rgb.empty())
            throw FormatError("stream has no head for frame " + std::to_string(first + i));
    res.video.frames = std::move(out);
    res.video.fps = m.meta.fps;
    res.decode_fps = res.seconds > 0.0 ? double(res.video.count()) / res.seconds : 0.0;
    return res;
}

DecodeResult decode(const std::string& file, const DecodeOptions& opt) {
    const auto stream = bitstream::read_file(file);
    return decode_model(stream.model, opt);
}

EncodeResult encode_video(const video::VideoFrames& video, const EncodeConfig& base,
                          const std::string& out_file) {
    const auto t0 = Clock::now();
    if (video.count() == 0) throw ConfigError("encode: no input frames");
    EncodeConfig cfg = base;
    const std::size_t h = video.height(), w = video.width();
    if (cfg.train.sample_count == 0 && cfg.sample_divisor > 0)
        cfg.train.sample_count = std::max<std::size_t>(1, h * w / cfg.sample_divisor);

    model::VideoMeta meta{h, w, video.count(), video.fps};
    const bool transfer = !cfg.encoder_init.empty();

    model::SieddModel net;
    if (transfer) {
        // The donor's encoder is frozen and reused; its shape config wins.
        auto donor = run_stage("load", [&] { return bitstream::read_file(cfg.encoder_init); });
        cfg.model = donor.model.config;
        check_patch_divides(h, w, cfg.model.patch, "encode input");
        run_stage("setup", [&] { cfg.train.validate(); });
        net.config = cfg.model;
        net.meta = meta;
        net.encoder = std::move(donor.model.encoder);
    } else {
        check_patch_divides(h, w, cfg.model.patch, "encode input");
        const auto anchors = run_stage("setup", [&] {
            cfg.model.validate();
            cfg.train.validate();
            return train::select_anchors(meta.n_frames, cfg.train.anchors(meta.n_frames));
        });
        net = run_stage("setup",
                        [&] { return model::build_model(cfg.model, meta, anchors, cfg.train.seed); });
        run_stage("stage 1", [&] { train::train_stage1(net, video, cfg.train); });
    }

    // The encoder is frozen from here on; stage 2 must not touch it. The
    // checksum is re-verified after training so a freeze violation can never
    // reach a file silently.
    const std::uint64_t frozen_sum = model::encoder_checksum(net);
    run_stage("stage 2", [&] {
        train::train_all_groups(net, video, cfg.train,
                                transfer ? train::GroupInit::Random
                                         : train::GroupInit::FromAnchor);
        if (model::encoder_checksum(net) != frozen_sum)
            throw StateError("frozen encoder changed during stage 2 (checksum drift)");
    });

    std::vector<quant::QuantizedGroup> payloads;
    model::SieddModel shipped;  // what a decoder will reconstruct
    if (cfg.quantize) {
        run_stage("quantize", [&] {
            payloads = quant::quantize_model(net, cfg.quant);
            shipped = quant::dequantize_model(net, payloads);
        });
    }

    bitstream::TrainDigest digest;
    digest.seed = cfg.train.seed;
    digest.group_size = static_cast<std::uint32_t>(cfg.train.group_size);
    digest.n_anchors =
        transfer ? 0 : static_cast<std::uint32_t>(cfg.train.anchors(meta.n_frames));
    digest.sample_count = cfg.train.samples(h, w);
    digest.stage1_iters = transfer ? 0 : static_cast<std::uint32_t>(cfg.train.stage1_iters);
    digest.stage2_iters = static_cast<std::uint32_t>(cfg.train.stage2_iters);
    digest.lr = cfg.train.lr;
    run_stage("serialize", [&] {
        bitstream::write_file(out_file, net, digest, cfg.quantize, cfg.quant, payloads);
    });

    EncodeResult res;
    const double encode_seconds = seconds_since(t0);
    res.info = bitstream::inspect_file(out_file);

    // Evaluation happens after the clock stops: it reports on the artifact,
    // it is not part of producing it.
    DecodeOptions dopt;
    dopt.workers = cfg.train.workers;
    const auto decoded = decode_model(cfg.quantize ? shipped : net, dopt);
    res.report = metrics::compare(video, decoded.video);
    res.report.encode_seconds = encode_seconds;
    res.report.decode_fps = decoded.decode_fps;
    fill_rate_fields(res.report, res.info, meta);

    if (cfg.report_prequant) {
        if (cfg.quantize) {
            const auto pre = decode_model(net, dopt);
            res.prequant_report = metrics::compare(video, pre.video);
            res.prequant_report.decode_fps = pre.decode_fps;
        } else {
            res.prequant_report = res.report;
        }
        res.prequant_report.encode_seconds = encode_seconds;
        fill_rate_fields(res.prequant_report, res.info, meta);
    }
    res.encoder_checksum = frozen_sum;
    if (cfg.keep_models) {
        res.shipped_model = cfg.quantize ? std::move(shipped) : net;
        res.trained_model = std::move(net);
    }
    return res;
}

EncodeResult encode(const std::string& frames_dir, const EncodeConfig& cfg,
                    const std::string& out_file) {
    const auto video = run_stage("load", [&] { return video::load_frames(frames_dir); });
    return encode_video(video, cfg, out_file);
}

std::string info_text(const std::string& file) {
    const auto info = bitstream::inspect_file(file);
    std::ostringstream out;
    out << "file:          " << file << " (" << info.file_bytes << " bytes)\n"
        << "format:        version " << info.version << "\n"
        << "video:         " << info.meta.height << "x" << info.meta.width << ", "
        << info.meta.n_frames << " frames, " << info.meta.fps << " fps\n"
        << "model:         dim " << info.config.dim << ", encoder layers "
        << (info.config.enc_hidden_layers + 1) << ", trunk layers "
        << info.config.dec_hidden_layers << ", omega " << info.config.omega << ", patch "
        << info.config.patch << ", pos-enc L=" << info.config.pos_encoding.n_freqs
        << (info.config.pos_encoding.include_input ? " (+xy)" : "") << "\n"
        << "groups:        " << info.n_groups << "\n"
        << "training:      seed " << info.train.seed << ", group size "
        << info.train.group_size << ", anchors " << info.train.n_anchors << ", samples "
        << info.train.sample_count << ", iters " << info.train.stage1_iters << "+"
        << info.train.stage2_iters << ", lr " << info.train.lr << "\n";
    if (info.quantized) {
        out << "quantization:  "
            << (info.qcfg.method == quant::Method::Hqq ? "hqq" : "uniform") << " "
            << info.qcfg.bits << "-bit, group " << info.qcfg.group_size;
        if (info.qcfg.method == quant::Method::Hqq)
            out << ", " << info.qcfg.hqq_iters << " refinement iters";
        out << "\n";
    } else {
        out << "quantization:  none\n";
    }
    out << "payload:       " << info.payload_bytes << " bytes (header " << info.header_bytes
        << ", encoder " << info.encoder_bytes << ", groups " << info.groups_bytes << ")\n"
        << "bpp:           "
        << metrics::bpp(info.file_bytes * 8, info.meta.n_frames, info.meta.height,
                        info.meta.width)
        << "\n";
    return out.str();
}

}  // namespace siedd::codec
