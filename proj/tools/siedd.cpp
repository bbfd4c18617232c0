// Command-line surface: encode / decode / metrics / info / bench.
// Exit codes: 0 success, 1 runtime failure, 2 flag/usage errors.
// Progress and diagnostics go to stderr; reports and data to stdout/files.

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "siedd/codec.hpp"
#include "siedd/errors.hpp"
#include "siedd/metrics.hpp"
#include "siedd/video_io.hpp"

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::size_t default_workers() {
    if (const char* env = std::getenv("SIEDD_WORKERS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end && *end == '\0' && v > 0) return v;
    }
    return 1;
}

bool parse_uint(const std::string& s, std::size_t& out) {
    if (s.empty()) return false;
    try {
        std::size_t pos = 0;
        out = std::stoull(s, &pos);
        return pos == s.size();
    } catch (...) {
        return false;
    }
}

bool parse_hw(const std::string& s, std::size_t& h, std::size_t& w) {
    const auto x = s.find('x');
    if (x == std::string::npos) return false;
    return parse_uint(s.substr(0, x), h) && parse_uint(s.substr(x + 1), w) && h > 0 &&
           w > 0;
}

bool parse_range(const std::string& s, std::size_t& a, std::size_t& b) {
    const auto dots = s.find("..");
    if (dots == std::string::npos) return false;
    return parse_uint(s.substr(0, dots), a) && parse_uint(s.substr(dots + 2), b);
}

const CLI::Validator ResolutionFormat(
    [](std::string& s) -> std::string {
        std::size_t h = 0, w = 0;
        return parse_hw(s, h, w) ? "" : "expected HxW (e.g. 1080x1920), got '" + s + "'";
    },
    "HxW");

const CLI::Validator RangeFormat(
    [](std::string& s) -> std::string {
        std::size_t a = 0, b = 0;
        return parse_range(s, a, b) ? "" : "expected a..b (e.g. 0..15), got '" + s + "'";
    },
    "A..B");

// ---------------------------------------------------------------- encode ---

struct EncodeArgs {
    std::string input, output, preset = "M", quant = "hqq", encoder_init;
    std::size_t group_size = 0, samples = 0, iters1 = 0, iters2 = 0, patch = 0, bits = 0;
    std::size_t workers = default_workers();
    std::uint64_t seed = 0;
    bool report_prequant = false;
};

void run_encode(const EncodeArgs& a, const CLI::App& cmd) {
    auto cfg = siedd::codec::preset_config(a.preset);
    if (cmd.count("--group-size")) cfg.train.group_size = a.group_size;
    if (cmd.count("--samples")) cfg.train.sample_count = a.samples;
    if (cmd.count("--iters-stage1")) cfg.train.stage1_iters = a.iters1;
    if (cmd.count("--iters-stage2")) cfg.train.stage2_iters = a.iters2;
    if (cmd.count("--patch")) cfg.model.patch = a.patch;
    if (cmd.count("--bits")) cfg.quant.bits = a.bits;
    if (cmd.count("--seed")) cfg.train.seed = a.seed;
    if (a.quant == "none") {
        cfg.quantize = false;
    } else {
        cfg.quant.method =
            a.quant == "uniform" ? siedd::quant::Method::Uniform : siedd::quant::Method::Hqq;
    }
    cfg.train.workers = a.workers;
    cfg.encoder_init = a.encoder_init;
    cfg.report_prequant = a.report_prequant;

    const auto res = siedd::codec::encode(a.input, cfg, a.output);
    std::cout << res.report.to_text();
    if (a.report_prequant)
        std::cout << "\npre-quantization quality:\n" << res.prequant_report.to_text();
}

// ---------------------------------------------------------------- decode ---

struct DecodeArgs {
    std::string input, output, resolution, frames;
    std::size_t workers = default_workers();
};

void run_decode(const DecodeArgs& a) {
    siedd::codec::DecodeOptions opt;
    opt.workers = a.workers;
    if (!a.resolution.empty()) parse_hw(a.resolution, opt.height, opt.width);
    if (!a.frames.empty()) parse_range(a.frames, opt.first_frame, opt.last_frame);

    const auto res = siedd::codec::decode(a.input, opt);
    siedd::video::write_frames(res.video, a.output, "%05d.png", opt.first_frame);
    std::printf("decoded %zu frames (%zux%zu) to %s\n", res.video.count(),
                res.video.height(), res.video.width(), a.output.c_str());
    std::printf("decode fps: %.2f (forward + frame assembly)\n", res.decode_fps);
}

// ------------------------------------------------------- metrics / info ---

struct MetricsArgs {
    std::string ref, dist;
    bool as_json = false;
};

void run_metrics(const MetricsArgs& a) {
    const auto ref = siedd::video::load_frames(a.ref);
    const auto dist = siedd::video::load_frames(a.dist);
    auto rd = siedd::metrics::compare(ref, dist);
    if (a.as_json)
        std::cout << rd.to_json() << "\n";
    else
        std::cout << rd.to_text();
}

// ----------------------------------------------------------------- bench ---

struct BenchArgs {
    std::string sweep, output, input_dir;
    std::size_t height = 96, width = 96, frames = 16;
    std::uint64_t seed = 42;
    std::size_t iters = 2000;
    std::size_t workers = default_workers();
};

void run_bench(const BenchArgs& a) {
    const auto vid = a.input_dir.empty()
                         ? siedd::video::synth_video("moving-gradient", a.height, a.width,
                                                     a.frames, a.seed)
                         : siedd::video::load_frames(a.input_dir);

    struct Point {
        std::string label;
        json fields;
        std::function<void(siedd::codec::EncodeConfig&)> apply;
    };
    std::vector<Point> points;
    if (a.sweep == "sampling") {
        for (const std::size_t d : {128u, 256u, 512u, 1024u, 2048u})
            points.push_back({"1/" + std::to_string(d),
                              {{"sample_divisor", d}},
                              [d](siedd::codec::EncodeConfig& c) {
                                  c.sample_divisor = d;
                                  c.train.sample_count = 0;
                              }});
    } else if (a.sweep == "stage1-iters") {
        for (const std::size_t n : {500u, 2000u, 5000u})
            points.push_back({std::to_string(n),
                              {{"stage1_iters", n}},
                              [n](siedd::codec::EncodeConfig& c) { c.train.stage1_iters = n; }});
    } else if (a.sweep == "group-size") {
        for (const std::size_t g : {10u, 15u, 20u, 25u, 30u})
            points.push_back({std::to_string(g),
                              {{"group_size", g}},
                              [g](siedd::codec::EncodeConfig& c) { c.train.group_size = g; }});
    } else {  // bits
        for (const std::size_t b : {4u, 5u, 6u, 7u, 8u})
            points.push_back({std::to_string(b),
                              {{"bits", b}},
                              [b](siedd::codec::EncodeConfig& c) { c.quant.bits = b; }});
    }

    std::ofstream jsonl;
    if (!a.output.empty()) {
        jsonl.open(a.output, std::ios::trunc);
        if (!jsonl) throw siedd::IoError("cannot create " + a.output);
    }

    std::printf("sweep=%s corpus=%zux%zux%zu seed=%llu base-iters=%zu\n", a.sweep.c_str(),
                vid.height(), vid.width(), vid.count(),
                static_cast<unsigned long long>(a.seed), a.iters);
    std::printf("%-10s %10s %10s %8s %12s %12s %10s\n", "point", "bpp", "psnr(dB)", "ssim",
                "encode(s)", "decode(fps)", "bytes");

    for (std::size_t i = 0; i < points.size(); ++i) {
        auto cfg = siedd::codec::preset_config("toy");
        cfg.train.stage1_iters = cfg.train.stage2_iters = a.iters;
        cfg.train.seed = a.seed;
        cfg.train.workers = a.workers;
        points[i].apply(cfg);

        const auto tmp = (fs::temp_directory_path() /
                          ("siedd_bench_" + std::to_string(::getpid()) + "_" +
                           std::to_string(i) + ".siedd"))
                             .string();
        const auto res = siedd::codec::encode_video(vid, cfg, tmp);
        const auto& r = res.report;
        std::error_code ec;
        fs::remove(tmp, ec);

        std::printf("%-10s %10.5f %10.3f %8.4f %12.3f %12.2f %10llu\n",
                    points[i].label.c_str(), r.bpp, r.mean_psnr, r.mean_ssim,
                    r.encode_seconds, r.decode_fps,
                    static_cast<unsigned long long>(r.file_bytes));
        std::fflush(stdout);

        if (jsonl) {
            json row = {{"sweep", a.sweep}, {"point", points[i].label}};
            row.update(points[i].fields);
            row["bpp"] = r.bpp;
            row["mean_psnr"] = r.mean_psnr;
            row["mean_ssim"] = r.mean_ssim;
            row["encode_seconds"] = r.encode_seconds;
            row["decode_fps"] = r.decode_fps;
            row["file_bytes"] = r.file_bytes;
            jsonl << row.dump() << "\n";
            jsonl.flush();
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SIEDD: implicit-neural video codec (shared encoder, per-group decoders)"};
    app.require_subcommand(1);

    auto enc = std::make_shared<EncodeArgs>();
    auto* enc_cmd = app.add_subcommand("encode", "Fit a video and write a .siedd stream");
    enc_cmd->add_option("--input", enc->input, "directory of numbered PNG frames")
        ->required()
        ->check(CLI::ExistingDirectory);
    enc_cmd->add_option("--output", enc->output, "output .siedd path")->required();
    enc_cmd->add_option("--preset", enc->preset, "model size preset")
        ->check(CLI::IsMember({"S", "M", "L", "toy"}));
    enc_cmd->add_option("--group-size", enc->group_size, "frames per decoder group");
    enc_cmd->add_option("--samples", enc->samples, "coordinates per training batch");
    enc_cmd->add_option("--iters-stage1", enc->iters1, "shared-encoder iterations");
    enc_cmd->add_option("--iters-stage2", enc->iters2, "per-group decoder iterations");
    enc_cmd->add_option("--patch", enc->patch, "pixels per predicted patch side");
    enc_cmd->add_option("--bits", enc->bits, "quantization bit width (2-8)");
    enc_cmd->add_option("--quant", enc->quant, "weight quantization method")
        ->check(CLI::IsMember({"hqq", "uniform", "none"}));
    enc_cmd->add_option("--workers", enc->workers, "parallel group-training threads");
    enc_cmd->add_option("--seed", enc->seed, "master RNG seed");
    enc_cmd
        ->add_option("--encoder-init", enc->encoder_init,
                     "reuse this stream's encoder frozen and skip stage 1")
        ->check(CLI::ExistingFile);
    enc_cmd->add_flag("--report-prequant", enc->report_prequant,
                      "also report quality before quantization");
    enc_cmd->callback([enc, enc_cmd] { run_encode(*enc, *enc_cmd); });

    auto dec = std::make_shared<DecodeArgs>();
    auto* dec_cmd = app.add_subcommand("decode", "Reconstruct frames from a .siedd stream");
    dec_cmd->add_option("--input", dec->input, "input .siedd path")
        ->required()
        ->check(CLI::ExistingFile);
    dec_cmd->add_option("--output", dec->output, "output PNG directory")->required();
    dec_cmd->add_option("--resolution", dec->resolution,
                        "output size HxW (any patch-aligned size; default: encoded)")
        ->check(ResolutionFormat);
    dec_cmd->add_option("--frames", dec->frames, "inclusive frame range a..b")
        ->check(RangeFormat);
    dec_cmd->add_option("--workers", dec->workers, "parallel group-decoding threads");
    dec_cmd->callback([dec] { run_decode(*dec); });

    auto met = std::make_shared<MetricsArgs>();
    auto* met_cmd = app.add_subcommand("metrics", "PSNR/SSIM between two frame directories");
    met_cmd->add_option("--ref", met->ref, "reference frame directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    met_cmd->add_option("--dist", met->dist, "distorted frame directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    met_cmd->add_flag("--json", met->as_json, "emit the JSON report form");
    met_cmd->callback([met] { run_metrics(*met); });

    auto inf = std::make_shared<std::string>();
    auto* inf_cmd = app.add_subcommand("info", "Dump a stream's header and section sizes");
    inf_cmd->add_option("--input", *inf, "input .siedd path")
        ->required()
        ->check(CLI::ExistingFile);
    inf_cmd->callback([inf] { std::cout << siedd::codec::info_text(*inf); });

    auto ben = std::make_shared<BenchArgs>();
    auto* ben_cmd = app.add_subcommand(
        "bench", "Rate/quality/time sweeps over one encoding parameter");
    ben_cmd->add_option("--sweep", ben->sweep, "parameter to sweep")
        ->required()
        ->check(CLI::IsMember({"sampling", "stage1-iters", "group-size", "bits"}));
    ben_cmd->add_option("--output", ben->output, "JSONL results path (one line per point)");
    ben_cmd->add_option("--input", ben->input_dir, "PNG corpus (default: synthetic)")
        ->check(CLI::ExistingDirectory);
    ben_cmd->add_option("--height", ben->height, "synthetic corpus height");
    ben_cmd->add_option("--width", ben->width, "synthetic corpus width");
    ben_cmd->add_option("--frames", ben->frames, "synthetic corpus frame count");
    ben_cmd->add_option("--seed", ben->seed, "corpus + training seed");
    ben_cmd->add_option("--iters", ben->iters, "base iterations for both stages");
    ben_cmd->add_option("--workers", ben->workers, "parallel group-training threads");
    ben_cmd->callback([ben] { run_bench(*ben); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);  // --help and friends
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
