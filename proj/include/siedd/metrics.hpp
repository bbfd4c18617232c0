#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "siedd/video_io.hpp"

// Rate-distortion evaluation: PSNR, SSIM (on BT.601 luma) and bits-per-pixel.
// All accumulation is in double; frames are float [0,1].

namespace siedd::metrics {

// 10*log10(peak^2 / MSE), capped at 100 dB (the cap doubles as the MSE=0
// sentinel so means stay finite).
double psnr(const video::Frame& a, const video::Frame& b, double peak = 1.0);

inline constexpr double kPsnrCap = 100.0;

// Standard single-scale SSIM: BT.601 luma, 11x11 Gaussian window sigma=1.5,
// C1=(0.01*peak)^2, C2=(0.03*peak)^2, mean over valid (unpadded) windows.
double ssim(const video::Frame& a, const video::Frame& b);

// file_bits / (N*H*W)
double bpp(std::uint64_t file_bits, std::size_t n_frames, std::size_t height,
           std::size_t width);

struct RdReport {
    std::vector<double> frame_psnr;
    std::vector<double> frame_ssim;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double bpp = 0.0;
    double encode_seconds = 0.0;
    double decode_fps = 0.0;
    std::uint64_t file_bytes = 0;
    std::size_t n_frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    // One line per frame plus summary lines; schema documented in
    // docs/metrics.md alongside the JSON form.
    std::string to_text() const;
    std::string to_json() const;
};

// Per-frame PSNR/SSIM of dist against ref plus their means. Rate/timing
// fields are left zero for the caller to fill.
RdReport compare(const video::VideoFrames& ref, const video::VideoFrames& dist);

}  // namespace siedd::metrics
