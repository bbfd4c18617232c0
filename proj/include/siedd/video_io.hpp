#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Frame ingestion/emission as numbered 8-bit RGB PNGs, plus deterministic
// synthetic videos for the test corpus.

namespace siedd::video {

struct Frame {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> rgb;  // H*W*3 row-major, interleaved RGB, values in [0,1]

    Frame() = default;
    Frame(std::size_t h, std::size_t w) : height(h), width(w), rgb(h * w * 3, 0.0f) {}

    float* pixel(std::size_t i, std::size_t j) { return rgb.data() + (i * width + j) * 3; }
    const float* pixel(std::size_t i, std::size_t j) const {
        return rgb.data() + (i * width + j) * 3;
    }
};

struct VideoFrames {
    std::vector<Frame> frames;
    double fps = 30.0;
    std::vector<std::string> source_paths;  // empty for synthetic videos

    std::size_t count() const { return frames.size(); }
    std::size_t height() const { return frames.empty() ? 0 : frames.front().height; }
    std::size_t width() const { return frames.empty() ? 0 : frames.front().width; }
};

// Strict 8-bit RGB PNG reader/writer. Anything else (16-bit, palette,
// grayscale, alpha) is rejected naming the file. Written values are
// round-half-up quantized: byte = floor(clamp(v,0,1)*255 + 0.5).
Frame read_png(const std::string& path);
void write_png(const Frame& frame, const std::string& path);

// Loads every file in `dir` matching `pattern` (printf-style frame numbering,
// e.g. %05d.png), sorted numerically. Indices must be contiguous and all
// frames must share dimensions.
VideoFrames load_frames(const std::string& dir, const std::string& pattern = "%05d.png",
                        double fps = 30.0);

// Writes frames[i] as pattern % (first_index + i) inside `dir` (created if
// missing).
void write_frames(const VideoFrames& video, const std::string& dir,
                  const std::string& pattern = "%05d.png", std::size_t first_index = 0);

// Deterministic analytic test videos.
//   constant:        every pixel = `color`
//   moving-gradient: R = 0.5 + 0.45 sin(2pi j/W + 2pi t/N)
//                    G = 0.5 + 0.45 sin(2pi i/H + 2pi t/N)
//                    B = 0.5 + 0.45 sin(2pi (i/H + j/W) - 2pi t/N)
//   checker-pan:     8px tiles panning (+1,+1) px/frame (temporal period 8),
//                    values 0.1 / 0.9
//   noise:           per-frame uniform [0,1) from (seed, frame)
VideoFrames synth_video(const std::string& kind, std::size_t height, std::size_t width,
                        std::size_t n_frames, std::uint64_t seed, double fps = 30.0,
                        float color = 0.5f);

inline constexpr std::size_t kCheckerTile = 8;

}  // namespace siedd::video
