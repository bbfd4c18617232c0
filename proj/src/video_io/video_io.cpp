#include "siedd/video_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <regex>

#include "siedd/errors.hpp"
#include "siedd/rng.hpp"

namespace siedd::video {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
    std::FILE* fp;
    ~FileCloser() {
        if (fp) std::fclose(fp);
    }
};

std::string color_type_name(int ct) {
    switch (ct) {
        case PNG_COLOR_TYPE_GRAY: return "grayscale";
        case PNG_COLOR_TYPE_GRAY_ALPHA: return "grayscale+alpha";
        case PNG_COLOR_TYPE_PALETTE: return "palette";
        case PNG_COLOR_TYPE_RGB: return "RGB";
        case PNG_COLOR_TYPE_RGB_ALPHA: return "RGBA";
        default: return "type " + std::to_string(ct);
    }
}

// printf-style frame pattern -> regex capturing the frame number.
std::regex pattern_to_regex(const std::string& pattern) {
    std::string re;
    std::size_t fields = 0;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        const char ch = pattern[i];
        if (ch == '%') {
            std::size_t j = i + 1;
            while (j < pattern.size() && (pattern[j] == '0' || std::isdigit(pattern[j])))
                ++j;
            if (j >= pattern.size() || pattern[j] != 'd')
                throw ConfigError("frame pattern must contain a single %d/%0Nd field: " + pattern);
            re += "(\\d+)";
            ++fields;
            i = j;
        } else {
            if (std::string(".^$|()[]{}*+?\\").find(ch) != std::string::npos)
                re += '\\';
            re += ch;
        }
    }
    if (fields != 1)
        throw ConfigError("frame pattern must contain a single %d/%0Nd field: " + pattern);
    return std::regex(re);
}

std::string format_name(const std::string& pattern, std::size_t index) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), pattern.c_str(), static_cast<int>(index));
    return buf;
}

}  // namespace

Frame read_png(const std::string& path) {
    FileCloser file{std::fopen(path.c_str(), "rb")};
    if (!file.fp)
        throw IoError("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        throw IoError("libpng allocation failure reading " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng allocation failure reading " + path);
    }

    // libpng reports errors by longjmp back here; clean up and rethrow as ours.
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("libpng failed to read " + path);
    }

    png_init_io(png, file.fp);
    png_read_info(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    const std::size_t width = png_get_image_width(png, info);
    const std::size_t height = png_get_image_height(png, info);

    if (bit_depth != 8 || color_type != PNG_COLOR_TYPE_RGB) {
        const std::string what = std::to_string(bit_depth) + "-bit " + color_type_name(color_type);
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(path + ": only 8-bit RGB PNGs are supported, got " + what);
    }

    std::vector<png_byte> rowbuf(width * 3);
    Frame frame(height, width);
    for (std::size_t i = 0; i < height; ++i) {
        png_read_row(png, rowbuf.data(), nullptr);
        float* out = frame.rgb.data() + i * width * 3;
        for (std::size_t k = 0; k < width * 3; ++k)
            out[k] = static_cast<float>(rowbuf[k]) / 255.0f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return frame;
}

void write_png(const Frame& frame, const std::string& path) {
    if (frame.height == 0 || frame.width == 0 || frame.rgb.size() != frame.height * frame.width * 3)
        throw ShapeError("write_png: malformed frame for " + path);

    FileCloser file{std::fopen(path.c_str(), "wb")};
    if (!file.fp)
        throw IoError("cannot create " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png)
        throw IoError("libpng allocation failure writing " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng allocation failure writing " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng failed to write " + path);
    }

    png_init_io(png, file.fp);
    png_set_IHDR(png, info, frame.width, frame.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> rowbuf(frame.width * 3);
    for (std::size_t i = 0; i < frame.height; ++i) {
        const float* in = frame.rgb.data() + i * frame.width * 3;
        for (std::size_t k = 0; k < frame.width * 3; ++k) {
            const double v = std::clamp(static_cast<double>(in[k]), 0.0, 1.0);
            rowbuf[k] = static_cast<png_byte>(std::floor(v * 255.0 + 0.5));
        }
        png_write_row(png, rowbuf.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

VideoFrames load_frames(const std::string& dir, const std::string& pattern, double fps) {
    if (!fs::is_directory(dir))
        throw IoError("not a directory: " + dir);
    const std::regex re = pattern_to_regex(pattern);

    std::vector<std::pair<long, std::string>> numbered;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        std::smatch m;
        if (std::regex_match(name, m, re))
            numbered.emplace_back(std::stol(m[1].str()), entry.path().string());
    }
    if (numbered.empty())
        throw IoError("no frames matching pattern '" + pattern + "' in " + dir);
    std::sort(numbered.begin(), numbered.end());
    for (std::size_t i = 1; i < numbered.size(); ++i)
        if (numbered[i].first != numbered[0].first + static_cast<long>(i))
            throw IoError("missing frame index " + std::to_string(numbered[0].first + i) +
                          " between " + numbered[i - 1].second + " and " + numbered[i].second);

    VideoFrames video;
    video.fps = fps;
    video.frames.reserve(numbered.size());
    for (const auto& [index, path] : numbered) {
        Frame f = read_png(path);
        if (!video.frames.empty() &&
            (f.height != video.height() || f.width != video.width())) {
            throw IoError("inconsistent frame sizes: " + video.source_paths.front() + " is " +
                          std::to_string(video.width()) + "x" + std::to_string(video.height()) +
                          " but " + path + " is " + std::to_string(f.width) + "x" +
                          std::to_string(f.height));
        }
        video.frames.push_back(std::move(f));
        video.source_paths.push_back(path);
    }
    return video;
}

void write_frames(const VideoFrames& video, const std::string& dir,
                  const std::string& pattern, std::size_t first_index) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < video.frames.size(); ++i) {
        const std::string name = format_name(pattern, first_index + i);
        write_png(video.frames[i], (fs::path(dir) / name).string());
    }
}

VideoFrames synth_video(const std::string& kind, std::size_t height, std::size_t width,
                        std::size_t n_frames, std::uint64_t seed, double fps, float color) {
    if (height == 0 || width == 0 || n_frames == 0)
        throw ConfigError("synth_video: dimensions and frame count must be > 0");
    VideoFrames video;
    video.fps = fps;
    video.frames.reserve(n_frames);

    const double two_pi = 2.0 * 3.14159265358979323846;
    for (std::size_t t = 0; t < n_frames; ++t) {
        Frame f(height, width);
        if (kind == "constant") {
            std::fill(f.rgb.begin(), f.rgb.end(), color);
        } else if (kind == "moving-gradient") {
            const double phase = two_pi * static_cast<double>(t) / n_frames;
            for (std::size_t i = 0; i < height; ++i)
                for (std::size_t j = 0; j < width; ++j) {
                    const double fx = static_cast<double>(j) / width;
                    const double fy = static_cast<double>(i) / height;
                    float* px = f.pixel(i, j);
                    px[0] = static_cast<float>(0.5 + 0.45 * std::sin(two_pi * fx + phase));
                    px[1] = static_cast<float>(0.5 + 0.45 * std::sin(two_pi * fy + phase));
                    px[2] = static_cast<float>(0.5 + 0.45 * std::sin(two_pi * (fy + fx) - phase));
                }
        } else if (kind == "checker-pan") {
            for (std::size_t i = 0; i < height; ++i)
                for (std::size_t j = 0; j < width; ++j) {
                    const std::size_t tile =
                        ((i + t) / kCheckerTile + (j + t) / kCheckerTile) & 1;
                    const float v = tile ? 0.9f : 0.1f;
                    float* px = f.pixel(i, j);
                    px[0] = px[1] = px[2] = v;
                }
        } else if (kind == "noise") {
            Rng rng(mix_seed(seed, t));
            for (auto& v : f.rgb) v = rng.uniform(0.0f, 1.0f);
        } else {
            throw ConfigError("synth_video: unknown kind '" + kind +
                              "' (constant|moving-gradient|checker-pan|noise)");
        }
        video.frames.push_back(std::move(f));
    }
    return video;
}

}  // namespace siedd::video
