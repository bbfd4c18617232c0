#include "siedd/metrics.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "siedd/errors.hpp"

namespace siedd::metrics {

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;

void require_same_shape(const video::Frame& a, const video::Frame& b, const char* what) {
    if (a.height != b.height || a.width != b.width)
        throw ShapeError(std::string(what) + ": frame shapes differ (" +
                         std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                         std::to_string(b.width) + "x" + std::to_string(b.height) + ")");
}

std::vector<double> to_luma(const video::Frame& f) {
    std::vector<double> y(f.height * f.width);
    for (std::size_t i = 0; i < y.size(); ++i) {
        const float* px = f.rgb.data() + i * 3;
        y[i] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    }
    return y;
}

std::vector<double> gaussian_kernel() {
    std::vector<double> k(kWindow);
    const double c = (kWindow - 1) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < kWindow; ++i) {
        const double d = i - c;
        k[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Separable valid-region blur: H x W -> (H-10) x (W-10).
std::vector<double> valid_blur(const std::vector<double>& in, std::size_t h, std::size_t w,
                               const std::vector<double>& kernel) {
    const std::size_t ow = w - kWindow + 1;
    const std::size_t oh = h - kWindow + 1;
    std::vector<double> tmp(h * ow);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < kWindow; ++k)
                acc += kernel[k] * in[i * w + j + k];
            tmp[i * ow + j] = acc;
        }
    std::vector<double> out(oh * ow);
    for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < kWindow; ++k)
                acc += kernel[k] * tmp[(i + k) * ow + j];
            out[i * ow + j] = acc;
        }
    return out;
}

}  // namespace

double psnr(const video::Frame& a, const video::Frame& b, double peak) {
    require_same_shape(a, b, "psnr");
    double se = 0.0;
    for (std::size_t i = 0; i < a.rgb.size(); ++i) {
        const double d = static_cast<double>(a.rgb[i]) - static_cast<double>(b.rgb[i]);
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.rgb.size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(10.0 * std::log10(peak * peak / mse), kPsnrCap);
}

double ssim(const video::Frame& a, const video::Frame& b) {
    require_same_shape(a, b, "ssim");
    if (a.height < kWindow || a.width < kWindow)
        throw ConfigError("ssim: frames must be at least " + std::to_string(kWindow) + "x" +
                          std::to_string(kWindow) + ", got " + std::to_string(a.width) + "x" +
                          std::to_string(a.height));
    const auto ya = to_luma(a);
    const auto yb = to_luma(b);
    const std::size_t h = a.height, w = a.width;
    const auto kernel = gaussian_kernel();

    std::vector<double> aa(ya.size()), bb(ya.size()), ab(ya.size());
    for (std::size_t i = 0; i < ya.size(); ++i) {
        aa[i] = ya[i] * ya[i];
        bb[i] = yb[i] * yb[i];
        ab[i] = ya[i] * yb[i];
    }
    const auto mu_a = valid_blur(ya, h, w, kernel);
    const auto mu_b = valid_blur(yb, h, w, kernel);
    const auto e_aa = valid_blur(aa, h, w, kernel);
    const auto e_bb = valid_blur(bb, h, w, kernel);
    const auto e_ab = valid_blur(ab, h, w, kernel);

    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = e_aa[i] - mu_a[i] * mu_a[i];
        const double vb = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
        sum += num / den;
    }
    return sum / static_cast<double>(mu_a.size());
}

double bpp(std::uint64_t file_bits, std::size_t n_frames, std::size_t height,
           std::size_t width) {
    if (n_frames == 0 || height == 0 || width == 0)
        throw ConfigError("bpp: frame count and dimensions must be positive");
    return static_cast<double>(file_bits) /
           (static_cast<double>(n_frames) * static_cast<double>(height) *
            static_cast<double>(width));
}

RdReport compare(const video::VideoFrames& ref, const video::VideoFrames& dist) {
    if (ref.count() != dist.count())
        throw ShapeError("compare: frame counts differ (" + std::to_string(ref.count()) +
                         " vs " + std::to_string(dist.count()) + ")");
    if (ref.count() == 0)
        throw ConfigError("compare: no frames");
    RdReport r;
    r.n_frames = ref.count();
    r.height = ref.height();
    r.width = ref.width();
    double psum = 0.0, ssum = 0.0;
    for (std::size_t i = 0; i < ref.count(); ++i) {
        r.frame_psnr.push_back(psnr(ref.frames[i], dist.frames[i]));
        r.frame_ssim.push_back(ssim(ref.frames[i], dist.frames[i]));
        psum += r.frame_psnr.back();
        ssum += r.frame_ssim.back();
    }
    r.mean_psnr = psum / static_cast<double>(ref.count());
    r.mean_ssim = ssum / static_cast<double>(ref.count());
    return r;
}

std::string RdReport::to_text() const {
    std::ostringstream os;
    os.precision(6);
    for (std::size_t i = 0; i < frame_psnr.size(); ++i)
        os << "frame=" << i << " psnr=" << frame_psnr[i] << " ssim=" << frame_ssim[i] << "\n";
    os << "mean_psnr=" << mean_psnr << " mean_ssim=" << mean_ssim << "\n";
    os << "bpp=" << bpp << " file_bytes=" << file_bytes << "\n";
    os << "encode_seconds=" << encode_seconds << " decode_fps=" << decode_fps << "\n";
    return os.str();
}

std::string RdReport::to_json() const {
    nlohmann::json j;
    j["n_frames"] = n_frames;
    j["height"] = height;
    j["width"] = width;
    j["mean_psnr"] = mean_psnr;
    j["mean_ssim"] = mean_ssim;
    j["bpp"] = bpp;
    j["file_bytes"] = file_bytes;
    j["encode_seconds"] = encode_seconds;
    j["decode_fps"] = decode_fps;
    auto frames = nlohmann::json::array();
    for (std::size_t i = 0; i < frame_psnr.size(); ++i)
        frames.push_back({{"index", i}, {"psnr", frame_psnr[i]}, {"ssim", frame_ssim[i]}});
    j["frames"] = frames;
    return j.dump(2);
}

}  // namespace siedd::metrics
