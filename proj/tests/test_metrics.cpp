#include <doctest.h>

#include <cmath>
#include <vector>

#include <json.hpp>

#include "siedd/errors.hpp"
#include "siedd/metrics.hpp"
#include "siedd/rng.hpp"

using namespace siedd;
using video::Frame;

namespace {

Frame uniform_frame(std::size_t h, std::size_t w, float v) {
    Frame f(h, w);
    std::fill(f.rgb.begin(), f.rgb.end(), v);
    return f;
}

Frame random_frame(std::size_t h, std::size_t w, std::uint64_t seed) {
    Frame f(h, w);
    Rng rng(seed);
    for (auto& v : f.rgb) v = rng.uniform(0.0f, 1.0f);
    return f;
}

// Direct (non-separable) windowed SSIM in double; the independent oracle for
// the production separable implementation.
double ssim_direct(const Frame& a, const Frame& b) {
    const std::size_t W = 11;
    const double sigma = 1.5;
    std::vector<double> ya(a.height * a.width), yb(ya.size());
    for (std::size_t i = 0; i < ya.size(); ++i) {
        ya[i] = 0.299 * a.rgb[i * 3] + 0.587 * a.rgb[i * 3 + 1] + 0.114 * a.rgb[i * 3 + 2];
        yb[i] = 0.299 * b.rgb[i * 3] + 0.587 * b.rgb[i * 3 + 1] + 0.114 * b.rgb[i * 3 + 2];
    }
    std::vector<double> k2(W * W);
    double ksum = 0.0;
    for (std::size_t i = 0; i < W; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            const double di = double(i) - 5.0, dj = double(j) - 5.0;
            k2[i * W + j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
            ksum += k2[i * W + j];
        }
    for (auto& v : k2) v /= ksum;

    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i + W <= a.height; ++i)
        for (std::size_t j = 0; j + W <= a.width; ++j) {
            double mu1 = 0, mu2 = 0, e11 = 0, e22 = 0, e12 = 0;
            for (std::size_t u = 0; u < W; ++u)
                for (std::size_t v = 0; v < W; ++v) {
                    const double w = k2[u * W + v];
                    const double x = ya[(i + u) * a.width + j + v];
                    const double y = yb[(i + u) * a.width + j + v];
                    mu1 += w * x;
                    mu2 += w * y;
                    e11 += w * x * x;
                    e22 += w * y * y;
                    e12 += w * x * y;
                }
            const double v1 = e11 - mu1 * mu1, v2 = e22 - mu2 * mu2, cov = e12 - mu1 * mu2;
            total += ((2 * mu1 * mu2 + c1) * (2 * cov + c2)) /
                     ((mu1 * mu1 + mu2 * mu2 + c1) * (v1 + v2 + c2));
            ++count;
        }
    return total / double(count);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("psnr of identical frames hits the 100 dB cap") {
    Frame f = random_frame(8, 8, 1);
    CHECK(metrics::psnr(f, f) == metrics::kPsnrCap);
    // Near-identical frames also cap rather than exceeding 100.
    Frame g = f;
    g.rgb[0] += 1e-6f;
    CHECK(metrics::psnr(f, g) == metrics::kPsnrCap);
}

TEST_CASE("uniform error of MSE 0.01 gives exactly 20 dB") {
    Frame a = uniform_frame(16, 16, 0.3f);
    Frame b = uniform_frame(16, 16, 0.4f);
    // 0.3f/0.4f round to doubles a hair apart, so the gap from exactly 20 dB
    // is the float representation error, ~3e-8 relative.
    CHECK(metrics::psnr(a, b) == doctest::Approx(20.0).epsilon(1e-6));
    // Halving peak shifts by 20*log10(2).
    CHECK(metrics::psnr(a, b, 0.5) ==
          doctest::Approx(20.0 - 20.0 * std::log10(2.0)).epsilon(1e-6));
}

TEST_CASE("psnr matches a scalar double oracle and is symmetric") {
    Frame a = random_frame(12, 7, 2);
    Frame b = random_frame(12, 7, 3);
    double se = 0.0;
    for (std::size_t i = 0; i < a.rgb.size(); ++i) {
        const double d = double(a.rgb[i]) - double(b.rgb[i]);
        se += d * d;
    }
    const double want = 10.0 * std::log10(1.0 / (se / double(a.rgb.size())));
    CHECK(metrics::psnr(a, b) == doctest::Approx(want).epsilon(1e-9));
    CHECK(metrics::psnr(a, b) == metrics::psnr(b, a));
}

TEST_CASE("psnr strictly decreases with noise amplitude") {
    Frame ref = uniform_frame(16, 16, 0.5f);
    double prev = 1e9;
    for (float amp : {0.01f, 0.05f, 0.2f}) {
        Frame noisy = ref;
        Rng rng(4);
        for (auto& v : noisy.rgb) v += amp * (rng.uniform(-1.0f, 1.0f));
        const double p = metrics::psnr(ref, noisy);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("psnr rejects mismatched shapes") {
    CHECK_THROWS_AS(metrics::psnr(uniform_frame(4, 4, 0), uniform_frame(4, 5, 0)),
                    ShapeError);
}

TEST_CASE("ssim of identical frames is exactly 1") {
    Frame f = random_frame(16, 20, 5);
    CHECK(metrics::ssim(f, f) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("inverted checkerboard has strongly negative ssim") {
    Frame a(16, 16), b(16, 16);
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) {
            const float v = ((i + j) & 1) ? 1.0f : 0.0f;
            for (int ch = 0; ch < 3; ++ch) {
                a.pixel(i, j)[ch] = v;
                b.pixel(i, j)[ch] = 1.0f - v;
            }
        }
    CHECK(metrics::ssim(a, b) < -0.5);
}

TEST_CASE("ssim matches the direct-window oracle") {
    Frame a = random_frame(16, 16, 6);
    Frame b = a;
    Rng rng(7);
    for (auto& v : b.rgb) v = std::clamp(v + 0.1f * rng.uniform(-1.0f, 1.0f), 0.0f, 1.0f);
    CHECK(metrics::ssim(a, b) == doctest::Approx(ssim_direct(a, b)).epsilon(1e-6));

    // Also on dissimilar content and a non-square shape.
    Frame c = random_frame(13, 24, 8);
    Frame d = random_frame(13, 24, 9);
    CHECK(metrics::ssim(c, d) == doctest::Approx(ssim_direct(c, d)).epsilon(1e-6));
}

TEST_CASE("ssim demands at least one full window") {
    CHECK_THROWS_AS(metrics::ssim(uniform_frame(10, 16, 0.5f), uniform_frame(10, 16, 0.5f)),
                    ConfigError);
    CHECK_NOTHROW(metrics::ssim(uniform_frame(11, 11, 0.5f), uniform_frame(11, 11, 0.5f)));
}

TEST_CASE("bpp is the exact rational") {
    CHECK(metrics::bpp(1, 1, 1, 1) == 1.0);
    CHECK(metrics::bpp(8ULL * 1024, 1, 32, 32) == 8.0);
    // 600 HD frames at the reference rate of 0.297 bpp is about a 46.2 MB
    // file; inverting the formula must reproduce the rate.
    const double bits = 0.297 * 600.0 * 1920.0 * 1080.0;
    CHECK(bits / 8.0 == doctest::Approx(46.2e6).epsilon(0.01));
    CHECK(metrics::bpp(std::uint64_t(bits), 600, 1080, 1920) ==
          doctest::Approx(0.297).epsilon(1e-6));
    CHECK_THROWS_AS(metrics::bpp(1, 0, 1, 1), ConfigError);
}

TEST_CASE("compare aggregates per-frame metrics into means") {
    video::VideoFrames ref, dist;
    ref.frames = {uniform_frame(16, 16, 0.3f), uniform_frame(16, 16, 0.5f)};
    dist.frames = {uniform_frame(16, 16, 0.4f), uniform_frame(16, 16, 0.5f)};
    auto r = metrics::compare(ref, dist);
    REQUIRE(r.frame_psnr.size() == 2);
    CHECK(r.frame_psnr[0] == doctest::Approx(20.0));
    CHECK(r.frame_psnr[1] == metrics::kPsnrCap);
    CHECK(r.mean_psnr == doctest::Approx((r.frame_psnr[0] + r.frame_psnr[1]) / 2.0));
    CHECK(r.frame_ssim[1] == doctest::Approx(1.0));
    CHECK(r.n_frames == 2);

    video::VideoFrames shorter;
    shorter.frames = {uniform_frame(16, 16, 0.3f)};
    CHECK_THROWS_AS(metrics::compare(ref, shorter), ShapeError);
}

TEST_CASE("report serializations carry the documented fields") {
    metrics::RdReport r;
    r.frame_psnr = {30.0, 32.0};
    r.frame_ssim = {0.9, 0.95};
    r.mean_psnr = 31.0;
    r.mean_ssim = 0.925;
    r.bpp = 0.125;
    r.file_bytes = 1000;
    r.n_frames = 2;
    r.height = 16;
    r.width = 16;

    const std::string text = r.to_text();
    CHECK(text.find("frame=0 psnr=30 ssim=0.9") != std::string::npos);
    CHECK(text.find("mean_psnr=31") != std::string::npos);
    CHECK(text.find("bpp=0.125") != std::string::npos);

    const auto j = nlohmann::json::parse(r.to_json());
    CHECK(j["mean_psnr"] == 31.0);
    CHECK(j["frames"].size() == 2);
    CHECK(j["frames"][1]["psnr"] == 32.0);
    CHECK(j["bpp"] == 0.125);
}

}  // TEST_SUITE
