// Materializes the deterministic synthetic test videos as PNG directories so
// shell-level tests and benchmark reproductions have a corpus to feed the
// main binary. Not part of the user-facing CLI surface.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>

#include "siedd/video_io.hpp"

int main(int argc, char** argv) {
    if (argc != 7 && argc != 8) {
        std::fprintf(stderr,
                     "usage: %s <constant|moving-gradient|checker-pan|noise> "
                     "<height> <width> <n_frames> <seed> <out_dir> [fps]\n",
                     argv[0]);
        return 2;
    }
    try {
        const std::string kind = argv[1];
        const auto h = std::strtoull(argv[2], nullptr, 10);
        const auto w = std::strtoull(argv[3], nullptr, 10);
        const auto n = std::strtoull(argv[4], nullptr, 10);
        const auto seed = std::strtoull(argv[5], nullptr, 10);
        const double fps = argc == 8 ? std::strtod(argv[7], nullptr) : 30.0;
        const auto video = siedd::video::synth_video(kind, h, w, n, seed, fps);
        siedd::video::write_frames(video, argv[6]);
        std::printf("wrote %llu %llux%llu frames to %s\n",
                    static_cast<unsigned long long>(n), static_cast<unsigned long long>(h),
                    static_cast<unsigned long long>(w), argv[6]);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
