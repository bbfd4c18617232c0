#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "siedd/model.hpp"
#include "siedd/video_io.hpp"

// Two-stage fitting: stage 1 trains encoder + anchor decoder jointly on the
// anchor frames; stage 2 freezes the encoder and fits one decoder per frame
// group, embarrassingly parallel with per-group seeding so results are
// bitwise-independent of the worker count.

namespace siedd::train {

struct TrainConfig {
    std::size_t group_size = 20;   // N_g, frames per decoder
    std::size_t n_anchors = 0;     // N_s; 0 means "= group_size"
    std::size_t sample_count = 0;  // C; 0 means default_sample_count(H, W)
    std::size_t stage1_iters = 20000;
    std::size_t stage2_iters = 20000;
    float lr = 1e-3f;
    float beta = 0.9f;   // interpolation weight for the y evaluation point
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::size_t log_every = 500;       // stderr progress cadence; 0 = silent
    std::size_t latent_cache_mb = 256; // stage-2 full-grid latent cache budget

    std::size_t anchors(std::size_t) const;  // resolved N_s (capped at N)
    std::size_t samples(std::size_t height, std::size_t width) const;  // resolved C
    void validate() const;
};

// Uniformly spaced anchors: index k = floor(k*N/N_s).
std::vector<std::uint32_t> select_anchors(std::size_t n_frames, std::size_t n_anchors);

// Mean squared error over all elements; fills d_pred = 2(pred-target)/n.
// The reduction is a sequential double accumulation (deterministic).
double l2_loss(const Tensor2D& pred, const Tensor2D& target, Tensor2D& d_pred);

// Schedule-free AdamW over externally owned parameter/gradient buffers.
// The parameter buffers hold the evaluation point y between steps; finalize()
// writes the averaged iterate x back into them.
class SfAdamW {
  public:
    SfAdamW(float lr, float beta, float beta2, float eps, float weight_decay);

    // Registers a slab; copies the current values as the initial z and x.
    // Both pointers must stay valid for the optimizer's lifetime.
    void attach(float* params, const float* grads, std::size_t n);

    void step();      // consumes the registered gradients; advances t
    void finalize();  // params <- x

    // Probe support: write the averaged iterate x into params (what finalize
    // would produce), stashing the current evaluation point so training can
    // resume unperturbed after the probe.
    void materialize_average();
    void restore_evaluation_point();

    std::size_t t() const { return t_; }

  private:
    struct Slab {
        float* params;
        const float* grads;
        std::size_t n;
        std::vector<float> z, x, v;
    };
    std::vector<Slab> slabs_;
    std::vector<std::vector<float>> stash_;  // evaluation points during a probe
    float lr_, beta_, beta2_, eps_, weight_decay_;
    std::size_t t_ = 0;
};

// Called after every optimizer step; return true to stop training early
// (used by convergence probes). iter counts from 1.
using StepHook = std::function<bool(std::size_t iter, double loss)>;

// Fits encoder + anchor decoder (model.groups[0]) for cfg.stage1_iters steps
// on the anchor frames. One coordinate batch per step, shared by all anchor
// heads. Returns the per-iteration loss trace.
std::vector<double> train_stage1(model::SieddModel& model, const video::VideoFrames& video,
                                 const TrainConfig& cfg);

// Fits one group decoder against the frozen encoder. latent_full, if given,
// must hold the full-grid encoder output (rows = grid cells); training then
// gathers cached rows instead of re-running the encoder, which is bitwise
// identical by row independence. The model is never written.
std::vector<double> train_stage2_group(const model::SieddModel& model,
                                       model::GroupDecoder& dec, std::size_t group_index,
                                       const video::VideoFrames& video,
                                       const TrainConfig& cfg,
                                       const Tensor2D* latent_full = nullptr,
                                       const StepHook& hook = {});

// Full-grid encoder latent, evaluated in bounded row slabs so the transient
// positional-encoding buffer stays small.
Tensor2D compute_latent_cache(const model::SieddModel& model, const coords::CoordGrid& grid);

// How stage 2 seeds each group decoder: warm-started from the stage-1 anchor
// decoder (the normal path), or fresh SIREN draws per group (encoder
// transfer, where no anchor decoder exists, and init ablations).
enum class GroupInit { FromAnchor, Random };

// Stage 2 over all frame groups: partitions frames, initializes each decoder
// per `init`, trains groups across cfg.workers threads, and replaces
// model.groups with the trained decoders. FromAnchor consumes the stage-1
// anchor decoder (model.groups must hold exactly it); Random requires no
// prior groups. Bitwise-independent of worker count.
void train_all_groups(model::SieddModel& model, const video::VideoFrames& video,
                      const TrainConfig& cfg, GroupInit init = GroupInit::FromAnchor);

}  // namespace siedd::train
