#include "siedd/trainer.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <thread>

#include "siedd/errors.hpp"
#include "siedd/kernels.hpp"
#include "siedd/rng.hpp"

namespace siedd::train {

namespace {

// Seed streams. Model init owns streams 0 (encoder) and 1 (anchor decoder);
// samplers and per-group random init live far away so no context ever
// replays another's draws.
constexpr std::uint64_t kStage1SamplerStream = 2;
constexpr std::uint64_t kStage2SamplerBase = 1ULL << 32;
constexpr std::uint64_t kRandomInitBase = 2ULL << 32;

std::mutex g_log_mutex;

void log_progress(std::size_t stage, std::size_t group, std::size_t iter, double loss) {
    char line[128];
    std::snprintf(line, sizeof(line), "stage=%zu group=%zu iter=%zu loss=%.6g\n", stage,
                  group, iter, loss);
    std::lock_guard<std::mutex> lock(g_log_mutex);
    std::fputs(line, stderr);
}

void zero(nn::MlpGrads& g) {
    for (auto& dw : g.dw) dw.fill(0.0f);
    for (auto& db : g.db) std::fill(db.begin(), db.end(), 0.0f);
}

void zero(nn::BatchLinearGrads& g) {
    for (auto& dw : g.dw) dw.fill(0.0f);
    for (auto& db : g.db) std::fill(db.begin(), db.end(), 0.0f);
}

void attach_mlp(SfAdamW& opt, nn::Mlp& mlp, nn::MlpGrads& grads) {
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
        opt.attach(mlp.layers[i].w.data(), grads.dw[i].data(), mlp.layers[i].w.size());
        opt.attach(mlp.layers[i].b.data(), grads.db[i].data(), mlp.layers[i].b.size());
    }
}

void attach_heads(SfAdamW& opt, nn::BatchLinearLayer& heads, nn::BatchLinearGrads& grads) {
    for (std::size_t h = 0; h < heads.n_heads(); ++h) {
        opt.attach(heads.w[h].data(), grads.dw[h].data(), heads.w[h].size());
        opt.attach(heads.b[h].data(), grads.db[h].data(), heads.b[h].size());
    }
}

Tensor2D gather_rows(const Tensor2D& src, const std::vector<std::uint32_t>& rows) {
    Tensor2D out(rows.size(), src.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::memcpy(out.row(i), src.row(rows[i]), sizeof(float) * src.cols());
    return out;
}

void check_video(const model::SieddModel& model, const video::VideoFrames& video) {
    if (video.count() != model.meta.n_frames || video.height() != model.meta.height ||
        video.width() != model.meta.width)
        throw ShapeError("training video does not match model metadata (" +
                         std::to_string(video.count()) + " frames " +
                         std::to_string(video.width()) + "x" + std::to_string(video.height()) +
                         " vs " + std::to_string(model.meta.n_frames) + " frames " +
                         std::to_string(model.meta.width) + "x" +
                         std::to_string(model.meta.height) + ")");
}

// Shared per-iteration body for both stages: forward through trunk + heads on
// a coordinate batch, L2 against the gathered targets, backward into the
// provided gradient buffers. Returns the loss; d_latent is left for the
// caller (stage 1 pushes it through the encoder, stage 2 drops it).
struct GroupStep {
    const coords::CoordGrid& grid;
    const video::VideoFrames& video;
    model::GroupDecoder& dec;
    nn::MlpGrads& trunk_grads;
    nn::BatchLinearGrads& head_grads;

    double run(const Tensor2D& latent, const std::vector<std::uint32_t>& batch,
               Tensor2D* d_latent) {
        const std::size_t B = batch.size();
        const std::size_t n_heads = dec.heads.n_heads();
        const std::size_t out_ch = dec.heads.out_dim();

        nn::GradTape trunk_tape;
        Tensor2D features = nn::mlp_forward(dec.trunk, latent, &trunk_tape);
        Tensor2D pred = nn::batch_linear_forward(dec.heads, features);

        Tensor2D target(n_heads * B, out_ch);
        for (std::size_t h = 0; h < n_heads; ++h)
            model::gather_cells(video.frames[dec.frames[h]], grid, batch.data(), B,
                                target.row(h * B));

        Tensor2D d_pred(pred.rows(), pred.cols());
        const double loss = l2_loss(pred, target, d_pred);

        zero(trunk_grads);
        zero(head_grads);
        Tensor2D d_features = nn::batch_linear_backward(dec.heads, features, d_pred, head_grads);
        Tensor2D d_lat = nn::mlp_backward(dec.trunk, trunk_tape, d_features, trunk_grads);
        if (d_latent) *d_latent = std::move(d_lat);
        return loss;
    }
};

}  // namespace

std::size_t TrainConfig::anchors(std::size_t n_frames) const {
    if (n_anchors != 0) return n_anchors;  // explicit values validated downstream
    return std::min(group_size, n_frames);
}

std::size_t TrainConfig::samples(std::size_t height, std::size_t width) const {
    return sample_count != 0 ? sample_count : coords::default_sample_count(height, width);
}

void TrainConfig::validate() const {
    if (group_size == 0) throw ConfigError("group size N_g must be >= 1");
    if (!(lr > 0.0f)) throw ConfigError("learning rate must be positive");
    if (!(beta >= 0.0f && beta < 1.0f)) throw ConfigError("beta must be in [0, 1)");
    if (!(beta2 >= 0.0f && beta2 < 1.0f)) throw ConfigError("beta2 must be in [0, 1)");
    if (!(eps > 0.0f)) throw ConfigError("optimizer eps must be positive");
    if (workers == 0) throw ConfigError("worker count must be >= 1");
}

std::vector<std::uint32_t> select_anchors(std::size_t n_frames, std::size_t n_anchors) {
    if (n_anchors == 0) throw ConfigError("anchor count N_s must be >= 1");
    if (n_anchors > n_frames)
        throw ConfigError("anchor count " + std::to_string(n_anchors) + " exceeds " +
                          std::to_string(n_frames) + " frames");
    std::vector<std::uint32_t> anchors(n_anchors);
    for (std::size_t k = 0; k < n_anchors; ++k)
        anchors[k] = static_cast<std::uint32_t>(k * n_frames / n_anchors);
    return anchors;
}

double l2_loss(const Tensor2D& pred, const Tensor2D& target, Tensor2D& d_pred) {
    if (!pred.same_shape(target))
        throw ShapeError("l2_loss: pred " + std::to_string(pred.rows()) + "x" +
                         std::to_string(pred.cols()) + " vs target " +
                         std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
    if (!pred.same_shape(d_pred)) d_pred = Tensor2D(pred.rows(), pred.cols());

    const std::size_t n = pred.size();
    double se = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = double(pred.data()[i]) - double(target.data()[i]);
        se += d * d;
    }
    const float scale = static_cast<float>(2.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        d_pred.data()[i] = scale * (pred.data()[i] - target.data()[i]);
    return se / static_cast<double>(n);
}

SfAdamW::SfAdamW(float lr, float beta, float beta2, float eps, float weight_decay)
    : lr_(lr), beta_(beta), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void SfAdamW::attach(float* params, const float* grads, std::size_t n) {
    if (t_ != 0) throw StateError("SfAdamW: cannot attach parameters after stepping");
    Slab s;
    s.params = params;
    s.grads = grads;
    s.n = n;
    s.z.assign(params, params + n);
    s.x.assign(params, params + n);
    s.v.assign(n, 0.0f);
    slabs_.push_back(std::move(s));
}

void SfAdamW::step() {
    ++t_;
    kernels::SfAdamWStep s{};
    s.lr = lr_;
    s.beta2 = beta2_;
    s.one_minus_beta2 = 1.0f - beta2_;
    s.inv_bias_corr = static_cast<float>(
        1.0 / (1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_))));
    s.eps = eps_;
    s.weight_decay = weight_decay_;
    s.c_t = 1.0f / static_cast<float>(t_);
    s.one_minus_ct = 1.0f - s.c_t;

    const auto& ops = kernels::active();
    for (auto& slab : slabs_) {
        ops.sf_adamw(slab.z.data(), slab.x.data(), slab.v.data(), slab.grads, slab.params,
                     slab.n, s);
        // Next evaluation point y = (1-beta) z + beta x, written in place.
        ops.lerp(slab.params, slab.z.data(), slab.x.data(), beta_, slab.n);
    }
}

void SfAdamW::finalize() {
    for (auto& slab : slabs_)
        std::memcpy(slab.params, slab.x.data(), sizeof(float) * slab.n);
}

void SfAdamW::materialize_average() {
    if (!stash_.empty()) throw StateError("SfAdamW: probe already active");
    stash_.reserve(slabs_.size());
    for (auto& slab : slabs_) {
        stash_.emplace_back(slab.params, slab.params + slab.n);
        std::memcpy(slab.params, slab.x.data(), sizeof(float) * slab.n);
    }
}

void SfAdamW::restore_evaluation_point() {
    if (stash_.size() != slabs_.size()) throw StateError("SfAdamW: no probe to restore");
    for (std::size_t i = 0; i < slabs_.size(); ++i)
        std::memcpy(slabs_[i].params, stash_[i].data(), sizeof(float) * slabs_[i].n);
    stash_.clear();
}

std::vector<double> train_stage1(model::SieddModel& model, const video::VideoFrames& video,
                                 const TrainConfig& cfg) {
    cfg.validate();
    check_video(model, video);
    if (model.groups.size() != 1)
        throw StateError("stage 1 expects the anchor-decoder model shape, got " +
                         std::to_string(model.groups.size()) + " groups");

    const coords::CoordGrid grid =
        coords::make_grid(model.meta.height, model.meta.width, model.config.patch);
    const std::size_t C = cfg.samples(model.meta.height, model.meta.width);
    coords::EpochSampler sampler(grid.n_cells(), C, mix_seed(cfg.seed, kStage1SamplerStream));

    model::GroupDecoder& dec = model.groups[0];
    auto enc_grads = nn::MlpGrads::zeros_like(model.encoder);
    auto trunk_grads = nn::MlpGrads::zeros_like(dec.trunk);
    auto head_grads = nn::BatchLinearGrads::zeros_like(dec.heads);

    SfAdamW opt(cfg.lr, cfg.beta, cfg.beta2, cfg.eps, cfg.weight_decay);
    attach_mlp(opt, model.encoder, enc_grads);
    attach_mlp(opt, dec.trunk, trunk_grads);
    attach_heads(opt, dec.heads, head_grads);

    GroupStep step{grid, video, dec, trunk_grads, head_grads};
    std::vector<double> trace;
    trace.reserve(cfg.stage1_iters);
    for (std::size_t iter = 1; iter <= cfg.stage1_iters; ++iter) {
        const auto batch = sampler.next_batch();
        const Tensor2D bcoords = gather_rows(grid.coords, batch);
        const Tensor2D encoded = coords::pos_encode(model.config.pos_encoding, bcoords);

        nn::GradTape enc_tape;
        zero(enc_grads);
        Tensor2D latent = nn::mlp_forward(model.encoder, encoded, &enc_tape);
        Tensor2D d_latent;
        const double loss = step.run(latent, batch, &d_latent);
        if (!std::isfinite(loss))
            throw StateError("stage 1: non-finite loss at iteration " + std::to_string(iter));
        nn::mlp_backward(model.encoder, enc_tape, d_latent, enc_grads);

        opt.step();
        trace.push_back(loss);
        if (cfg.log_every && (iter % cfg.log_every == 0 || iter == cfg.stage1_iters))
            log_progress(1, 0, iter, loss);
    }
    opt.finalize();
    return trace;
}

Tensor2D compute_latent_cache(const model::SieddModel& model, const coords::CoordGrid& grid) {
    constexpr std::size_t kSlabRows = 65536;
    const std::size_t n = grid.n_cells();
    Tensor2D latent(n, model.config.dim);
    for (std::size_t start = 0; start < n; start += kSlabRows) {
        const std::size_t len = std::min(kSlabRows, n - start);
        Tensor2D part(len, 2);
        std::memcpy(part.data(), grid.coords.row(start), sizeof(float) * len * 2);
        Tensor2D slab = model::encode_latent(model, part);
        std::memcpy(latent.row(start), slab.data(), sizeof(float) * slab.size());
    }
    return latent;
}

std::vector<double> train_stage2_group(const model::SieddModel& model,
                                       model::GroupDecoder& dec, std::size_t group_index,
                                       const video::VideoFrames& video,
                                       const TrainConfig& cfg, const Tensor2D* latent_full,
                                       const StepHook& hook) {
    cfg.validate();
    check_video(model, video);

    const coords::CoordGrid grid =
        coords::make_grid(model.meta.height, model.meta.width, model.config.patch);
    if (latent_full && (latent_full->rows() != grid.n_cells() ||
                        latent_full->cols() != model.config.dim))
        throw ShapeError("latent cache shape does not match the grid/model");

    const std::size_t C = cfg.samples(model.meta.height, model.meta.width);
    coords::EpochSampler sampler(grid.n_cells(), C,
                                 mix_seed(cfg.seed, kStage2SamplerBase + group_index));

    auto trunk_grads = nn::MlpGrads::zeros_like(dec.trunk);
    auto head_grads = nn::BatchLinearGrads::zeros_like(dec.heads);
    SfAdamW opt(cfg.lr, cfg.beta, cfg.beta2, cfg.eps, cfg.weight_decay);
    attach_mlp(opt, dec.trunk, trunk_grads);
    attach_heads(opt, dec.heads, head_grads);

    GroupStep step{grid, video, dec, trunk_grads, head_grads};
    std::vector<double> trace;
    trace.reserve(cfg.stage2_iters);
    for (std::size_t iter = 1; iter <= cfg.stage2_iters; ++iter) {
        const auto batch = sampler.next_batch();
        Tensor2D latent;
        if (latent_full) {
            latent = gather_rows(*latent_full, batch);
        } else {
            const Tensor2D bcoords = gather_rows(grid.coords, batch);
            latent = model::encode_latent(model, bcoords);
        }
        const double loss = step.run(latent, batch, nullptr);
        if (!std::isfinite(loss))
            throw StateError("stage 2 group " + std::to_string(group_index) +
                             ": non-finite loss at iteration " + std::to_string(iter));
        opt.step();
        trace.push_back(loss);
        if (cfg.log_every && (iter % cfg.log_every == 0 || iter == cfg.stage2_iters))
            log_progress(2, group_index, iter, loss);
        if (hook) {
            // Expose the averaged iterate x (the result the caller would get
            // from finalize) to the probe, then restore the training point y.
            opt.materialize_average();
            const bool stop = hook(iter, loss);
            opt.restore_evaluation_point();
            if (stop) break;
        }
    }
    opt.finalize();
    return trace;
}

void train_all_groups(model::SieddModel& model, const video::VideoFrames& video,
                      const TrainConfig& cfg, GroupInit init) {
    cfg.validate();
    check_video(model, video);
    if (init == GroupInit::FromAnchor && model.groups.size() != 1)
        throw StateError("stage 2 expects a stage-1 model (one anchor decoder), got " +
                         std::to_string(model.groups.size()) + " groups");
    if (init == GroupInit::Random && !model.groups.empty())
        throw StateError("stage 2 with random init expects a bare encoder, got " +
                         std::to_string(model.groups.size()) + " groups");

    const auto partition = model::partition_groups(model.meta.n_frames, cfg.group_size);
    const std::size_t n_groups = partition.size();

    // Full-grid latent cache when it fits the budget; dropping it is bitwise
    // neutral, only slower.
    const coords::CoordGrid grid =
        coords::make_grid(model.meta.height, model.meta.width, model.config.patch);
    Tensor2D latent_cache;
    const std::size_t cache_bytes = grid.n_cells() * model.config.dim * sizeof(float);
    const bool use_cache = cache_bytes <= cfg.latent_cache_mb * 1024 * 1024;
    if (use_cache) latent_cache = compute_latent_cache(model, grid);

    std::vector<model::GroupDecoder> trained(n_groups);
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::string first_error;

    auto worker = [&]() {
        for (;;) {
            const std::size_t g = next.fetch_add(1);
            if (g >= n_groups) return;
            try {
                model::GroupDecoder dec =
                    init == GroupInit::FromAnchor
                        ? model::init_group_from_anchor(model, partition[g])
                        : model::random_group_decoder(model.config, partition[g], cfg.seed,
                                                      kRandomInitBase + g);
                train_stage2_group(model, dec, g, video, cfg,
                                   use_cache ? &latent_cache : nullptr);
                trained[g] = std::move(dec);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (first_error.empty())
                    first_error = "group " + std::to_string(g) + ": " + e.what();
            }
        }
    };

    const std::size_t n_workers = std::min(cfg.workers, n_groups);
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (!first_error.empty())
        throw StateError("stage 2 failed: " + first_error);

    model.groups = std::move(trained);
}

}  // namespace siedd::train
