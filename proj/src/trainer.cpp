#include "fvr/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fvr {

void TrainConfig::validate() const {
    if ((lambdas.array() < 0).any() || mask_weight < 0)
        throw std::runtime_error("train config: loss weights must be >= 0");
    if (bg_weight < 0 || bg_weight > 1)
        throw std::runtime_error("train config: background weight must be in [0, 1]");
    if (batch_size < 1) throw std::runtime_error("train config: batch size must be >= 1");
    if (!(lr > 0)) throw std::runtime_error("train config: learning rate must be > 0");
    if (patches_per_sample < 0) throw std::runtime_error("train config: negative patch count");
    if (bootstrap_epochs < 0 || max_epochs < bootstrap_epochs)
        throw std::runtime_error("train config: need 0 <= bootstrap epochs <= max epochs");
    aug.validate();
}

std::string trainConfigToJson(const TrainConfig& cfg) {
    nlohmann::json j;
    j["lambda_adv"] = cfg.lambdas[0];
    j["lambda_rgb"] = cfg.lambdas[1];
    j["lambda_vgg"] = cfg.lambdas[2];
    j["mask_weight"] = cfg.mask_weight;
    j["bg_weight"] = cfg.bg_weight;
    j["lr"] = cfg.lr;
    j["batch_size"] = cfg.batch_size;
    j["patches_per_sample"] = cfg.patches_per_sample;
    j["bootstrap_epochs"] = cfg.bootstrap_epochs;
    j["max_epochs"] = cfg.max_epochs;
    j["seed"] = cfg.seed;
    j["augment_enabled"] = cfg.augment_enabled;
    j["aug_translation_px"] = cfg.aug.max_translation_px;
    j["aug_min_scale"] = cfg.aug.min_scale;
    j["aug_max_scale"] = cfg.aug.max_scale;
    j["aug_rotation_deg"] = cfg.aug.max_rotation_deg;
    j["lsgan_standard"] = cfg.lsgan_standard;
    j["disc_base"] = cfg.disc_base;
    j["splat_radius_m"] = cfg.splat_radius_m;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["feature_dim"] = cfg.nets.point.feature_dim;
    j["point_hidden"] = cfg.nets.point.hidden;
    j["point_pos_bands"] = cfg.nets.point.pos_bands;
    j["render_levels"] = cfg.nets.render_levels;
    j["render_base"] = cfg.nets.render_base;
    j["fuse_levels"] = cfg.nets.fuse_levels;
    j["fuse_base"] = cfg.nets.fuse_base;
    j["dropout_rate"] = cfg.nets.dropout_rate;
    j["init_seed"] = cfg.nets.init_seed;
    j["fusion_voxel"] = cfg.fusion.voxel;
    j["fusion_normal_neighbors"] = cfg.fusion.normal_neighbors;
    return j.dump(2);
}

TrainConfig trainConfigFromJson(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("train config: parse error: ") + e.what());
    }
    TrainConfig cfg;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).template get<std::decay_t<decltype(field)>>();
    };
    get("lambda_adv", cfg.lambdas[0]);
    get("lambda_rgb", cfg.lambdas[1]);
    get("lambda_vgg", cfg.lambdas[2]);
    get("mask_weight", cfg.mask_weight);
    get("bg_weight", cfg.bg_weight);
    get("lr", cfg.lr);
    get("batch_size", cfg.batch_size);
    get("patches_per_sample", cfg.patches_per_sample);
    get("bootstrap_epochs", cfg.bootstrap_epochs);
    get("max_epochs", cfg.max_epochs);
    get("seed", cfg.seed);
    get("augment_enabled", cfg.augment_enabled);
    get("aug_translation_px", cfg.aug.max_translation_px);
    get("aug_min_scale", cfg.aug.min_scale);
    get("aug_max_scale", cfg.aug.max_scale);
    get("aug_rotation_deg", cfg.aug.max_rotation_deg);
    get("lsgan_standard", cfg.lsgan_standard);
    get("disc_base", cfg.disc_base);
    get("splat_radius_m", cfg.splat_radius_m);
    get("checkpoint_every", cfg.checkpoint_every);
    get("feature_dim", cfg.nets.point.feature_dim);
    get("point_hidden", cfg.nets.point.hidden);
    get("point_pos_bands", cfg.nets.point.pos_bands);
    get("render_levels", cfg.nets.render_levels);
    get("render_base", cfg.nets.render_base);
    get("fuse_levels", cfg.nets.fuse_levels);
    get("fuse_base", cfg.nets.fuse_base);
    get("dropout_rate", cfg.nets.dropout_rate);
    get("init_seed", cfg.nets.init_seed);
    get("fusion_voxel", cfg.fusion.voxel);
    get("fusion_normal_neighbors", cfg.fusion.normal_neighbors);
    cfg.validate();
    return cfg;
}

TrainConfig loadTrainConfig(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open train config: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return trainConfigFromJson(text);
}

std::string StepLog::toJsonLine() const {
    nlohmann::json j;
    j["step"] = step;
    j["phase"] = phase;
    j["L_adv_D"] = l_adv_d;
    j["L_adv_G"] = l_adv_g;
    j["L_rgb"] = l_rgb;
    j["L_vgg"] = l_vgg;
    j["L_mask"] = l_mask;
    j["total"] = total;
    return j.dump();
}

namespace {
TrainConfig validated(TrainConfig cfg) {
    cfg.validate();
    return cfg;
}
}  // namespace

Trainer::Trainer(const Dataset& data, const KeyframeSet& keyframes, const TrainConfig& cfg)
    : data_(data),
      keyframes_(keyframes),
      cfg_(validated(cfg)),
      nets_(cfg_.nets),
      disc_(cfg_.disc_base, mixSeed(cfg_.seed, 0xD15C)),
      perceptual_(mixSeed(cfg_.seed, 0xFEA7)),
      adam_g_(nets_.params(), cfg_.lr),
      adam_d_(std::vector<nn::Param*>{}, cfg_.lr) {
    if (keyframes_.indices.empty()) throw std::runtime_error("trainer: empty key-frame set");
    for (int kf : keyframes_.indices) {
        if (kf < 0 || kf >= data_.numFrames())
            throw std::runtime_error("trainer: key-frame index out of range");
        proxies_.emplace(kf, fuse_frame(data_.loadFrameAllViews(kf), data_.cameras(), cfg_.fusion));
        for (const CameraView& cam : data_.cameras()) pool_.emplace_back(kf, cam.view_id);
    }
    adam_d_ = nn::Adam(disc_.params(), cfg_.lr);
    steps_per_epoch_ =
        (static_cast<int>(pool_.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
}

int Trainer::totalSteps() const { return cfg_.max_epochs * steps_per_epoch_; }

std::vector<nn::Param*> Trainer::allParams() {
    std::vector<nn::Param*> out = nets_.params();
    const std::vector<nn::Param*> d = disc_.params();
    out.insert(out.end(), d.begin(), d.end());
    return out;
}

std::pair<int, int> Trainer::pairForStep(int step, int index_in_batch) const {
    const int epoch = step / steps_per_epoch_;
    const int within = step % steps_per_epoch_;
    std::vector<std::pair<int, int>> order = pool_;
    std::mt19937_64 rng(mixSeed(cfg_.seed, 0x45504F43ULL + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    const size_t idx =
        (static_cast<size_t>(within) * cfg_.batch_size + index_in_batch) % order.size();
    return order[idx];
}

Trainer::Sample Trainer::loadSample(int step, int index_in_batch) {
    const auto [kf, view] = pairForStep(step, index_in_batch);
    Sample s;
    s.frame = data_.loadFrame(kf, view);
    s.cam = data_.cameras().at(view);
    s.proxy = &proxies_.at(kf);
    if (cfg_.augment_enabled) {
        std::mt19937_64 rng(mixSeed(mixSeed(cfg_.seed, step),
                                    0xA0ULL + static_cast<std::uint64_t>(index_in_batch)));
        augment(s.frame, s.cam, sample_augment(cfg_.aug, rng));
    }
    return s;
}

StepLog Trainer::doStep(int step) {
    const bool joint = step >= bootstrapSteps();
    StepLog log;
    log.step = step;
    log.phase = joint ? "joint" : "bootstrap";

    const Scalar inv_b = 1.0 / cfg_.batch_size;
    adam_g_.zeroGrad();

    std::vector<nn::Tensor> fused_store, target_store;
    std::vector<MaskImage> mask_store;

    for (int j = 0; j < cfg_.batch_size; ++j) {
        const Sample s = loadSample(step, j);
        std::mt19937_64 rng_render(
            mixSeed(mixSeed(cfg_.seed, step), 0x100ULL + static_cast<std::uint64_t>(j)));
        const nn::Tensor out4 = nets_.renderNeural(*s.proxy, s.cam, /*train=*/true, rng_render);
        const int h = out4.h, w = out4.w;

        nn::Tensor i_neural(3, h, w);
        i_neural.data = out4.data.topRows(3);
        nn::Tensor pred_mask(1, h, w);
        pred_mask.data = out4.data.row(3);
        nn::Tensor target = nn::imageToTensor(maskedImage(s.frame.color, s.frame.mask));
        // keep regression targets strictly inside (0,1): the renderer outputs
        // sigmoids, and an exact-zero background otherwise drives the logits
        // toward -inf until the whole image saturates and gradients vanish
        target.data = target.data.cwiseMax(1e-3).cwiseMin(1.0 - 1e-3);

        nn::Tensor d_mask(1, h, w);
        log.l_mask +=
            inv_b * mask_bce(pred_mask, s.frame.mask, cfg_.mask_weight * inv_b, &d_mask);

        // The perceptual loss is evaluated on the foreground-masked prediction
        // so that the black background (already zero in both operands) cannot
        // dominate the feature statistics; mrow carries the mask through the
        // chain rule back onto the unmasked prediction.
        Eigen::RowVectorXd mrow(static_cast<Eigen::Index>(h) * w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) mrow(y * w + x) = s.frame.mask(y, x) ? 1.0 : 0.0;

        nn::Tensor d4(4, h, w);
        if (!joint) {
            nn::Tensor d3(3, h, w);
            log.l_rgb += inv_b * loss_rgb_weighted(i_neural, target, s.frame.mask, cfg_.bg_weight);
            loss_rgb_weighted_grad(i_neural, target, s.frame.mask, cfg_.bg_weight,
                                   cfg_.lambdas[1] * inv_b, d3);
            nn::Tensor pred_fg(3, h, w), d_fg(3, h, w);
            pred_fg.data = i_neural.data * mrow.asDiagonal();
            log.l_vgg +=
                inv_b * perceptual_.lossAndGrad(pred_fg, target, cfg_.lambdas[2] * inv_b, d_fg);
            d3.data += d_fg.data * mrow.asDiagonal();
            d4.data.topRows(3) = d3.data;
            d4.data.row(3) = d_mask.data;
            nets_.backwardNeural(d4);
            continue;
        }

        const TexturedRender tex = render_textured(*s.proxy, s.cam, cfg_.splat_radius_m);
        const nn::Tensor tex_t = nn::imageToTensor(tex.color);
        const nn::Tensor fused = nets_.blend(i_neural, tex_t);

        nn::Tensor d_fused(3, h, w);
        log.l_rgb += inv_b * loss_rgb_weighted(fused, target, s.frame.mask, cfg_.bg_weight);
        loss_rgb_weighted_grad(fused, target, s.frame.mask, cfg_.bg_weight,
                               cfg_.lambdas[1] * inv_b, d_fused);
        nn::Tensor fused_fg(3, h, w), d_fg(3, h, w);
        fused_fg.data = fused.data * mrow.asDiagonal();
        log.l_vgg +=
            inv_b * perceptual_.lossAndGrad(fused_fg, target, cfg_.lambdas[2] * inv_b, d_fg);
        d_fused.data += d_fg.data * mrow.asDiagonal();

        // generator adversarial term on patches of the fused image
        if (cfg_.patches_per_sample > 0) {
            std::mt19937_64 rng_patch(
                mixSeed(mixSeed(cfg_.seed, step), 0x200ULL + static_cast<std::uint64_t>(j)));
            const PatchBatch fake = sample_patches(fused, s.frame.mask, cfg_.patches_per_sample,
                                                   rng_patch, PatchOrigin::Rendered);
            const int n = static_cast<int>(fake.patches.size());
            for (int i = 0; i < n; ++i) {
                const Scalar score = disc_.forward(fake.patches[i]);
                Scalar dscore;
                if (cfg_.lsgan_standard) {
                    log.l_adv_g += inv_b * (1.0 - score) * (1.0 - score) / n;
                    dscore = -2.0 * (1.0 - score) / n;
                } else {
                    log.l_adv_g -= inv_b * score * score / n;
                    dscore = -2.0 * score / n;
                }
                const nn::Tensor dpatch = disc_.backward(cfg_.lambdas[0] * inv_b * dscore);
                const int x0 = fake.offsets[i].x(), y0 = fake.offsets[i].y();
                for (int c = 0; c < 3; ++c)
                    for (int y = 0; y < kPatchSize; ++y)
                        for (int x = 0; x < kPatchSize; ++x)
                            d_fused.at(c, y0 + y, x0 + x) += dpatch.at(c, y, x);
            }
        }

        nn::Tensor d_neural3(3, h, w), d_tex(3, h, w);
        nets_.backwardBlend(d_fused, d_neural3, d_tex);
        d4.data.topRows(3) = d_neural3.data;
        d4.data.row(3) = d_mask.data;
        nets_.backwardNeural(d4);

        fused_store.push_back(fused);
        target_store.push_back(target);
        mask_store.push_back(s.frame.mask);
    }
    adam_g_.step();

    if (joint && cfg_.patches_per_sample > 0) {
        // discriminator update on the same rendered images, held fixed
        adam_d_.zeroGrad();
        std::vector<PatchBatch> reals, fakes;
        int n_real = 0, n_fake = 0;
        for (int j = 0; j < cfg_.batch_size; ++j) {
            std::mt19937_64 rng_r(
                mixSeed(mixSeed(cfg_.seed, step), 0x300ULL + static_cast<std::uint64_t>(j)));
            std::mt19937_64 rng_f(
                mixSeed(mixSeed(cfg_.seed, step), 0x400ULL + static_cast<std::uint64_t>(j)));
            reals.push_back(sample_patches(target_store[j], mask_store[j],
                                           cfg_.patches_per_sample, rng_r, PatchOrigin::Real));
            fakes.push_back(sample_patches(fused_store[j], mask_store[j],
                                           cfg_.patches_per_sample, rng_f,
                                           PatchOrigin::Rendered));
            n_real += static_cast<int>(reals.back().patches.size());
            n_fake += static_cast<int>(fakes.back().patches.size());
        }
        if (n_real > 0 && n_fake > 0) {
            for (const PatchBatch& b : reals) {
                for (const nn::Tensor& p : b.patches) {
                    const Scalar score = disc_.forward(p);
                    log.l_adv_d += (1.0 - score) * (1.0 - score) / n_real;
                    disc_.backward(-2.0 * (1.0 - score) / n_real);
                }
            }
            for (const PatchBatch& b : fakes) {
                for (const nn::Tensor& p : b.patches) {
                    const Scalar score = disc_.forward(p);
                    log.l_adv_d += score * score / n_fake;
                    disc_.backward(2.0 * score / n_fake);
                }
            }
            adam_d_.step();
        }
    }

    log.total = total_loss(log.l_adv_d + log.l_adv_g, log.l_rgb, log.l_vgg, cfg_.lambdas) +
                cfg_.mask_weight * log.l_mask;
    log.finite = std::isfinite(log.total) && std::isfinite(log.l_adv_d) &&
                 std::isfinite(log.l_adv_g) && std::isfinite(log.l_rgb) &&
                 std::isfinite(log.l_vgg) && std::isfinite(log.l_mask);
    return log;
}

TrainResult Trainer::run(const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::string ckpt = (fs::path(out_dir) / "checkpoint.bin").string();
    const std::string log_path = (fs::path(out_dir) / "train_log.jsonl").string();

    {
        std::ofstream cfg_out(fs::path(out_dir) / "train_config.json");
        cfg_out << trainConfigToJson(cfg_) << "\n";
    }

    int start = 0;
    if (fs::exists(ckpt)) {
        const nn::CheckpointInfo info = nn::loadCheckpoint(ckpt, allParams(), &adam_g_, &adam_d_);
        start = static_cast<int>(info.step);
    }

    std::ofstream log(log_path, start > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("cannot open training log: " + log_path);

    TrainResult result;
    result.checkpoint_path = ckpt;
    result.log_path = log_path;
    result.steps_completed = start;

    const std::string meta = "{\"config\":" + trainConfigToJson(cfg_) + "}";
    for (int step = start; step < totalSteps(); ++step) {
        const StepLog entry = doStep(step);
        log << entry.toJsonLine() << "\n";
        log.flush();
        if (!entry.finite) {
            nn::saveCheckpoint((fs::path(out_dir) / "checkpoint_diverged.bin").string(),
                               allParams(), step, meta, &adam_g_, &adam_d_);
            result.aborted_non_finite = true;
            return result;
        }
        result.steps_completed = step + 1;
        if (cfg_.checkpoint_every > 0 && (step + 1) % cfg_.checkpoint_every == 0)
            nn::saveCheckpoint(ckpt, allParams(), step + 1, meta, &adam_g_, &adam_d_);
    }
    nn::saveCheckpoint(ckpt, allParams(), totalSteps(), meta, &adam_g_, &adam_d_);
    return result;
}

}  // namespace fvr
