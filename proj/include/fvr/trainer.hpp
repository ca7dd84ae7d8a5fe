#pragma once

#include "fvr/adversarial.hpp"
#include "fvr/augment.hpp"
#include "fvr/dataset.hpp"
#include "fvr/keyframes.hpp"
#include "fvr/losses.hpp"
#include "fvr/proxy.hpp"
#include "fvr/render_nets.hpp"
#include "fvr/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace fvr {

struct TrainConfig {
    Vec3 lambdas = Vec3(0.3, 5.0, 0.7);  // adversarial, rgb, perceptual weights
    Scalar mask_weight = 1.0;
    // Weight of off-mask pixels in the reconstruction losses (on-mask pixels
    // weigh 1). The masked target is mostly black background, and at full
    // weight its constant L1 gradients saturate the bounded renderer output
    // before the subject is learned.
    Scalar bg_weight = 0.05;
    Scalar lr = 2e-4;
    int batch_size = 4;
    int patches_per_sample = 40;
    int bootstrap_epochs = 10;
    int max_epochs = 20;  // total, bootstrap included
    std::uint64_t seed = 1;
    bool augment_enabled = true;
    AugmentRanges aug;
    bool lsgan_standard = false;
    int disc_base = 32;
    Scalar splat_radius_m = 0.004;
    int checkpoint_every = 0;  // steps between checkpoints; 0 = final only
    TwoBranchRenderer::Config nets;
    FusionParams fusion;

    void validate() const;
};

std::string trainConfigToJson(const TrainConfig& cfg);
TrainConfig trainConfigFromJson(const std::string& text);
TrainConfig loadTrainConfig(const std::string& path);

struct StepLog {
    int step = 0;
    std::string phase;  // "bootstrap" or "joint"
    Scalar l_adv_d = 0, l_adv_g = 0, l_rgb = 0, l_vgg = 0, l_mask = 0, total = 0;
    bool finite = true;

    std::string toJsonLine() const;
};

struct TrainResult {
    std::string checkpoint_path;
    std::string log_path;
    int steps_completed = 0;
    bool aborted_non_finite = false;
};

// Two-phase trainer over the key-frame supervision pool (every captured view
// of every key-frame). Phase 1 bootstraps the neural branch; phase 2 trains
// blending and the discriminator jointly with the adversarial objective.
// Every step's randomness derives from (seed, step), so a resumed run is
// bit-identical to an uninterrupted one.
class Trainer {
public:
    Trainer(const Dataset& data, const KeyframeSet& keyframes, const TrainConfig& cfg);

    TrainResult run(const std::string& out_dir);

    StepLog doStep(int step);

    int stepsPerEpoch() const { return steps_per_epoch_; }
    int totalSteps() const;
    int bootstrapSteps() const { return cfg_.bootstrap_epochs * steps_per_epoch_; }

    TwoBranchRenderer& nets() { return nets_; }
    Discriminator& disc() { return disc_; }
    const std::map<int, TexturedPointCloud>& proxies() const { return proxies_; }
    std::vector<nn::Param*> allParams();

private:
    struct Sample {
        RGBDFrame frame;  // augmented
        CameraView cam;   // augmented
        const TexturedPointCloud* proxy;
    };
    Sample loadSample(int step, int index_in_batch);
    std::pair<int, int> pairForStep(int step, int index_in_batch) const;  // (keyframe, view)

    const Dataset& data_;
    KeyframeSet keyframes_;
    TrainConfig cfg_;
    std::map<int, TexturedPointCloud> proxies_;
    TwoBranchRenderer nets_;
    Discriminator disc_;
    FeaturePyramid perceptual_;
    nn::Adam adam_g_, adam_d_;
    int steps_per_epoch_ = 0;
    std::vector<std::pair<int, int>> pool_;  // (keyframe index, view id)
};

}  // namespace fvr
