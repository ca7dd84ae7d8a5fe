#pragma once

#include "fvr/nn/nn.hpp"
#include "fvr/types.hpp"

#include <random>
#include <vector>

namespace fvr {

constexpr int kPatchSize = 36;
// a patch is valid when strictly more than 10% of its 1296 pixels are foreground
constexpr int kPatchForegroundMin = 130;

enum class PatchOrigin { Real, Rendered };

struct PatchBatch {
    std::vector<nn::Tensor> patches;            // each 3 x 36 x 36
    std::vector<Eigen::Vector2i> offsets;       // top-left (x, y)
    std::vector<PatchOrigin> origins;
    bool insufficient_foreground = false;       // budget exhausted before `count`
};

// Rejection-samples uniform offsets until `count` patches pass the foreground
// validity rule. Background pixels are zeroed via the mask before sampling.
// A partial batch with the warning flag set is returned when the attempt
// budget runs out.
PatchBatch sample_patches(const nn::Tensor& image, const MaskImage& mask, int count,
                          std::mt19937_64& rng, PatchOrigin origin = PatchOrigin::Rendered,
                          int attempt_budget_per_patch = 200);

bool patchIsValid(const MaskImage& mask, int x0, int y0);

// Multi-scale patch discriminator: 3-level U-Net trunk, per-level stride-2
// reducers to 9x9 maps, flattened and concatenated into an MLP with widths
// 256, 128, 1.
class Discriminator {
public:
    explicit Discriminator(int base = 32, std::uint64_t seed = 2);

    Scalar forward(const nn::Tensor& patch);
    nn::Tensor backward(Scalar dscore);  // gradient w.r.t. the input patch

    VecX scoreBatch(const PatchBatch& batch);
    std::vector<nn::Param*> params();

    // architectural probe used by tests: per-level reduced map sizes
    std::vector<std::pair<int, int>> reducedMapSizes(const nn::Tensor& patch);

private:
    nn::Tensor trunkForward(const nn::Tensor& patch);

    int base_;
    // encoder / decoder trunk
    std::unique_ptr<nn::Layer> enc0_, down0_, enc1_, down1_, enc2_;
    std::unique_ptr<nn::Upsample2x> up1_, up0_;
    std::unique_ptr<nn::Layer> dec1_, dec0_;
    // per-level reducers to 9x9
    std::unique_ptr<nn::Layer> red2_, red1_a_, red0_a_, red0_b_;
    std::unique_ptr<nn::Linear> fc1_, fc2_, fc3_;
    nn::Activation relu1_{nn::Act::ReLU}, relu2_{nn::Act::ReLU};

    // caches
    nn::Tensor e0_, e1_, e2_, u1_, u0_, r2_, r1_, r0_, r0_mid_;
    int red_ch_;
};

struct AdvLosses {
    Scalar d = 0;  // discriminator objective
    Scalar g = 0;  // generator objective
};

// Least-squares patch-GAN losses: D pushes real scores to 1 and fake scores
// to 0; the generator term is -mean(D(fake)^2) as printed, or the standard
// mean((1 - D(fake))^2) when lsgan_standard is set.
AdvLosses adv_losses(const VecX& real_scores, const VecX& fake_scores,
                     bool lsgan_standard = false);

// d(loss)/d(score) vectors matching adv_losses
VecX adv_loss_d_grad_real(const VecX& real_scores);
VecX adv_loss_d_grad_fake(const VecX& fake_scores);
VecX adv_loss_g_grad_fake(const VecX& fake_scores, bool lsgan_standard = false);

}  // namespace fvr
