#include "fvr/adversarial.hpp"

#include <cmath>

namespace fvr {

bool patchIsValid(const MaskImage& mask, int x0, int y0) {
    int fg = 0;
    for (int y = y0; y < y0 + kPatchSize; ++y)
        for (int x = x0; x < x0 + kPatchSize; ++x)
            if (mask(y, x)) ++fg;
    return fg >= kPatchForegroundMin;
}

PatchBatch sample_patches(const nn::Tensor& image, const MaskImage& mask, int count,
                          std::mt19937_64& rng, PatchOrigin origin, int attempt_budget_per_patch) {
    if (image.c != 3) throw std::runtime_error("sample_patches: expected a 3-channel image");
    if (image.h < kPatchSize || image.w < kPatchSize)
        throw std::runtime_error("sample_patches: image smaller than the patch size");
    if (mask.rows() != image.h || mask.cols() != image.w)
        throw std::runtime_error("sample_patches: mask size mismatch");

    // background is masked out before sampling
    nn::Tensor masked = image;
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x)
            if (!mask(y, x))
                for (int c = 0; c < 3; ++c) masked.at(c, y, x) = 0.0;

    std::uniform_int_distribution<int> ux(0, image.w - kPatchSize);
    std::uniform_int_distribution<int> uy(0, image.h - kPatchSize);

    PatchBatch batch;
    const long budget = static_cast<long>(attempt_budget_per_patch) * count;
    long attempts = 0;
    while (static_cast<int>(batch.patches.size()) < count && attempts < budget) {
        ++attempts;
        const int x0 = ux(rng), y0 = uy(rng);
        if (!patchIsValid(mask, x0, y0)) continue;
        nn::Tensor patch(3, kPatchSize, kPatchSize);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < kPatchSize; ++y)
                for (int x = 0; x < kPatchSize; ++x)
                    patch.at(c, y, x) = masked.at(c, y0 + y, x0 + x);
        batch.patches.push_back(std::move(patch));
        batch.offsets.emplace_back(x0, y0);
        batch.origins.push_back(origin);
    }
    batch.insufficient_foreground = static_cast<int>(batch.patches.size()) < count;
    return batch;
}

// ------------------------------------------------------------ Discriminator

Discriminator::Discriminator(int base, std::uint64_t seed) : base_(base), red_ch_(16) {
    std::mt19937_64 rng(seed);
    using nn::ConvAct;
    enc0_ = std::make_unique<ConvAct>("disc.enc0", 3, base_, 3, 1, 1, rng);
    down0_ = std::make_unique<ConvAct>("disc.down0", base_, base_ * 2, 3, 2, 1, rng);
    enc1_ = std::make_unique<ConvAct>("disc.enc1", base_ * 2, base_ * 2, 3, 1, 1, rng);
    down1_ = std::make_unique<ConvAct>("disc.down1", base_ * 2, base_ * 4, 3, 2, 1, rng);
    enc2_ = std::make_unique<ConvAct>("disc.enc2", base_ * 4, base_ * 4, 3, 1, 1, rng);
    up1_ = std::make_unique<nn::Upsample2x>();
    dec1_ = std::make_unique<ConvAct>("disc.dec1", base_ * 4 + base_ * 2, base_ * 2, 3, 1, 1, rng);
    up0_ = std::make_unique<nn::Upsample2x>();
    dec0_ = std::make_unique<ConvAct>("disc.dec0", base_ * 2 + base_, base_, 3, 1, 1, rng);

    red2_ = std::make_unique<ConvAct>("disc.red2", base_ * 4, red_ch_, 3, 1, 1, rng);
    red1_a_ = std::make_unique<ConvAct>("disc.red1", base_ * 2, red_ch_, 3, 2, 1, rng);
    red0_a_ = std::make_unique<ConvAct>("disc.red0a", base_, red_ch_, 3, 2, 1, rng);
    red0_b_ = std::make_unique<ConvAct>("disc.red0b", red_ch_, red_ch_, 3, 2, 1, rng);

    const int flat = 3 * red_ch_ * 9 * 9;
    fc1_ = std::make_unique<nn::Linear>("disc.fc1", flat, 256, rng);
    fc2_ = std::make_unique<nn::Linear>("disc.fc2", 256, 128, rng);
    fc3_ = std::make_unique<nn::Linear>("disc.fc3", 128, 1, rng);
}

nn::Tensor Discriminator::trunkForward(const nn::Tensor& patch) {
    if (patch.c != 3 || patch.h != kPatchSize || patch.w != kPatchSize)
        throw std::runtime_error("discriminator: patches must be 3x36x36");
    e0_ = enc0_->forward(patch);
    e1_ = enc1_->forward(down0_->forward(e0_));
    e2_ = enc2_->forward(down1_->forward(e1_));
    u1_ = dec1_->forward(nn::concatChannels(up1_->forward(e2_), e1_));
    u0_ = dec0_->forward(nn::concatChannels(up0_->forward(u1_), e0_));

    r2_ = red2_->forward(e2_);
    r1_ = red1_a_->forward(u1_);
    r0_mid_ = red0_a_->forward(u0_);
    r0_ = red0_b_->forward(r0_mid_);

    nn::Tensor flat(3 * red_ch_ * 81, 1, 1);
    Eigen::Index at = 0;
    for (const nn::Tensor* r : {&r2_, &r1_, &r0_}) {
        for (int c = 0; c < r->c; ++c)
            for (int p = 0; p < 81; ++p) flat.data(at++, 0) = r->data(c, p);
    }
    return flat;
}

Scalar Discriminator::forward(const nn::Tensor& patch) {
    const nn::Tensor flat = trunkForward(patch);
    const nn::Tensor h1 = relu1_.forward(fc1_->forward(flat));
    const nn::Tensor h2 = relu2_.forward(fc2_->forward(h1));
    return fc3_->forward(h2).data(0, 0);
}

nn::Tensor Discriminator::backward(Scalar dscore) {
    nn::Tensor ds(1, 1, 1);
    ds.data(0, 0) = dscore;
    nn::Tensor g = fc1_->backward(relu1_.backward(fc2_->backward(relu2_.backward(fc3_->backward(ds)))));

    // unflatten into the three reduced maps
    nn::Tensor dr2(red_ch_, 9, 9), dr1(red_ch_, 9, 9), dr0(red_ch_, 9, 9);
    Eigen::Index at = 0;
    for (nn::Tensor* r : {&dr2, &dr1, &dr0}) {
        for (int c = 0; c < red_ch_; ++c)
            for (int p = 0; p < 81; ++p) r->data(c, p) = g.data(at++, 0);
    }

    nn::Tensor ge2 = red2_->backward(dr2);
    nn::Tensor gu1 = red1_a_->backward(dr1);
    nn::Tensor gu0 = red0_a_->backward(red0_b_->backward(dr0));

    nn::Tensor gup0, gskip0;
    nn::splitChannels(dec0_->backward(gu0), base_ * 2, gup0, gskip0);
    gu1.data += up0_->backward(gup0).data;
    nn::Tensor ge0 = gskip0;

    nn::Tensor gup1, gskip1;
    nn::splitChannels(dec1_->backward(gu1), base_ * 4, gup1, gskip1);
    ge2.data += up1_->backward(gup1).data;
    nn::Tensor ge1 = gskip1;

    nn::Tensor g2 = down1_->backward(enc2_->backward(ge2));
    g2.data += ge1.data;
    nn::Tensor g1 = down0_->backward(enc1_->backward(g2));
    g1.data += ge0.data;
    return enc0_->backward(g1);
}

VecX Discriminator::scoreBatch(const PatchBatch& batch) {
    VecX scores(static_cast<Eigen::Index>(batch.patches.size()));
    for (size_t i = 0; i < batch.patches.size(); ++i)
        scores[static_cast<Eigen::Index>(i)] = forward(batch.patches[i]);
    return scores;
}

std::vector<nn::Param*> Discriminator::params() {
    std::vector<nn::Param*> out;
    auto add = [&](std::vector<nn::Param*> p) { out.insert(out.end(), p.begin(), p.end()); };
    for (nn::Layer* l : {enc0_.get(), down0_.get(), enc1_.get(), down1_.get(), enc2_.get(),
                         dec1_.get(), dec0_.get(), red2_.get(), red1_a_.get(), red0_a_.get(),
                         red0_b_.get()})
        add(l->params());
    add(fc1_->params());
    add(fc2_->params());
    add(fc3_->params());
    return out;
}

std::vector<std::pair<int, int>> Discriminator::reducedMapSizes(const nn::Tensor& patch) {
    trunkForward(patch);
    return {{r2_.h, r2_.w}, {r1_.h, r1_.w}, {r0_.h, r0_.w}};
}

// ------------------------------------------------------------- adv losses

AdvLosses adv_losses(const VecX& real_scores, const VecX& fake_scores, bool lsgan_standard) {
    if (real_scores.size() == 0 || fake_scores.size() == 0)
        throw std::runtime_error("adv_losses: empty score set");
    AdvLosses out;
    out.d = (1.0 - real_scores.array()).square().mean() + fake_scores.array().square().mean();
    out.g = lsgan_standard ? (1.0 - fake_scores.array()).square().mean()
                           : -fake_scores.array().square().mean();
    return out;
}

VecX adv_loss_d_grad_real(const VecX& real_scores) {
    return (-2.0 / real_scores.size()) * (1.0 - real_scores.array()).matrix();
}

VecX adv_loss_d_grad_fake(const VecX& fake_scores) {
    return (2.0 / fake_scores.size()) * fake_scores;
}

VecX adv_loss_g_grad_fake(const VecX& fake_scores, bool lsgan_standard) {
    if (lsgan_standard) return (-2.0 / fake_scores.size()) * (1.0 - fake_scores.array()).matrix();
    return (-2.0 / fake_scores.size()) * fake_scores;
}

}  // namespace fvr
