#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fvr/adversarial.hpp"

#include <cmath>
#include <random>

using namespace fvr;

namespace {

// mask with exactly `fg` foreground pixels inside the 36x36 window at (0,0)
MaskImage maskWithForeground(int h, int w, int fg) {
    MaskImage m = MaskImage::Constant(h, w, false);
    int placed = 0;
    for (int y = 0; y < kPatchSize && placed < fg; ++y)
        for (int x = 0; x < kPatchSize && placed < fg; ++x) {
            m(y, x) = true;
            ++placed;
        }
    return m;
}

nn::Tensor randomImage(int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<Scalar> u(0, 1);
    nn::Tensor t(3, h, w);
    for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = u(rng);
    return t;
}

}  // namespace

TEST_CASE("patch validity flips exactly between 129 and 130 foreground pixels") {
    CHECK_FALSE(patchIsValid(maskWithForeground(64, 64, 129), 0, 0));
    CHECK(patchIsValid(maskWithForeground(64, 64, 130), 0, 0));
    CHECK(patchIsValid(maskWithForeground(64, 64, 1296), 0, 0));
    CHECK_FALSE(patchIsValid(maskWithForeground(64, 64, 0), 0, 0));
}

TEST_CASE("sampled patches stay in bounds and zero the background") {
    std::mt19937_64 rng(31);
    const nn::Tensor img = randomImage(80, 70, rng);
    MaskImage mask = MaskImage::Constant(80, 70, false);
    mask.block(10, 10, 40, 40).setConstant(true);

    const PatchBatch batch = sample_patches(img, mask, 50, rng);
    CHECK(batch.patches.size() == 50);
    CHECK_FALSE(batch.insufficient_foreground);
    for (size_t i = 0; i < batch.patches.size(); ++i) {
        const int x0 = batch.offsets[i].x(), y0 = batch.offsets[i].y();
        CHECK(x0 >= 0);
        CHECK(y0 >= 0);
        CHECK(x0 + kPatchSize <= 70);
        CHECK(y0 + kPatchSize <= 80);
        int fg = 0;
        for (int y = 0; y < kPatchSize; ++y)
            for (int x = 0; x < kPatchSize; ++x) {
                if (mask(y0 + y, x0 + x)) {
                    ++fg;
                    CHECK(batch.patches[i].at(0, y, x) == img.at(0, y0 + y, x0 + x));
                } else {
                    CHECK(batch.patches[i].at(0, y, x) == 0.0);
                }
            }
        CHECK(fg >= kPatchForegroundMin);
    }
}

TEST_CASE("100k samples never leave the image") {
    std::mt19937_64 rng(32);
    const nn::Tensor img = randomImage(50, 60, rng);
    MaskImage mask = MaskImage::Constant(50, 60, true);
    int seen = 0;
    while (seen < 100000) {
        const PatchBatch batch = sample_patches(img, mask, 1000, rng);
        for (const auto& off : batch.offsets) {
            CHECK(off.x() >= 0);
            CHECK(off.y() >= 0);
            CHECK(off.x() + kPatchSize <= 60);
            CHECK(off.y() + kPatchSize <= 50);
        }
        seen += static_cast<int>(batch.patches.size());
    }
}

TEST_CASE("insufficient foreground is reported, not fatal") {
    std::mt19937_64 rng(33);
    const nn::Tensor img = randomImage(64, 64, rng);
    const MaskImage empty = MaskImage::Constant(64, 64, false);
    const PatchBatch batch = sample_patches(img, empty, 10, rng, PatchOrigin::Real, 20);
    CHECK(batch.patches.empty());
    CHECK(batch.insufficient_foreground);
}

TEST_CASE("adversarial losses match the symbolic oracle to 1e-12") {
    std::mt19937_64 rng(34);
    std::normal_distribution<Scalar> gauss;
    for (int trial = 0; trial < 100; ++trial) {
        const int nr = 1 + trial % 7, nf = 1 + trial % 5;
        VecX real(nr), fake(nf);
        for (int i = 0; i < nr; ++i) real[i] = gauss(rng);
        for (int i = 0; i < nf; ++i) fake[i] = gauss(rng);

        Scalar d = 0, g = 0;
        for (int i = 0; i < nr; ++i) d += (1 - real[i]) * (1 - real[i]) / nr;
        for (int i = 0; i < nf; ++i) d += fake[i] * fake[i] / nf;
        for (int i = 0; i < nf; ++i) g -= fake[i] * fake[i] / nf;

        const AdvLosses got = adv_losses(real, fake);
        CHECK(got.d == doctest::Approx(d).epsilon(1e-12));
        CHECK(got.g == doctest::Approx(g).epsilon(1e-12));

        Scalar g_std = 0;
        for (int i = 0; i < nf; ++i) g_std += (1 - fake[i]) * (1 - fake[i]) / nf;
        CHECK(adv_losses(real, fake, true).g == doctest::Approx(g_std).epsilon(1e-12));
    }
}

TEST_CASE("the half-score hand case") {
    VecX real(1), fake(1);
    real << 0.5;
    fake << 0.5;
    const AdvLosses l = adv_losses(real, fake);
    CHECK(l.d == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(l.g == doctest::Approx(-0.25).epsilon(1e-12));
}

TEST_CASE("loss gradients match finite differences") {
    std::mt19937_64 rng(35);
    std::normal_distribution<Scalar> gauss;
    VecX real(4), fake(3);
    for (int i = 0; i < 4; ++i) real[i] = gauss(rng);
    for (int i = 0; i < 3; ++i) fake[i] = gauss(rng);
    const Scalar eps = 1e-7;

    const VecX gdr = adv_loss_d_grad_real(real);
    const VecX gdf = adv_loss_d_grad_fake(fake);
    const VecX ggf = adv_loss_g_grad_fake(fake);
    const VecX ggf_std = adv_loss_g_grad_fake(fake, true);
    for (int i = 0; i < 4; ++i) {
        VecX rp = real, rm = real;
        rp[i] += eps;
        rm[i] -= eps;
        const Scalar fd = (adv_losses(rp, fake).d - adv_losses(rm, fake).d) / (2 * eps);
        CHECK(gdr[i] == doctest::Approx(fd).epsilon(1e-5));
    }
    for (int i = 0; i < 3; ++i) {
        VecX fp = fake, fm = fake;
        fp[i] += eps;
        fm[i] -= eps;
        CHECK(gdf[i] == doctest::Approx((adv_losses(real, fp).d - adv_losses(real, fm).d) /
                                        (2 * eps)).epsilon(1e-5));
        CHECK(ggf[i] == doctest::Approx((adv_losses(real, fp).g - adv_losses(real, fm).g) /
                                        (2 * eps)).epsilon(1e-5));
        CHECK(ggf_std[i] ==
              doctest::Approx((adv_losses(real, fp, true).g - adv_losses(real, fm, true).g) /
                              (2 * eps)).epsilon(1e-5));
    }
}

TEST_CASE("discriminator reduces every level to 9x9 maps") {
    Discriminator disc(8, 1);
    std::mt19937_64 rng(36);
    nn::Tensor patch(3, kPatchSize, kPatchSize);
    std::uniform_real_distribution<Scalar> u(0, 1);
    for (Eigen::Index i = 0; i < patch.data.size(); ++i) patch.data.data()[i] = u(rng);

    const auto sizes = disc.reducedMapSizes(patch);
    REQUIRE(sizes.size() == 3);
    for (const auto& [h, w] : sizes) {
        CHECK(h == 9);
        CHECK(w == 9);
    }
    const Scalar score = disc.forward(patch);
    CHECK(std::isfinite(score));
    CHECK_THROWS(disc.forward(nn::Tensor(3, 16, 16)));
}

TEST_CASE("discriminator gradients pass the finite-difference check") {
    Discriminator disc(4, 2);
    std::mt19937_64 rng(37);
    nn::Tensor patch(3, kPatchSize, kPatchSize);
    std::uniform_real_distribution<Scalar> u(0, 1);
    for (Eigen::Index i = 0; i < patch.data.size(); ++i) patch.data.data()[i] = u(rng);

    for (nn::Param* p : disc.params()) p->zeroGrad();
    disc.forward(patch);
    const nn::Tensor dpatch = disc.backward(1.0);

    // parameter gradients
    const auto params = disc.params();
    Scalar worst = 0;
    std::uniform_int_distribution<size_t> pickp(0, params.size() - 1);
    for (int trial = 0; trial < 20; ++trial) {
        nn::Param* p = params[pickp(rng)];
        std::uniform_int_distribution<Eigen::Index> pick(0, p->value.size() - 1);
        const Eigen::Index i = pick(rng);
        const Scalar orig = p->value.data()[i];
        const Scalar eps = 1e-6;
        p->value.data()[i] = orig + eps;
        const Scalar lp = disc.forward(patch);
        p->value.data()[i] = orig - eps;
        const Scalar lm = disc.forward(patch);
        p->value.data()[i] = orig;
        const Scalar fd = (lp - lm) / (2 * eps);
        const Scalar an = p->grad.data()[i];
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
    CHECK(worst < 1e-3);

    // input gradient
    Scalar worst_in = 0;
    std::uniform_int_distribution<Eigen::Index> pick(0, patch.data.size() - 1);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index i = pick(rng);
        const Scalar orig = patch.data.data()[i];
        const Scalar eps = 1e-6;
        patch.data.data()[i] = orig + eps;
        const Scalar lp = disc.forward(patch);
        patch.data.data()[i] = orig - eps;
        const Scalar lm = disc.forward(patch);
        patch.data.data()[i] = orig;
        const Scalar fd = (lp - lm) / (2 * eps);
        const Scalar an = dpatch.data.data()[i];
        worst_in =
            std::max(worst_in, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
    CHECK(worst_in < 1e-3);
}

TEST_CASE("scoreBatch scores every patch") {
    std::mt19937_64 rng(38);
    const nn::Tensor img = randomImage(64, 64, rng);
    const MaskImage mask = MaskImage::Constant(64, 64, true);
    const PatchBatch batch = sample_patches(img, mask, 7, rng);
    Discriminator disc(4, 3);
    const VecX scores = disc.scoreBatch(batch);
    REQUIRE(scores.size() == 7);
    CHECK(scores.allFinite());
}
