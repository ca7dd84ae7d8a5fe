#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fvr/losses.hpp"
#include "fvr/metrics.hpp"

#include <cmath>
#include <random>

using namespace fvr;

namespace {

Image constantImage(int h, int w, Scalar v) {
    Image img(3, h, w);
    for (auto& p : img.ch) p.setConstant(v);
    return img;
}

Image randomImage(int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<Scalar> u(0, 1);
    Image img(3, h, w);
    for (auto& p : img.ch)
        for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
    return img;
}

nn::Tensor randomTensor(int c, int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<Scalar> u(0, 1);
    nn::Tensor t(c, h, w);
    for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = u(rng);
    return t;
}

}  // namespace

TEST_CASE("identical images score perfect metrics") {
    std::mt19937_64 rng(41);
    const Image a = randomImage(32, 32, rng);
    CHECK(mse(a, a) == 0.0);
    CHECK(photometric(a, a) == 0.0);
    CHECK(psnr(a, a) == 99.0);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant 0 vs 0.5: MSE 0.25, PSNR about 6.02 dB") {
    const Image a = constantImage(16, 16, 0.0);
    const Image b = constantImage(16, 16, 0.5);
    CHECK(mse(a, b) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(photometric(a, b) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(psnr(a, b) == doctest::Approx(10 * std::log10(4.0)).epsilon(1e-12));
}

TEST_CASE("metric symmetry and PSNR cross-check") {
    std::mt19937_64 rng(42);
    const Image a = randomImage(24, 24, rng);
    const Image b = randomImage(24, 24, rng);
    CHECK(mse(a, b) == mse(b, a));
    CHECK(photometric(a, b) == photometric(b, a));
    CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-9);
    // PSNR two ways
    CHECK(std::abs(psnr(a, b) - 10 * std::log10(1.0 / mse(a, b))) < 1e-9);
    CHECK_THROWS(mse(a, constantImage(8, 8, 0)));
}

TEST_CASE("masked metrics crop to the union foreground box") {
    std::mt19937_64 rng(43);
    Image a = constantImage(32, 32, 0.5);
    Image b = constantImage(32, 32, 0.5);
    // differences only outside the foreground box must not count
    b.ch[0](0, 0) = 1.0;
    b.ch[1](31, 31) = 0.0;
    MaskImage fg = MaskImage::Constant(32, 32, false);
    fg.block(10, 10, 8, 8).setConstant(true);
    const MetricSet inside = compute_metrics_masked(a, b, fg, fg);
    CHECK(inside.mse == 0.0);
    CHECK(inside.psnr == 99.0);
    const MetricSet full = compute_metrics(a, b);
    CHECK(full.mse > 0.0);
}

TEST_CASE("loss_rgb pixel-mean convention") {
    nn::Tensor a(1, 2, 2), b(1, 2, 2);
    a.data.setConstant(0.0);
    b.data.setConstant(0.5);
    CHECK(loss_rgb(a, b) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(loss_rgb(a, b) == loss_rgb(b, a));
    CHECK(loss_rgb(a, a) == 0.0);
}

TEST_CASE("loss_rgb gradient is the scaled sign pattern") {
    std::mt19937_64 rng(44);
    const nn::Tensor a = randomTensor(3, 5, 5, rng);
    const nn::Tensor b = randomTensor(3, 5, 5, rng);
    nn::Tensor grad(3, 5, 5);
    loss_rgb_grad(a, b, 2.0, grad);
    const Scalar eps = 1e-7;
    nn::Tensor ap = a;
    Scalar worst = 0;
    for (Eigen::Index i = 0; i < 10; ++i) {
        const Eigen::Index idx = (i * 7) % a.data.size();
        const Scalar orig = ap.data.data()[idx];
        ap.data.data()[idx] = orig + eps;
        const Scalar lp = loss_rgb(ap, b);
        ap.data.data()[idx] = orig - eps;
        const Scalar lm = loss_rgb(ap, b);
        ap.data.data()[idx] = orig;
        const Scalar fd = 2.0 * (lp - lm) / (2 * eps);
        worst = std::max(worst, std::abs(fd - grad.data.data()[idx]));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("perceptual loss: zero at equality, positive otherwise") {
    std::mt19937_64 rng(45);
    FeaturePyramid net(7);
    const nn::Tensor a = randomTensor(3, 16, 16, rng);
    const nn::Tensor b = randomTensor(3, 16, 16, rng);
    CHECK(loss_vgg(a, a, net) == 0.0);
    CHECK(loss_vgg(a, b, net) > 0.0);
    // deterministic per seed
    FeaturePyramid net2(7);
    CHECK(loss_vgg(a, b, net) == loss_vgg(a, b, net2));
}

TEST_CASE("perceptual loss gradient passes a finite-difference spot check") {
    std::mt19937_64 rng(46);
    FeaturePyramid net(7);
    nn::Tensor a = randomTensor(3, 8, 8, rng);
    const nn::Tensor b = randomTensor(3, 8, 8, rng);
    nn::Tensor grad(3, 8, 8);
    net.lossAndGrad(a, b, 1.0, grad);
    const Scalar eps = 1e-6;
    Scalar worst = 0;
    for (int i = 0; i < 10; ++i) {
        const Eigen::Index idx = (i * 13) % a.data.size();
        const Scalar orig = a.data.data()[idx];
        a.data.data()[idx] = orig + eps;
        const Scalar lp = net.loss(a, b);
        a.data.data()[idx] = orig - eps;
        const Scalar lm = net.loss(a, b);
        a.data.data()[idx] = orig;
        const Scalar fd = (lp - lm) / (2 * eps);
        const Scalar an = grad.data.data()[idx];
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("total_loss is the exact weighted sum") {
    const Vec3 lambdas(0.3, 5.0, 0.7);
    CHECK(total_loss(1, 1, 1, lambdas) == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(total_loss(0, 0, 0, lambdas) == 0.0);
    std::mt19937_64 rng(47);
    std::normal_distribution<Scalar> gauss;
    for (int i = 0; i < 100; ++i) {
        const Scalar a = gauss(rng), r = gauss(rng), v = gauss(rng);
        CHECK(total_loss(a, r, v, lambdas) ==
              doctest::Approx(0.3 * a + 5.0 * r + 0.7 * v).epsilon(1e-12));
        CHECK(total_loss(2 * a, 0, 0, lambdas) ==
              doctest::Approx(2 * total_loss(a, 0, 0, lambdas)).epsilon(1e-12));
    }
}

TEST_CASE("mask BCE is minimal at the target and its gradient checks out") {
    MaskImage target = MaskImage::Constant(4, 4, false);
    target.block(0, 0, 2, 4).setConstant(true);
    nn::Tensor good(1, 4, 4), bad(1, 4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            good.at(0, y, x) = target(y, x) ? 0.99 : 0.01;
            bad.at(0, y, x) = target(y, x) ? 0.01 : 0.99;
        }
    CHECK(mask_bce(good, target) < mask_bce(bad, target));

    std::mt19937_64 rng(48);
    std::uniform_real_distribution<Scalar> u(0.1, 0.9);
    nn::Tensor p(1, 4, 4);
    for (Eigen::Index i = 0; i < p.data.size(); ++i) p.data.data()[i] = u(rng);
    nn::Tensor grad(1, 4, 4);
    mask_bce(p, target, 1.0, &grad);
    const Scalar eps = 1e-7;
    for (int i = 0; i < 5; ++i) {
        const Eigen::Index idx = (i * 3) % p.data.size();
        const Scalar orig = p.data.data()[idx];
        p.data.data()[idx] = orig + eps;
        const Scalar lp = mask_bce(p, target);
        p.data.data()[idx] = orig - eps;
        const Scalar lm = mask_bce(p, target);
        p.data.data()[idx] = orig;
        CHECK(grad.data.data()[idx] == doctest::Approx((lp - lm) / (2 * eps)).epsilon(1e-4));
    }
}

TEST_CASE("keyframe study produces one point per (k, method)") {
    std::mt19937_64 rng(49);
    std::normal_distribution<Scalar> gauss;
    std::vector<Pose3D> poses(30);
    for (auto& p : poses)
        for (Eigen::Index j = 0; j < p.numJoints(); ++j)
            p.joints.col(j) = Vec3(gauss(rng), gauss(rng), gauss(rng));

    const auto points = keyframe_study(poses, {2, 4}, {"pose", "random"}, 5, 1);
    REQUIRE(points.size() == 4);
    for (const auto& pt : points) CHECK(pt.coverage >= 0.0);

    // k = n covers exactly
    const auto full = keyframe_study(poses, {30}, {"pose"}, 1, 1);
    CHECK(full[0].coverage == 0.0);

    CHECK_THROWS(keyframe_study(poses, {2}, {"bogus"}, 1, 1));
    const std::string json = studyToJson(points);
    CHECK(json.find("\"method\"") != std::string::npos);
}

TEST_CASE("render variant names round trip") {
    for (const auto v : {RenderVariant::Full, RenderVariant::TexOnly, RenderVariant::NeuralOnly})
        CHECK(variantFromName(variantName(v)) == v);
    CHECK_THROWS(variantFromName("bogus"));
}
