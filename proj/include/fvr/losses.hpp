#pragma once

#include "fvr/nn/nn.hpp"
#include "fvr/types.hpp"

#include <memory>
#include <vector>

namespace fvr {

// Mean absolute difference per pixel per channel (pixel-mean convention keeps
// the loss weights resolution-independent).
Scalar loss_rgb(const nn::Tensor& pred, const nn::Tensor& target);
Scalar loss_rgb(const std::vector<nn::Tensor>& pred, const std::vector<nn::Tensor>& target);

// Accumulates scale * dL/dpred into dpred for the single-image loss above.
void loss_rgb_grad(const nn::Tensor& pred, const nn::Tensor& target, Scalar scale,
                   nn::Tensor& dpred);

// Foreground-weighted variant: pixels inside the mask get weight 1, pixels
// outside get bg_weight, and the result is the weighted mean absolute
// difference. With a masked (mostly black) target the background pixels
// vastly outnumber the subject; down-weighting them keeps their constant
// sign gradients from saturating the bounded output before the foreground
// can be fit.
Scalar loss_rgb_weighted(const nn::Tensor& pred, const nn::Tensor& target, const MaskImage& mask,
                         Scalar bg_weight);
void loss_rgb_weighted_grad(const nn::Tensor& pred, const nn::Tensor& target,
                            const MaskImage& mask, Scalar bg_weight, Scalar scale,
                            nn::Tensor& dpred);

// Frozen random-weight convolutional feature pyramid used as the perceptual
// feature extractor: two levels (half and quarter resolution), fixed seed,
// never trained.
class FeaturePyramid {
public:
    explicit FeaturePyramid(std::uint64_t seed = 77);

    // feature maps at the two pyramid levels
    std::vector<nn::Tensor> features(const nn::Tensor& x);

    // perceptual distance: sum over levels of the per-element mean squared
    // feature difference
    Scalar loss(const nn::Tensor& pred, const nn::Tensor& target);

    // like loss() but also accumulates scale * dL/dpred into dpred
    Scalar lossAndGrad(const nn::Tensor& pred, const nn::Tensor& target, Scalar scale,
                       nn::Tensor& dpred);

private:
    std::vector<std::unique_ptr<nn::Layer>> l1_, l2_;  // level blocks
};

Scalar loss_vgg(const nn::Tensor& pred, const nn::Tensor& target, FeaturePyramid& net);
Scalar loss_vgg(const std::vector<nn::Tensor>& pred, const std::vector<nn::Tensor>& target,
                FeaturePyramid& net);

// L = lambda1 * L_adv + lambda2 * L_rgb + lambda3 * L_vgg
Scalar total_loss(Scalar l_adv, Scalar l_rgb, Scalar l_vgg, const Vec3& lambdas);

// Binary cross-entropy over a predicted soft mask in (0,1) against a boolean
// target; optional gradient w.r.t. the prediction (post-sigmoid).
Scalar mask_bce(const nn::Tensor& pred_mask, const MaskImage& target, Scalar scale = 0.0,
                nn::Tensor* dpred = nullptr);

}  // namespace fvr
