#include "fvr/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace fvr {

Scalar loss_rgb(const nn::Tensor& pred, const nn::Tensor& target) {
    if (!pred.sameShape(target)) throw std::runtime_error("loss_rgb: shape mismatch");
    return (pred.data - target.data).cwiseAbs().mean();
}

Scalar loss_rgb(const std::vector<nn::Tensor>& pred, const std::vector<nn::Tensor>& target) {
    if (pred.size() != target.size() || pred.empty())
        throw std::runtime_error("loss_rgb: batch mismatch");
    Scalar sum = 0;
    for (size_t i = 0; i < pred.size(); ++i) sum += loss_rgb(pred[i], target[i]);
    return sum / static_cast<Scalar>(pred.size());
}

void loss_rgb_grad(const nn::Tensor& pred, const nn::Tensor& target, Scalar scale,
                   nn::Tensor& dpred) {
    if (!pred.sameShape(target) || !pred.sameShape(dpred))
        throw std::runtime_error("loss_rgb_grad: shape mismatch");
    const Scalar s = scale / static_cast<Scalar>(pred.data.size());
    dpred.data += s * (pred.data - target.data).array().sign().matrix();
}

namespace {

// Per-pixel weight plane: 1 inside the mask, bg_weight outside.
Eigen::ArrayXXd weightPlane(const MaskImage& mask, Scalar bg_weight) {
    return mask.cast<Scalar>() * (1.0 - bg_weight) + bg_weight;
}

}  // namespace

Scalar loss_rgb_weighted(const nn::Tensor& pred, const nn::Tensor& target, const MaskImage& mask,
                         Scalar bg_weight) {
    if (!pred.sameShape(target)) throw std::runtime_error("loss_rgb_weighted: shape mismatch");
    if (static_cast<int>(mask.rows()) != pred.h || static_cast<int>(mask.cols()) != pred.w)
        throw std::runtime_error("loss_rgb_weighted: mask shape mismatch");
    const Eigen::ArrayXXd w = weightPlane(mask, bg_weight);
    const Scalar wsum = w.sum() * pred.c;
    Scalar sum = 0;
    for (int c = 0; c < pred.c; ++c)
        for (int y = 0; y < pred.h; ++y)
            for (int x = 0; x < pred.w; ++x)
                sum += w(y, x) * std::abs(pred.at(c, y, x) - target.at(c, y, x));
    return sum / wsum;
}

void loss_rgb_weighted_grad(const nn::Tensor& pred, const nn::Tensor& target,
                            const MaskImage& mask, Scalar bg_weight, Scalar scale,
                            nn::Tensor& dpred) {
    if (!pred.sameShape(target) || !pred.sameShape(dpred))
        throw std::runtime_error("loss_rgb_weighted_grad: shape mismatch");
    if (static_cast<int>(mask.rows()) != pred.h || static_cast<int>(mask.cols()) != pred.w)
        throw std::runtime_error("loss_rgb_weighted_grad: mask shape mismatch");
    const Eigen::ArrayXXd w = weightPlane(mask, bg_weight);
    const Scalar s = scale / (w.sum() * pred.c);
    for (int c = 0; c < pred.c; ++c)
        for (int y = 0; y < pred.h; ++y)
            for (int x = 0; x < pred.w; ++x) {
                const Scalar d = pred.at(c, y, x) - target.at(c, y, x);
                dpred.at(c, y, x) += s * w(y, x) * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
            }
}

FeaturePyramid::FeaturePyramid(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    l1_.push_back(std::make_unique<nn::ConvAct>("fp.l1a", 3, 16, 3, 1, 1, rng, nn::Act::ReLU));
    l1_.push_back(std::make_unique<nn::ConvAct>("fp.l1b", 16, 16, 3, 2, 1, rng, nn::Act::ReLU));
    l2_.push_back(std::make_unique<nn::ConvAct>("fp.l2a", 16, 32, 3, 1, 1, rng, nn::Act::ReLU));
    l2_.push_back(std::make_unique<nn::ConvAct>("fp.l2b", 32, 32, 3, 2, 1, rng, nn::Act::ReLU));
}

std::vector<nn::Tensor> FeaturePyramid::features(const nn::Tensor& x) {
    nn::Tensor f1 = l1_[1]->forward(l1_[0]->forward(x));
    nn::Tensor f2 = l2_[1]->forward(l2_[0]->forward(f1));
    return {f1, f2};
}

Scalar FeaturePyramid::loss(const nn::Tensor& pred, const nn::Tensor& target) {
    if (!pred.sameShape(target)) throw std::runtime_error("loss_vgg: shape mismatch");
    const std::vector<nn::Tensor> ft = features(target);
    const std::vector<nn::Tensor> fp = features(pred);
    Scalar sum = 0;
    for (size_t l = 0; l < fp.size(); ++l)
        sum += (fp[l].data - ft[l].data).array().square().mean();
    return sum;
}

Scalar FeaturePyramid::lossAndGrad(const nn::Tensor& pred, const nn::Tensor& target, Scalar scale,
                                   nn::Tensor& dpred) {
    if (!pred.sameShape(target) || !pred.sameShape(dpred))
        throw std::runtime_error("loss_vgg: shape mismatch");
    const std::vector<nn::Tensor> ft = features(target);
    // forward on pred last so the layer caches hold the pred activations
    const std::vector<nn::Tensor> fp = features(pred);

    nn::Tensor d1 = fp[0];
    d1.data = (2.0 / fp[0].data.size()) * (fp[0].data - ft[0].data);
    nn::Tensor d2 = fp[1];
    d2.data = (2.0 / fp[1].data.size()) * (fp[1].data - ft[1].data);

    nn::Tensor back1 = l2_[0]->backward(l2_[1]->backward(d2));
    d1.data += back1.data;
    nn::Tensor dx = l1_[0]->backward(l1_[1]->backward(d1));
    dpred.data += scale * dx.data;

    // the pyramid is frozen; discard parameter gradients
    for (auto& l : l1_)
        for (nn::Param* p : l->params()) p->zeroGrad();
    for (auto& l : l2_)
        for (nn::Param* p : l->params()) p->zeroGrad();

    Scalar sum = 0;
    for (size_t l = 0; l < fp.size(); ++l)
        sum += (fp[l].data - ft[l].data).array().square().mean();
    return sum;
}

Scalar loss_vgg(const nn::Tensor& pred, const nn::Tensor& target, FeaturePyramid& net) {
    return net.loss(pred, target);
}

Scalar loss_vgg(const std::vector<nn::Tensor>& pred, const std::vector<nn::Tensor>& target,
                FeaturePyramid& net) {
    if (pred.size() != target.size() || pred.empty())
        throw std::runtime_error("loss_vgg: batch mismatch");
    Scalar sum = 0;
    for (size_t i = 0; i < pred.size(); ++i) sum += net.loss(pred[i], target[i]);
    return sum / static_cast<Scalar>(pred.size());
}

Scalar total_loss(Scalar l_adv, Scalar l_rgb, Scalar l_vgg, const Vec3& lambdas) {
    return lambdas[0] * l_adv + lambdas[1] * l_rgb + lambdas[2] * l_vgg;
}

Scalar mask_bce(const nn::Tensor& pred_mask, const MaskImage& target, Scalar scale,
                nn::Tensor* dpred) {
    if (pred_mask.c != 1 || pred_mask.h != target.rows() || pred_mask.w != target.cols())
        throw std::runtime_error("mask_bce: shape mismatch");
    constexpr Scalar eps = 1e-7;
    const Scalar inv_n = 1.0 / static_cast<Scalar>(pred_mask.h * pred_mask.w);
    Scalar loss = 0;
    for (int y = 0; y < pred_mask.h; ++y) {
        for (int x = 0; x < pred_mask.w; ++x) {
            const Scalar p = std::min(1.0 - eps, std::max(eps, pred_mask.at(0, y, x)));
            const Scalar t = target(y, x) ? 1.0 : 0.0;
            loss -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
            if (dpred)
                dpred->at(0, y, x) += scale * inv_n * (-t / p + (1.0 - t) / (1.0 - p));
        }
    }
    return loss * inv_n;
}

}  // namespace fvr
