#pragma once

#include "fvr/camera.hpp"
#include "fvr/nn/nn.hpp"
#include "fvr/pointnet.hpp"
#include "fvr/types.hpp"

#include <random>

namespace fvr {

struct SplatResult {
    nn::Tensor features;  // F x H x W, zero where empty
    MaskImage mask;       // pixels hit by at least one point
    Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> owner;  // -1 where empty
};

// Per pixel, the feature of the depth-nearest projecting point (nearest-pixel
// rounding, z-buffer; ties go to the lower point index). Differentiable w.r.t.
// features via the owner map.
SplatResult splat_features(const Eigen::Matrix<Scalar, 3, Eigen::Dynamic>& positions,
                           const MatX& features, const CameraView& target);

// Routes a feature-map gradient back to per-point feature gradients.
MatX splat_backward(const SplatResult& splat, const nn::Tensor& dmap, Eigen::Index n_points);

// The learned rendering stack: point feature extractor + gated-conv render
// U-Net (psi_Neural) + plain fuse U-Net (psi_fuse).
class TwoBranchRenderer {
public:
    struct Config {
        PointFeatureNet::Config point;
        int render_levels = 4;
        int render_base = 32;
        int fuse_levels = 5;
        int fuse_base = 16;
        Scalar dropout_rate = 0.2;
        std::uint64_t init_seed = 1;
    };

    explicit TwoBranchRenderer(const Config& cfg);

    // psi_Neural: extract -> (train-only dropout) -> splat -> gated U-Net.
    // Output tensor has 4 channels: RGB (sigmoid) + mask (sigmoid).
    nn::Tensor renderNeural(const TexturedPointCloud& cloud, const CameraView& target,
                            bool train, std::mt19937_64& rng);
    // Backprop for the last renderNeural call (through to point-net parameters).
    void backwardNeural(const nn::Tensor& d_out4);

    // psi_fuse: concat(I_Neural, I_tex) -> U-Net -> sigmoid, anchored so the
    // untrained output is the mean of the two branch images.
    nn::Tensor blend(const nn::Tensor& i_neural, const nn::Tensor& i_tex);
    void backwardBlend(const nn::Tensor& d_out, nn::Tensor& d_neural, nn::Tensor& d_tex);

    std::vector<nn::Param*> params();        // all generator parameters
    std::vector<nn::Param*> neuralParams();  // point net + render U-Net only
    std::vector<nn::Param*> fuseParams();

    const Config& config() const { return cfg_; }
    PointFeatureNet& pointNet() { return point_net_; }

private:
    Config cfg_;
    PointFeatureNet point_net_;
    nn::UNet render_unet_;
    nn::UNet fuse_unet_;

    // renderNeural caches
    SplatResult splat_;
    Eigen::Index cloud_points_ = 0;
    bool used_dropout_ = false;
    nn::Tensor neural_out4_;  // post-sigmoid

    // blend caches
    nn::Tensor blend_out_;      // post-sigmoid
    nn::Tensor anchor_;         // clamped mean of the branch inputs
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> anchor_sat_;  // clamp active
};

// Convenience eval-mode wrapper: neural image + mask as plain images.
struct NeuralRenderOut {
    Image color;
    Plane mask;
};
NeuralRenderOut render_neural(TwoBranchRenderer& nets, const TexturedPointCloud& cloud,
                              const CameraView& target);

}  // namespace fvr
