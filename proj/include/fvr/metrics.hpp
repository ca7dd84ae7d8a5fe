#pragma once

#include "fvr/dataset.hpp"
#include "fvr/keyframes.hpp"
#include "fvr/proxy.hpp"
#include "fvr/render_nets.hpp"
#include "fvr/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace fvr {

// Values are expected in [0, 1].
Scalar mse(const Image& a, const Image& b);
Scalar photometric(const Image& a, const Image& b);  // mean L1
Scalar psnr(const Image& a, const Image& b);         // 10*log10(1/mse), capped at 99 dB
Scalar psnr_from_mse(Scalar m);
Scalar ssim(const Image& a, const Image& b);  // 11x11 Gaussian sigma 1.5, channel mean

struct MetricSet {
    Scalar psnr = 0, ssim = 0, mse = 0, photometric = 0;
};

MetricSet compute_metrics(const Image& a, const Image& b);

// Metrics restricted to the bounding box of the union foreground.
MetricSet compute_metrics_masked(const Image& a, const Image& b, const MaskImage& fg_a,
                                 const MaskImage& fg_b);

enum class RenderVariant { Full, TexOnly, NeuralOnly };
std::string variantName(RenderVariant v);
RenderVariant variantFromName(const std::string& name);

// Renders one captured view of a frame from a key-frame proxy under the
// requested variant.
Image render_variant(TwoBranchRenderer& nets, const TexturedPointCloud& proxy,
                     const CameraView& target, RenderVariant variant,
                     Scalar splat_radius_m = 0.004);

struct EvalRow {
    std::string variant;
    int frames_evaluated = 0;
    int views_evaluated = 0;
    MetricSet mean;
};

// Renders every held-out (non-key) frame's captured views from the pose-space
// nearest key-frame proxy and averages the masked metrics. Poses used for the
// nearest-key-frame lookup are the estimated ones when available.
EvalRow evaluate_run(TwoBranchRenderer& nets, const Dataset& data, const KeyframeSet& keyframes,
                     const std::map<int, TexturedPointCloud>& proxies, RenderVariant variant,
                     int max_frames = -1, Scalar splat_radius_m = 0.004);

std::string evalRowsToJson(const std::vector<EvalRow>& rows);

struct StudyPoint {
    int k = 0;
    std::string method;
    Scalar coverage = 0;  // mean over trials for the random method
};

// Training-free key-frame-strategy comparison: coverage_radius per (k, method).
std::vector<StudyPoint> keyframe_study(const std::vector<Pose3D>& poses,
                                       const std::vector<int>& ks,
                                       const std::vector<std::string>& methods, int trials,
                                       std::uint64_t seed);

std::string studyToJson(const std::vector<StudyPoint>& points);

}  // namespace fvr
