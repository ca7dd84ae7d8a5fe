#include "fvr/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fvr {

namespace {

void requireSameShape(const Image& a, const Image& b) {
    if (a.ch.size() != b.ch.size() || a.ch.empty())
        throw std::runtime_error("metrics: channel count mismatch");
    for (size_t c = 0; c < a.ch.size(); ++c)
        if (a.ch[c].rows() != b.ch[c].rows() || a.ch[c].cols() != b.ch[c].cols())
            throw std::runtime_error("metrics: shape mismatch");
}

}  // namespace

Scalar mse(const Image& a, const Image& b) {
    requireSameShape(a, b);
    Scalar sum = 0;
    for (size_t c = 0; c < a.ch.size(); ++c) sum += (a.ch[c] - b.ch[c]).square().mean();
    return sum / static_cast<Scalar>(a.ch.size());
}

Scalar photometric(const Image& a, const Image& b) {
    requireSameShape(a, b);
    Scalar sum = 0;
    for (size_t c = 0; c < a.ch.size(); ++c) sum += (a.ch[c] - b.ch[c]).abs().mean();
    return sum / static_cast<Scalar>(a.ch.size());
}

Scalar psnr_from_mse(Scalar m) {
    if (m < 1e-10) return 99.0;
    return 10.0 * std::log10(1.0 / m);
}

Scalar psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

namespace {

// 11x11 Gaussian-weighted local moments, sigma 1.5, reflected borders
Plane gaussianBlur(const Plane& img) {
    constexpr int kR = 5;
    Scalar kern[2 * kR + 1];
    Scalar ksum = 0;
    for (int i = -kR; i <= kR; ++i) {
        kern[i + kR] = std::exp(-0.5 * (i * i) / (1.5 * 1.5));
        ksum += kern[i + kR];
    }
    for (Scalar& k : kern) k /= ksum;

    const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
    auto reflect = [](int i, int n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
        return std::min(std::max(i, 0), n - 1);
    };
    Plane tmp(h, w), out(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            Scalar s = 0;
            for (int i = -kR; i <= kR; ++i) s += kern[i + kR] * img(y, reflect(x + i, w));
            tmp(y, x) = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            Scalar s = 0;
            for (int i = -kR; i <= kR; ++i) s += kern[i + kR] * tmp(reflect(y + i, h), x);
            out(y, x) = s;
        }
    return out;
}

Scalar ssimPlane(const Plane& a, const Plane& b) {
    constexpr Scalar c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const Plane mu_a = gaussianBlur(a), mu_b = gaussianBlur(b);
    const Plane sa = gaussianBlur(a.square()) - mu_a.square();
    const Plane sb = gaussianBlur(b.square()) - mu_b.square();
    const Plane sab = gaussianBlur(a * b) - mu_a * mu_b;
    const Plane num = (2.0 * mu_a * mu_b + c1) * (2.0 * sab + c2);
    const Plane den = (mu_a.square() + mu_b.square() + c1) * (sa + sb + c2);
    return (num / den).mean();
}

}  // namespace

Scalar ssim(const Image& a, const Image& b) {
    requireSameShape(a, b);
    Scalar sum = 0;
    for (size_t c = 0; c < a.ch.size(); ++c) sum += ssimPlane(a.ch[c], b.ch[c]);
    return sum / static_cast<Scalar>(a.ch.size());
}

MetricSet compute_metrics(const Image& a, const Image& b) {
    MetricSet m;
    m.mse = mse(a, b);
    m.photometric = photometric(a, b);
    m.psnr = psnr_from_mse(m.mse);
    m.ssim = ssim(a, b);
    return m;
}

MetricSet compute_metrics_masked(const Image& a, const Image& b, const MaskImage& fg_a,
                                 const MaskImage& fg_b) {
    requireSameShape(a, b);
    const int h = static_cast<int>(fg_a.rows()), w = static_cast<int>(fg_a.cols());
    int x0 = w, y0 = h, x1 = -1, y1 = -1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (fg_a(y, x) || fg_b(y, x)) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) return compute_metrics(a, b);  // empty masks: fall back to full frame

    Image ca, cb;
    for (size_t c = 0; c < a.ch.size(); ++c) {
        ca.ch.push_back(a.ch[c].block(y0, x0, y1 - y0 + 1, x1 - x0 + 1));
        cb.ch.push_back(b.ch[c].block(y0, x0, y1 - y0 + 1, x1 - x0 + 1));
    }
    return compute_metrics(ca, cb);
}

std::string variantName(RenderVariant v) {
    switch (v) {
        case RenderVariant::Full: return "full";
        case RenderVariant::TexOnly: return "tex";
        case RenderVariant::NeuralOnly: return "neural";
    }
    throw std::runtime_error("unknown render variant");
}

RenderVariant variantFromName(const std::string& name) {
    if (name == "full") return RenderVariant::Full;
    if (name == "tex") return RenderVariant::TexOnly;
    if (name == "neural") return RenderVariant::NeuralOnly;
    throw std::runtime_error("unknown render variant: " + name);
}

Image render_variant(TwoBranchRenderer& nets, const TexturedPointCloud& proxy,
                     const CameraView& target, RenderVariant variant, Scalar splat_radius_m) {
    if (variant == RenderVariant::TexOnly)
        return render_textured(proxy, target, splat_radius_m).color;
    if (variant == RenderVariant::NeuralOnly)
        return render_neural(nets, proxy, target).color;

    const TexturedRender tex = render_textured(proxy, target, splat_radius_m);
    std::mt19937_64 rng(0);
    const nn::Tensor neural4 = nets.renderNeural(proxy, target, /*train=*/false, rng);
    nn::Tensor i_neural(3, neural4.h, neural4.w);
    i_neural.data = neural4.data.topRows(3);
    const nn::Tensor fused = nets.blend(i_neural, nn::imageToTensor(tex.color));
    return nn::tensorToImage(fused);
}

EvalRow evaluate_run(TwoBranchRenderer& nets, const Dataset& data, const KeyframeSet& keyframes,
                     const std::map<int, TexturedPointCloud>& proxies, RenderVariant variant,
                     int max_frames, Scalar splat_radius_m) {
    if (keyframes.indices.empty()) throw std::runtime_error("evaluate_run: no key-frames");
    for (int kf : keyframes.indices)
        if (!proxies.count(kf)) throw std::runtime_error("evaluate_run: missing key-frame proxy");

    std::vector<Pose3D> kf_poses;
    for (int kf : keyframes.indices)
        kf_poses.push_back(transform_pose(data.hasEstimatedPose(kf) ? data.loadEstimatedPose(kf)
                                                                    : data.loadGtPose(kf)));

    EvalRow row;
    row.variant = variantName(variant);
    MetricSet acc;
    for (int t = 0; t < data.numFrames(); ++t) {
        if (std::find(keyframes.indices.begin(), keyframes.indices.end(), t) !=
            keyframes.indices.end())
            continue;
        if (max_frames >= 0 && row.frames_evaluated >= max_frames) break;

        const Pose3D pose =
            transform_pose(data.hasEstimatedPose(t) ? data.loadEstimatedPose(t)
                                                    : data.loadGtPose(t));
        int best = 0;
        Scalar best_d = pose_distance(pose, kf_poses[0]);
        for (size_t i = 1; i < kf_poses.size(); ++i) {
            const Scalar d = pose_distance(pose, kf_poses[i]);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(i);
            }
        }
        const TexturedPointCloud& proxy = proxies.at(keyframes.indices[best]);

        for (const CameraView& cam : data.cameras()) {
            const RGBDFrame gt = data.loadFrame(t, cam.view_id);
            const Image rendered = render_variant(nets, proxy, cam, variant, splat_radius_m);
            const Image gt_masked = maskedImage(gt.color, gt.mask);
            const MetricSet m = compute_metrics_masked(rendered, gt_masked, gt.mask, gt.mask);
            acc.psnr += m.psnr;
            acc.ssim += m.ssim;
            acc.mse += m.mse;
            acc.photometric += m.photometric;
            ++row.views_evaluated;
        }
        ++row.frames_evaluated;
    }
    if (row.views_evaluated == 0) throw std::runtime_error("evaluate_run: empty holdout split");
    const Scalar n = row.views_evaluated;
    row.mean = {acc.psnr / n, acc.ssim / n, acc.mse / n, acc.photometric / n};
    return row;
}

std::string evalRowsToJson(const std::vector<EvalRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const EvalRow& r : rows)
        j.push_back({{"variant", r.variant},
                     {"frames", r.frames_evaluated},
                     {"views", r.views_evaluated},
                     {"psnr", r.mean.psnr},
                     {"ssim", r.mean.ssim},
                     {"mse", r.mean.mse},
                     {"photometric", r.mean.photometric}});
    return j.dump(2);
}

std::vector<StudyPoint> keyframe_study(const std::vector<Pose3D>& poses,
                                       const std::vector<int>& ks,
                                       const std::vector<std::string>& methods, int trials,
                                       std::uint64_t seed) {
    if (trials < 1) throw std::runtime_error("keyframe_study: trials must be >= 1");
    std::vector<StudyPoint> out;
    for (int k : ks) {
        for (const std::string& method : methods) {
            StudyPoint pt;
            pt.k = k;
            pt.method = method;
            if (method == "pose") {
                pt.coverage = coverage_radius(select_keyframes(poses, k, seed), poses);
            } else if (method == "random") {
                Scalar sum = 0;
                for (int trial = 0; trial < trials; ++trial)
                    sum += coverage_radius(
                        select_random(static_cast<int>(poses.size()), k, seed + trial), poses);
                pt.coverage = sum / trials;
            } else {
                throw std::runtime_error("keyframe_study: unknown method " + method);
            }
            out.push_back(pt);
        }
    }
    return out;
}

std::string studyToJson(const std::vector<StudyPoint>& points) {
    nlohmann::json j = nlohmann::json::array();
    for (const StudyPoint& p : points)
        j.push_back({{"k", p.k}, {"method", p.method}, {"coverage", p.coverage}});
    return j.dump(2);
}

}  // namespace fvr
