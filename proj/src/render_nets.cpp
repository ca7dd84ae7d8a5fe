#include "fvr/render_nets.hpp"

#include <cmath>

namespace fvr {

SplatResult splat_features(const Eigen::Matrix<Scalar, 3, Eigen::Dynamic>& positions,
                           const MatX& features, const CameraView& target) {
    if (features.cols() != positions.cols())
        throw std::runtime_error("splat_features: features not aligned to points");
    SplatResult out;
    const int f = static_cast<int>(features.rows());
    out.features = nn::Tensor(f, target.height, target.width);
    out.mask = MaskImage::Constant(target.height, target.width, false);
    out.owner.setConstant(target.height, target.width, -1);
    Plane zbuf = Plane::Constant(target.height, target.width, std::numeric_limits<Scalar>::infinity());

    for (Eigen::Index i = 0; i < positions.cols(); ++i) {
        const auto pr = project_point(target, positions.col(i));
        if (!pr) continue;
        const int x = static_cast<int>(std::lround(pr->pixel.x()));
        const int y = static_cast<int>(std::lround(pr->pixel.y()));
        if (x < 0 || x >= target.width || y < 0 || y >= target.height) continue;
        if (pr->depth > zbuf(y, x)) continue;
        if (pr->depth == zbuf(y, x) && out.owner(y, x) >= 0 && out.owner(y, x) < i) continue;
        zbuf(y, x) = pr->depth;
        out.owner(y, x) = i;
    }
    for (int y = 0; y < target.height; ++y)
        for (int x = 0; x < target.width; ++x) {
            const Eigen::Index i = out.owner(y, x);
            if (i < 0) continue;
            out.mask(y, x) = true;
            for (int c = 0; c < f; ++c) out.features.at(c, y, x) = features(c, i);
        }
    return out;
}

MatX splat_backward(const SplatResult& splat, const nn::Tensor& dmap, Eigen::Index n_points) {
    MatX dfeat = MatX::Zero(dmap.c, n_points);
    for (int y = 0; y < dmap.h; ++y)
        for (int x = 0; x < dmap.w; ++x) {
            const Eigen::Index i = splat.owner(y, x);
            if (i < 0) continue;
            for (int c = 0; c < dmap.c; ++c) dfeat(c, i) += dmap.at(c, y, x);
        }
    return dfeat;
}

namespace {

nn::UNet makeRenderUnet(const TwoBranchRenderer::Config& cfg, std::mt19937_64& rng) {
    return nn::UNet("render", cfg.point.feature_dim + 1, 4, cfg.render_levels, cfg.render_base,
                    /*gated=*/true, rng);
}

nn::UNet makeFuseUnet(const TwoBranchRenderer::Config& cfg, std::mt19937_64& rng) {
    return nn::UNet("fuse", 6, 3, cfg.fuse_levels, cfg.fuse_base, /*gated=*/false, rng);
}

struct RngPair {
    std::mt19937_64 a, b, c;
    explicit RngPair(std::uint64_t seed) : a(seed), b(seed + 0x9e3779b9ULL), c(seed + 0x7f4a7c15ULL) {}
};

constexpr Scalar kAnchorEps = 1e-4;

}  // namespace

TwoBranchRenderer::TwoBranchRenderer(const Config& cfg)
    : cfg_(cfg),
      point_net_(cfg.point, cfg.init_seed),
      render_unet_([&] { RngPair r(cfg.init_seed); return makeRenderUnet(cfg, r.b); }()),
      fuse_unet_([&] { RngPair r(cfg.init_seed); return makeFuseUnet(cfg, r.c); }()) {
    // pass-through-average init: with a zero head the fuse output equals the
    // anchored mean of the two branch images
    fuse_unet_.head().weight().value.setZero();
    fuse_unet_.head().bias().value.setZero();
}

nn::Tensor TwoBranchRenderer::renderNeural(const TexturedPointCloud& cloud,
                                           const CameraView& target, bool train,
                                           std::mt19937_64& rng) {
    const TexturedPointCloud active = dropout_points(cloud, cfg_.dropout_rate, rng, train);
    used_dropout_ = train;
    cloud_points_ = active.size();
    const MatX feats = point_net_.forward(active);
    splat_ = splat_features(active.positions, feats, target);

    nn::Tensor input(splat_.features.c + 1, target.height, target.width);
    input.data.topRows(splat_.features.c) = splat_.features.data;
    for (int y = 0; y < target.height; ++y)
        for (int x = 0; x < target.width; ++x)
            input.at(splat_.features.c, y, x) = splat_.mask(y, x) ? 1.0 : 0.0;

    nn::Tensor pre = render_unet_.forward(input);
    neural_out4_ = pre;
    neural_out4_.data = (1.0 + (-pre.data.array()).exp()).inverse().matrix();
    return neural_out4_;
}

void TwoBranchRenderer::backwardNeural(const nn::Tensor& d_out4) {
    nn::Tensor dpre = d_out4;
    dpre.data = d_out4.data.cwiseProduct(
        (neural_out4_.data.array() * (1.0 - neural_out4_.data.array())).matrix());
    const nn::Tensor din = render_unet_.backward(dpre);
    nn::Tensor dmap(din.c - 1, din.h, din.w);
    dmap.data = din.data.topRows(din.c - 1);  // the splat-mask channel is a constant input
    const MatX dfeat = splat_backward(splat_, dmap, cloud_points_);
    point_net_.backward(dfeat);
}

nn::Tensor TwoBranchRenderer::blend(const nn::Tensor& i_neural, const nn::Tensor& i_tex) {
    if (!i_neural.sameShape(i_tex)) throw std::runtime_error("blend: image size mismatch");
    if (i_neural.c != 3) throw std::runtime_error("blend: expected 3-channel inputs");
    const nn::Tensor in6 = nn::concatChannels(i_neural, i_tex);
    const nn::Tensor u = fuse_unet_.forward(in6);

    anchor_ = i_neural;
    anchor_.data = (0.5 * (i_neural.data + i_tex.data)).cwiseMax(kAnchorEps).cwiseMin(1.0 - kAnchorEps);
    anchor_sat_ = (0.5 * (i_neural.data + i_tex.data)).array() <= kAnchorEps ||
                  (0.5 * (i_neural.data + i_tex.data)).array() >= 1.0 - kAnchorEps;

    blend_out_ = u;
    blend_out_.data = (1.0 + (-(u.data.array() + (anchor_.data.array() / (1.0 - anchor_.data.array())).log())).exp())
                          .inverse()
                          .matrix();
    return blend_out_;
}

void TwoBranchRenderer::backwardBlend(const nn::Tensor& d_out, nn::Tensor& d_neural,
                                      nn::Tensor& d_tex) {
    nn::Tensor dpre = d_out;
    dpre.data = d_out.data.cwiseProduct(
        (blend_out_.data.array() * (1.0 - blend_out_.data.array())).matrix());

    // through the U-Net to both concatenated inputs
    const nn::Tensor din6 = fuse_unet_.backward(dpre);
    nn::splitChannels(din6, 3, d_neural, d_tex);

    // through the logit anchor: d logit(m) / dm = 1 / (m (1-m)), dm/dI = 0.5
    MatX dm = dpre.data.cwiseQuotient(
        (anchor_.data.array() * (1.0 - anchor_.data.array())).matrix());
    dm = (anchor_sat_).select(MatX::Zero(dm.rows(), dm.cols()), dm);
    d_neural.data += 0.5 * dm;
    d_tex.data += 0.5 * dm;
}

std::vector<nn::Param*> TwoBranchRenderer::params() {
    auto p = neuralParams();
    const auto f = fuseParams();
    p.insert(p.end(), f.begin(), f.end());
    return p;
}

std::vector<nn::Param*> TwoBranchRenderer::neuralParams() {
    auto p = point_net_.params();
    const auto r = render_unet_.params();
    p.insert(p.end(), r.begin(), r.end());
    return p;
}

std::vector<nn::Param*> TwoBranchRenderer::fuseParams() { return fuse_unet_.params(); }

NeuralRenderOut render_neural(TwoBranchRenderer& nets, const TexturedPointCloud& cloud,
                              const CameraView& target) {
    std::mt19937_64 rng(0);  // unused in eval mode
    const nn::Tensor out4 = nets.renderNeural(cloud, target, /*train=*/false, rng);
    NeuralRenderOut out;
    out.color = Image(3, out4.h, out4.w);
    out.mask = Plane::Zero(out4.h, out4.w);
    for (int y = 0; y < out4.h; ++y)
        for (int x = 0; x < out4.w; ++x) {
            for (int c = 0; c < 3; ++c) out.color.ch[c](y, x) = out4.at(c, y, x);
            out.mask(y, x) = out4.at(3, y, x);
        }
    return out;
}

}  // namespace fvr
