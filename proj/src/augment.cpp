#include "fvr/augment.hpp"

#include <cmath>
#include <stdexcept>

namespace fvr {

void AugmentRanges::validate() const {
    if (max_translation_px < 0) throw std::runtime_error("augment: negative translation range");
    if (!(min_scale > 0) || min_scale > max_scale)
        throw std::runtime_error("augment: invalid scale range");
    if (max_rotation_deg < 0) throw std::runtime_error("augment: negative rotation range");
}

AugmentParams sample_augment(const AugmentRanges& ranges, std::mt19937_64& rng) {
    ranges.validate();
    std::uniform_real_distribution<Scalar> ut(-ranges.max_translation_px,
                                              ranges.max_translation_px);
    std::uniform_real_distribution<Scalar> us(ranges.min_scale, ranges.max_scale);
    std::uniform_real_distribution<Scalar> ur(-ranges.max_rotation_deg, ranges.max_rotation_deg);
    AugmentParams p;
    p.translation_px = Vec2(ut(rng), ut(rng));
    p.scale = us(rng);
    p.rotation_rad = ur(rng) * M_PI / 180.0;
    return p;
}

Vec2 augment_pixel(const Vec2& pixel, const Vec2& principal, const AugmentParams& params) {
    const Scalar c = std::cos(params.rotation_rad), s = std::sin(params.rotation_rad);
    const Vec2 d = pixel - principal;
    const Vec2 rotated(c * d.x() - s * d.y(), s * d.x() + c * d.y());
    return params.scale * rotated + principal + params.translation_px;
}

namespace {

// inverse warp: output pixel -> source pixel in the original image
Vec2 sourcePixel(const Vec2& out, const Vec2& principal, const AugmentParams& p) {
    const Scalar c = std::cos(p.rotation_rad), s = std::sin(p.rotation_rad);
    const Vec2 d = (out - principal - p.translation_px) / p.scale;
    return Vec2(c * d.x() + s * d.y(), -s * d.x() + c * d.y()) + principal;
}

Scalar bilinear(const Plane& p, const MaskImage& mask, Scalar x, Scalar y) {
    const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    const Scalar fx = x - x0, fy = y - y0;
    Scalar acc = 0, wsum = 0;
    for (int dy = 0; dy <= 1; ++dy) {
        for (int dx = 0; dx <= 1; ++dx) {
            const int xx = x0 + dx, yy = y0 + dy;
            if (xx < 0 || yy < 0 || xx >= p.cols() || yy >= p.rows() || !mask(yy, xx)) continue;
            const Scalar w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy);
            acc += w * p(yy, xx);
            wsum += w;
        }
    }
    return wsum > 1e-12 ? acc / wsum : 0.0;
}

}  // namespace

void augment(RGBDFrame& frame, CameraView& cam, const AugmentParams& params) {
    if (params.translation_px.isZero() && params.scale == 1.0 && params.rotation_rad == 0.0)
        return;
    if (params.rotation_rad != 0.0 &&
        std::abs(cam.focal.x() - cam.focal.y()) > 1e-9 * std::abs(cam.focal.x()))
        throw std::runtime_error("augment: in-plane rotation needs fx == fy");

    const int h = static_cast<int>(frame.mask.rows()), w = static_cast<int>(frame.mask.cols());
    Image color = frame.color;
    Plane depth = frame.depth;
    MaskImage mask = frame.mask;
    for (auto& plane : color.ch) plane.setZero();
    depth.setZero();
    mask.setConstant(false);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec2 src = sourcePixel(Vec2(x, y), cam.principal, params);
            const int sx = static_cast<int>(std::lround(src.x()));
            const int sy = static_cast<int>(std::lround(src.y()));
            if (sx < 0 || sy < 0 || sx >= w || sy >= h) continue;
            if (!frame.mask(sy, sx)) continue;
            mask(y, x) = true;
            depth(y, x) = frame.depth(sy, sx);
            for (size_t c = 0; c < color.ch.size(); ++c)
                color.ch[c](y, x) = bilinear(frame.color.ch[c], frame.mask, src.x(), src.y());
        }
    }
    frame.color = std::move(color);
    frame.depth = std::move(depth);
    frame.mask = std::move(mask);

    // compensating camera: an image-plane rotation about the principal point
    // equals a camera-frame roll about the optical axis
    const Scalar c = std::cos(params.rotation_rad), s = std::sin(params.rotation_rad);
    Mat3 roll;
    roll << c, -s, 0, s, c, 0, 0, 0, 1;
    cam.rotation = roll * cam.rotation;
    cam.translation = roll * cam.translation;
    cam.focal *= params.scale;
    cam.principal += params.translation_px;
}

}  // namespace fvr
