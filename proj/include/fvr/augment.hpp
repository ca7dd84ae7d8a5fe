#pragma once

#include "fvr/camera.hpp"
#include "fvr/types.hpp"

#include <random>

namespace fvr {

// 2D similarity augmentation: pixel p maps to s * R(theta) * (p - principal)
// + principal + translation. theta is in radians, counter-clockwise in the
// y-down image frame.
struct AugmentParams {
    Vec2 translation_px = Vec2::Zero();
    Scalar scale = 1.0;
    Scalar rotation_rad = 0.0;
};

struct AugmentRanges {
    Scalar max_translation_px = 8.0;
    Scalar min_scale = 0.9;
    Scalar max_scale = 1.1;
    Scalar max_rotation_deg = 10.0;

    void validate() const;
};

AugmentParams sample_augment(const AugmentRanges& ranges, std::mt19937_64& rng);

// Applies the similarity warp to color (bilinear), depth and mask (nearest),
// and folds the compensating update into the camera: focal *= s, principal
// moves with the warp, and the in-plane rotation becomes a camera-frame roll.
// Projections of 3D points through the new camera land exactly where the
// warp sends their old projections. Requires fx == fy when rotating.
void augment(RGBDFrame& frame, CameraView& cam, const AugmentParams& params);

// warp of a single pixel position, as applied by augment()
Vec2 augment_pixel(const Vec2& pixel, const Vec2& principal, const AugmentParams& params);

}  // namespace fvr
