#pragma once

#include "fvr/types.hpp"

#include <optional>
#include <string>

namespace fvr {

// Pinhole camera with rigid extrinsics, world -> camera: Xc = R * Xw + t.
struct CameraView {
    Vec2 focal = Vec2(1, 1);       // fx, fy (pixels)
    Vec2 principal = Vec2(0, 0);   // cx, cy (pixels)
    int width = 0;
    int height = 0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    int view_id = 0;

    Vec3 worldToCamera(const Vec3& p) const { return rotation * p + translation; }
    Vec3 cameraToWorld(const Vec3& p) const { return rotation.transpose() * (p - translation); }
    Vec3 center() const { return -rotation.transpose() * translation; }

    void validate() const;
};

struct Projection {
    Vec2 pixel;
    Scalar depth;  // z in camera frame, > 0
};

// Perspective projection; empty result signals a point at or behind the camera plane.
std::optional<Projection> project_point(const CameraView& cam, const Vec3& point);

// Exact right-inverse of project_point on depth > 0. Throws on depth <= 0.
Vec3 unproject_pixel(const CameraView& cam, const Vec2& pixel, Scalar depth);

std::string cameraToJson(const CameraView& cam);
CameraView cameraFromJson(const std::string& text);

void saveCamera(const CameraView& cam, const std::string& path);
CameraView loadCamera(const std::string& path);

}  // namespace fvr
