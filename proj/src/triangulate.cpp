#include "fvr/triangulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fvr {

Pose3D triangulate_pose(const FrameDetections& detections,
                        const std::vector<Plane>& depths,
                        const std::vector<CameraView>& cameras,
                        const TriangulationConfig& cfg,
                        const std::optional<Pose3D>& previous) {
    cfg.validate();
    if (detections.size() != cameras.size())
        throw std::runtime_error("triangulate_pose: detections/cameras count mismatch");
    if (!depths.empty() && depths.size() != cameras.size())
        throw std::runtime_error("triangulate_pose: depths/cameras count mismatch");

    // canonical view order so the accumulation is independent of input ordering
    std::vector<size_t> order(cameras.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return cameras[a].view_id < cameras[b].view_id; });

    const int V = static_cast<int>(detections[order[0]].size());
    Pose3D pose;
    pose.joints.resize(3, V);
    pose.confidences.resize(V);
    std::vector<bool> resolved(V, false);

    int num_resolved = 0;
    for (int j = 0; j < V; ++j) {
        Mat3 a = Mat3::Zero();
        Vec3 b = Vec3::Zero();
        Scalar conf_sum = 0;
        int used = 0;
        for (size_t oi : order) {
            const CameraView& cam = cameras[oi];
            const Detection2D& det = detections[oi][j];
            if (det.confidence < cfg.confidence_threshold) continue;
            const Vec3 origin = cam.center();
            const Vec3 dir = (unproject_pixel(cam, det.pixel, 1.0) - origin).normalized();
            const Scalar w = det.confidence;
            const Mat3 ray_term = w * (Mat3::Identity() - dir * dir.transpose());
            a += ray_term;
            b += ray_term * origin;
            if (!depths.empty() && cfg.depth_assist_weight > 0) {
                const int px = static_cast<int>(std::lround(det.pixel.x()));
                const int py = static_cast<int>(std::lround(det.pixel.y()));
                if (px >= 0 && px < cam.width && py >= 0 && py < cam.height &&
                    depths[oi](py, px) > 0) {
                    const Vec3 lifted = unproject_pixel(cam, det.pixel, depths[oi](py, px));
                    a += cfg.depth_assist_weight * w * Mat3::Identity();
                    b += cfg.depth_assist_weight * w * lifted;
                }
            }
            conf_sum += det.confidence;
            ++used;
        }
        if (used >= cfg.min_views) {
            pose.joints.col(j) = a.ldlt().solve(b);
            pose.confidences[j] = conf_sum / used;
            resolved[j] = true;
            ++num_resolved;
        } else {
            pose.confidences[j] = 0;
        }
    }
    if (num_resolved == 0) throw std::runtime_error("triangulate_pose: untriangulatable frame");

    // unresolved joints: parent-relative offset from the previous pose (rest offsets otherwise)
    const Pose3D fallback = previous.value_or(restPose());
    const auto& parents = jointParents();
    std::vector<bool> placed = resolved;
    bool progress = true;
    while (progress) {
        progress = false;
        for (int j = 0; j < V; ++j) {
            if (placed[j]) continue;
            const int p = j < Pose3D::kNumJoints ? parents[j] : -1;
            if (p < 0) {
                pose.joints.col(j) = fallback.joints.col(j);
            } else if (placed[p]) {
                pose.joints.col(j) = pose.joints.col(p) + (fallback.joints.col(j) - fallback.joints.col(p));
            } else {
                continue;
            }
            placed[j] = true;
            progress = true;
        }
    }
    for (int j = 0; j < V; ++j)
        if (!placed[j]) pose.joints.col(j) = fallback.joints.col(j);  // orphan cycle guard
    return pose;
}

}  // namespace fvr
