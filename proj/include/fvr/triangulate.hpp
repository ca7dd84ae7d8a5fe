#pragma once

#include "fvr/camera.hpp"
#include "fvr/pose.hpp"
#include "fvr/synth_rig.hpp"
#include "fvr/types.hpp"

#include <optional>

namespace fvr {

struct TriangulationConfig {
    Scalar confidence_threshold = 0.1;  // views below this are discarded per joint
    int min_views = 2;
    Scalar depth_assist_weight = 1.0;   // weight of depth-lifted point terms vs ray terms

    void validate() const {
        if (min_views < 2) throw std::runtime_error("triangulation: min_views must be >= 2");
        if (confidence_threshold < 0 || confidence_threshold > 1)
            throw std::runtime_error("triangulation: confidence threshold outside [0,1]");
        if (depth_assist_weight < 0) throw std::runtime_error("triangulation: negative depth weight");
    }
};

// Lifts per-view 2D detections to a global 3D skeleton. Per joint, views with
// confidence below the threshold are dropped; the estimate minimizes the
// confidence-weighted sum of squared point-to-ray distances plus
// depth-assist-weighted squared distances to depth-lifted points. Joints with
// fewer than min_views surviving views get confidence 0 and are filled from
// the previous pose's parent-relative offset (rest offsets when absent).
// Throws when every joint fails the minimum-view test.
Pose3D triangulate_pose(const FrameDetections& detections,
                        const std::vector<Plane>& depths,
                        const std::vector<CameraView>& cameras,
                        const TriangulationConfig& cfg,
                        const std::optional<Pose3D>& previous = std::nullopt);

}  // namespace fvr
