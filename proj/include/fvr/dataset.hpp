#pragma once

#include "fvr/camera.hpp"
#include "fvr/pose.hpp"
#include "fvr/synth_rig.hpp"
#include "fvr/types.hpp"

#include <string>
#include <vector>

namespace fvr {

// Read-side view of a generated dataset directory tree.
class Dataset {
public:
    static Dataset open(const std::string& root);

    const std::string& root() const { return root_; }
    int numFrames() const { return num_frames_; }
    const std::vector<CameraView>& cameras() const { return cameras_; }

    std::string frameDir(int t) const;
    RGBDFrame loadFrame(int t, int view) const;
    std::vector<RGBDFrame> loadFrameAllViews(int t) const;
    Pose3D loadGtPose(int t) const;
    FrameDetections loadDetections(int t) const;

    bool hasEstimatedPose(int t) const;
    Pose3D loadEstimatedPose(int t) const;
    void saveEstimatedPose(int t, const Pose3D& pose) const;

private:
    std::string root_;
    int num_frames_ = 0;
    std::vector<CameraView> cameras_;
};

}  // namespace fvr
