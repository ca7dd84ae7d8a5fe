#pragma once

#include "fvr/camera.hpp"
#include "fvr/pose.hpp"
#include "fvr/types.hpp"

#include <random>
#include <string>
#include <vector>

namespace fvr {

struct NoiseParams {
    Scalar detection_sigma_px = 1.0;
    Scalar depth_sigma_m = 0.001;
    Scalar occlusion_floor = 0.05;
};

// Deterministic synthetic capture setup: an articulated performer on a
// six-camera ring. Same spec + seed gives bit-identical dataset bytes.
struct SceneSpec {
    std::uint64_t seed = 7;
    int frames = 100;
    int width = 128;
    int height = 128;
    int num_views = 6;
    std::string program = "walk";  // "walk" | "topology" (picks up a rigid prop mid-sequence)
    int period = 100;              // motion repeats exactly every `period` frames
    Scalar amplitude = 1.0;
    int surface_density = 4000;    // average surface samples per limb
    Scalar rig_radius = 2.5;       // meters
    Scalar rig_height = 1.4;
    Scalar splat_radius_m = 0.006;
    NoiseParams noise;

    void validate() const;
};

std::string sceneSpecToJson(const SceneSpec& spec);
SceneSpec sceneSpecFromJson(const std::string& text);
SceneSpec loadSceneSpec(const std::string& path);

struct Detection2D {
    Vec2 pixel;
    Scalar confidence = 0.0;
};
// detections[view][joint]
using FrameDetections = std::vector<std::vector<Detection2D>>;

std::string detectionsToJson(const FrameDetections& det);
FrameDetections detectionsFromJson(const std::string& text);

// Six cameras on a horizontal ring of radius rig_radius, all aimed at rig center.
std::vector<CameraView> makeRig(const SceneSpec& spec);

// Canonical frame-0 skeleton (T-pose, meters, y up, root mid-hip at (0,1,0)).
Pose3D restPose();

// Parent index per joint; the root (mid-hip, joint 8) has parent -1.
const std::array<int, Pose3D::kNumJoints>& jointParents();

// Ground-truth pose of the motion program at one frame; all confidences 1.
Pose3D motion_program_eval(const SceneSpec& spec, int frame_index);

struct SurfaceSamples {
    Eigen::Matrix<Scalar, 3, Eigen::Dynamic> positions;
    Eigen::Matrix<Scalar, 3, Eigen::Dynamic> colors;
};

// Colored performer surface (capsules with a procedural checker texture) at one frame.
SurfaceSamples performerSurface(const SceneSpec& spec, int frame_index);

// Unsigned distance from a world point to the performer surface at one frame.
Scalar distanceToSurface(const SceneSpec& spec, int frame_index, const Vec3& p);

// Z-buffer render of all views of one frame (noise-free depth).
std::vector<RGBDFrame> renderFrame(const SceneSpec& spec, const std::vector<CameraView>& cameras,
                                   int frame_index);

// Noisy 2D joint detections with occlusion-aware confidences. `clean_frames`
// must be the noise-free renders of the same frame (depth used for visibility).
FrameDetections sampleDetections(const SceneSpec& spec, const std::vector<CameraView>& cameras,
                                 const std::vector<RGBDFrame>& clean_frames, int frame_index,
                                 std::mt19937_64& rng);

// Writes the full dataset tree under out_dir:
//   cameras/view{i}.json
//   frames/{t:06}/view{i}_color.png | _depth.png | _mask.png
//   frames/{t:06}/pose_gt.json, detections.json
void generate_sequence(const SceneSpec& spec, const std::string& out_dir);

}  // namespace fvr
