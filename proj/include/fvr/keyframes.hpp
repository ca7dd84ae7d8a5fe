#pragma once

#include "fvr/pose.hpp"
#include "fvr/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fvr {

struct KeyframeSet {
    std::vector<int> indices;          // sorted, unique frame indices
    int k = 0;
    int iterations = 0;
    Scalar within_cluster_distance = 0;
    std::string method = "pose";
    std::uint64_t seed = 0;
};

// Pose-guided K-means over the sequence with cluster centers snapped to actual
// frames: assign via pose-space distance, take the numerical mean pose per
// cluster, snap each center to the frame whose pose is nearest that mean.
// Poses must be normalized (root at origin). Deterministic per seed.
KeyframeSet select_keyframes(const std::vector<Pose3D>& poses, int k, std::uint64_t seed,
                             int max_iterations = 100);

// Uniform sample of k distinct frames; the evaluation baseline.
KeyframeSet select_random(int n_frames, int k, std::uint64_t seed);

// Max over frames of the min pose-space distance to any key-frame.
Scalar coverage_radius(const KeyframeSet& keyframes, const std::vector<Pose3D>& poses);

// Default cluster count: 4% of the sequence, at least 2.
int defaultK(int n_frames);

std::string keyframesToJson(const KeyframeSet& set);
KeyframeSet keyframesFromJson(const std::string& text);
void saveKeyframes(const KeyframeSet& set, const std::string& path);
KeyframeSet loadKeyframes(const std::string& path);

}  // namespace fvr
