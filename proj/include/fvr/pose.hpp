#pragma once

#include "fvr/types.hpp"

#include <string>

namespace fvr {

// 25-joint skeleton for one timestamp, with per-joint confidence in [0,1].
struct Pose3D {
    static constexpr int kNumJoints = 25;
    static constexpr int kRootJoint = 8;  // mid-hip

    Eigen::Matrix<Scalar, 3, Eigen::Dynamic> joints;  // 3 x V
    VecX confidences;                                 // V
    int timestamp = 0;

    Pose3D() : joints(Eigen::Matrix<Scalar, 3, Eigen::Dynamic>::Zero(3, kNumJoints)),
               confidences(VecX::Ones(kNumJoints)) {}

    Eigen::Index numJoints() const { return joints.cols(); }
};

// Root-aligns the pose: rigid translation putting the root joint at the origin.
Pose3D transform_pose(const Pose3D& pose);

// Pose-space distance: sum over joints of Euclidean distances.
// Both poses must carry the same joint count (works on multi-person concatenations too).
Scalar pose_distance(const Pose3D& a, const Pose3D& b);

// Concatenates per-person poses at one timestamp into a single V*P-joint pose,
// so pose_distance accumulates corresponding joint pairs across people.
// People must already be in canonical identity order.
Pose3D concat_multi_person(const std::vector<Pose3D>& people);

std::string poseToJson(const Pose3D& pose);
Pose3D poseFromJson(const std::string& text);
void savePose(const Pose3D& pose, const std::string& path);
Pose3D loadPose(const std::string& path);

}  // namespace fvr
