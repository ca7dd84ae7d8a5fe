#include "fvr/pose.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace fvr {

Pose3D transform_pose(const Pose3D& pose) {
    if (pose.numJoints() <= Pose3D::kRootJoint) throw std::runtime_error("transform_pose: missing root joint");
    Pose3D out = pose;
    const Vec3 root = pose.joints.col(Pose3D::kRootJoint);
    out.joints.colwise() -= root;
    return out;
}

Scalar pose_distance(const Pose3D& a, const Pose3D& b) {
    if (a.numJoints() != b.numJoints()) throw std::runtime_error("pose_distance: joint-count mismatch");
    return (a.joints - b.joints).colwise().norm().sum();
}

Pose3D concat_multi_person(const std::vector<Pose3D>& people) {
    if (people.empty()) throw std::runtime_error("concat_multi_person: no poses");
    for (const auto& p : people)
        if (p.timestamp != people[0].timestamp)
            throw std::runtime_error("concat_multi_person: mismatched timestamps");
    Pose3D out;
    const Eigen::Index total = static_cast<Eigen::Index>(people.size()) * people[0].numJoints();
    out.joints.resize(3, total);
    out.confidences.resize(total);
    Eigen::Index at = 0;
    for (const auto& p : people) {
        if (p.numJoints() != people[0].numJoints())
            throw std::runtime_error("concat_multi_person: person joint-count mismatch");
        out.joints.middleCols(at, p.numJoints()) = p.joints;
        out.confidences.segment(at, p.numJoints()) = p.confidences;
        at += p.numJoints();
    }
    out.timestamp = people[0].timestamp;
    return out;
}

std::string poseToJson(const Pose3D& pose) {
    nlohmann::json j;
    j["timestamp"] = pose.timestamp;
    std::vector<std::vector<Scalar>> joints;
    for (Eigen::Index i = 0; i < pose.numJoints(); ++i)
        joints.push_back({pose.joints(0, i), pose.joints(1, i), pose.joints(2, i)});
    j["joints"] = joints;
    j["confidences"] = std::vector<Scalar>(pose.confidences.data(), pose.confidences.data() + pose.confidences.size());
    return j.dump(2);
}

Pose3D poseFromJson(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    auto joints = j.at("joints").get<std::vector<std::vector<Scalar>>>();
    auto conf = j.at("confidences").get<std::vector<Scalar>>();
    if (joints.size() != conf.size()) throw std::runtime_error("pose json: joints/confidences length mismatch");
    Pose3D pose;
    pose.joints.resize(3, static_cast<Eigen::Index>(joints.size()));
    pose.confidences.resize(static_cast<Eigen::Index>(conf.size()));
    for (size_t i = 0; i < joints.size(); ++i) {
        if (joints[i].size() != 3) throw std::runtime_error("pose json: bad joint");
        pose.joints.col(static_cast<Eigen::Index>(i)) = Vec3(joints[i][0], joints[i][1], joints[i][2]);
        pose.confidences[static_cast<Eigen::Index>(i)] = conf[i];
    }
    pose.timestamp = j.at("timestamp").get<int>();
    return pose;
}

void savePose(const Pose3D& pose, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << poseToJson(pose) << "\n";
}

Pose3D loadPose(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return poseFromJson(text);
}

}  // namespace fvr
