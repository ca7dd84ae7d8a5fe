#include "fvr/dataset.hpp"

#include "fvr/image_io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace fvr {

namespace fs = std::filesystem;

Dataset Dataset::open(const std::string& root) {
    Dataset ds;
    ds.root_ = root;
    const fs::path cam_dir = fs::path(root) / "cameras";
    if (!fs::is_directory(cam_dir)) throw std::runtime_error("not a dataset (no cameras/): " + root);
    std::vector<std::string> cam_files;
    for (const auto& e : fs::directory_iterator(cam_dir))
        if (e.path().extension() == ".json") cam_files.push_back(e.path().string());
    std::sort(cam_files.begin(), cam_files.end());
    for (const auto& f : cam_files) ds.cameras_.push_back(loadCamera(f));
    std::sort(ds.cameras_.begin(), ds.cameras_.end(),
              [](const CameraView& a, const CameraView& b) { return a.view_id < b.view_id; });

    const fs::path frames_dir = fs::path(root) / "frames";
    if (!fs::is_directory(frames_dir)) throw std::runtime_error("not a dataset (no frames/): " + root);
    int count = 0;
    for (const auto& e : fs::directory_iterator(frames_dir))
        if (e.is_directory()) ++count;
    ds.num_frames_ = count;
    return ds;
}

std::string Dataset::frameDir(int t) const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", t);
    return (fs::path(root_) / "frames" / buf).string();
}

RGBDFrame Dataset::loadFrame(int t, int view) const {
    const fs::path dir(frameDir(t));
    const std::string v = "view" + std::to_string(view);
    RGBDFrame fr;
    fr.color = readRgb8((dir / (v + "_color.png")).string());
    fr.depth = readDepth16((dir / (v + "_depth.png")).string());
    fr.mask = readMask8((dir / (v + "_mask.png")).string());
    fr.view_id = view;
    fr.frame_index = t;
    return fr;
}

std::vector<RGBDFrame> Dataset::loadFrameAllViews(int t) const {
    std::vector<RGBDFrame> out;
    out.reserve(cameras_.size());
    for (const auto& cam : cameras_) out.push_back(loadFrame(t, cam.view_id));
    return out;
}

Pose3D Dataset::loadGtPose(int t) const {
    return loadPose((fs::path(frameDir(t)) / "pose_gt.json").string());
}

FrameDetections Dataset::loadDetections(int t) const {
    const std::string path = (fs::path(frameDir(t)) / "detections.json").string();
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return detectionsFromJson(text);
}

bool Dataset::hasEstimatedPose(int t) const {
    return fs::exists(fs::path(frameDir(t)) / "pose_est.json");
}

Pose3D Dataset::loadEstimatedPose(int t) const {
    return loadPose((fs::path(frameDir(t)) / "pose_est.json").string());
}

void Dataset::saveEstimatedPose(int t, const Pose3D& pose) const {
    savePose(pose, (fs::path(frameDir(t)) / "pose_est.json").string());
}

}  // namespace fvr
