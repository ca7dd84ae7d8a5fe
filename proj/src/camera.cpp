#include "fvr/camera.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace fvr {

void CameraView::validate() const {
    if (focal.x() <= 0 || focal.y() <= 0) throw std::runtime_error("camera: non-positive focal length");
    if (width <= 0 || height <= 0) throw std::runtime_error("camera: empty image size");
    if (principal.x() < 0 || principal.x() > width - 1 || principal.y() < 0 || principal.y() > height - 1)
        throw std::runtime_error("camera: principal point outside image bounds");
    Mat3 rtr = rotation.transpose() * rotation;
    if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() >= 1e-6)
        throw std::runtime_error("camera: rotation not orthonormal");
    if (rotation.determinant() < 0) throw std::runtime_error("camera: rotation is a reflection");
}

std::optional<Projection> project_point(const CameraView& cam, const Vec3& point) {
    if (!point.allFinite()) throw std::runtime_error("project_point: non-finite point");
    const Vec3 pc = cam.worldToCamera(point);
    if (pc.z() <= 0) return std::nullopt;
    Projection pr;
    pr.pixel = cam.focal.cwiseProduct(pc.head<2>() / pc.z()) + cam.principal;
    pr.depth = pc.z();
    return pr;
}

Vec3 unproject_pixel(const CameraView& cam, const Vec2& pixel, Scalar depth) {
    if (depth <= 0) throw std::runtime_error("unproject_pixel: depth must be positive");
    const Vec2 xy = (pixel - cam.principal).cwiseQuotient(cam.focal) * depth;
    return cam.cameraToWorld(Vec3(xy.x(), xy.y(), depth));
}

std::string cameraToJson(const CameraView& cam) {
    nlohmann::json j;
    j["view_id"] = cam.view_id;
    j["fx"] = cam.focal.x();
    j["fy"] = cam.focal.y();
    j["cx"] = cam.principal.x();
    j["cy"] = cam.principal.y();
    j["width"] = cam.width;
    j["height"] = cam.height;
    std::vector<Scalar> r(9);
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) r[3 * i + k] = cam.rotation(i, k);
    j["R"] = r;
    j["t"] = std::vector<Scalar>{cam.translation.x(), cam.translation.y(), cam.translation.z()};
    return j.dump(2);
}

CameraView cameraFromJson(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    CameraView cam;
    cam.view_id = j.at("view_id").get<int>();
    cam.focal = Vec2(j.at("fx").get<Scalar>(), j.at("fy").get<Scalar>());
    cam.principal = Vec2(j.at("cx").get<Scalar>(), j.at("cy").get<Scalar>());
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    auto r = j.at("R").get<std::vector<Scalar>>();
    auto t = j.at("t").get<std::vector<Scalar>>();
    if (r.size() != 9 || t.size() != 3) throw std::runtime_error("camera json: bad R/t length");
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) cam.rotation(i, k) = r[3 * i + k];
    cam.translation = Vec3(t[0], t[1], t[2]);
    cam.validate();
    return cam;
}

void saveCamera(const CameraView& cam, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << cameraToJson(cam) << "\n";
}

CameraView loadCamera(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return cameraFromJson(text);
}

}  // namespace fvr
