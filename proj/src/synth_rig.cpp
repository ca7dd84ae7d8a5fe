#include "fvr/synth_rig.hpp"

#include "fvr/image_io.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Geometry>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace fvr {
namespace {

constexpr int V = Pose3D::kNumJoints;

// BODY_25-style joint tree with absolute T-pose rest positions.
struct JointDef {
    int parent;
    Vec3 rest;  // absolute T-pose position
};

const std::array<JointDef, V>& jointDefs() {
    static const std::array<JointDef, V> defs = {{
        {1, {0.00, 1.65, 0.05}},    // 0 nose
        {8, {0.00, 1.50, 0.00}},    // 1 neck
        {1, {-0.18, 1.45, 0.00}},   // 2 r shoulder
        {2, {-0.45, 1.45, 0.00}},   // 3 r elbow
        {3, {-0.70, 1.45, 0.00}},   // 4 r wrist
        {1, {0.18, 1.45, 0.00}},    // 5 l shoulder
        {5, {0.45, 1.45, 0.00}},    // 6 l elbow
        {6, {0.70, 1.45, 0.00}},    // 7 l wrist
        {-1, {0.00, 1.00, 0.00}},   // 8 mid hip (root)
        {8, {-0.09, 0.95, 0.00}},   // 9 r hip
        {9, {-0.09, 0.52, 0.00}},   // 10 r knee
        {10, {-0.09, 0.08, 0.00}},  // 11 r ankle
        {8, {0.09, 0.95, 0.00}},    // 12 l hip
        {12, {0.09, 0.52, 0.00}},   // 13 l knee
        {13, {0.09, 0.08, 0.00}},   // 14 l ankle
        {0, {-0.03, 1.68, 0.08}},   // 15 r eye
        {0, {0.03, 1.68, 0.08}},    // 16 l eye
        {0, {-0.07, 1.66, 0.02}},   // 17 r ear
        {0, {0.07, 1.66, 0.02}},    // 18 l ear
        {14, {0.09, 0.02, 0.14}},   // 19 l big toe
        {14, {0.13, 0.02, 0.12}},   // 20 l small toe
        {14, {0.09, 0.02, -0.05}},  // 21 l heel
        {11, {-0.09, 0.02, 0.14}},  // 22 r big toe
        {11, {-0.13, 0.02, 0.12}},  // 23 r small toe
        {11, {-0.09, 0.02, -0.05}}, // 24 r heel
    }};
    return defs;
}

struct Bone {
    int a, b;        // parent joint, child joint
    Scalar radius;   // capsule radius, meters
};

const std::vector<Bone>& bones() {
    static const std::vector<Bone> b = {
        {8, 1, 0.120},   // torso
        {1, 0, 0.080},   // head
        {1, 2, 0.055},   // r clavicle
        {1, 5, 0.055},   // l clavicle
        {2, 3, 0.045},   // r upper arm
        {3, 4, 0.040},   // r forearm
        {5, 6, 0.045},   // l upper arm
        {6, 7, 0.040},   // l forearm
        {8, 9, 0.075},   // r hip
        {8, 12, 0.075},  // l hip
        {9, 10, 0.070},  // r thigh
        {10, 11, 0.055}, // r shin
        {12, 13, 0.070}, // l thigh
        {13, 14, 0.055}, // l shin
        {11, 22, 0.035}, // r foot
        {14, 19, 0.035}, // l foot
    };
    return b;
}

struct Capsule {
    Vec3 a, b;
    Scalar radius;
    int bone_index;  // color key
};

Scalar phaseOf(const SceneSpec& spec, int frame_index) {
    const int p = ((frame_index % spec.period) + spec.period) % spec.period;
    return 2.0 * std::numbers::pi * static_cast<Scalar>(p) / static_cast<Scalar>(spec.period);
}

// Per-joint local rotations of the motion program. All angles vanish at
// phase 0 so frame 0 is exactly the rest pose.
std::array<Mat3, V> localRotations(const SceneSpec& spec, Scalar phi) {
    std::array<Mat3, V> rot;
    rot.fill(Mat3::Identity());
    const Scalar a = spec.amplitude;
    const Scalar s = std::sin(phi);
    const Scalar bend = 0.5 * (1.0 - std::cos(phi));  // in [0,1], zero at phase 0
    auto rx = [](Scalar ang) { return Mat3(Eigen::AngleAxis<Scalar>(ang, Vec3::UnitX())); };
    auto ry = [](Scalar ang) { return Mat3(Eigen::AngleAxis<Scalar>(ang, Vec3::UnitY())); };
    auto rz = [](Scalar ang) { return Mat3(Eigen::AngleAxis<Scalar>(ang, Vec3::UnitZ())); };
    const Scalar deg = std::numbers::pi / 180.0;

    rot[8] = ry(a * 20.0 * deg * s);                       // root yaw sway
    rot[1] = rx(a * 6.0 * deg * s);                        // torso/neck nod
    rot[2] = rx(a * 40.0 * deg * s) * rz(a * 15.0 * deg * bend);   // r arm swing
    rot[5] = rx(-a * 40.0 * deg * s) * rz(-a * 15.0 * deg * bend); // l arm swing
    rot[3] = rx(a * 25.0 * deg * bend);                    // r elbow
    rot[6] = rx(-a * 25.0 * deg * bend);                   // l elbow
    rot[9] = rx(-a * 30.0 * deg * s);                      // r leg swing
    rot[12] = rx(a * 30.0 * deg * s);                      // l leg swing
    rot[10] = rx(a * 25.0 * deg * bend);                   // r knee
    rot[13] = rx(a * 25.0 * deg * bend);                   // l knee
    return rot;
}

Vec3 rootOffset(const SceneSpec& spec, Scalar phi) {
    const Scalar a = spec.amplitude;
    return Vec3(a * 0.05 * std::sin(phi), a * 0.03 * std::sin(2.0 * phi), a * 0.04 * std::sin(phi));
}

bool propActive(const SceneSpec& spec, int frame_index) {
    return spec.program == "topology" && frame_index >= spec.frames / 2;
}

std::vector<Capsule> capsulesAt(const SceneSpec& spec, const Pose3D& pose, int frame_index) {
    std::vector<Capsule> caps;
    const auto& bs = bones();
    caps.reserve(bs.size() + 1);
    for (size_t i = 0; i < bs.size(); ++i)
        caps.push_back({pose.joints.col(bs[i].a), pose.joints.col(bs[i].b), bs[i].radius,
                        static_cast<int>(i)});
    if (propActive(spec, frame_index)) {
        // rigid rod held at the right wrist
        const Vec3 w = pose.joints.col(4);
        caps.push_back({w, w + Vec3(0.0, -0.25, 0.10), 0.030, static_cast<int>(bs.size())});
    }
    return caps;
}

Vec3 hsvToRgb(Scalar h, Scalar s, Scalar v) {
    h = h - std::floor(h);
    const Scalar h6 = h * 6.0;
    const int i = static_cast<int>(h6) % 6;
    const Scalar f = h6 - std::floor(h6);
    const Scalar p = v * (1 - s), q = v * (1 - f * s), t = v * (1 - (1 - f) * s);
    switch (i) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

// checker + per-limb hue, keyed by capsule-local coordinates
Vec3 surfaceColor(int bone_index, Scalar along_m, Scalar around_m) {
    const Scalar hue = 0.07 + 0.61 * bone_index;  // irrational-ish stride over the wheel
    const int cell = static_cast<int>(std::floor(along_m / 0.10)) +
                     static_cast<int>(std::floor(around_m / 0.10));
    const bool on = ((cell % 2) + 2) % 2 == 0;
    return hsvToRgb(hue, 0.75, on ? 0.95 : 0.45);
}

// Deterministic area-uniform sampling of a capsule in its local frame
// (axis = +y from a to b). Returns (local position, along, around) per point.
struct LocalSample {
    Vec3 p;
    Scalar along, around;
};

std::vector<LocalSample> sampleCapsuleLocal(Scalar length, Scalar radius, int count) {
    std::vector<LocalSample> out;
    out.reserve(count);
    const Scalar pi = std::numbers::pi;
    const Scalar a_cyl = 2 * pi * radius * length;
    const Scalar a_total = a_cyl + 4 * pi * radius * radius;
    const Scalar golden = pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < count; ++k) {
        const Scalar u = (k + 0.5) / count * a_total;
        const Scalar theta = std::fmod(golden * k, 2 * pi);
        LocalSample s;
        if (u < a_cyl) {
            const Scalar h = u / (2 * pi * radius);
            s.p = Vec3(radius * std::cos(theta), h, radius * std::sin(theta));
            s.along = h;
            s.around = radius * theta;
        } else {
            // hemispherical caps, area-uniform in z
            const Scalar v = (u - a_cyl) / (4 * pi * radius * radius);  // in [0,1)
            const bool top = v >= 0.5;
            const Scalar w = top ? (v - 0.5) * 2 : v * 2;  // [0,1)
            const Scalar cz = w;                            // uniform in cap height
            const Scalar rr = radius * std::sqrt(std::max(0.0, 1.0 - cz * cz));
            const Scalar y = top ? length + radius * cz : -radius * cz;
            s.p = Vec3(rr * std::cos(theta), y, rr * std::sin(theta));
            s.along = y;
            s.around = radius * theta;
        }
        out.push_back(s);
    }
    return out;
}

Mat3 frameFromAxis(const Vec3& axis_unit) {
    // rotation taking +y to axis_unit (stable for near-parallel cases)
    return Eigen::Quaternion<Scalar>::FromTwoVectors(Vec3::UnitY(), axis_unit).toRotationMatrix();
}

Scalar capsuleArea(Scalar length, Scalar radius) {
    const Scalar pi = std::numbers::pi;
    return 2 * pi * radius * length + 4 * pi * radius * radius;
}

}  // namespace

void SceneSpec::validate() const {
    if (frames <= 0) throw std::runtime_error("scene spec: sequence length must be positive");
    if (num_views <= 0) throw std::runtime_error("scene spec: need at least one camera");
    if (width < 16 || height < 16) throw std::runtime_error("scene spec: image too small");
    if (period <= 0) throw std::runtime_error("scene spec: period must be positive");
    if (surface_density < 8) throw std::runtime_error("scene spec: surface density too low");
    if (rig_radius <= 0.5) throw std::runtime_error("scene spec: rig radius too small");
    if (program != "walk" && program != "topology")
        throw std::runtime_error("scene spec: unknown motion program '" + program + "'");
}

std::string sceneSpecToJson(const SceneSpec& s) {
    nlohmann::json j;
    j["seed"] = s.seed;
    j["frames"] = s.frames;
    j["width"] = s.width;
    j["height"] = s.height;
    j["num_views"] = s.num_views;
    j["program"] = s.program;
    j["period"] = s.period;
    j["amplitude"] = s.amplitude;
    j["surface_density"] = s.surface_density;
    j["rig_radius"] = s.rig_radius;
    j["rig_height"] = s.rig_height;
    j["splat_radius_m"] = s.splat_radius_m;
    j["noise"] = {{"detection_sigma_px", s.noise.detection_sigma_px},
                  {"depth_sigma_m", s.noise.depth_sigma_m},
                  {"occlusion_floor", s.noise.occlusion_floor}};
    return j.dump(2);
}

SceneSpec sceneSpecFromJson(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    SceneSpec s;
    s.seed = j.value("seed", s.seed);
    s.frames = j.value("frames", s.frames);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.num_views = j.value("num_views", s.num_views);
    s.program = j.value("program", s.program);
    s.period = j.value("period", s.period);
    s.amplitude = j.value("amplitude", s.amplitude);
    s.surface_density = j.value("surface_density", s.surface_density);
    s.rig_radius = j.value("rig_radius", s.rig_radius);
    s.rig_height = j.value("rig_height", s.rig_height);
    s.splat_radius_m = j.value("splat_radius_m", s.splat_radius_m);
    if (j.contains("noise")) {
        const auto& n = j["noise"];
        s.noise.detection_sigma_px = n.value("detection_sigma_px", s.noise.detection_sigma_px);
        s.noise.depth_sigma_m = n.value("depth_sigma_m", s.noise.depth_sigma_m);
        s.noise.occlusion_floor = n.value("occlusion_floor", s.noise.occlusion_floor);
    }
    s.validate();
    return s;
}

SceneSpec loadSceneSpec(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return sceneSpecFromJson(text);
}

std::string detectionsToJson(const FrameDetections& det) {
    nlohmann::json views = nlohmann::json::array();
    for (size_t v = 0; v < det.size(); ++v) {
        nlohmann::json joints = nlohmann::json::array();
        for (const auto& d : det[v])
            joints.push_back({{"u", d.pixel.x()}, {"v", d.pixel.y()}, {"c", d.confidence}});
        views.push_back({{"view_id", static_cast<int>(v)}, {"joints", joints}});
    }
    return nlohmann::json{{"views", views}}.dump(2);
}

FrameDetections detectionsFromJson(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    FrameDetections det;
    for (const auto& view : j.at("views")) {
        std::vector<Detection2D> joints;
        for (const auto& jj : view.at("joints")) {
            Detection2D d;
            d.pixel = Vec2(jj.at("u").get<Scalar>(), jj.at("v").get<Scalar>());
            d.confidence = jj.at("c").get<Scalar>();
            joints.push_back(d);
        }
        det.push_back(std::move(joints));
    }
    return det;
}

std::vector<CameraView> makeRig(const SceneSpec& spec) {
    std::vector<CameraView> cams;
    const Vec3 target(0.0, 1.0, 0.0);
    for (int i = 0; i < spec.num_views; ++i) {
        const Scalar ang = 2.0 * std::numbers::pi * i / spec.num_views;
        const Vec3 eye(spec.rig_radius * std::cos(ang), spec.rig_height, spec.rig_radius * std::sin(ang));
        CameraView cam;
        cam.view_id = i;
        cam.width = spec.width;
        cam.height = spec.height;
        const Scalar f = 0.9 * spec.width;
        cam.focal = Vec2(f, f);
        cam.principal = Vec2((spec.width - 1) / 2.0, (spec.height - 1) / 2.0);
        const Vec3 fwd = (target - eye).normalized();
        Vec3 down = -Vec3::UnitY() + fwd.dot(Vec3::UnitY()) * fwd;
        down.normalize();
        const Vec3 right = down.cross(fwd);
        cam.rotation.row(0) = right.transpose();
        cam.rotation.row(1) = down.transpose();
        cam.rotation.row(2) = fwd.transpose();
        cam.translation = -cam.rotation * eye;
        cam.validate();
        cams.push_back(cam);
    }
    return cams;
}

const std::array<int, Pose3D::kNumJoints>& jointParents() {
    static const auto parents = [] {
        std::array<int, V> p{};
        for (int i = 0; i < V; ++i) p[i] = jointDefs()[i].parent;
        return p;
    }();
    return parents;
}

Pose3D restPose() {
    Pose3D pose;
    for (int i = 0; i < V; ++i) pose.joints.col(i) = jointDefs()[i].rest;
    return pose;
}

Pose3D motion_program_eval(const SceneSpec& spec, int frame_index) {
    if (frame_index < 0 || frame_index >= spec.frames)
        throw std::runtime_error("motion_program_eval: frame index out of range");
    const Scalar phi = phaseOf(spec, frame_index);
    const auto rot = localRotations(spec, phi);
    const auto& defs = jointDefs();

    // forward kinematics in topological order (parents precede children except 0/1;
    // iterate until all resolved — the tree is shallow, two passes suffice)
    std::array<Mat3, V> world_rot;
    std::array<Vec3, V> world_pos;
    std::array<bool, V> done{};
    world_rot[8] = rot[8];
    world_pos[8] = defs[8].rest + rootOffset(spec, phi);
    done[8] = true;
    bool progress = true;
    while (progress) {
        progress = false;
        for (int i = 0; i < V; ++i) {
            if (done[i]) continue;
            const int p = defs[i].parent;
            if (!done[p]) continue;
            const Vec3 offset = defs[i].rest - defs[p].rest;
            world_pos[i] = world_pos[p] + world_rot[p] * offset;
            world_rot[i] = world_rot[p] * rot[i];
            done[i] = true;
            progress = true;
        }
    }
    Pose3D pose;
    pose.timestamp = frame_index;
    for (int i = 0; i < V; ++i) pose.joints.col(i) = world_pos[i];
    pose.confidences.setOnes();
    return pose;
}

SurfaceSamples performerSurface(const SceneSpec& spec, int frame_index) {
    const Pose3D pose = motion_program_eval(spec, frame_index);
    const auto caps = capsulesAt(spec, pose, frame_index);

    Scalar mean_area = 0;
    for (const auto& c : caps) mean_area += capsuleArea((c.b - c.a).norm(), c.radius);
    mean_area /= caps.size();

    std::vector<Vec3> positions, colors;
    for (const auto& c : caps) {
        const Vec3 axis = c.b - c.a;
        const Scalar len = axis.norm();
        const int count = std::max(32, static_cast<int>(std::lround(
                              spec.surface_density * capsuleArea(len, c.radius) / mean_area)));
        const Mat3 frame = frameFromAxis(axis / len);
        for (const auto& s : sampleCapsuleLocal(len, c.radius, count)) {
            positions.push_back(c.a + frame * s.p);
            colors.push_back(surfaceColor(c.bone_index, s.along, s.around));
        }
    }
    SurfaceSamples out;
    out.positions.resize(3, static_cast<Eigen::Index>(positions.size()));
    out.colors.resize(3, static_cast<Eigen::Index>(colors.size()));
    for (size_t i = 0; i < positions.size(); ++i) {
        out.positions.col(static_cast<Eigen::Index>(i)) = positions[i];
        out.colors.col(static_cast<Eigen::Index>(i)) = colors[i];
    }
    return out;
}

Scalar distanceToSurface(const SceneSpec& spec, int frame_index, const Vec3& p) {
    const Pose3D pose = motion_program_eval(spec, frame_index);
    Scalar best = std::numeric_limits<Scalar>::infinity();
    for (const auto& c : capsulesAt(spec, pose, frame_index)) {
        const Vec3 ab = c.b - c.a;
        const Scalar t = std::clamp((p - c.a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
        const Scalar d = std::abs((p - (c.a + t * ab)).norm() - c.radius);
        best = std::min(best, d);
    }
    return best;
}

std::vector<RGBDFrame> renderFrame(const SceneSpec& spec, const std::vector<CameraView>& cameras,
                                   int frame_index) {
    const SurfaceSamples surf = performerSurface(spec, frame_index);
    const Pose3D frame_pose = motion_program_eval(spec, frame_index);
    const auto caps = capsulesAt(spec, frame_pose, frame_index);
    // signed distance to the capsule union; stepping by it never crosses the surface
    const auto signedDist = [&](const Vec3& p) {
        Scalar best = std::numeric_limits<Scalar>::infinity();
        for (const auto& c : caps) {
            const Vec3 ab = c.b - c.a;
            const Scalar t = std::clamp((p - c.a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
            best = std::min(best, (p - (c.a + t * ab)).norm() - c.radius);
        }
        return best;
    };
    const Eigen::Index n = surf.positions.cols();
    std::vector<RGBDFrame> frames;
    frames.reserve(cameras.size());
    for (const auto& cam : cameras) {
        RGBDFrame fr;
        fr.view_id = cam.view_id;
        fr.frame_index = frame_index;
        fr.color = Image(3, cam.height, cam.width);
        fr.depth = Plane::Zero(cam.height, cam.width);
        fr.mask = MaskImage::Constant(cam.height, cam.width, false);
        Plane zbuf = Plane::Constant(cam.height, cam.width, std::numeric_limits<Scalar>::infinity());

        for (Eigen::Index i = 0; i < n; ++i) {
            const auto pr = project_point(cam, surf.positions.col(i));
            if (!pr) continue;
            const Scalar r_px = std::max(spec.splat_radius_m * cam.focal.x() / pr->depth, 0.71);
            const int x0 = std::max(0, static_cast<int>(std::ceil(pr->pixel.x() - r_px)));
            const int x1 = std::min(cam.width - 1, static_cast<int>(std::floor(pr->pixel.x() + r_px)));
            const int y0 = std::max(0, static_cast<int>(std::ceil(pr->pixel.y() - r_px)));
            const int y1 = std::min(cam.height - 1, static_cast<int>(std::floor(pr->pixel.y() + r_px)));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const Scalar dx = x - pr->pixel.x(), dy = y - pr->pixel.y();
                    if (dx * dx + dy * dy > r_px * r_px) continue;
                    if (pr->depth >= zbuf(y, x)) continue;
                    zbuf(y, x) = pr->depth;
                    for (int ch = 0; ch < 3; ++ch) fr.color.ch[ch](y, x) = surf.colors(ch, i);
                    fr.mask(y, x) = true;
                }
        }
        // The z-buffer carries each winning splat's depth, which is off by up
        // to the splat footprint. Refine by sphere-tracing the pixel-center
        // ray so unprojected depth lands on the true surface; splat-covered
        // pixels whose center ray misses the surface are demoted to background,
        // keeping color/depth/mask consistent at silhouettes.
        const Vec3 origin = cam.center();
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) {
                if (!fr.mask(y, x)) continue;
                const Scalar z0 = zbuf(y, x);
                // camera-frame direction with z = 1, so the ray parameter is depth
                const Vec3 d_cam((x - cam.principal.x()) / cam.focal.x(),
                                 (y - cam.principal.y()) / cam.focal.y(), 1.0);
                const Vec3 d = cam.rotation.transpose() * d_cam;
                const Scalar d_len = d.norm();
                const Scalar margin = spec.splat_radius_m + 2.0 * z0 / cam.focal.x();
                Scalar t = 1e-3;  // march from the camera: first crossing wins
                bool hit = false;
                for (int it = 0; it < 256; ++it) {
                    const Scalar sd = signedDist(origin + t * d);
                    if (sd < 1e-9) {
                        hit = true;
                        break;
                    }
                    t += sd / d_len;
                    if (t > z0 + margin) break;
                }
                if (hit) {
                    fr.depth(y, x) = t;
                } else {
                    fr.mask(y, x) = false;
                    fr.depth(y, x) = 0;
                    for (int ch = 0; ch < 3; ++ch) fr.color.ch[ch](y, x) = 0;
                }
            }
        frames.push_back(std::move(fr));
    }
    return frames;
}

FrameDetections sampleDetections(const SceneSpec& spec, const std::vector<CameraView>& cameras,
                                 const std::vector<RGBDFrame>& clean_frames, int frame_index,
                                 std::mt19937_64& rng) {
    const Pose3D pose = motion_program_eval(spec, frame_index);

    // visibility margin per joint: largest adjacent capsule radius + slack
    std::array<Scalar, V> margin;
    margin.fill(0.05);
    for (const auto& b : bones()) {
        margin[b.a] = std::max(margin[b.a], b.radius + 0.05);
        margin[b.b] = std::max(margin[b.b], b.radius + 0.05);
    }

    std::normal_distribution<Scalar> pix_noise(0.0, spec.noise.detection_sigma_px);
    std::uniform_real_distribution<Scalar> unif(0.0, 1.0);

    FrameDetections det(cameras.size());
    for (size_t vi = 0; vi < cameras.size(); ++vi) {
        const CameraView& cam = cameras[vi];
        const RGBDFrame& fr = clean_frames[vi];
        det[vi].resize(V);
        for (int j = 0; j < V; ++j) {
            const auto pr = project_point(cam, pose.joints.col(j));
            Detection2D d;
            bool visible = false;
            if (pr) {
                const int px = static_cast<int>(std::lround(pr->pixel.x()));
                const int py = static_cast<int>(std::lround(pr->pixel.y()));
                if (px >= 0 && px < cam.width && py >= 0 && py < cam.height && fr.mask(py, px))
                    visible = pr->depth <= fr.depth(py, px) + margin[j];
                d.pixel = pr->pixel + Vec2(pix_noise(rng), pix_noise(rng));
            } else {
                d.pixel = Vec2(0, 0);
            }
            d.confidence = visible ? 0.8 + 0.2 * unif(rng)
                                   : spec.noise.occlusion_floor * (0.2 + 0.8 * unif(rng));
            det[vi][j] = d;
        }
    }
    return det;
}

void generate_sequence(const SceneSpec& spec, const std::string& out_dir) {
    spec.validate();
    namespace fs = std::filesystem;
    const fs::path root(out_dir);
    fs::create_directories(root / "cameras");

    const auto cameras = makeRig(spec);
    for (const auto& cam : cameras)
        saveCamera(cam, (root / "cameras" / ("view" + std::to_string(cam.view_id) + ".json")).string());

    {
        std::ofstream f((root / "scene_spec.json").string(), std::ios::binary);
        f << sceneSpecToJson(spec) << "\n";
    }

    char buf[16];
    for (int t = 0; t < spec.frames; ++t) {
        std::snprintf(buf, sizeof(buf), "%06d", t);
        const fs::path fdir = root / "frames" / buf;
        fs::create_directories(fdir);

        auto frames = renderFrame(spec, cameras, t);

        std::mt19937_64 rng(mixSeed(spec.seed, static_cast<std::uint64_t>(t)));
        const FrameDetections det = sampleDetections(spec, cameras, frames, t, rng);

        std::normal_distribution<Scalar> depth_noise(0.0, spec.noise.depth_sigma_m);
        for (auto& fr : frames) {
            if (spec.noise.depth_sigma_m > 0) {
                for (int y = 0; y < fr.depth.rows(); ++y)
                    for (int x = 0; x < fr.depth.cols(); ++x)
                        if (fr.mask(y, x)) fr.depth(y, x) = std::max(1e-3, fr.depth(y, x) + depth_noise(rng));
            }
            const std::string v = "view" + std::to_string(fr.view_id);
            writeRgb8(fr.color, (fdir / (v + "_color.png")).string());
            writeDepth16(fr.depth, (fdir / (v + "_depth.png")).string());
            writeMask8(fr.mask, (fdir / (v + "_mask.png")).string());
        }

        savePose(motion_program_eval(spec, t), (fdir / "pose_gt.json").string());
        std::ofstream f((fdir / "detections.json").string(), std::ios::binary);
        f << detectionsToJson(det) << "\n";
    }
}

}  // namespace fvr
