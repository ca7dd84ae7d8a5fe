#include "fvr/augment.hpp"
#include "fvr/dataset.hpp"
#include "fvr/image_io.hpp"
#include "fvr/keyframes.hpp"
#include "fvr/metrics.hpp"
#include "fvr/proxy.hpp"
#include "fvr/synth_rig.hpp"
#include "fvr/trainer.hpp"
#include "fvr/triangulate.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace fvr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string readTextFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void writeTextFile(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

std::vector<CameraView> loadCameraPath(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(readTextFile(path));
    } catch (const std::exception& e) {
        throw ConfigError(std::string("camera path file: ") + e.what());
    }
    if (!j.is_array() || j.empty()) throw ConfigError("camera path file: expected a JSON array");
    std::vector<CameraView> cams;
    for (const auto& entry : j) cams.push_back(cameraFromJson(entry.dump()));
    return cams;
}

// Estimated poses when the whole sequence has them, ground truth otherwise.
std::vector<Pose3D> loadSequencePoses(const Dataset& data) {
    bool all_est = true;
    for (int t = 0; t < data.numFrames(); ++t)
        if (!data.hasEstimatedPose(t)) {
            all_est = false;
            break;
        }
    std::vector<Pose3D> poses;
    for (int t = 0; t < data.numFrames(); ++t)
        poses.push_back(transform_pose(all_est ? data.loadEstimatedPose(t) : data.loadGtPose(t)));
    return poses;
}

std::map<int, TexturedPointCloud> buildProxies(const Dataset& data, const KeyframeSet& kf,
                                               const FusionParams& params) {
    std::map<int, TexturedPointCloud> proxies;
    for (int t : kf.indices)
        proxies.emplace(t, fuse_frame(data.loadFrameAllViews(t), data.cameras(), params));
    return proxies;
}

struct LoadedModel {
    TrainConfig cfg;
    std::unique_ptr<TwoBranchRenderer> nets;
    std::unique_ptr<Discriminator> disc;
};

LoadedModel loadModel(const std::string& checkpoint) {
    const nn::CheckpointInfo info = nn::peekCheckpoint(checkpoint);
    nlohmann::json meta = nlohmann::json::parse(info.meta_json);
    if (!meta.contains("config")) throw std::runtime_error("checkpoint lacks a config record");
    LoadedModel m;
    m.cfg = trainConfigFromJson(meta["config"].dump());
    m.nets = std::make_unique<TwoBranchRenderer>(m.cfg.nets);
    m.disc = std::make_unique<Discriminator>(m.cfg.disc_base, mixSeed(m.cfg.seed, 0xD15C));
    std::vector<nn::Param*> params = m.nets->params();
    const std::vector<nn::Param*> d = m.disc->params();
    params.insert(params.end(), d.begin(), d.end());
    nn::loadCheckpoint(checkpoint, params);
    return m;
}

int nearestKeyframe(const Dataset& data, const KeyframeSet& kf, int frame) {
    const Pose3D pose = transform_pose(data.hasEstimatedPose(frame)
                                           ? data.loadEstimatedPose(frame)
                                           : data.loadGtPose(frame));
    int best = kf.indices.front();
    Scalar best_d = -1;
    for (int t : kf.indices) {
        const Pose3D p = transform_pose(data.hasEstimatedPose(t) ? data.loadEstimatedPose(t)
                                                                 : data.loadGtPose(t));
        const Scalar d = pose_distance(pose, p);
        if (best_d < 0 || d < best_d) {
            best_d = d;
            best = t;
        }
    }
    return best;
}

std::vector<int> parseIntList(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    if (out.empty()) throw ConfigError("expected a comma-separated integer list: " + text);
    return out;
}

std::vector<std::string> parseNameList(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    if (out.empty()) throw ConfigError("expected a comma-separated list: " + text);
    return out;
}

// ------------------------------------------------------------- subcommands

int cmdGenerate(const std::string& spec_path, const std::string& out_dir) {
    SceneSpec spec;
    try {
        if (!spec_path.empty()) spec = loadSceneSpec(spec_path);
        spec.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    generate_sequence(spec, out_dir);
    std::cout << "generated " << spec.frames << " frames under " << out_dir << "\n";
    return kExitOk;
}

int cmdTriangulate(const std::string& data_dir, Scalar tau, int min_views, Scalar depth_weight) {
    TriangulationConfig cfg;
    cfg.confidence_threshold = tau;
    cfg.min_views = min_views;
    cfg.depth_assist_weight = depth_weight;
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    const Dataset data = Dataset::open(data_dir);
    std::optional<Pose3D> previous;
    for (int t = 0; t < data.numFrames(); ++t) {
        const FrameDetections det = data.loadDetections(t);
        std::vector<Plane> depths;
        for (const RGBDFrame& f : data.loadFrameAllViews(t)) depths.push_back(f.depth);
        const Pose3D pose = triangulate_pose(det, depths, data.cameras(), cfg, previous);
        data.saveEstimatedPose(t, pose);
        previous = pose;
    }
    std::cout << "estimated poses for " << data.numFrames() << " frames\n";
    return kExitOk;
}

int cmdKeyframes(const std::string& data_dir, int k, const std::string& method,
                 std::uint64_t seed, const std::string& out_path) {
    const Dataset data = Dataset::open(data_dir);
    const std::vector<Pose3D> poses = loadSequencePoses(data);
    const int kk = k > 0 ? k : defaultK(static_cast<int>(poses.size()));
    KeyframeSet set;
    if (method == "pose")
        set = select_keyframes(poses, kk, seed);
    else if (method == "random")
        set = select_random(static_cast<int>(poses.size()), kk, seed);
    else
        throw ConfigError("unknown key-frame method: " + method);
    saveKeyframes(set, out_path);
    std::cout << "selected " << set.indices.size() << " key-frames (" << method << ") -> "
              << out_path << "\n";
    return kExitOk;
}

int cmdFuse(const std::string& data_dir, int frame, Scalar voxel, const std::string& out_path) {
    FusionParams params;
    params.voxel = voxel;
    const Dataset data = Dataset::open(data_dir);
    if (frame < 0 || frame >= data.numFrames())
        throw std::runtime_error("frame index out of range");
    const TexturedPointCloud cloud =
        fuse_frame(data.loadFrameAllViews(frame), data.cameras(), params);
    savePly(cloud, out_path);
    std::cout << "fused frame " << frame << ": " << cloud.positions.cols() << " points -> "
              << out_path << "\n";
    return kExitOk;
}

int cmdTrain(const std::string& data_dir, const std::string& kf_path,
             const std::string& config_path, const std::string& out_dir) {
    TrainConfig cfg;
    try {
        cfg = config_path.empty() ? TrainConfig{} : loadTrainConfig(config_path);
        cfg.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    const Dataset data = Dataset::open(data_dir);
    const KeyframeSet kf = loadKeyframes(kf_path);
    Trainer trainer(data, kf, cfg);
    const TrainResult result = trainer.run(out_dir);
    if (result.aborted_non_finite) {
        std::cerr << "training aborted: non-finite loss at step " << result.steps_completed
                  << " (diagnostic checkpoint written)\n";
        return kExitNumerical;
    }
    std::cout << "trained " << result.steps_completed << " steps -> " << result.checkpoint_path
              << "\n";
    return kExitOk;
}

int cmdRender(const std::string& checkpoint, const std::string& data_dir,
              const std::string& kf_path, const std::string& cameras_path, int frame,
              const std::string& out_dir, bool debug_branches) {
    const std::vector<CameraView> path = loadCameraPath(cameras_path);
    LoadedModel model = loadModel(checkpoint);
    const Dataset data = Dataset::open(data_dir);
    const KeyframeSet kf = loadKeyframes(kf_path);
    if (frame < 0) frame = kf.indices.front();
    const int proxy_frame = nearestKeyframe(data, kf, frame);
    const TexturedPointCloud proxy =
        fuse_frame(data.loadFrameAllViews(proxy_frame), data.cameras(), model.cfg.fusion);

    fs::create_directories(out_dir);
    char name[64];
    for (size_t i = 0; i < path.size(); ++i) {
        const Image full = render_variant(*model.nets, proxy, path[i], RenderVariant::Full,
                                          model.cfg.splat_radius_m);
        std::snprintf(name, sizeof(name), "frame_%04zu.png", i);
        writeRgb8(full, (fs::path(out_dir) / name).string());
        if (debug_branches) {
            const Image tex = render_variant(*model.nets, proxy, path[i], RenderVariant::TexOnly,
                                             model.cfg.splat_radius_m);
            std::snprintf(name, sizeof(name), "frame_%04zu_tex.png", i);
            writeRgb8(tex, (fs::path(out_dir) / name).string());
            const Image neural = render_variant(*model.nets, proxy, path[i],
                                                RenderVariant::NeuralOnly, model.cfg.splat_radius_m);
            std::snprintf(name, sizeof(name), "frame_%04zu_neural.png", i);
            writeRgb8(neural, (fs::path(out_dir) / name).string());
        }
    }
    std::cout << "rendered " << path.size() << " frames -> " << out_dir << "\n";
    return kExitOk;
}

int cmdEvaluate(const std::string& checkpoint, const std::string& data_dir,
                const std::string& kf_path, const std::string& variants_csv, int max_frames,
                const std::string& out_path) {
    const std::vector<std::string> variants = parseNameList(variants_csv);
    std::vector<RenderVariant> parsed;
    for (const std::string& v : variants) {
        try {
            parsed.push_back(variantFromName(v));
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
    }
    LoadedModel model = loadModel(checkpoint);
    const Dataset data = Dataset::open(data_dir);
    const KeyframeSet kf = loadKeyframes(kf_path);
    const std::map<int, TexturedPointCloud> proxies = buildProxies(data, kf, model.cfg.fusion);

    std::vector<EvalRow> rows;
    for (RenderVariant v : parsed)
        rows.push_back(evaluate_run(*model.nets, data, kf, proxies, v, max_frames,
                                    model.cfg.splat_radius_m));
    const std::string table = evalRowsToJson(rows);
    writeTextFile(out_path, table + "\n");
    std::cout << table << "\n";
    return kExitOk;
}

int cmdStudy(const std::string& data_dir, const std::string& ks_csv,
             const std::string& methods_csv, int trials, std::uint64_t seed,
             const std::string& out_path) {
    const std::vector<int> ks = parseIntList(ks_csv);
    const std::vector<std::string> methods = parseNameList(methods_csv);
    const Dataset data = Dataset::open(data_dir);
    const std::vector<Pose3D> poses = loadSequencePoses(data);
    const std::vector<StudyPoint> points = keyframe_study(poses, ks, methods, trials, seed);
    const std::string table = studyToJson(points);
    writeTextFile(out_path, table + "\n");
    std::cout << table << "\n";
    return kExitOk;
}

int cmdPipeline(const std::string& spec_path, const std::string& config_path,
                const std::string& out_dir, int k, std::uint64_t seed) {
    SceneSpec spec;
    TrainConfig cfg;
    try {
        if (!spec_path.empty()) spec = loadSceneSpec(spec_path);
        spec.validate();
        cfg = config_path.empty() ? TrainConfig{} : loadTrainConfig(config_path);
        cfg.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }

    const fs::path root(out_dir);
    const fs::path markers = root / "markers";
    fs::create_directories(markers);
    writeTextFile((root / "scene_spec.json").string(), sceneSpecToJson(spec) + "\n");
    writeTextFile((root / "train_config.json").string(), trainConfigToJson(cfg) + "\n");

    const std::vector<std::string> stages = {"generate", "triangulate", "keyframes",
                                             "fuse",     "train",       "evaluate"};
    // rerun from the first stage whose marker is missing; later markers are
    // invalidated so dependents rerun too
    size_t first = stages.size();
    for (size_t i = 0; i < stages.size(); ++i)
        if (!fs::exists(markers / (stages[i] + ".done"))) {
            first = i;
            break;
        }
    for (size_t i = first; i < stages.size(); ++i) fs::remove(markers / (stages[i] + ".done"));

    const std::string data_dir = (root / "data").string();
    const std::string kf_path = (root / "keyframes.json").string();

    auto runStage = [&](const std::string& name, const std::function<int()>& fn) -> int {
        if (fs::exists(markers / (name + ".done"))) {
            std::cout << "stage " << name << ": already done, skipping\n";
            return kExitOk;
        }
        std::cout << "stage " << name << ": running\n";
        int code;
        try {
            code = fn();
        } catch (const std::exception& e) {
            std::cerr << "stage " << name << " failed: " << e.what() << "\n";
            throw;
        }
        if (code != kExitOk) {
            std::cerr << "stage " << name << " failed with code " << code << "\n";
            return code;
        }
        writeTextFile((markers / (name + ".done")).string(), "done\n");
        return kExitOk;
    };

    int code = runStage("generate", [&] { return cmdGenerate(spec_path, data_dir); });
    if (code != kExitOk) return code;
    code = runStage("triangulate", [&] { return cmdTriangulate(data_dir, 0.1, 2, 1.0); });
    if (code != kExitOk) return code;
    code = runStage("keyframes",
                    [&] { return cmdKeyframes(data_dir, k, "pose", seed, kf_path); });
    if (code != kExitOk) return code;
    code = runStage("fuse", [&] {
        const KeyframeSet kf = loadKeyframes(kf_path);
        fs::create_directories(root / "proxies");
        for (int t : kf.indices) {
            char name[64];
            std::snprintf(name, sizeof(name), "kf_%06d.ply", t);
            cmdFuse(data_dir, t, cfg.fusion.voxel, (root / "proxies" / name).string());
        }
        return kExitOk;
    });
    if (code != kExitOk) return code;
    code = runStage("train", [&] {
        return cmdTrain(data_dir, kf_path, config_path, (root / "train").string());
    });
    if (code != kExitOk) return code;
    code = runStage("evaluate", [&] {
        return cmdEvaluate((root / "train" / "checkpoint.bin").string(), data_dir, kf_path,
                           "full,tex,neural", -1, (root / "metrics.json").string());
    });
    if (code != kExitOk) return code;
    std::cout << "pipeline complete -> " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot free-viewpoint human performance rendering pipeline"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a synthetic capture sequence");
    std::string gen_spec, gen_out;
    gen->add_option("--spec", gen_spec, "Scene spec JSON (defaults when omitted)");
    gen->add_option("--out", gen_out, "Output dataset directory")->required();

    // triangulate
    auto* tri = app.add_subcommand("triangulate", "Estimate 3D poses from detections");
    std::string tri_data;
    double tri_tau = 0.1, tri_dw = 1.0;
    int tri_minviews = 2;
    tri->add_option("--data", tri_data, "Dataset directory")->required();
    tri->add_option("--tau", tri_tau, "Per-view confidence threshold");
    tri->add_option("--min-views", tri_minviews, "Minimum surviving views per joint");
    tri->add_option("--depth-weight", tri_dw, "Depth-assist term weight");

    // keyframes
    auto* kfc = app.add_subcommand("keyframes", "Select key-frames");
    std::string kf_data, kf_method = "pose", kf_out;
    int kf_k = 0;
    std::uint64_t kf_seed = 1;
    kfc->add_option("--data", kf_data, "Dataset directory")->required();
    kfc->add_option("--k", kf_k, "Cluster count (default: 4% of frames, min 2)");
    kfc->add_option("--method", kf_method, "pose | random");
    kfc->add_option("--seed", kf_seed, "RNG seed");
    kfc->add_option("--out", kf_out, "Output key-frame JSON")->required();

    // fuse
    auto* fus = app.add_subcommand("fuse", "Fuse one frame into a colored point cloud");
    std::string fuse_data, fuse_out;
    int fuse_frame = 0;
    double fuse_voxel = 0.005;
    fus->add_option("--data", fuse_data, "Dataset directory")->required();
    fus->add_option("--frame", fuse_frame, "Frame index")->required();
    fus->add_option("--voxel", fuse_voxel, "Dedup voxel size (m)");
    fus->add_option("--out", fuse_out, "Output PLY path")->required();

    // train
    auto* trn = app.add_subcommand("train", "Train the rendering networks");
    std::string trn_data, trn_kf, trn_cfg, trn_out;
    trn->add_option("--data", trn_data, "Dataset directory")->required();
    trn->add_option("--keyframes", trn_kf, "Key-frame JSON")->required();
    trn->add_option("--config", trn_cfg, "Train config JSON (defaults when omitted)");
    trn->add_option("--out", trn_out, "Run output directory")->required();

    // render
    auto* ren = app.add_subcommand("render", "Render a camera path from a checkpoint");
    std::string ren_ckpt, ren_data, ren_kf, ren_cams, ren_out;
    int ren_frame = -1;
    bool ren_debug = false;
    ren->add_option("--checkpoint", ren_ckpt, "Checkpoint file")->required();
    ren->add_option("--data", ren_data, "Dataset directory")->required();
    ren->add_option("--keyframes", ren_kf, "Key-frame JSON")->required();
    ren->add_option("--cameras", ren_cams, "Camera path JSON (array of cameras)")->required();
    ren->add_option("--frame", ren_frame, "Performance frame (default: first key-frame)");
    ren->add_option("--out", ren_out, "Output directory")->required();
    ren->add_flag("--debug-branches", ren_debug, "Also write per-branch images");

    // evaluate
    auto* eva = app.add_subcommand("evaluate", "Evaluate a checkpoint on held-out frames");
    std::string eva_ckpt, eva_data, eva_kf, eva_out, eva_variants = "full";
    std::string eva_split = "holdout";
    int eva_max = -1;
    eva->add_option("--checkpoint", eva_ckpt, "Checkpoint file")->required();
    eva->add_option("--data", eva_data, "Dataset directory")->required();
    eva->add_option("--keyframes", eva_kf, "Key-frame JSON")->required();
    eva->add_option("--split", eva_split, "Evaluation split (holdout)");
    eva->add_option("--variants", eva_variants, "Comma list of full,tex,neural");
    eva->add_option("--max-frames", eva_max, "Cap on evaluated frames (-1 = all)");
    eva->add_option("--out", eva_out, "Output metrics JSON")->required();

    // study
    auto* stu = app.add_subcommand("study", "Key-frame strategy comparison");
    std::string stu_data, stu_ks = "4,8,16", stu_methods = "pose,random", stu_out;
    int stu_trials = 20;
    std::uint64_t stu_seed = 1;
    stu->add_option("--data", stu_data, "Dataset directory")->required();
    stu->add_option("--ks", stu_ks, "Comma list of k values");
    stu->add_option("--methods", stu_methods, "Comma list of pose,random");
    stu->add_option("--trials", stu_trials, "Random-method trials");
    stu->add_option("--seed", stu_seed, "RNG seed");
    stu->add_option("--out", stu_out, "Output JSON")->required();

    // pipeline
    auto* pip = app.add_subcommand("pipeline", "Run generate -> ... -> evaluate end to end");
    std::string pip_spec, pip_cfg, pip_out;
    int pip_k = 0;
    std::uint64_t pip_seed = 1;
    pip->add_option("--spec", pip_spec, "Scene spec JSON");
    pip->add_option("--config", pip_cfg, "Train config JSON");
    pip->add_option("--out", pip_out, "Run directory")->required();
    pip->add_option("--k", pip_k, "Key-frame count");
    pip->add_option("--seed", pip_seed, "Key-frame selection seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmdGenerate(gen_spec, gen_out);
        if (tri->parsed()) return cmdTriangulate(tri_data, tri_tau, tri_minviews, tri_dw);
        if (kfc->parsed()) return cmdKeyframes(kf_data, kf_k, kf_method, kf_seed, kf_out);
        if (fus->parsed()) return cmdFuse(fuse_data, fuse_frame, fuse_voxel, fuse_out);
        if (trn->parsed()) return cmdTrain(trn_data, trn_kf, trn_cfg, trn_out);
        if (ren->parsed())
            return cmdRender(ren_ckpt, ren_data, ren_kf, ren_cams, ren_frame, ren_out, ren_debug);
        if (eva->parsed())
            return cmdEvaluate(eva_ckpt, eva_data, eva_kf, eva_variants, eva_max, eva_out);
        if (stu->parsed())
            return cmdStudy(stu_data, stu_ks, stu_methods, stu_trials, stu_seed, stu_out);
        if (pip->parsed()) return cmdPipeline(pip_spec, pip_cfg, pip_out, pip_k, pip_seed);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}
