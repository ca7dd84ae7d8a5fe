#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fvr/augment.hpp"
#include "fvr/synth_rig.hpp"
#include "fvr/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace fvr;
namespace fs = std::filesystem;

namespace {

// small but trainable scene shared by the trainer tests
const std::string& tinyDataset() {
    static std::string root;
    if (root.empty()) {
        SceneSpec spec;
        spec.frames = 4;
        spec.width = 48;
        spec.height = 48;
        spec.period = 4;
        spec.surface_density = 700;
        root = (fs::temp_directory_path() / "fvr_test_trainer_data").string();
        fs::remove_all(root);
        generate_sequence(spec, root);
    }
    return root;
}

TrainConfig tinyConfig() {
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.patches_per_sample = 2;
    cfg.bootstrap_epochs = 1;
    cfg.max_epochs = 2;
    cfg.disc_base = 4;
    cfg.nets.point.feature_dim = 6;
    cfg.nets.point.hidden = 6;
    cfg.nets.render_levels = 2;
    cfg.nets.render_base = 4;
    cfg.nets.fuse_levels = 2;
    cfg.nets.fuse_base = 4;
    cfg.aug.max_translation_px = 2;
    cfg.aug.max_rotation_deg = 3;
    cfg.aug.min_scale = 0.97;
    cfg.aug.max_scale = 1.03;
    cfg.seed = 5;
    return cfg;
}

KeyframeSet oneKeyframe() {
    KeyframeSet kf;
    kf.indices = {1};
    kf.k = 1;
    return kf;
}

}  // namespace

TEST_CASE("train config JSON round trip and validation") {
    TrainConfig cfg = tinyConfig();
    cfg.lambdas = Vec3(0.3, 5.0, 0.7);
    cfg.lsgan_standard = true;
    const TrainConfig back = trainConfigFromJson(trainConfigToJson(cfg));
    CHECK(back.lambdas.isApprox(cfg.lambdas));
    CHECK(back.batch_size == cfg.batch_size);
    CHECK(back.lsgan_standard == cfg.lsgan_standard);
    CHECK(back.aug.max_rotation_deg == doctest::Approx(cfg.aug.max_rotation_deg));
    CHECK(back.nets.render_levels == cfg.nets.render_levels);

    TrainConfig bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.lambdas[1] = -1;
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.bootstrap_epochs = 5;
    bad.max_epochs = 3;
    CHECK_THROWS(bad.validate());
    CHECK_THROWS(trainConfigFromJson("{nonsense"));
}

TEST_CASE("identity augmentation leaves the pair unchanged") {
    const Dataset data = Dataset::open(tinyDataset());
    RGBDFrame frame = data.loadFrame(0, 0);
    CameraView cam = data.cameras()[0];
    const RGBDFrame orig = frame;
    const CameraView orig_cam = cam;
    augment(frame, cam, AugmentParams{});
    CHECK((frame.color.ch[0] - orig.color.ch[0]).abs().maxCoeff() == 0.0);
    CHECK((frame.depth - orig.depth).abs().maxCoeff() == 0.0);
    CHECK((frame.mask == orig.mask).all());
    CHECK((cam.rotation - orig_cam.rotation).cwiseAbs().maxCoeff() == 0.0);
    CHECK((cam.focal - orig_cam.focal).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("augmentation preserves reprojection to sub-micropixel precision") {
    const Dataset data = Dataset::open(tinyDataset());
    std::mt19937_64 rng(6);
    std::normal_distribution<Scalar> gauss;
    std::vector<AugmentParams> cases;
    {
        AugmentParams t;
        t.translation_px = Vec2(5, -3);
        cases.push_back(t);
        AugmentParams s;
        s.scale = 1.25;
        cases.push_back(s);
        AugmentParams r;
        r.rotation_rad = 8.0 * M_PI / 180.0;
        cases.push_back(r);
        AugmentParams all;
        all.translation_px = Vec2(-4, 6);
        all.scale = 0.93;
        all.rotation_rad = -6.0 * M_PI / 180.0;
        cases.push_back(all);
    }
    for (const AugmentParams& params : cases) {
        RGBDFrame frame = data.loadFrame(0, 1);
        CameraView cam = data.cameras()[1];
        const CameraView before = cam;
        augment(frame, cam, params);
        Scalar worst = 0;
        for (int i = 0; i < 100; ++i) {
            // random points in front of the camera
            const Vec3 p = before.cameraToWorld(
                Vec3(0.3 * gauss(rng), 0.3 * gauss(rng), 2.0 + 0.5 * std::abs(gauss(rng))));
            const auto pr_old = project_point(before, p);
            const auto pr_new = project_point(cam, p);
            REQUIRE(pr_old.has_value());
            REQUIRE(pr_new.has_value());
            const Vec2 expected = augment_pixel(pr_old->pixel, before.principal, params);
            worst = std::max(worst, (pr_new->pixel - expected).norm());
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("translation moves projections exactly") {
    const Dataset data = Dataset::open(tinyDataset());
    RGBDFrame frame = data.loadFrame(0, 2);
    CameraView cam = data.cameras()[2];
    const CameraView before = cam;
    AugmentParams params;
    params.translation_px = Vec2(5, 0);
    augment(frame, cam, params);
    const Vec3 p = before.cameraToWorld(Vec3(0.1, -0.2, 2.0));
    const Vec2 d = project_point(cam, p)->pixel - project_point(before, p)->pixel;
    CHECK((d - Vec2(5, 0)).norm() < 1e-9);
}

TEST_CASE("scaling stretches offsets about the principal point") {
    const Dataset data = Dataset::open(tinyDataset());
    RGBDFrame frame = data.loadFrame(0, 3);
    CameraView cam = data.cameras()[3];
    const CameraView before = cam;
    AugmentParams params;
    params.scale = 1.25;
    augment(frame, cam, params);
    const Vec3 p = before.cameraToWorld(Vec3(0.15, 0.1, 2.2));
    const Vec2 off_old = project_point(before, p)->pixel - before.principal;
    const Vec2 off_new = project_point(cam, p)->pixel - cam.principal;
    CHECK((off_new - 1.25 * off_old).norm() < 1e-9);
}

TEST_CASE("bootstrap leaves the discriminator untouched") {
    const Dataset data = Dataset::open(tinyDataset());
    TrainConfig cfg = tinyConfig();
    Trainer trainer(data, oneKeyframe(), cfg);

    std::vector<MatX> before;
    for (nn::Param* p : trainer.disc().params()) before.push_back(p->value);

    for (int s = 0; s < trainer.bootstrapSteps(); ++s) {
        const StepLog log = trainer.doStep(s);
        CHECK(log.phase == "bootstrap");
        CHECK(log.finite);
        CHECK(log.l_adv_d == 0.0);
        CHECK(log.l_adv_g == 0.0);
    }
    const auto params = trainer.disc().params();
    for (size_t i = 0; i < params.size(); ++i)
        CHECK((params[i]->value - before[i]).cwiseAbs().maxCoeff() == 0.0);

    // joint phase moves it
    const StepLog joint = trainer.doStep(trainer.bootstrapSteps());
    CHECK(joint.phase == "joint");
    CHECK(joint.finite);
    bool moved = false;
    for (size_t i = 0; i < params.size(); ++i)
        if ((params[i]->value - before[i]).cwiseAbs().maxCoeff() > 0) moved = true;
    CHECK(moved);
}

TEST_CASE("steps are deterministic given the seed") {
    const Dataset data = Dataset::open(tinyDataset());
    const TrainConfig cfg = tinyConfig();
    Trainer a(data, oneKeyframe(), cfg);
    Trainer b(data, oneKeyframe(), cfg);
    for (int s = 0; s < 2; ++s) {
        const StepLog la = a.doStep(s);
        const StepLog lb = b.doStep(s);
        CHECK(la.toJsonLine() == lb.toJsonLine());
    }
}

TEST_CASE("run writes a log and checkpoint; resume is bit-identical") {
    const Dataset data = Dataset::open(tinyDataset());
    const TrainConfig cfg = tinyConfig();
    const fs::path root = fs::temp_directory_path() / "fvr_test_trainer_run";
    fs::remove_all(root);

    // uninterrupted reference run
    {
        Trainer t(data, oneKeyframe(), cfg);
        const TrainResult res = t.run((root / "full").string());
        CHECK_FALSE(res.aborted_non_finite);
        CHECK(res.steps_completed == t.totalSteps());
        CHECK(fs::exists(res.checkpoint_path));
        CHECK(fs::exists(res.log_path));
    }

    // interrupted + resumed run
    {
        TrainConfig half = cfg;
        half.max_epochs = 1;
        Trainer t1(data, oneKeyframe(), half);
        t1.run((root / "resumed").string());
        Trainer t2(data, oneKeyframe(), cfg);  // full schedule, same seed
        const TrainResult res = t2.run((root / "resumed").string());
        CHECK(res.steps_completed == t2.totalSteps());
    }

    // logs must agree line for line
    std::ifstream fa(root / "full" / "train_log.jsonl");
    std::ifstream fb(root / "resumed" / "train_log.jsonl");
    std::string la, lb;
    int lines = 0;
    while (std::getline(fa, la)) {
        REQUIRE(std::getline(fb, lb));
        CHECK(la == lb);
        ++lines;
    }
    CHECK_FALSE(std::getline(fb, lb));
    CHECK(lines > 0);
    fs::remove_all(root);
}

TEST_CASE("non-finite losses abort with a diagnostic checkpoint") {
    const Dataset data = Dataset::open(tinyDataset());
    const TrainConfig cfg = tinyConfig();
    const fs::path root = fs::temp_directory_path() / "fvr_test_trainer_nan";
    fs::remove_all(root);
    Trainer t(data, oneKeyframe(), cfg);
    t.nets().params().front()->value.setConstant(std::numeric_limits<Scalar>::quiet_NaN());
    const TrainResult res = t.run(root.string());
    CHECK(res.aborted_non_finite);
    CHECK(fs::exists(root / "checkpoint_diverged.bin"));
    fs::remove_all(root);
}

TEST_CASE("training losses stay finite and decrease on the toy problem") {
    const Dataset data = Dataset::open(tinyDataset());
    TrainConfig cfg = tinyConfig();
    cfg.bootstrap_epochs = 6;
    cfg.max_epochs = 6;
    cfg.augment_enabled = false;
    Trainer t(data, oneKeyframe(), cfg);
    Scalar first = 0, last = 0;
    for (int s = 0; s < t.totalSteps(); ++s) {
        const StepLog log = t.doStep(s);
        REQUIRE(log.finite);
        if (s == 0) first = log.l_rgb;
        last = log.l_rgb;
    }
    CHECK(last < first);
}
