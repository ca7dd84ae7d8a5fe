#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fvr/pointnet.hpp"
#include "fvr/render_nets.hpp"

#include <cmath>
#include <random>

using namespace fvr;

namespace {

CameraView smallCamera(int size = 16) {
    CameraView cam;
    cam.focal = Vec2(20, 20);
    cam.principal = Vec2((size - 1) / 2.0, (size - 1) / 2.0);
    cam.width = size;
    cam.height = size;
    cam.view_id = 0;
    return cam;
}

TexturedPointCloud randomCloud(int n, std::mt19937_64& rng, Scalar spread = 0.3) {
    std::uniform_real_distribution<Scalar> u(0, 1);
    TexturedPointCloud cloud;
    cloud.positions.resize(3, n);
    cloud.colors.resize(3, n);
    for (int i = 0; i < n; ++i) {
        cloud.positions.col(i) =
            Vec3(spread * (2 * u(rng) - 1), spread * (2 * u(rng) - 1), 1.0 + u(rng));
        cloud.colors.col(i) = Vec3(u(rng), u(rng), u(rng));
    }
    return cloud;
}

// brute-force reference: per pixel, scan all points for the nearest in depth
void splatOracle(const Eigen::Matrix<Scalar, 3, Eigen::Dynamic>& pos, const MatX& feats,
                 const CameraView& cam, MatX& out, MaskImage& mask) {
    out = MatX::Zero(feats.rows(), cam.height * cam.width);
    mask = MaskImage::Constant(cam.height, cam.width, false);
    MatX best = MatX::Constant(cam.height, cam.width, -1.0);
    for (Eigen::Index i = 0; i < pos.cols(); ++i) {
        const auto pr = project_point(cam, pos.col(i));
        if (!pr) continue;
        const int x = static_cast<int>(std::lround(pr->pixel.x()));
        const int y = static_cast<int>(std::lround(pr->pixel.y()));
        if (x < 0 || y < 0 || x >= cam.width || y >= cam.height) continue;
        if (mask(y, x) && best(y, x) <= pr->depth) continue;
        best(y, x) = pr->depth;
        mask(y, x) = true;
        out.col(y * cam.width + x) = feats.col(i);
    }
}

}  // namespace

TEST_CASE("splat_features equals the brute-force oracle on 500 random instances") {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> npts(1, 200), size(4, 32);
    std::normal_distribution<Scalar> gauss;
    for (int inst = 0; inst < 500; ++inst) {
        const int n = npts(rng);
        const CameraView cam = smallCamera(size(rng));
        const TexturedPointCloud cloud = randomCloud(n, rng, 0.5);
        MatX feats(5, n);
        for (Eigen::Index i = 0; i < feats.size(); ++i) feats.data()[i] = gauss(rng);

        const SplatResult got = splat_features(cloud.positions, feats, cam);
        MatX want;
        MaskImage want_mask;
        splatOracle(cloud.positions, feats, cam, want, want_mask);
        REQUIRE(got.features.data.rows() == want.rows());
        CHECK((got.features.data - want).cwiseAbs().maxCoeff() == 0.0);
        CHECK((got.mask == want_mask).all());
    }
}

TEST_CASE("splat ties go to the lower point index") {
    const CameraView cam = smallCamera(8);
    Eigen::Matrix<Scalar, 3, Eigen::Dynamic> pos(3, 2);
    pos.col(0) = unproject_pixel(cam, Vec2(3, 3), 1.0);
    pos.col(1) = pos.col(0);
    MatX feats(1, 2);
    feats << 5.0, 9.0;
    const SplatResult out = splat_features(pos, feats, cam);
    CHECK(out.features.at(0, 3, 3) == 5.0);
    CHECK(out.owner(3, 3) == 0);
}

TEST_CASE("splat_backward routes pixel gradients to owning points") {
    std::mt19937_64 rng(22);
    const CameraView cam = smallCamera(12);
    const TexturedPointCloud cloud = randomCloud(30, rng);
    MatX feats = MatX::Random(4, 30);
    const SplatResult splat = splat_features(cloud.positions, feats, cam);

    nn::Tensor dmap(4, 12, 12);
    std::normal_distribution<Scalar> gauss;
    for (Eigen::Index i = 0; i < dmap.data.size(); ++i) dmap.data.data()[i] = gauss(rng);
    const MatX dfeats = splat_backward(splat, dmap, 30);
    REQUIRE(dfeats.rows() == 4);
    REQUIRE(dfeats.cols() == 30);

    // adjoint identity: <splat(feats), dmap> = <feats, dfeats>
    const Scalar lhs = (splat.features.data.array() * dmap.data.array()).sum();
    const Scalar rhs = (feats.array() * dfeats.array()).sum();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("point features start as a color pass-through") {
    std::mt19937_64 rng(23);
    PointFeatureNet::Config cfg;
    cfg.feature_dim = 8;
    cfg.hidden = 8;
    PointFeatureNet net(cfg, 77);
    const TexturedPointCloud cloud = randomCloud(40, rng);
    const MatX f = net.forward(cloud);
    REQUIRE(f.rows() == 8);
    REQUIRE(f.cols() == 40);
    CHECK((f.topRows(3) - cloud.colors).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("point features are equivariant to point permutation") {
    std::mt19937_64 rng(24);
    PointFeatureNet::Config cfg;
    cfg.feature_dim = 6;
    cfg.hidden = 8;
    PointFeatureNet net(cfg, 3);
    const TexturedPointCloud cloud = randomCloud(25, rng);

    std::vector<int> perm(25);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    TexturedPointCloud shuffled = cloud;
    for (int i = 0; i < 25; ++i) {
        shuffled.positions.col(i) = cloud.positions.col(perm[i]);
        shuffled.colors.col(i) = cloud.colors.col(perm[i]);
    }
    const MatX fa = net.forward(cloud);
    const MatX fb = net.forward(shuffled);
    for (int i = 0; i < 25; ++i)
        CHECK((fb.col(i) - fa.col(perm[i])).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("point feature gradients pass the finite-difference check") {
    std::mt19937_64 rng(25);
    PointFeatureNet::Config cfg;
    cfg.feature_dim = 4;
    cfg.hidden = 6;
    PointFeatureNet net(cfg, 5);
    const TexturedPointCloud cloud = randomCloud(12, rng);
    MatX probe = MatX::Random(4, 12);

    auto loss = [&] { return (net.forward(cloud).array() * probe.array()).sum(); };
    for (nn::Param* p : net.params()) p->zeroGrad();
    loss();
    net.backward(probe);

    std::uniform_int_distribution<size_t> pickp(0, net.params().size() - 1);
    Scalar worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
        nn::Param* p = net.params()[pickp(rng)];
        std::uniform_int_distribution<Eigen::Index> pick(0, p->value.size() - 1);
        const Eigen::Index i = pick(rng);
        const Scalar orig = p->value.data()[i];
        const Scalar eps = 1e-6;
        p->value.data()[i] = orig + eps;
        const Scalar lp = loss();
        p->value.data()[i] = orig - eps;
        const Scalar lm = loss();
        p->value.data()[i] = orig;
        const Scalar fd = (lp - lm) / (2 * eps);
        const Scalar an = p->grad.data()[i];
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("point dropout keeps at least one point and is identity in eval mode") {
    std::mt19937_64 rng(26);
    const TexturedPointCloud cloud = randomCloud(30, rng);
    const TexturedPointCloud eval = dropout_points(cloud, 0.9, rng, false);
    CHECK(eval.positions.cols() == 30);
    const TexturedPointCloud heavy = dropout_points(cloud, 0.999, rng, true);
    CHECK(heavy.positions.cols() >= 1);
    const TexturedPointCloud train = dropout_points(cloud, 0.2, rng, true);
    CHECK(train.positions.cols() <= 30);
    CHECK(train.positions.cols() >= 1);
}

TEST_CASE("neural branch renders bounded images of the right shape") {
    TwoBranchRenderer::Config cfg;
    cfg.point.feature_dim = 8;
    cfg.point.hidden = 8;
    cfg.render_levels = 3;
    cfg.render_base = 8;
    cfg.fuse_levels = 3;
    cfg.fuse_base = 8;
    TwoBranchRenderer nets(cfg);
    std::mt19937_64 rng(27);
    const TexturedPointCloud cloud = randomCloud(60, rng);
    const CameraView cam = smallCamera(16);

    const nn::Tensor out = nets.renderNeural(cloud, cam, false, rng);
    REQUIRE(out.c == 4);
    REQUIRE(out.h == 16);
    REQUIRE(out.w == 16);
    CHECK(out.data.minCoeff() >= 0.0);
    CHECK(out.data.maxCoeff() <= 1.0);

    const NeuralRenderOut img = render_neural(nets, cloud, cam);
    CHECK(img.color.channels() == 3);
    CHECK(img.mask.rows() == 16);
}

TEST_CASE("fuse net starts as an exact pass-through average") {
    TwoBranchRenderer::Config cfg;
    cfg.point.feature_dim = 8;
    cfg.point.hidden = 8;
    cfg.render_levels = 3;
    cfg.render_base = 8;
    cfg.fuse_levels = 3;
    cfg.fuse_base = 8;
    TwoBranchRenderer nets(cfg);
    std::mt19937_64 rng(28);
    std::uniform_real_distribution<Scalar> u(0.05, 0.95);
    nn::Tensor a(3, 8, 8), b(3, 8, 8);
    for (Eigen::Index i = 0; i < a.data.size(); ++i) {
        a.data.data()[i] = u(rng);
        b.data.data()[i] = u(rng);
    }
    const nn::Tensor fused = nets.blend(a, b);
    CHECK((fused.data - 0.5 * (a.data + b.data)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fuse net gradients pass the finite-difference check") {
    TwoBranchRenderer::Config cfg;
    cfg.point.feature_dim = 4;
    cfg.point.hidden = 4;
    cfg.render_levels = 2;
    cfg.render_base = 4;
    cfg.fuse_levels = 2;
    cfg.fuse_base = 4;
    TwoBranchRenderer nets(cfg);
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<Scalar> u(0.1, 0.9);
    nn::Tensor a(3, 4, 4), b(3, 4, 4), probe(3, 4, 4);
    std::normal_distribution<Scalar> gauss;
    for (Eigen::Index i = 0; i < a.data.size(); ++i) {
        a.data.data()[i] = u(rng);
        b.data.data()[i] = u(rng);
        probe.data.data()[i] = gauss(rng);
    }

    auto loss = [&] { return (nets.blend(a, b).data.array() * probe.data.array()).sum(); };
    for (nn::Param* p : nets.fuseParams()) p->zeroGrad();
    loss();
    nn::Tensor da(3, 4, 4), db(3, 4, 4);
    nets.backwardBlend(probe, da, db);

    const auto params = nets.fuseParams();
    Scalar worst = 0;
    std::uniform_int_distribution<size_t> pickp(0, params.size() - 1);
    for (int trial = 0; trial < 20; ++trial) {
        nn::Param* p = params[pickp(rng)];
        std::uniform_int_distribution<Eigen::Index> pick(0, p->value.size() - 1);
        const Eigen::Index i = pick(rng);
        const Scalar orig = p->value.data()[i];
        const Scalar eps = 1e-6;
        p->value.data()[i] = orig + eps;
        const Scalar lp = loss();
        p->value.data()[i] = orig - eps;
        const Scalar lm = loss();
        p->value.data()[i] = orig;
        const Scalar fd = (lp - lm) / (2 * eps);
        const Scalar an = p->grad.data()[i];
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
    CHECK(worst < 1e-3);

    // branch input gradients also check out
    Scalar worst_in = 0;
    for (int trial = 0; trial < 10; ++trial) {
        std::uniform_int_distribution<Eigen::Index> pick(0, a.data.size() - 1);
        const Eigen::Index i = pick(rng);
        const Scalar orig = a.data.data()[i];
        const Scalar eps = 1e-6;
        a.data.data()[i] = orig + eps;
        const Scalar lp = loss();
        a.data.data()[i] = orig - eps;
        const Scalar lm = loss();
        a.data.data()[i] = orig;
        const Scalar fd = (lp - lm) / (2 * eps);
        const Scalar an = da.data.data()[i];
        worst_in =
            std::max(worst_in, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
    CHECK(worst_in < 1e-3);
}

TEST_CASE("neural branch backward produces finite point-net gradients") {
    TwoBranchRenderer::Config cfg;
    cfg.point.feature_dim = 4;
    cfg.point.hidden = 4;
    cfg.render_levels = 2;
    cfg.render_base = 4;
    cfg.fuse_levels = 2;
    cfg.fuse_base = 4;
    cfg.dropout_rate = 0.0;
    TwoBranchRenderer nets(cfg);
    std::mt19937_64 rng(30);
    const TexturedPointCloud cloud = randomCloud(20, rng);
    const CameraView cam = smallCamera(8);

    for (nn::Param* p : nets.neuralParams()) p->zeroGrad();
    const nn::Tensor out = nets.renderNeural(cloud, cam, true, rng);
    nn::Tensor d4(4, 8, 8);
    std::normal_distribution<Scalar> gauss;
    for (Eigen::Index i = 0; i < d4.data.size(); ++i) d4.data.data()[i] = gauss(rng);
    nets.backwardNeural(d4);

    bool any_nonzero = false;
    for (nn::Param* p : nets.neuralParams()) {
        CHECK(p->grad.allFinite());
        if (p->grad.cwiseAbs().maxCoeff() > 0) any_nonzero = true;
    }
    CHECK(any_nonzero);
}
