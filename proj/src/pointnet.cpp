#include "fvr/pointnet.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace fvr {
namespace {

using GridKey = std::array<int64_t, 3>;

// up-to-k nearest neighbors within `radius`, always including the point itself;
// candidate order is (distance, index) so results are permutation-stable
std::vector<std::vector<int>> radiusNeighbors(const Eigen::Matrix<Scalar, 3, Eigen::Dynamic>& pos,
                                              Scalar radius, int k) {
    const Eigen::Index n = pos.cols();
    std::map<GridKey, std::vector<int>> grid;
    auto keyOf = [&](const Vec3& p) {
        return GridKey{static_cast<int64_t>(std::floor(p.x() / radius)),
                       static_cast<int64_t>(std::floor(p.y() / radius)),
                       static_cast<int64_t>(std::floor(p.z() / radius))};
    };
    for (Eigen::Index i = 0; i < n; ++i) grid[keyOf(pos.col(i))].push_back(static_cast<int>(i));

    std::vector<std::vector<int>> groups(n);
    const Scalar r2 = radius * radius;
    std::vector<std::pair<Scalar, int>> cand;
    for (Eigen::Index i = 0; i < n; ++i) {
        cand.clear();
        const Vec3 p = pos.col(i);
        const GridKey key = keyOf(p);
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    const auto it = grid.find({key[0] + dx, key[1] + dy, key[2] + dz});
                    if (it == grid.end()) continue;
                    for (int j : it->second) {
                        const Scalar d2 = (pos.col(j) - p).squaredNorm();
                        if (d2 <= r2) cand.push_back({d2, j});
                    }
                }
        std::sort(cand.begin(), cand.end());
        const int take = std::min<int>(k, static_cast<int>(cand.size()));
        groups[i].reserve(take);
        for (int c = 0; c < take; ++c) groups[i].push_back(cand[c].second);
    }
    return groups;
}

}  // namespace

PointFeatureNet::PointFeatureNet(const Config& cfg, std::uint64_t seed)
    : cfg_(cfg),
      l1_{{"pointnet.l1.w1", cfg.hidden, 6}, {"pointnet.l1.b1", cfg.hidden, 1},
          {"pointnet.l1.w2", cfg.hidden, cfg.hidden}, {"pointnet.l1.b2", cfg.hidden, 1}},
      l2_{{"pointnet.l2.w1", cfg.hidden, 3 + cfg.hidden}, {"pointnet.l2.b1", cfg.hidden, 1},
          {"pointnet.l2.w2", cfg.hidden, cfg.hidden}, {"pointnet.l2.b2", cfg.hidden, 1}},
      dec_w_("pointnet.dec.weight", cfg.feature_dim, 3 + 2 * cfg.hidden + 6 * cfg.pos_bands),
      dec_b_("pointnet.dec.bias", cfg.feature_dim, 1) {
    std::mt19937_64 rng(seed);
    nn::initHe(l1_.w1.value, 6, rng);
    nn::initHe(l1_.w2.value, cfg.hidden, rng);
    nn::initHe(l2_.w1.value, 3 + cfg.hidden, rng);
    nn::initHe(l2_.w2.value, cfg.hidden, rng);
    // small positive bias keeps units off the exact ReLU kink at init (zero
    // biases make dead channels stack up to activations of exactly zero)
    l1_.b1.value.setConstant(0.01);
    l1_.b2.value.setConstant(0.01);
    l2_.b1.value.setConstant(0.01);
    l2_.b2.value.setConstant(0.01);
    nn::initHe(dec_w_.value, 3 + 2 * cfg.hidden + 6 * cfg.pos_bands, rng);
    dec_w_.value *= 0.1;
    // color pass-through at init: the first three feature channels start as the
    // point color, which gives the render head a useful signal from step one
    for (int c = 0; c < std::min(3, cfg.feature_dim); ++c) {
        dec_w_.value.row(c).setZero();
        dec_w_.value(c, c) = 1.0;
    }
}

void PointFeatureNet::levelForward(Level& lv, const Eigen::Matrix<Scalar, 3, Eigen::Dynamic>& pos,
                                   const MatX& point_feats, Scalar radius, MatX& out) {
    const Eigen::Index n = pos.cols();
    lv.groups = radiusNeighbors(pos, radius, cfg_.max_neighbors);

    Eigen::Index total = 0;
    for (const auto& g : lv.groups) total += static_cast<Eigen::Index>(g.size());
    const int in_dim = 3 + static_cast<int>(point_feats.rows());
    lv.in.resize(in_dim, total);
    lv.pair_point.resize(total);
    Eigen::Index at = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (int j : lv.groups[i]) {
            lv.in.block(0, at, 3, 1) = (pos.col(j) - pos.col(i)) / radius;
            lv.in.block(3, at, point_feats.rows(), 1) = point_feats.col(j);
            lv.pair_point[at] = j;
            ++at;
        }

    lv.pre1.noalias() = lv.w1.value * lv.in;
    lv.pre1.colwise() += lv.b1.value.col(0);
    lv.act1 = lv.pre1.cwiseMax(0.0);
    lv.pre2.noalias() = lv.w2.value * lv.act1;
    lv.pre2.colwise() += lv.b2.value.col(0);

    const int h = cfg_.hidden;
    out.resize(h, n);
    lv.argmax.assign(n, std::vector<Eigen::Index>(h));
    at = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index gsize = static_cast<Eigen::Index>(lv.groups[i].size());
        for (int ch = 0; ch < h; ++ch) {
            Scalar best = lv.pre2(ch, at);
            Eigen::Index best_pair = at;
            for (Eigen::Index c = 1; c < gsize; ++c)
                if (lv.pre2(ch, at + c) > best) { best = lv.pre2(ch, at + c); best_pair = at + c; }
            out(ch, i) = best;
            lv.argmax[i][ch] = best_pair;
        }
        at += gsize;
    }
}

MatX PointFeatureNet::levelBackward(Level& lv, const MatX& dout, Eigen::Index n_points) {
    const int h = cfg_.hidden;
    MatX dpre2 = MatX::Zero(h, lv.in.cols());
    for (Eigen::Index i = 0; i < n_points; ++i)
        for (int ch = 0; ch < h; ++ch) dpre2(ch, lv.argmax[i][ch]) += dout(ch, i);

    lv.w2.grad.noalias() += dpre2 * lv.act1.transpose();
    lv.b2.grad.col(0) += dpre2.rowwise().sum();
    MatX dact1 = lv.w2.value.transpose() * dpre2;
    const MatX dpre1 = dact1.cwiseProduct((lv.pre1.array() > 0).cast<Scalar>().matrix());
    lv.w1.grad.noalias() += dpre1 * lv.in.transpose();
    lv.b1.grad.col(0) += dpre1.rowwise().sum();
    const MatX din = lv.w1.value.transpose() * dpre1;

    const Eigen::Index fin = din.rows() - 3;
    MatX dfeat = MatX::Zero(fin, n_points);
    for (Eigen::Index pair = 0; pair < din.cols(); ++pair)
        dfeat.col(lv.pair_point[pair]) += din.block(3, pair, fin, 1);
    return dfeat;
}

MatX PointFeatureNet::forward(const TexturedPointCloud& cloud) {
    if (cloud.size() == 0) throw std::runtime_error("PointFeatureNet: empty cloud");
    n_ = cloud.size();
    MatX f1, f2;
    levelForward(l1_, cloud.positions, cloud.colors, cfg_.radius1, f1);
    levelForward(l2_, cloud.positions, f1, cfg_.radius2, f2);

    dec_in_.resize(3 + 2 * cfg_.hidden + 6 * cfg_.pos_bands, n_);
    dec_in_.topRows(3) = cloud.colors;
    dec_in_.middleRows(3, cfg_.hidden) = f1;
    dec_in_.middleRows(3 + cfg_.hidden, cfg_.hidden) = f2;
    // sinusoidal encoding of the absolute position: the set-abstraction levels
    // see only relative offsets, so this is the sole carrier of where on the
    // body a point sits, which the decode layer needs for view-specific detail
    for (int b = 0; b < cfg_.pos_bands; ++b) {
        const Scalar freq = std::pow(2.0, b) * std::numbers::pi;
        const Eigen::Index row = 3 + 2 * cfg_.hidden + 6 * b;
        dec_in_.middleRows(row, 3) = (freq * cloud.positions.array()).sin().matrix();
        dec_in_.middleRows(row + 3, 3) = (freq * cloud.positions.array()).cos().matrix();
    }
    MatX out = dec_w_.value * dec_in_;
    out.colwise() += dec_b_.value.col(0);
    return out;
}

void PointFeatureNet::backward(const MatX& dfeatures) {
    dec_w_.grad.noalias() += dfeatures * dec_in_.transpose();
    dec_b_.grad.col(0) += dfeatures.rowwise().sum();
    const MatX ddec_in = dec_w_.value.transpose() * dfeatures;

    const MatX df2 = ddec_in.middleRows(3 + cfg_.hidden, cfg_.hidden);
    MatX df1 = ddec_in.middleRows(3, cfg_.hidden);
    df1 += levelBackward(l2_, df2, n_);
    levelBackward(l1_, df1, n_);  // color gradients are not propagated further
}

std::vector<nn::Param*> PointFeatureNet::params() {
    return {&l1_.w1, &l1_.b1, &l1_.w2, &l1_.b2,
            &l2_.w1, &l2_.b1, &l2_.w2, &l2_.b2,
            &dec_w_, &dec_b_};
}

TexturedPointCloud dropout_points(const TexturedPointCloud& cloud, Scalar rate,
                                  std::mt19937_64& rng, bool train) {
    if (!train || rate <= 0.0) return cloud;
    std::uniform_real_distribution<Scalar> unif(0.0, 1.0);
    std::vector<Eigen::Index> kept;
    kept.reserve(cloud.size());
    for (Eigen::Index i = 0; i < cloud.size(); ++i)
        if (unif(rng) >= rate) kept.push_back(i);
    if (kept.empty()) kept.push_back(0);  // never hand an empty cloud downstream
    TexturedPointCloud out;
    out.frame_index = cloud.frame_index;
    out.positions.resize(3, static_cast<Eigen::Index>(kept.size()));
    out.colors.resize(3, static_cast<Eigen::Index>(kept.size()));
    for (size_t i = 0; i < kept.size(); ++i) {
        out.positions.col(static_cast<Eigen::Index>(i)) = cloud.positions.col(kept[i]);
        out.colors.col(static_cast<Eigen::Index>(i)) = cloud.colors.col(kept[i]);
    }
    return out;
}

}  // namespace fvr
