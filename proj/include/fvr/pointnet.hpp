#pragma once

#include "fvr/nn/nn.hpp"
#include "fvr/types.hpp"

#include <random>
#include <vector>

namespace fvr {

// Shared-weight hierarchical point feature extractor: two radius-grouped set
// abstraction levels (shared MLP + max pool over neighbors) and a per-point
// linear decode. Applied with the same parameters to every frame's cloud.
class PointFeatureNet {
public:
    struct Config {
        int feature_dim = 32;   // F
        int hidden = 32;
        Scalar radius1 = 0.05;  // meters
        Scalar radius2 = 0.20;
        int max_neighbors = 16;
        int pos_bands = 6;  // sinusoidal position-encoding octaves fed to the decode layer
    };

    PointFeatureNet(const Config& cfg, std::uint64_t seed);

    // features: F x N. Deterministic given parameters; equivariant to point
    // permutation. Throws on an empty cloud.
    MatX forward(const TexturedPointCloud& cloud);

    // Accumulates parameter gradients for the last forward call.
    void backward(const MatX& dfeatures);

    std::vector<nn::Param*> params();
    const Config& config() const { return cfg_; }

private:
    struct Level {
        nn::Param w1, b1, w2, b2;
        // caches
        MatX in, pre1, act1, pre2;
        std::vector<std::vector<int>> groups;          // per point: pair row range
        std::vector<int> pair_point;                   // pair -> neighbor point index
        std::vector<std::vector<Eigen::Index>> argmax; // per point, per channel: winning pair
    };

    void levelForward(Level& lv, const Eigen::Matrix<Scalar, 3, Eigen::Dynamic>& pos,
                      const MatX& point_feats, Scalar radius, MatX& out);
    // returns gradient w.r.t. the level's per-point input features
    MatX levelBackward(Level& lv, const MatX& dout, Eigen::Index n_points);

    Config cfg_;
    Level l1_, l2_;
    nn::Param dec_w_, dec_b_;
    MatX dec_in_;
    Eigen::Index n_ = 0;
};

// Training-time point dropout: each point kept independently with probability
// 1-rate. Identity when train == false.
TexturedPointCloud dropout_points(const TexturedPointCloud& cloud, Scalar rate,
                                  std::mt19937_64& rng, bool train);

}  // namespace fvr
