#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace fvr {

using Scalar = double;

// splitmix64 mixing; derives independent per-frame/per-step RNG streams from
// one master seed.
inline std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// A single image plane, row = y (downwards), col = x (rightwards).
// Pixel (0,0) is the center of the top-left pixel.
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using MaskImage = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Multi-channel image, values in [0,1]. RGB images carry 3 planes.
struct Image {
    std::vector<Plane> ch;

    Image() = default;
    Image(int channels, int h, int w) : ch(channels, Plane::Zero(h, w)) {}

    int channels() const { return static_cast<int>(ch.size()); }
    int height() const { return ch.empty() ? 0 : static_cast<int>(ch[0].rows()); }
    int width() const { return ch.empty() ? 0 : static_cast<int>(ch[0].cols()); }

    bool sameShape(const Image& o) const {
        return channels() == o.channels() && height() == o.height() && width() == o.width();
    }
};

inline Image maskedImage(const Image& img, const MaskImage& mask) {
    Image out = img;
    for (auto& p : out.ch) p *= mask.cast<Scalar>();
    return out;
}

// One captured view at one timestamp: color, metric depth (meters, 0 = invalid)
// and the performer foreground mask.
struct RGBDFrame {
    Image color;       // 3 planes
    Plane depth;       // meters
    MaskImage mask;
    int view_id = 0;
    int frame_index = 0;
};

// Fused colored point set for one frame.
struct TexturedPointCloud {
    Eigen::Matrix<Scalar, 3, Eigen::Dynamic> positions;  // meters, world frame
    Eigen::Matrix<Scalar, 3, Eigen::Dynamic> colors;     // [0,1]
    MatX features;  // optional, F x N (0 rows when absent)
    int frame_index = 0;

    Eigen::Index size() const { return positions.cols(); }

    void validate() const {
        if (positions.cols() == 0) throw std::runtime_error("empty point cloud");
        if (!positions.allFinite()) throw std::runtime_error("non-finite point positions");
        if (colors.minCoeff() < 0.0 || colors.maxCoeff() > 1.0)
            throw std::runtime_error("point colors out of [0,1]");
    }
};

}  // namespace fvr
