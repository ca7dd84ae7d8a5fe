#include "fvr/proxy.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace fvr {
namespace {

using VoxelKey = std::array<int64_t, 3>;

struct ViewSample {
    Vec3 color;
    Vec3 ray;  // unit vector from camera center toward the point
    Scalar z;
};

struct Voxel {
    Vec3 pos_sum = Vec3::Zero();
    int count = 0;
    std::vector<ViewSample> samples;
};

VoxelKey keyOf(const Vec3& p, Scalar voxel) {
    return {static_cast<int64_t>(std::floor(p.x() / voxel)),
            static_cast<int64_t>(std::floor(p.y() / voxel)),
            static_cast<int64_t>(std::floor(p.z() / voxel))};
}

}  // namespace

TexturedPointCloud fuse_frame(const std::vector<RGBDFrame>& frames,
                              const std::vector<CameraView>& cameras,
                              const FusionParams& params) {
    if (frames.size() != cameras.size())
        throw std::runtime_error("fuse_frame: frames/cameras count mismatch");

    std::vector<size_t> order(frames.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return frames[a].view_id < frames[b].view_id; });

    std::map<VoxelKey, Voxel> grid;  // ordered: deterministic output layout
    for (size_t oi : order) {
        const RGBDFrame& fr = frames[oi];
        const CameraView& cam = cameras[oi];
        const Vec3 center = cam.center();
        for (int y = 0; y < fr.depth.rows(); ++y)
            for (int x = 0; x < fr.depth.cols(); ++x) {
                if (!fr.mask(y, x) || fr.depth(y, x) <= 0) continue;
                const Scalar z = fr.depth(y, x);
                const Vec3 p = unproject_pixel(cam, Vec2(x, y), z);
                Voxel& v = grid[keyOf(p, params.voxel)];
                v.pos_sum += p;
                v.count += 1;
                v.samples.push_back({Vec3(fr.color.ch[0](y, x), fr.color.ch[1](y, x), fr.color.ch[2](y, x)),
                                     (p - center).normalized(), z});
            }
    }
    if (grid.empty()) throw std::runtime_error("fuse_frame: no foreground in any view");

    const Eigen::Index n = static_cast<Eigen::Index>(grid.size());
    TexturedPointCloud cloud;
    cloud.positions.resize(3, n);
    cloud.frame_index = frames[order[0]].frame_index;

    std::vector<const Voxel*> voxels;
    voxels.reserve(grid.size());
    {
        Eigen::Index i = 0;
        for (const auto& [key, v] : grid) {
            cloud.positions.col(i++) = v.pos_sum / v.count;
            voxels.push_back(&v);
        }
    }

    // local normals from k nearest neighbors (searched over the 3^3 voxel neighborhood)
    std::map<VoxelKey, Eigen::Index> index_of;
    {
        Eigen::Index i = 0;
        for (const auto& [key, v] : grid) index_of[key] = i++;
    }
    cloud.colors.resize(3, n);
    Eigen::Index i = 0;
    for (const auto& [key, vox] : grid) {
        const Vec3 p = cloud.positions.col(i);
        std::vector<std::pair<Scalar, Eigen::Index>> cand;
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    const auto it = index_of.find({key[0] + dx, key[1] + dy, key[2] + dz});
                    if (it == index_of.end() || it->second == i) continue;
                    cand.push_back({(cloud.positions.col(it->second) - p).squaredNorm(), it->second});
                }
        std::sort(cand.begin(), cand.end());
        const int kn = std::min<int>(params.normal_neighbors, static_cast<int>(cand.size()));

        Vec3 normal = -vox.samples.front().ray;  // fallback: face the first observing view
        if (kn >= 3) {
            Vec3 mean = p;
            for (int c = 0; c < kn; ++c) mean += cloud.positions.col(cand[c].second);
            mean /= (kn + 1);
            Mat3 cov = (p - mean) * (p - mean).transpose();
            for (int c = 0; c < kn; ++c) {
                const Vec3 d = cloud.positions.col(cand[c].second) - mean;
                cov += d * d.transpose();
            }
            Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
            normal = eig.eigenvectors().col(0);  // smallest-variance direction
        }

        // mosaicing: blend contributing views by |cos(view angle)| / z^2
        Vec3 color = Vec3::Zero();
        Scalar wsum = 0;
        for (const auto& s : vox.samples) {
            const Scalar w = std::abs(s.ray.dot(normal)) / (s.z * s.z);
            color += w * s.color;
            wsum += w;
        }
        if (wsum > 1e-12) {
            color /= wsum;
        } else {
            color.setZero();
            for (const auto& s : vox.samples) color += s.color;
            color /= static_cast<Scalar>(vox.samples.size());
        }
        cloud.colors.col(i) = color.cwiseMin(1.0).cwiseMax(0.0);
        ++i;
    }
    cloud.validate();
    return cloud;
}

TexturedRender render_textured(const TexturedPointCloud& proxy, const CameraView& target,
                               Scalar splat_radius_m) {
    if (proxy.size() == 0) throw std::runtime_error("render_textured: empty proxy");
    TexturedRender out;
    out.color = Image(3, target.height, target.width);
    out.mask = MaskImage::Constant(target.height, target.width, false);
    out.depth = Plane::Zero(target.height, target.width);

    Plane zbuf = Plane::Constant(target.height, target.width, std::numeric_limits<Scalar>::infinity());
    Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> owner(target.height, target.width);
    owner.setConstant(-1);

    for (Eigen::Index i = 0; i < proxy.size(); ++i) {
        const auto pr = project_point(target, proxy.positions.col(i));
        if (!pr) continue;
        const Scalar r_px = std::max(splat_radius_m * target.focal.x() / pr->depth, 0.71);
        const int x0 = std::max(0, static_cast<int>(std::ceil(pr->pixel.x() - r_px)));
        const int x1 = std::min(target.width - 1, static_cast<int>(std::floor(pr->pixel.x() + r_px)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(pr->pixel.y() - r_px)));
        const int y1 = std::min(target.height - 1, static_cast<int>(std::floor(pr->pixel.y() + r_px)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const Scalar dx = x - pr->pixel.x(), dy = y - pr->pixel.y();
                if (dx * dx + dy * dy > r_px * r_px) continue;
                if (pr->depth > zbuf(y, x)) continue;
                if (pr->depth == zbuf(y, x) && owner(y, x) >= 0 && owner(y, x) < i) continue;
                zbuf(y, x) = pr->depth;
                owner(y, x) = i;
            }
    }
    for (int y = 0; y < target.height; ++y)
        for (int x = 0; x < target.width; ++x) {
            const Eigen::Index i = owner(y, x);
            if (i < 0) continue;
            out.mask(y, x) = true;
            out.depth(y, x) = zbuf(y, x);
            for (int c = 0; c < 3; ++c) out.color.ch[c](y, x) = proxy.colors(c, i);
        }
    return out;
}

void savePly(const TexturedPointCloud& cloud, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.precision(9);
    for (Eigen::Index i = 0; i < cloud.size(); ++i)
        f << cloud.positions(0, i) << ' ' << cloud.positions(1, i) << ' ' << cloud.positions(2, i)
          << ' ' << cloud.colors(0, i) << ' ' << cloud.colors(1, i) << ' ' << cloud.colors(2, i) << '\n';
}

TexturedPointCloud loadPly(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::vector<std::array<Scalar, 6>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::array<Scalar, 6> r;
        for (auto& v : r) ss >> v;
        if (!ss && !ss.eof()) throw std::runtime_error("bad point line in " + path);
        rows.push_back(r);
    }
    TexturedPointCloud cloud;
    cloud.positions.resize(3, static_cast<Eigen::Index>(rows.size()));
    cloud.colors.resize(3, static_cast<Eigen::Index>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        cloud.positions.col(static_cast<Eigen::Index>(i)) = Vec3(rows[i][0], rows[i][1], rows[i][2]);
        cloud.colors.col(static_cast<Eigen::Index>(i)) = Vec3(rows[i][3], rows[i][4], rows[i][5]);
    }
    return cloud;
}

}  // namespace fvr
