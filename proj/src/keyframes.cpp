#include "fvr/keyframes.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>

namespace fvr {
namespace {

// k-means++-style seeding under the pose-space distance
std::vector<int> seedCenters(const std::vector<Pose3D>& poses, int k, std::mt19937_64& rng) {
    const int n = static_cast<int>(poses.size());
    std::vector<int> centers;
    std::uniform_int_distribution<int> first(0, n - 1);
    centers.push_back(first(rng));
    std::vector<Scalar> d2(n, std::numeric_limits<Scalar>::infinity());
    while (static_cast<int>(centers.size()) < k) {
        Scalar total = 0;
        for (int i = 0; i < n; ++i) {
            const Scalar d = pose_distance(poses[i], poses[centers.back()]);
            d2[i] = std::min(d2[i], d * d);
            total += d2[i];
        }
        int next = -1;
        if (total > 0) {
            std::uniform_real_distribution<Scalar> unif(0.0, total);
            Scalar target = unif(rng), acc = 0;
            for (int i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) { next = i; break; }
            }
        }
        if (next < 0) {
            // all remaining mass zero: pick the lowest unused frame
            for (int i = 0; i < n && next < 0; ++i)
                if (std::find(centers.begin(), centers.end(), i) == centers.end()) next = i;
        }
        centers.push_back(next);
    }
    return centers;
}

Scalar withinClusterSum(const std::vector<Pose3D>& poses, const std::vector<int>& assign,
                        const std::vector<int>& centers) {
    Scalar sum = 0;
    for (size_t i = 0; i < poses.size(); ++i) sum += pose_distance(poses[i], poses[centers[assign[i]]]);
    return sum;
}

}  // namespace

int defaultK(int n_frames) {
    return std::max(2, static_cast<int>(std::ceil(0.04 * n_frames)));
}

KeyframeSet select_keyframes(const std::vector<Pose3D>& poses, int k, std::uint64_t seed,
                             int max_iterations) {
    const int n = static_cast<int>(poses.size());
    if (n == 0) throw std::runtime_error("select_keyframes: empty sequence");
    if (k < 1 || k > n) throw std::runtime_error("select_keyframes: k out of range");

    std::mt19937_64 rng(seed);
    std::vector<int> centers = seedCenters(poses, k, rng);

    std::vector<int> assign(n, 0);
    std::set<std::vector<int>> seen;
    std::vector<int> best_centers = centers;
    Scalar best_sum = std::numeric_limits<Scalar>::infinity();
    int iter = 0;

    for (; iter < max_iterations; ++iter) {
        // assignment: nearest center by pose distance, ties to the lower center index
        for (int i = 0; i < n; ++i) {
            Scalar best = std::numeric_limits<Scalar>::infinity();
            for (int c = 0; c < k; ++c) {
                const Scalar d = pose_distance(poses[i], poses[centers[c]]);
                if (d < best) { best = d; assign[i] = c; }
            }
        }

        // numerical mean pose per cluster, then snap to the nearest frame in the cluster
        std::vector<int> next_centers(k, -1);
        std::vector<bool> used(n, false);
        for (int c = 0; c < k; ++c) {
            Pose3D mean;
            mean.joints.setZero(3, poses[0].numJoints());
            mean.confidences = VecX::Ones(poses[0].numJoints());
            int count = 0;
            for (int i = 0; i < n; ++i)
                if (assign[i] == c) { mean.joints += poses[i].joints; ++count; }
            if (count == 0) continue;  // repaired below
            mean.joints /= static_cast<Scalar>(count);
            Scalar best = std::numeric_limits<Scalar>::infinity();
            for (int i = 0; i < n; ++i) {
                if (assign[i] != c) continue;
                const Scalar d = pose_distance(poses[i], mean);
                if (d < best) { best = d; next_centers[c] = i; }  // ties: lowest frame index
            }
        }
        // empty-cluster repair: reseed at the frame farthest from all current centers
        for (int c = 0; c < k; ++c) {
            if (next_centers[c] >= 0) continue;
            Scalar far_best = -1;
            int far_i = 0;
            for (int i = 0; i < n; ++i) {
                Scalar nearest = std::numeric_limits<Scalar>::infinity();
                for (int c2 = 0; c2 < k; ++c2)
                    if (next_centers[c2] >= 0)
                        nearest = std::min(nearest, pose_distance(poses[i], poses[next_centers[c2]]));
                if (nearest > far_best) { far_best = nearest; far_i = i; }
            }
            next_centers[c] = far_i;
        }

        centers = next_centers;
        for (int i = 0; i < n; ++i) {
            Scalar best = std::numeric_limits<Scalar>::infinity();
            for (int c = 0; c < k; ++c) {
                const Scalar d = pose_distance(poses[i], poses[centers[c]]);
                if (d < best) { best = d; assign[i] = c; }
            }
        }
        const Scalar sum = withinClusterSum(poses, assign, centers);
        if (sum < best_sum) { best_sum = sum; best_centers = centers; }

        std::vector<int> key = centers;
        std::sort(key.begin(), key.end());
        if (!seen.insert(key).second) break;  // snapped k-means can cycle; keep best seen
    }

    KeyframeSet set;
    set.indices = best_centers;
    std::sort(set.indices.begin(), set.indices.end());
    set.indices.erase(std::unique(set.indices.begin(), set.indices.end()), set.indices.end());
    set.k = k;
    set.iterations = iter + 1;
    set.within_cluster_distance = best_sum;
    set.method = "pose";
    set.seed = seed;
    return set;
}

KeyframeSet select_random(int n_frames, int k, std::uint64_t seed) {
    if (k < 1 || k > n_frames) throw std::runtime_error("select_random: k out of range");
    std::mt19937_64 rng(seed);
    std::vector<int> all(n_frames);
    for (int i = 0; i < n_frames; ++i) all[i] = i;
    // partial Fisher-Yates
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> pick(i, n_frames - 1);
        std::swap(all[i], all[pick(rng)]);
    }
    KeyframeSet set;
    set.indices.assign(all.begin(), all.begin() + k);
    std::sort(set.indices.begin(), set.indices.end());
    set.k = k;
    set.method = "random";
    set.seed = seed;
    return set;
}

Scalar coverage_radius(const KeyframeSet& keyframes, const std::vector<Pose3D>& poses) {
    if (keyframes.indices.empty()) throw std::runtime_error("coverage_radius: no key-frames");
    Scalar radius = 0;
    for (const auto& pose : poses) {
        Scalar nearest = std::numeric_limits<Scalar>::infinity();
        for (int kf : keyframes.indices)
            nearest = std::min(nearest, pose_distance(pose, poses[kf]));
        radius = std::max(radius, nearest);
    }
    return radius;
}

std::string keyframesToJson(const KeyframeSet& set) {
    nlohmann::json j;
    j["k"] = set.k;
    j["indices"] = set.indices;
    j["method"] = set.method;
    j["seed"] = set.seed;
    j["iterations"] = set.iterations;
    j["within_cluster_distance"] = set.within_cluster_distance;
    return j.dump(2);
}

KeyframeSet keyframesFromJson(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    KeyframeSet set;
    set.k = j.at("k").get<int>();
    set.indices = j.at("indices").get<std::vector<int>>();
    set.method = j.value("method", std::string("pose"));
    set.seed = j.value("seed", std::uint64_t{0});
    set.iterations = j.value("iterations", 0);
    set.within_cluster_distance = j.value("within_cluster_distance", 0.0);
    return set;
}

void saveKeyframes(const KeyframeSet& set, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << keyframesToJson(set) << "\n";
}

KeyframeSet loadKeyframes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return keyframesFromJson(text);
}

}  // namespace fvr
