#pragma once

#include "fvr/camera.hpp"
#include "fvr/types.hpp"

#include <string>
#include <vector>

namespace fvr {

struct FusionParams {
    Scalar voxel = 0.005;       // dedup grid size, meters
    int normal_neighbors = 16;  // k for the local PCA normal estimate
};

// Fuses the per-view foreground depth pixels into one deduplicated colored
// point cloud. Colors are mosaiced across contributing views, weighted by
// view-to-normal alignment and inverse squared range. Output is independent
// of the order the views are passed in.
TexturedPointCloud fuse_frame(const std::vector<RGBDFrame>& frames,
                              const std::vector<CameraView>& cameras,
                              const FusionParams& params = {});

struct TexturedRender {
    Image color;     // I_tex
    MaskImage mask;  // M_tex: pixels hit by at least one splat
    Plane depth;     // D_tex, 0 where empty
};

// Z-buffered disk-splat render of the colored proxy into the target view.
// Splat radius scales as splat_radius_m * fx / z; depth ties go to the lower
// point index.
TexturedRender render_textured(const TexturedPointCloud& proxy, const CameraView& target,
                               Scalar splat_radius_m = 0.004);

// ASCII point-cloud cache: "x y z r g b" per line.
void savePly(const TexturedPointCloud& cloud, const std::string& path);
TexturedPointCloud loadPly(const std::string& path);

}  // namespace fvr
