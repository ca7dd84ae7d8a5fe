#pragma once

#include "fvr/types.hpp"

#include <string>

namespace fvr {

// 8-bit RGB, values clamped/quantized from [0,1].
void writeRgb8(const Image& img, const std::string& path);
Image readRgb8(const std::string& path);

// 16-bit grayscale storing depth in millimeters (0 = invalid).
void writeDepth16(const Plane& depth_m, const std::string& path);
Plane readDepth16(const std::string& path);

// 8-bit grayscale mask, 0 / 255.
void writeMask8(const MaskImage& mask, const std::string& path);
MaskImage readMask8(const std::string& path);

}  // namespace fvr
