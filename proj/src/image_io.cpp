#include "fvr/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace fvr {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void writePng(const std::string& path, int width, int height, int color_type, int bit_depth,
              const std::vector<png_bytep>& rows) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open for write: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct PngImage {
    int width = 0, height = 0, color_type = 0, bit_depth = 0;
    std::vector<png_byte> data;
    std::vector<png_bytep> rows;
};

PngImage readPng(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open for read: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png read failed: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    PngImage img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.color_type = png_get_color_type(png, info);
    img.bit_depth = png_get_bit_depth(png, info);
    if (img.bit_depth == 16) png_set_swap(png);
    png_read_update_info(png, info);
    const size_t rowbytes = png_get_rowbytes(png, info);
    img.data.resize(rowbytes * img.height);
    img.rows.resize(img.height);
    for (int y = 0; y < img.height; ++y) img.rows[y] = img.data.data() + y * rowbytes;
    png_read_image(png, img.rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

png_byte quantize8(Scalar v) {
    const Scalar c = std::fmin(std::fmax(v, 0.0), 1.0);
    return static_cast<png_byte>(std::lround(c * 255.0));
}

}  // namespace

void writeRgb8(const Image& img, const std::string& path) {
    if (img.channels() != 3) throw std::runtime_error("writeRgb8: expected 3 channels");
    const int h = img.height(), w = img.width();
    std::vector<png_byte> buf(static_cast<size_t>(h) * w * 3);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) {
        rows[y] = buf.data() + static_cast<size_t>(y) * w * 3;
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) rows[y][3 * x + c] = quantize8(img.ch[c](y, x));
    }
    writePng(path, w, h, PNG_COLOR_TYPE_RGB, 8, rows);
}

Image readRgb8(const std::string& path) {
    PngImage p = readPng(path);
    if (p.color_type != PNG_COLOR_TYPE_RGB || p.bit_depth != 8)
        throw std::runtime_error("readRgb8: not an 8-bit RGB png: " + path);
    Image img(3, p.height, p.width);
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x)
            for (int c = 0; c < 3; ++c) img.ch[c](y, x) = p.rows[y][3 * x + c] / 255.0;
    return img;
}

void writeDepth16(const Plane& depth_m, const std::string& path) {
    const int h = static_cast<int>(depth_m.rows()), w = static_cast<int>(depth_m.cols());
    std::vector<png_byte> buf(static_cast<size_t>(h) * w * 2);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) {
        rows[y] = buf.data() + static_cast<size_t>(y) * w * 2;
        auto* row16 = reinterpret_cast<uint16_t*>(rows[y]);
        for (int x = 0; x < w; ++x) {
            const Scalar mm = std::fmin(std::fmax(depth_m(y, x) * 1000.0, 0.0), 65535.0);
            row16[x] = static_cast<uint16_t>(std::lround(mm));
        }
    }
    writePng(path, w, h, PNG_COLOR_TYPE_GRAY, 16, rows);
}

Plane readDepth16(const std::string& path) {
    PngImage p = readPng(path);
    if (p.color_type != PNG_COLOR_TYPE_GRAY || p.bit_depth != 16)
        throw std::runtime_error("readDepth16: not a 16-bit gray png: " + path);
    Plane depth(p.height, p.width);
    for (int y = 0; y < p.height; ++y) {
        const auto* row16 = reinterpret_cast<const uint16_t*>(p.rows[y]);
        for (int x = 0; x < p.width; ++x) depth(y, x) = row16[x] / 1000.0;
    }
    return depth;
}

void writeMask8(const MaskImage& mask, const std::string& path) {
    const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
    std::vector<png_byte> buf(static_cast<size_t>(h) * w);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) {
        rows[y] = buf.data() + static_cast<size_t>(y) * w;
        for (int x = 0; x < w; ++x) rows[y][x] = mask(y, x) ? 255 : 0;
    }
    writePng(path, w, h, PNG_COLOR_TYPE_GRAY, 8, rows);
}

MaskImage readMask8(const std::string& path) {
    PngImage p = readPng(path);
    if (p.color_type != PNG_COLOR_TYPE_GRAY || p.bit_depth != 8)
        throw std::runtime_error("readMask8: not an 8-bit gray png: " + path);
    MaskImage mask(p.height, p.width);
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) mask(y, x) = p.rows[y][x] >= 128;
    return mask;
}

}  // namespace fvr
