#ifndef FRDL_IMAGE_HPP
#define FRDL_IMAGE_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include "frdl/common.hpp"

namespace frdl {

/// 8-bit image, row-major with interleaved channels (1 = gray, 3 = RGB).
struct Image8 {
    int rows = 0;
    int cols = 0;
    int channels = 1;
    std::vector<std::uint8_t> data;

    Image8() = default;
    Image8(int rows, int cols, int channels, std::uint8_t fill = 0)
        : rows(rows), cols(cols), channels(channels),
          data(static_cast<std::size_t>(rows) * cols * channels, fill) {}

    std::uint8_t& at(int r, int c, int ch = 0) {
        return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
    }
    std::uint8_t at(int r, int c, int ch = 0) const {
        return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
    }
    bool same_shape(const Image8& o) const {
        return rows == o.rows && cols == o.cols && channels == o.channels;
    }
    bool empty() const { return data.empty(); }
};

/// Axis-aligned pixel rectangle; (x, y) is the top-left corner.
struct BoundingBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
};

/// Reads a binary PGM (P5) or PPM (P6) file with maxval 255.
Image8 read_pnm(const std::filesystem::path& path);

/// Writes gray images as P5, 3-channel images as P6.
void write_pnm(const std::filesystem::path& path, const Image8& img);

/// Integer-rounded channel average; gray input is passed through unchanged.
Image8 to_gray(const Image8& img);

/// Bilinear resize (any channel count). Pixel centers aligned, edges clamped.
Image8 resize_bilinear(const Image8& img, int out_rows, int out_cols);

/// Nearest-neighbor resize.
Image8 resize_nearest(const Image8& img, int out_rows, int out_cols);

/// Copies the box region; the box must lie within the image.
Image8 crop(const Image8& img, const BoundingBox& box);

}  // namespace frdl

#endif
