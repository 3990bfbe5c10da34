#include "frdl/hog.hpp"

#include <cmath>

namespace frdl {

GradientField gradients(const Image8& image) {
    if (image.channels != 1) throw DataError("gradients requires a grayscale image");
    if (image.rows < 3 || image.cols < 3)
        throw DataError("gradients requires an image of at least 3x3");
    GradientField g;
    g.rows = image.rows;
    g.cols = image.cols;
    g.ix.resize(image.data.size());
    g.iy.resize(image.data.size());
    auto px = [&](int r, int c) {
        r = std::clamp(r, 0, image.rows - 1);
        c = std::clamp(c, 0, image.cols - 1);
        return static_cast<double>(image.at(r, c));
    };
    for (int r = 0; r < image.rows; ++r) {
        for (int c = 0; c < image.cols; ++c) {
            g.IX(r, c) = px(r, c - 1) - px(r, c + 1);
            g.IY(r, c) = px(r - 1, c) - px(r + 1, c);
        }
    }
    return g;
}

MagnitudeAngle magnitude_angle(const GradientField& g) {
    MagnitudeAngle out;
    out.rows = g.rows;
    out.cols = g.cols;
    out.magnitude.resize(g.ix.size());
    out.angle_deg.resize(g.ix.size());
    constexpr double rad2deg = 180.0 / 3.141592653589793;
    for (std::size_t i = 0; i < g.ix.size(); ++i) {
        const double ix = g.ix[i], iy = g.iy[i];
        const double mag = std::sqrt(ix * ix + iy * iy);
        out.magnitude[i] = mag;
        if (mag == 0.0) {
            out.angle_deg[i] = 0.0;
            continue;
        }
        double deg = std::atan2(ix, iy) * rad2deg;  // arctan(ix/iy), unsigned fold below
        if (deg < 0.0) deg += 180.0;
        if (deg >= 180.0) deg -= 180.0;
        out.angle_deg[i] = deg;
    }
    return out;
}

HogLayout hog_layout(int rows, int cols, const HogParams& params) {
    if (params.cell_size < 1 || params.block_size < 1 || params.block_stride < 1)
        throw ConfigError("HOG cell/block/stride must be >= 1");
    if (params.bins < 2) throw ConfigError("HOG needs at least 2 orientation bins");
    if (rows % params.cell_size != 0 || cols % params.cell_size != 0)
        throw ConfigError("image dims " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " not divisible by cell size " + std::to_string(params.cell_size));
    HogLayout layout;
    layout.cells_y = rows / params.cell_size;
    layout.cells_x = cols / params.cell_size;
    layout.bins = params.bins;
    layout.block_cells = params.block_size * params.block_size;
    if (layout.cells_x < params.block_size || layout.cells_y < params.block_size)
        throw ConfigError("image too small for the requested block size");
    layout.blocks_x = (layout.cells_x - params.block_size) / params.block_stride + 1;
    layout.blocks_y = (layout.cells_y - params.block_size) / params.block_stride + 1;
    return layout;
}

std::vector<double> cell_histograms(const Image8& image, const HogParams& params) {
    const HogLayout layout = hog_layout(image.rows, image.cols, params);
    const GradientField g = gradients(image);
    const MagnitudeAngle ma = magnitude_angle(g);

    std::vector<double> hist(
        static_cast<std::size_t>(layout.cells_y) * layout.cells_x * layout.bins, 0.0);
    const double bin_width = 180.0 / params.bins;
    for (int r = 0; r < image.rows; ++r) {
        const int cy = r / params.cell_size;
        for (int c = 0; c < image.cols; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * image.cols + c;
            const double mag = ma.magnitude[i];
            if (mag == 0.0) continue;
            const int cx = c / params.cell_size;
            // split the vote between the two nearest bin centers (wrapping)
            const double pos = ma.angle_deg[i] / bin_width - 0.5;
            const int lower = static_cast<int>(std::floor(pos));
            const double upper_frac = pos - lower;
            const int b0 = (lower % params.bins + params.bins) % params.bins;
            const int b1 = (b0 + 1) % params.bins;
            double* cell =
                &hist[(static_cast<std::size_t>(cy) * layout.cells_x + cx) * layout.bins];
            cell[b0] += mag * (1.0 - upper_frac);
            cell[b1] += mag * upper_frac;
        }
    }
    return hist;
}

HogDescriptor hog_descriptor(const Image8& image, const HogParams& params) {
    const HogLayout layout = hog_layout(image.rows, image.cols, params);
    const std::vector<double> hist = cell_histograms(image, params);

    HogDescriptor desc;
    desc.layout = layout;
    desc.values.reserve(layout.length());
    std::vector<double> block(static_cast<std::size_t>(layout.block_cells) * layout.bins);
    for (int by = 0; by < layout.blocks_y; ++by) {
        for (int bx = 0; bx < layout.blocks_x; ++bx) {
            std::size_t n = 0;
            double sq = 0.0;
            for (int dy = 0; dy < params.block_size; ++dy) {
                for (int dx = 0; dx < params.block_size; ++dx) {
                    const int cy = by * params.block_stride + dy;
                    const int cx = bx * params.block_stride + dx;
                    const double* cell =
                        &hist[(static_cast<std::size_t>(cy) * layout.cells_x + cx) * layout.bins];
                    for (int b = 0; b < params.bins; ++b) {
                        block[n++] = cell[b];
                        sq += cell[b] * cell[b];
                    }
                }
            }
            const double norm = std::sqrt(sq + params.epsilon);
            for (std::size_t i = 0; i < n; ++i) desc.values.push_back(block[i] / norm);
        }
    }
    return desc;
}

}  // namespace frdl
