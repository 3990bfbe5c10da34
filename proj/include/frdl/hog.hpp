#ifndef FRDL_HOG_HPP
#define FRDL_HOG_HPP

#include <vector>

#include "frdl/image.hpp"

namespace frdl {

/// Horizontal and vertical image derivatives, same dims as the source.
struct GradientField {
    int rows = 0;
    int cols = 0;
    std::vector<double> ix;  // I(x-1,y) - I(x+1,y)
    std::vector<double> iy;  // I(x,y-1) - I(x,y+1)

    double& IX(int r, int c) { return ix[static_cast<std::size_t>(r) * cols + c]; }
    double IX(int r, int c) const { return ix[static_cast<std::size_t>(r) * cols + c]; }
    double& IY(int r, int c) { return iy[static_cast<std::size_t>(r) * cols + c]; }
    double IY(int r, int c) const { return iy[static_cast<std::size_t>(r) * cols + c]; }
};

struct HogParams {
    int cell_size = 8;      // pixels per cell side
    int block_size = 2;     // cells per block side
    int block_stride = 1;   // cells between block origins
    int bins = 9;           // orientation bins over [0, 180)
    double epsilon = 1e-6;  // L2 normalization guard
};

struct HogLayout {
    int cells_x = 0, cells_y = 0;
    int blocks_x = 0, blocks_y = 0;
    int bins = 0;
    int block_cells = 0;

    int length() const { return blocks_x * blocks_y * block_cells * bins; }
};

struct HogDescriptor {
    std::vector<double> values;
    HogLayout layout;
};

/// [+1 0 -1] cross-correlation in both axes; borders replicate edge pixels.
/// Requires a grayscale image of at least 3x3.
GradientField gradients(const Image8& image);

/// Magnitude sqrt(ix^2+iy^2) and orientation (degrees, folded to [0,180)).
/// The angle is the two-argument arctangent of (ix, iy); zero magnitude
/// maps to angle 0.
struct MagnitudeAngle {
    int rows = 0, cols = 0;
    std::vector<double> magnitude;
    std::vector<double> angle_deg;
};
MagnitudeAngle magnitude_angle(const GradientField& g);

/// Expected layout for an image of the given size, or an error when the
/// dimensions are incompatible with the parameters.
HogLayout hog_layout(int rows, int cols, const HogParams& params);

/// Per-cell orientation histograms before any block normalization
/// (cells_y x cells_x x bins, row-major). Votes are magnitude-weighted and
/// split linearly between the two nearest bins with wrap-around.
std::vector<double> cell_histograms(const Image8& image, const HogParams& params);

/// Block-normalized descriptor: blocks row-major, cells within a block
/// row-major, then bins; each block L2-normalized with the epsilon guard.
HogDescriptor hog_descriptor(const Image8& image, const HogParams& params);

}  // namespace frdl

#endif
