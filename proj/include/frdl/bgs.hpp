#ifndef FRDL_BGS_HPP
#define FRDL_BGS_HPP

#include <cstdint>
#include <vector>

#include "frdl/image.hpp"

namespace frdl {

/// Binary foreground map; bits are 0 (background) or 1 (foreground).
struct ForegroundMask {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> bits;

    ForegroundMask() = default;
    ForegroundMask(int rows, int cols) : rows(rows), cols(cols),
        bits(static_cast<std::size_t>(rows) * cols, 0) {}

    std::uint8_t& at(int r, int c) { return bits[static_cast<std::size_t>(r) * cols + c]; }
    std::uint8_t at(int r, int c) const { return bits[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t count() const;
};

struct BgsParams {
    int samples_per_pixel = 20;   // bank size per pixel
    int neighborhood_radius = 10; // init / propagation window half-width
    int match_radius = 20;        // intensity distance for a sample match
    int min_matches = 2;          // matches needed to call a pixel background
    int update_subsampling = 16;  // 1-in-N chance to absorb a background pixel
};

/// Per-pixel bank of intensity samples. A pixel is background when enough
/// bank samples sit within `match_radius` of its current value. The model
/// carries its own RNG stream; updates are single-writer.
struct BackgroundModel {
    int rows = 0;
    int cols = 0;
    BgsParams params;
    std::vector<std::uint8_t> samples;  // rows * cols * samples_per_pixel
    Rng rng;

    std::uint8_t& sample(int r, int c, int j) {
        return samples[(static_cast<std::size_t>(r) * cols + c) * params.samples_per_pixel + j];
    }
    std::uint8_t sample(int r, int c, int j) const {
        return samples[(static_cast<std::size_t>(r) * cols + c) * params.samples_per_pixel + j];
    }
};

/// Fills each pixel's bank with values drawn from its spatial neighborhood
/// in the given grayscale frame (window clipped at borders).
BackgroundModel init_background_model(const Image8& frame, const BgsParams& params,
                                      std::uint64_t seed);

/// Marks pixels whose value matches fewer than `min_matches` bank samples.
ForegroundMask classify_foreground(const BackgroundModel& model, const Image8& frame);

/// Conservative absorption: background-classified pixels refresh one random
/// bank slot (their own and one random neighbor's) with probability
/// 1/update_subsampling each. Foreground pixels never touch the model.
void update_background_model(BackgroundModel& model, const Image8& frame,
                             const ForegroundMask& mask);

/// Erosion then dilation with the full 3x3 structuring element;
/// out-of-bounds counts as background.
ForegroundMask morph_open(const ForegroundMask& mask);

/// Square box around the largest 8-connected component (ties: smallest
/// top-left), clipped to the frame. An empty mask yields the full frame.
BoundingBox extract_roi(const ForegroundMask& mask);

/// Intersection over union; two empty masks count as 1.
double mask_iou(const ForegroundMask& a, const ForegroundMask& b);

/// Mask as a 0/255 grayscale image for PGM export.
Image8 mask_to_image(const ForegroundMask& mask);

/// 0/255 image (e.g. a ground-truth PGM) to a mask; nonzero means foreground.
ForegroundMask image_to_mask(const Image8& img);

}  // namespace frdl

#endif
