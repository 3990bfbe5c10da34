#ifndef FRDL_SKELETON_HPP
#define FRDL_SKELETON_HPP

#include "frdl/image.hpp"
#include "frdl/ingest.hpp"

namespace frdl {

/// Joint coordinates affinely mapped into [0, 255] using the global minimum
/// and maximum over every coordinate of the sequence (all frames, joints,
/// and axes). The extremes are kept so the map can be inverted.
struct NormalizedSkeleton {
    int num_frames = 0;
    int num_joints = 0;
    std::vector<double> values;  // num_frames * num_joints * 3, in [0, 255]
    double c_min = 0.0;
    double c_max = 0.0;

    double at(int frame, int joint, int axis) const {
        return values[(static_cast<std::size_t>(frame) * num_joints + joint) * 3 + axis];
    }
};

/// Fixed-size color rendering of a skeleton sequence: rows are joints,
/// columns are (resampled) frames, channels carry (x, y, z).
struct SkeletonImage {
    Image8 pixels;  // num_joints rows, target_frames cols, 3 channels
};

/// value' = 255 * (value - min) / (max - min); a degenerate sequence where
/// max == min maps to all zeros. Non-finite input is a data error naming
/// the offending (frame, joint).
NormalizedSkeleton normalize_skeleton(const SkeletonSequence& seq);

/// Rounds (half-up) each normalized coordinate into a color pixel and
/// resamples the time axis to `target_frames` columns by nearest neighbor.
SkeletonImage encode_skeleton_image(const NormalizedSkeleton& ns, int target_frames);

}  // namespace frdl

#endif
