#include "frdl/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace frdl {

NormalizedSkeleton normalize_skeleton(const SkeletonSequence& seq) {
    if (seq.num_frames < 1 || seq.num_joints < 1)
        throw DataError("skeleton sequence must have at least one frame and joint");

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int f = 0; f < seq.num_frames; ++f) {
        for (int j = 0; j < seq.num_joints; ++j) {
            for (int a = 0; a < 3; ++a) {
                const double v = seq.at(f, j, a);
                if (!std::isfinite(v))
                    throw DataError("non-finite skeleton coordinate at (frame " +
                                    std::to_string(f) + ", joint " + std::to_string(j) + ")");
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }

    NormalizedSkeleton out;
    out.num_frames = seq.num_frames;
    out.num_joints = seq.num_joints;
    out.c_min = lo;
    out.c_max = hi;
    out.values.resize(seq.coords.size());
    const double span = hi - lo;
    if (span == 0.0) return out;  // motionless point: all zeros, not an error
    for (std::size_t i = 0; i < seq.coords.size(); ++i)
        out.values[i] = 255.0 * (seq.coords[i] - lo) / span;
    return out;
}

SkeletonImage encode_skeleton_image(const NormalizedSkeleton& ns, int target_frames) {
    if (target_frames < 1) throw ConfigError("target_frames must be >= 1");
    SkeletonImage img;
    img.pixels = Image8(ns.num_joints, target_frames, 3);
    for (int col = 0; col < target_frames; ++col) {
        const int src = std::min(
            static_cast<int>(static_cast<std::int64_t>(col) * ns.num_frames / target_frames),
            ns.num_frames - 1);
        for (int j = 0; j < ns.num_joints; ++j) {
            for (int a = 0; a < 3; ++a) {
                const double v = ns.at(src, j, a);
                img.pixels.at(j, col, a) =
                    static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
            }
        }
    }
    return img;
}

}  // namespace frdl
