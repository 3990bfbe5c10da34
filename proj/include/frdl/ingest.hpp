#ifndef FRDL_INGEST_HPP
#define FRDL_INGEST_HPP

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "frdl/image.hpp"

namespace frdl {

/// Ordered frames of one clip. All frames share identical dimensions.
/// `source_indices` records, for each kept frame, its index in the clip it
/// was selected from (identity for freshly loaded sequences).
struct FrameSequence {
    std::vector<Image8> frames;
    std::string sample_id;
    double nominal_rate = 16.0;  // frames per second, metadata only
    std::vector<int> source_indices;

    int length() const { return static_cast<int>(frames.size()); }
};

/// Joint coordinate track: `frames x joints` rows of (x, y, z), all finite.
/// `frame_indices[i]` is the clip frame row i belongs to.
struct SkeletonSequence {
    int num_frames = 0;
    int num_joints = 0;
    std::vector<double> coords;  // num_frames * num_joints * 3, row-major
    std::vector<int> frame_indices;

    double& at(int frame, int joint, int axis) {
        return coords[(static_cast<std::size_t>(frame) * num_joints + joint) * 3 + axis];
    }
    double at(int frame, int joint, int axis) const {
        return coords[(static_cast<std::size_t>(frame) * num_joints + joint) * 3 + axis];
    }
};

struct LabeledSample {
    FrameSequence frames;
    std::optional<SkeletonSequence> skeleton;
    int label = 0;
};

struct Dataset {
    std::vector<LabeledSample> samples;
    std::vector<std::string> class_names;
};

/// Loads `frame_%05d.pgm` / `.ppm` files from a directory, sorted by index.
FrameSequence load_frame_sequence(const std::filesystem::path& dir);

/// Parses a `frame,joint,x,y,z` CSV into a skeleton sequence.
SkeletonSequence load_skeleton_csv(const std::filesystem::path& file);

/// Loads `root/<class>/<sample>/` into a dataset. Classes and samples are
/// ordered lexicographically; `skeleton.csv` is picked up when present.
Dataset load_dataset(const std::filesystem::path& root);

/// Keeps frames at indices 0, jump, 2*jump, ... and records their origins.
FrameSequence select_representatives(const FrameSequence& seq, int jump);

/// Rows of `sk` aligned to the representative frames of `reps` by nearest
/// original frame index (ties toward the lower index).
SkeletonSequence align_skeleton(const SkeletonSequence& sk, const FrameSequence& reps);

struct SyntheticSpec {
    int classes = 3;
    int samples_per_class = 10;
    int frames_per_sample = 16;
    int image_size = 64;
    double noise = 0.0;  // Gaussian pixel noise sigma
    std::uint64_t seed = 7;
};

/// A generated dataset plus its per-frame ground-truth foreground masks
/// (255 = sprite support), indexed [sample][frame].
struct SyntheticDataset {
    Dataset data;
    std::vector<std::vector<Image8>> truth_masks;
};

/// Renders sprite-motion clips: each class is a distinct motion pattern of a
/// textured sprite over a smooth static background. Joint tracks follow the
/// sprite (center + corners). Deterministic for a fixed seed.
SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec);

/// Writes a dataset in the on-disk layout `load_dataset` reads, including
/// ground-truth masks as `mask_%05d.pgm` when provided.
void write_dataset(const std::filesystem::path& root, const SyntheticDataset& ds);

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

struct DatasetSplit {
    Dataset train;
    Dataset val;
    Dataset test;
};

/// Stratified split: per-class shuffle then partition by the ratios.
/// Ratios must be positive and sum to 1.
DatasetSplit split_dataset(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed);

}  // namespace frdl

#endif
