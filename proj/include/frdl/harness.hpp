#ifndef FRDL_HARNESS_HPP
#define FRDL_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "frdl/bgs.hpp"
#include "frdl/classify.hpp"
#include "frdl/hog.hpp"
#include "frdl/ingest.hpp"
#include "frdl/net.hpp"
#include "frdl/skeleton.hpp"

namespace frdl {

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 30;
    int batch_size = 8;
    std::uint64_t seed = 7;
    int jump = 6;
    HogParams hog;
    KnnParams knn;
    BgsParams bgs;
    SplitRatios split;
    int roi_size = 64;        // ROI crops are resized to this square
    int skeleton_frames = 32; // skeleton image columns before the final resize
    int hidden_dim = 64;
    int lstm_layers = 2;
    bool bidirectional = true;
    int embed_dim = 64;
    int threads = 1;          // preprocessing workers
};

/// HOG descriptor length at the configured ROI size.
int hog_length(const TrainConfig& cfg);

/// Desk-scale network for this config (two conv layers, fused HOG block,
/// bidirectional recurrent stage). `with_skeleton` switches the skeleton
/// block of the fusion spec.
NetworkConfig network_config_for(const TrainConfig& cfg, int num_classes, bool with_skeleton);

/// True when every sample carries joint data.
bool dataset_has_skeletons(const Dataset& ds);

/// Representative-frame selection, background subtraction with conservative
/// model updates, ROI crop + HOG per kept frame, and the encoded skeleton
/// image when requested. Deterministic per (config seed, sample id).
FusedSample preprocess_sample(const LabeledSample& sample, const TrainConfig& cfg,
                              bool with_skeleton);

/// Per-sample parallel map over the dataset (cfg.threads workers); output
/// order and content are independent of the worker count.
std::vector<FusedSample> preprocess_dataset(const Dataset& ds, const TrainConfig& cfg,
                                            bool with_skeleton);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    NetworkConfig network;
    NetworkParams params;   // parameters of the best validation epoch
    Gallery gallery;        // built from those parameters
    std::vector<EpochStats> history;
    bool used_skeleton = false;
};

/// Mini-batch SGD on cross-entropy; model selection by best validation
/// accuracy. Aborts with DivergenceError on a non-finite loss.
TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& val_set);

class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t num_classes)
        : counts_(num_classes, std::vector<std::uint64_t>(num_classes, 0)) {}

    void add(int truth, int predicted);
    std::size_t classes() const { return counts_.size(); }
    std::uint64_t at(int truth, int predicted) const { return counts_[truth][predicted]; }
    std::uint64_t total() const;
    std::uint64_t diagonal() const;
    double accuracy() const;
    std::vector<double> per_class_accuracy() const;  // diagonal over row sums
    std::string to_csv(const std::vector<std::string>& class_names) const;

private:
    std::vector<std::vector<std::uint64_t>> counts_;
};

struct Metrics {
    double accuracy = 0.0;
    std::vector<double> per_class;
    std::size_t total = 0;
    std::size_t knn_routed = 0;  // how many decisions fell back to W-KNN
};

/// Routes every sample through softmax_decide / knn_predict and tallies the
/// confusion matrix.
std::pair<Metrics, ConfusionMatrix> evaluate_features(
    const NetworkConfig& net, const NetworkParams& params, const Gallery& gallery,
    const KnnParams& knn, const std::vector<FusedSample>& features, std::size_t num_classes);

std::pair<Metrics, ConfusionMatrix> evaluate(const TrainConfig& cfg, const TrainResult& model,
                                             const Dataset& test_set);

struct BenchmarkRow {
    int jump = 0;
    double seconds_per_clip_second = 0.0;  // preprocessing + forward
    double accuracy = 0.0;
};

/// Full train+evaluate cycle per jump value (fixed seed), measuring mean
/// preprocessing+inference wall time per second of input, single-threaded.
std::vector<BenchmarkRow> benchmark_jump(TrainConfig cfg, const Dataset& ds,
                                         const std::vector<int>& jumps);

/// Table in the published layout, with the paper's values echoed as
/// reference rows (annotated, never asserted).
std::string benchmark_csv(const std::vector<BenchmarkRow>& rows);

// ---------------------------------------------------------------------------
// flat key = value config files

/// Applies a single key; throws ConfigError for unknown keys or bad values.
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Reads a flat `key = value` file ('#' starts a comment).
TrainConfig load_train_config(const std::filesystem::path& path);

std::string train_config_to_string(const TrainConfig& cfg);

/// Sidecar next to a checkpoint: the training config plus the class names
/// and whether the skeleton block was used, so later runs preprocess
/// identically.
struct CheckpointMeta {
    TrainConfig config;
    std::vector<std::string> class_names;
    bool used_skeleton = false;
};

void save_checkpoint_meta(const std::filesystem::path& path, const CheckpointMeta& meta);
CheckpointMeta load_checkpoint_meta(const std::filesystem::path& path);

}  // namespace frdl

#endif
