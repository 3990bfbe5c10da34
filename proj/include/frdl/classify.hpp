#ifndef FRDL_CLASSIFY_HPP
#define FRDL_CLASSIFY_HPP

#include <string>
#include <vector>

#include "frdl/ingest.hpp"
#include "frdl/net.hpp"

namespace frdl {

/// Labeled store of training embeddings (the network's penultimate fused
/// representation). Immutable once built.
struct Gallery {
    std::vector<std::vector<double>> embeddings;
    std::vector<int> labels;
    std::size_t dim = 0;

    std::size_t size() const { return embeddings.size(); }
};

struct KnnParams {
    int k = 10;                // neighbors to vote
    double margin_tau = 0.15;  // softmax top-2 margin below which we fall back
};

enum class Route { softmax, knn };

struct Decision {
    int label = 0;
    std::vector<double> probabilities;
    Route route = Route::softmax;
    std::vector<int> neighbor_ids;  // gallery indices, present when route == knn
};

struct SoftmaxOutcome {
    bool ambiguous = false;
    int label = 0;  // argmax, valid when not ambiguous
};

/// Accepts the argmax when the top-two probability margin is at least tau;
/// otherwise reports ambiguity. Ties go to the lowest class index. The input
/// must sum to 1 within 1e-6.
SoftmaxOutcome softmax_decide(const std::vector<double>& probs, const KnnParams& params);

/// Weighted K-nearest-neighbor vote: Euclidean distances, each of the k
/// nearest normalized by the (k+1)-th distance, weights 1/d_norm^2, class
/// scores summed per label. An exact-distance-0 neighbor wins immediately.
Decision knn_predict(const Gallery& gallery, const std::vector<double>& query,
                     const KnnParams& params);

/// Softmax margin routing with W-KNN fallback; always yields one label.
Decision decide(const std::vector<double>& probs, const std::vector<double>& embedding,
                const Gallery& gallery, const KnnParams& params);

/// One embedding per training sample from the trained network.
Gallery build_gallery(const NetworkConfig& config, const NetworkParams& params,
                      const std::vector<FusedSample>& train_features);

/// Gallery <-> checkpoint tensors ("gallery.embeddings", "gallery.labels").
void gallery_to_params(const Gallery& gallery, NetworkParams& params);
Gallery gallery_from_params(const NetworkParams& params);

}  // namespace frdl

#endif
