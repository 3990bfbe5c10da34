#include "frdl/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace frdl {

SoftmaxOutcome softmax_decide(const std::vector<double>& probs, const KnnParams& params) {
    if (probs.size() < 2) throw ConfigError("softmax_decide needs at least two classes");
    double sum = 0.0;
    for (double p : probs) sum += p;
    if (std::abs(sum - 1.0) > 1e-6)
        throw DataError("softmax_decide input does not sum to 1 (got " + std::to_string(sum) +
                        ")");
    int top1 = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[top1]) top1 = static_cast<int>(i);
    double second = -1.0;
    for (std::size_t i = 0; i < probs.size(); ++i)
        if (static_cast<int>(i) != top1 && probs[i] > second) second = probs[i];

    SoftmaxOutcome out;
    out.ambiguous = (probs[top1] - second) < params.margin_tau;
    out.label = top1;
    return out;
}

Decision knn_predict(const Gallery& gallery, const std::vector<double>& query,
                     const KnnParams& params) {
    if (gallery.size() == 0) throw DataError("knn_predict called with an empty gallery");
    if (query.size() != gallery.dim)
        throw DataError("query dimension " + std::to_string(query.size()) +
                        " does not match gallery dimension " + std::to_string(gallery.dim));
    if (params.k < 1) throw ConfigError("knn k must be >= 1");

    const std::size_t n = gallery.size();
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        const auto& e = gallery.embeddings[i];
        for (std::size_t d = 0; d < query.size(); ++d) {
            const double diff = query[d] - e[d];
            sq += diff * diff;
        }
        dist[i] = std::sqrt(sq);
        if (dist[i] == 0.0) {
            // exact match: the squared-inverse weight would diverge
            Decision out;
            out.label = gallery.labels[i];
            out.route = Route::knn;
            out.neighbor_ids = {static_cast<int>(i)};
            return out;
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return dist[a] != dist[b] ? dist[a] < dist[b] : a < b;
    });

    const std::size_t k = std::min<std::size_t>(params.k, n);
    // the (k+1)-th neighbor normalizes the voters; when the gallery has no
    // such neighbor, the farthest voter takes that role
    const double denom = dist[order[std::min(k, n - 1)]];

    int num_classes = 0;
    for (int label : gallery.labels) num_classes = std::max(num_classes, label + 1);
    std::vector<double> score(num_classes, 0.0);
    Decision out;
    out.route = Route::knn;
    for (std::size_t i = 0; i < k; ++i) {
        const int idx = order[i];
        const double normalized = dist[idx] / denom;
        score[gallery.labels[idx]] += 1.0 / (normalized * normalized);
        out.neighbor_ids.push_back(idx);
    }
    int best = 0;
    for (int j = 1; j < num_classes; ++j)
        if (score[j] > score[best]) best = j;
    out.label = best;
    return out;
}

Decision decide(const std::vector<double>& probs, const std::vector<double>& embedding,
                const Gallery& gallery, const KnnParams& params) {
    const SoftmaxOutcome sm = softmax_decide(probs, params);
    if (!sm.ambiguous) {
        Decision out;
        out.label = sm.label;
        out.probabilities = probs;
        out.route = Route::softmax;
        return out;
    }
    Decision out = knn_predict(gallery, embedding, params);
    out.probabilities = probs;
    return out;
}

Gallery build_gallery(const NetworkConfig& config, const NetworkParams& params,
                      const std::vector<FusedSample>& train_features) {
    if (train_features.empty()) throw DataError("build_gallery needs a nonempty train set");
    validate_params(config, params);
    Gallery g;
    for (const FusedSample& sample : train_features) {
        ForwardResult r = forward(config, params, sample);
        g.dim = r.penultimate.size();
        g.embeddings.push_back(std::move(r.penultimate));
        g.labels.push_back(sample.label);
    }
    return g;
}

void gallery_to_params(const Gallery& gallery, NetworkParams& params) {
    Tensor emb({gallery.size(), gallery.dim});
    for (std::size_t i = 0; i < gallery.size(); ++i)
        for (std::size_t d = 0; d < gallery.dim; ++d)
            emb.at(i, d) = snap_f32(gallery.embeddings[i][d]);
    Tensor labels({gallery.size()});
    for (std::size_t i = 0; i < gallery.size(); ++i)
        labels[i] = static_cast<double>(gallery.labels[i]);
    params.insert_or_assign("gallery.embeddings", std::move(emb));
    params.insert_or_assign("gallery.labels", std::move(labels));
}

Gallery gallery_from_params(const NetworkParams& params) {
    auto emb_it = params.find("gallery.embeddings");
    auto lab_it = params.find("gallery.labels");
    if (emb_it == params.end() || lab_it == params.end())
        throw DataError("checkpoint has no gallery tensors");
    const Tensor& emb = emb_it->second;
    const Tensor& lab = lab_it->second;
    if (emb.rank() != 2 || lab.rank() != 1 || emb.shape()[0] != lab.shape()[0])
        throw DataError("gallery tensors have inconsistent shapes");
    Gallery g;
    g.dim = emb.shape()[1];
    for (std::size_t i = 0; i < emb.shape()[0]; ++i) {
        g.embeddings.emplace_back(emb.data() + i * g.dim, emb.data() + (i + 1) * g.dim);
        g.labels.push_back(static_cast<int>(lab[i]));
    }
    return g;
}

}  // namespace frdl
