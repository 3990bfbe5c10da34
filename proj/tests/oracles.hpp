// Test-only reference implementations. These are deliberately written as
// plain exhaustive loops, independent of the library code they check.
#ifndef FRDL_TESTS_ORACLES_HPP
#define FRDL_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "frdl/hog.hpp"
#include "frdl/image.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// brute-force HOG: per-pixel voting loop with explicit normalization

inline std::vector<double> hog_reference(const frdl::Image8& img, int cell, int block,
                                         int stride, int bins, double epsilon) {
    const int rows = img.rows, cols = img.cols;
    auto pixel = [&](int r, int c) {
        r = std::max(0, std::min(rows - 1, r));
        c = std::max(0, std::min(cols - 1, c));
        return static_cast<double>(img.at(r, c));
    };

    const int cells_y = rows / cell, cells_x = cols / cell;
    std::vector<double> hist(static_cast<std::size_t>(cells_y) * cells_x * bins, 0.0);
    const double bin_width = 180.0 / bins;

    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double gx = pixel(r, c - 1) - pixel(r, c + 1);
            const double gy = pixel(r - 1, c) - pixel(r + 1, c);
            const double mag = std::sqrt(gx * gx + gy * gy);
            if (mag == 0.0) continue;
            double ang = std::atan2(gx, gy) * 180.0 / 3.141592653589793;
            if (ang < 0.0) ang += 180.0;
            if (ang >= 180.0) ang -= 180.0;

            const double pos = ang / bin_width - 0.5;
            int b0 = static_cast<int>(std::floor(pos));
            const double w1 = pos - b0;
            const double w0 = 1.0 - w1;
            int bin0 = ((b0 % bins) + bins) % bins;
            int bin1 = (bin0 + 1) % bins;

            const int cy = r / cell, cx = c / cell;
            hist[(static_cast<std::size_t>(cy) * cells_x + cx) * bins + bin0] += mag * w0;
            hist[(static_cast<std::size_t>(cy) * cells_x + cx) * bins + bin1] += mag * w1;
        }
    }

    const int blocks_y = (cells_y - block) / stride + 1;
    const int blocks_x = (cells_x - block) / stride + 1;
    std::vector<double> desc;
    for (int by = 0; by < blocks_y; ++by) {
        for (int bx = 0; bx < blocks_x; ++bx) {
            std::vector<double> v;
            for (int dy = 0; dy < block; ++dy)
                for (int dx = 0; dx < block; ++dx) {
                    const int cy = by * stride + dy, cx = bx * stride + dx;
                    for (int b = 0; b < bins; ++b)
                        v.push_back(
                            hist[(static_cast<std::size_t>(cy) * cells_x + cx) * bins + b]);
                }
            double sq = 0.0;
            for (double x : v) sq += x * x;
            const double norm = std::sqrt(sq + epsilon);
            for (double x : v) desc.push_back(x / norm);
        }
    }
    return desc;
}

// ---------------------------------------------------------------------------
// exhaustive weighted-KNN vote

inline int knn_reference(const std::vector<std::vector<double>>& gallery,
                         const std::vector<int>& labels, const std::vector<double>& query,
                         int k) {
    const std::size_t n = gallery.size();
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::size_t d = 0; d < query.size(); ++d)
            sq += (query[d] - gallery[i][d]) * (query[d] - gallery[i][d]);
        dist[i] = std::sqrt(sq);
        if (dist[i] == 0.0) return labels[i];
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist[a] < dist[b]; });

    const std::size_t kk = std::min<std::size_t>(k, n);
    const double denom = dist[order[std::min(kk, n - 1)]];
    int num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<double> score(num_classes, 0.0);
    for (std::size_t i = 0; i < kk; ++i) {
        const double dn = dist[order[i]] / denom;
        score[labels[order[i]]] += 1.0 / (dn * dn);
    }
    int best = 0;
    for (int j = 1; j < num_classes; ++j)
        if (score[j] > score[best]) best = j;
    return best;
}

// ---------------------------------------------------------------------------
// relative error used by the gradient checks

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-6);
}

}  // namespace oracle

#endif
