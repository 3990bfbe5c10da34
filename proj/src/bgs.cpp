#include "frdl/bgs.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>

namespace frdl {

std::size_t ForegroundMask::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

void require_gray(const Image8& frame, const char* op) {
    if (frame.channels != 1)
        throw DataError(std::string(op) + " requires a grayscale frame; convert upstream");
}

void require_dims(const BackgroundModel& model, const Image8& frame) {
    if (frame.rows != model.rows || frame.cols != model.cols || frame.channels != 1)
        throw DataError("frame dimensions do not match the background model");
}

}  // namespace

BackgroundModel init_background_model(const Image8& frame, const BgsParams& params,
                                      std::uint64_t seed) {
    require_gray(frame, "init_background_model");
    if (params.samples_per_pixel < 1) throw ConfigError("samples_per_pixel must be >= 1");
    if (params.neighborhood_radius < 0) throw ConfigError("neighborhood_radius must be >= 0");
    if (params.match_radius < 0) throw ConfigError("match_radius must be >= 0");
    if (params.min_matches < 1 || params.min_matches > params.samples_per_pixel)
        throw ConfigError("min_matches must be in [1, samples_per_pixel]");
    if (params.update_subsampling < 1) throw ConfigError("update_subsampling must be >= 1");

    BackgroundModel model;
    model.rows = frame.rows;
    model.cols = frame.cols;
    model.params = params;
    model.samples.resize(static_cast<std::size_t>(frame.rows) * frame.cols *
                         params.samples_per_pixel);
    model.rng.seed(seed);

    const int rad = params.neighborhood_radius;
    for (int r = 0; r < frame.rows; ++r) {
        for (int c = 0; c < frame.cols; ++c) {
            const int r0 = std::max(0, r - rad), r1 = std::min(frame.rows - 1, r + rad);
            const int c0 = std::max(0, c - rad), c1 = std::min(frame.cols - 1, c + rad);
            const int w = c1 - c0 + 1, h = r1 - r0 + 1;
            for (int j = 0; j < params.samples_per_pixel; ++j) {
                const auto pick = uniform_index(model.rng, static_cast<std::uint64_t>(w) * h);
                const int pr = r0 + static_cast<int>(pick) / w;
                const int pc = c0 + static_cast<int>(pick) % w;
                model.sample(r, c, j) = frame.at(pr, pc);
            }
        }
    }
    return model;
}

ForegroundMask classify_foreground(const BackgroundModel& model, const Image8& frame) {
    require_dims(model, frame);
    ForegroundMask mask(frame.rows, frame.cols);
    const int l = model.params.samples_per_pixel;
    for (int r = 0; r < frame.rows; ++r) {
        for (int c = 0; c < frame.cols; ++c) {
            const int v = frame.at(r, c);
            int matches = 0;
            for (int j = 0; j < l && matches < model.params.min_matches; ++j)
                if (std::abs(v - model.sample(r, c, j)) <= model.params.match_radius) ++matches;
            mask.at(r, c) = matches >= model.params.min_matches ? 0 : 1;
        }
    }
    return mask;
}

void update_background_model(BackgroundModel& model, const Image8& frame,
                             const ForegroundMask& mask) {
    require_dims(model, frame);
    if (mask.rows != model.rows || mask.cols != model.cols)
        throw DataError("mask dimensions do not match the background model");

    const int l = model.params.samples_per_pixel;
    const int sub = model.params.update_subsampling;
    const int rad = model.params.neighborhood_radius;
    for (int r = 0; r < model.rows; ++r) {
        for (int c = 0; c < model.cols; ++c) {
            if (mask.at(r, c)) continue;  // foreground never updates
            const std::uint8_t v = frame.at(r, c);
            if (uniform_index(model.rng, sub) == 0)
                model.sample(r, c, static_cast<int>(uniform_index(model.rng, l))) = v;
            if (rad > 0 && uniform_index(model.rng, sub) == 0) {
                const int r0 = std::max(0, r - rad), r1 = std::min(model.rows - 1, r + rad);
                const int c0 = std::max(0, c - rad), c1 = std::min(model.cols - 1, c + rad);
                const int w = c1 - c0 + 1, h = r1 - r0 + 1;
                // draw a neighbor other than the pixel itself
                int pr = r, pc = c;
                while (pr == r && pc == c) {
                    const auto pick = uniform_index(model.rng, static_cast<std::uint64_t>(w) * h);
                    pr = r0 + static_cast<int>(pick) / w;
                    pc = c0 + static_cast<int>(pick) % w;
                    if (w * h == 1) break;
                }
                if (pr != r || pc != c)
                    model.sample(pr, pc, static_cast<int>(uniform_index(model.rng, l))) = v;
            }
        }
    }
}

namespace {

ForegroundMask erode3(const ForegroundMask& m) {
    ForegroundMask out(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            bool keep = true;
            for (int dr = -1; dr <= 1 && keep; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    // out-of-bounds counts as background
                    if (rr < 0 || rr >= m.rows || cc < 0 || cc >= m.cols || !m.at(rr, cc)) {
                        keep = false;
                        break;
                    }
                }
            }
            out.at(r, c) = keep ? 1 : 0;
        }
    }
    return out;
}

ForegroundMask dilate3(const ForegroundMask& m) {
    ForegroundMask out(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r) {
        for (int c = 0; c < m.cols; ++c) {
            bool hit = false;
            for (int dr = -1; dr <= 1 && !hit; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr >= 0 && rr < m.rows && cc >= 0 && cc < m.cols && m.at(rr, cc)) {
                        hit = true;
                        break;
                    }
                }
            }
            out.at(r, c) = hit ? 1 : 0;
        }
    }
    return out;
}

}  // namespace

ForegroundMask morph_open(const ForegroundMask& mask) {
    return dilate3(erode3(mask));
}

BoundingBox extract_roi(const ForegroundMask& mask) {
    BoundingBox full{0, 0, mask.cols, mask.rows};
    if (mask.count() == 0) return full;

    // label 8-connected components, track size + tight box per component
    std::vector<int> label(mask.bits.size(), -1);
    struct Comp {
        std::size_t size = 0;
        int r0 = 0, c0 = 0, r1 = 0, c1 = 0;
    };
    std::vector<Comp> comps;
    std::vector<std::pair<int, int>> stack;
    for (int r = 0; r < mask.rows; ++r) {
        for (int c = 0; c < mask.cols; ++c) {
            const std::size_t idx = static_cast<std::size_t>(r) * mask.cols + c;
            if (!mask.bits[idx] || label[idx] >= 0) continue;
            const int id = static_cast<int>(comps.size());
            comps.push_back({0, r, c, r, c});
            stack.push_back({r, c});
            label[idx] = id;
            while (!stack.empty()) {
                auto [cr, cc] = stack.back();
                stack.pop_back();
                Comp& comp = comps[id];
                ++comp.size;
                comp.r0 = std::min(comp.r0, cr);
                comp.c0 = std::min(comp.c0, cc);
                comp.r1 = std::max(comp.r1, cr);
                comp.c1 = std::max(comp.c1, cc);
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int nr = cr + dr, nc = cc + dc;
                        if (nr < 0 || nr >= mask.rows || nc < 0 || nc >= mask.cols) continue;
                        const std::size_t nidx = static_cast<std::size_t>(nr) * mask.cols + nc;
                        if (mask.bits[nidx] && label[nidx] < 0) {
                            label[nidx] = id;
                            stack.push_back({nr, nc});
                        }
                    }
                }
            }
        }
    }

    // largest component; ties broken by smallest top-left (row, then column)
    int best = 0;
    for (int i = 1; i < static_cast<int>(comps.size()); ++i) {
        const Comp& a = comps[i];
        const Comp& b = comps[best];
        if (a.size > b.size ||
            (a.size == b.size && std::pair(a.r0, a.c0) < std::pair(b.r0, b.c0)))
            best = i;
    }
    const Comp& comp = comps[best];

    const int h = comp.r1 - comp.r0 + 1;
    const int w = comp.c1 - comp.c0 + 1;
    const int side = std::max(h, w);
    int y = comp.r0 - (side - h) / 2;
    int x = comp.c0 - (side - w) / 2;
    // shift into the frame where possible, then clip
    int bh = std::min(side, mask.rows);
    int bw = std::min(side, mask.cols);
    y = std::clamp(y, 0, mask.rows - bh);
    x = std::clamp(x, 0, mask.cols - bw);
    return BoundingBox{x, y, bw, bh};
}

double mask_iou(const ForegroundMask& a, const ForegroundMask& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw DataError("mask_iou: dimension mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        const bool av = a.bits[i], bv = b.bits[i];
        inter += av && bv;
        uni += av || bv;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Image8 mask_to_image(const ForegroundMask& mask) {
    Image8 img(mask.rows, mask.cols, 1);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) img.data[i] = mask.bits[i] ? 255 : 0;
    return img;
}

ForegroundMask image_to_mask(const Image8& img) {
    if (img.channels != 1) throw DataError("image_to_mask requires a grayscale image");
    ForegroundMask mask(img.rows, img.cols);
    for (std::size_t i = 0; i < img.data.size(); ++i) mask.bits[i] = img.data[i] ? 1 : 0;
    return mask;
}

}  // namespace frdl
