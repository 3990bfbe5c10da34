#include "frdl/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace frdl {

namespace fs = std::filesystem;

namespace {

std::string shape_str(const Image8& img) {
    return std::to_string(img.rows) + "x" + std::to_string(img.cols) + "x" +
           std::to_string(img.channels);
}

// frame_<digits>.pgm or .ppm -> frame index, else nullopt
std::optional<int> frame_index_of(const std::string& name) {
    if (name.rfind("frame_", 0) != 0) return std::nullopt;
    const auto dot = name.rfind('.');
    if (dot == std::string::npos) return std::nullopt;
    const std::string ext = name.substr(dot);
    if (ext != ".pgm" && ext != ".ppm") return std::nullopt;
    const std::string digits = name.substr(6, dot - 6);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(),
                                       [](unsigned char c) { return std::isdigit(c); }))
        return std::nullopt;
    return std::stoi(digits);
}

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
}

// Position bouncing between lo and hi (triangle wave).
double reflect(double p, double lo, double hi) {
    const double span = hi - lo;
    if (span <= 0.0) return lo;
    double m = std::fmod(p - lo, 2.0 * span);
    if (m < 0.0) m += 2.0 * span;
    return lo + (m <= span ? m : 2.0 * span - m);
}

}  // namespace

FrameSequence load_frame_sequence(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    std::vector<std::pair<int, fs::path>> entries;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        if (auto idx = frame_index_of(e.path().filename().string()))
            entries.emplace_back(*idx, e.path());
    }
    if (entries.empty()) throw DataError("no frames found in " + dir.string());
    std::sort(entries.begin(), entries.end());

    FrameSequence seq;
    seq.sample_id = dir.filename().string();
    for (const auto& [idx, path] : entries) {
        Image8 img = read_pnm(path);
        if (!seq.frames.empty() && !img.same_shape(seq.frames.front()))
            throw DataError("frame dimension mismatch: " + path.string() + " is " +
                            shape_str(img) + ", expected " + shape_str(seq.frames.front()));
        seq.frames.push_back(std::move(img));
        seq.source_indices.push_back(static_cast<int>(seq.source_indices.size()));
    }
    return seq;
}

SkeletonSequence load_skeleton_csv(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open skeleton file: " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty skeleton file: " + file.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "frame,joint,x,y,z")
        throw DataError("bad skeleton header in " + file.string() + ": " + line);

    std::map<std::pair<int, int>, std::array<double, 3>> rows;
    int max_joint = -1;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        int frame = 0, joint = 0;
        double x = 0, y = 0, z = 0;
        char comma = 0;
        ss >> frame >> comma >> joint >> comma >> x >> comma >> y >> comma >> z;
        if (!ss)
            throw DataError("bad skeleton row at " + file.string() + ":" +
                            std::to_string(line_no));
        rows[{frame, joint}] = {x, y, z};
        max_joint = std::max(max_joint, joint);
    }
    if (rows.empty()) throw DataError("skeleton file has no rows: " + file.string());

    std::vector<int> frames;
    for (const auto& [key, _] : rows)
        if (frames.empty() || frames.back() != key.first) frames.push_back(key.first);

    SkeletonSequence sk;
    sk.num_frames = static_cast<int>(frames.size());
    sk.num_joints = max_joint + 1;
    sk.frame_indices = frames;
    sk.coords.resize(static_cast<std::size_t>(sk.num_frames) * sk.num_joints * 3);
    for (int f = 0; f < sk.num_frames; ++f) {
        for (int j = 0; j < sk.num_joints; ++j) {
            auto it = rows.find({frames[f], j});
            if (it == rows.end())
                throw DataError("skeleton file missing (frame " + std::to_string(frames[f]) +
                                ", joint " + std::to_string(j) + "): " + file.string());
            for (int a = 0; a < 3; ++a) sk.at(f, j, a) = it->second[a];
        }
    }
    return sk;
}

Dataset load_dataset(const fs::path& root) {
    if (!fs::is_directory(root)) throw DataError("dataset root not found: " + root.string());
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) class_dirs.push_back(e.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw DataError("dataset has no class directories: " + root.string());

    Dataset ds;
    for (std::size_t label = 0; label < class_dirs.size(); ++label) {
        ds.class_names.push_back(class_dirs[label].filename().string());
        std::vector<fs::path> sample_dirs;
        for (const auto& e : fs::directory_iterator(class_dirs[label]))
            if (e.is_directory()) sample_dirs.push_back(e.path());
        std::sort(sample_dirs.begin(), sample_dirs.end());
        for (const auto& sd : sample_dirs) {
            LabeledSample sample;
            sample.frames = load_frame_sequence(sd);
            sample.label = static_cast<int>(label);
            if (fs::exists(sd / "skeleton.csv"))
                sample.skeleton = load_skeleton_csv(sd / "skeleton.csv");
            ds.samples.push_back(std::move(sample));
        }
    }
    return ds;
}

FrameSequence select_representatives(const FrameSequence& seq, int jump) {
    if (jump < 1) throw ConfigError("frame jump must be >= 1, got " + std::to_string(jump));
    FrameSequence out;
    out.sample_id = seq.sample_id;
    out.nominal_rate = seq.nominal_rate;
    for (int i = 0; i < seq.length(); i += jump) {
        out.frames.push_back(seq.frames[i]);
        out.source_indices.push_back(seq.source_indices.empty() ? i : seq.source_indices[i]);
    }
    return out;
}

SkeletonSequence align_skeleton(const SkeletonSequence& sk, const FrameSequence& reps) {
    SkeletonSequence out;
    out.num_frames = reps.length();
    out.num_joints = sk.num_joints;
    out.coords.resize(static_cast<std::size_t>(out.num_frames) * out.num_joints * 3);
    for (int f = 0; f < reps.length(); ++f) {
        const int target = reps.source_indices.empty() ? f : reps.source_indices[f];
        // nearest frame index, ties toward the lower one
        int best = 0;
        for (int r = 1; r < sk.num_frames; ++r)
            if (std::abs(sk.frame_indices[r] - target) <
                std::abs(sk.frame_indices[best] - target))
                best = r;
        out.frame_indices.push_back(sk.frame_indices[best]);
        for (int j = 0; j < sk.num_joints; ++j)
            for (int a = 0; a < 3; ++a) out.at(f, j, a) = sk.at(best, j, a);
    }
    return out;
}

namespace {

struct MotionState {
    double x0 = 0, y0 = 0;   // start position (sprite top-left)
    double vx = 0, vy = 0;   // px/frame for bouncing patterns
    double phase = 0;        // for the orbit pattern
    double omega = 0;        // rad/frame
};

constexpr const char* kPatternNames[3] = {"slide_x", "slide_y", "orbit"};

}  // namespace

SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec) {
    if (spec.classes < 1 || spec.samples_per_class < 1 || spec.frames_per_sample < 1 ||
        spec.image_size < 16)
        throw ConfigError("synthetic spec counts must be >= 1 (image size >= 16)");

    const int size = spec.image_size;
    const int sprite = size / 4;
    const double lo = 2.0, hi = static_cast<double>(size - sprite - 2);

    SyntheticDataset out;
    for (int c = 0; c < spec.classes; ++c) {
        std::string name = kPatternNames[c % 3];
        if (c >= 3) name += "_v" + std::to_string(c / 3 + 1);
        out.data.class_names.push_back(name);
    }

    for (int c = 0; c < spec.classes; ++c) {
        const int pattern = c % 3;
        const double speed_mult = 1.0 + 0.35 * (c / 3);
        for (int s = 0; s < spec.samples_per_class; ++s) {
            char suffix[16];
            std::snprintf(suffix, sizeof(suffix), "_s%03d", s);
            const std::string id = out.data.class_names[c] + suffix;
            Rng rng(spec.seed * 0x9E3779B97F4A7C15ull ^ fnv1a(id));

            // per-sample smooth background field, values within [60, 100]
            const double bx = uniform(rng, 0, size), by = uniform(rng, 0, size);
            const double bp = uniform(rng, 0, 6.283185307179586);
            auto background = [&](int x, int y) {
                const double tau = 6.283185307179586;
                return 80.0 + 12.0 * std::sin(tau * (x + bx) / size) * std::cos(tau * (y + by) / size) +
                       8.0 * std::cos(tau * (x - y) / (1.5 * size) + bp);
            };
            // per-sample sprite texture, values within [195, 225]
            const double sx = uniform(rng, 0, sprite), sy = uniform(rng, 0, sprite);
            auto sprite_tex = [&](int u, int v) {
                const double tau = 6.283185307179586;
                return 210.0 + 15.0 * std::sin(tau * (u + sx) / sprite) *
                                   std::cos(tau * (v + sy) / sprite);
            };

            MotionState m;
            const double base_speed = size / 16.0 * speed_mult;  // 4 px/frame at size 64
            switch (pattern) {
                case 0:
                    m.x0 = uniform(rng, lo, lo + size / 4.0);
                    m.y0 = size / 2.0 - sprite / 2.0 + uniform(rng, -size / 16.0, size / 16.0);
                    m.vx = (uniform01(rng) < 0.5 ? 1 : -1) * base_speed;
                    break;
                case 1:
                    m.y0 = uniform(rng, lo, lo + size / 4.0);
                    m.x0 = size / 2.0 - sprite / 2.0 + uniform(rng, -size / 16.0, size / 16.0);
                    m.vy = (uniform01(rng) < 0.5 ? 1 : -1) * base_speed;
                    break;
                default:
                    m.phase = uniform(rng, 0, 6.283185307179586);
                    m.omega = 6.283185307179586 / spec.frames_per_sample * speed_mult;
                    break;
            }

            LabeledSample sample;
            sample.label = c;
            sample.frames.sample_id = id;
            sample.frames.nominal_rate = 16.0;
            std::vector<Image8> masks;

            SkeletonSequence sk;
            sk.num_frames = spec.frames_per_sample;
            sk.num_joints = 5;
            sk.coords.resize(static_cast<std::size_t>(sk.num_frames) * sk.num_joints * 3);

            for (int t = 0; t < spec.frames_per_sample; ++t) {
                double px, py;
                if (pattern == 2) {
                    const double r = size / 4.0;
                    const double th = m.phase + m.omega * t;
                    px = size / 2.0 + r * std::cos(th) - sprite / 2.0;
                    py = size / 2.0 + r * std::sin(th) - sprite / 2.0;
                } else {
                    px = reflect(m.x0 + m.vx * t, lo, hi);
                    py = reflect(m.y0 + m.vy * t, lo, hi);
                }
                const int ix = std::clamp(static_cast<int>(std::lround(px)), 0, size - sprite);
                const int iy = std::clamp(static_cast<int>(std::lround(py)), 0, size - sprite);

                Image8 frame(size, size, 1);
                Image8 mask(size, size, 1);
                for (int y = 0; y < size; ++y) {
                    for (int x = 0; x < size; ++x) {
                        double v;
                        if (x >= ix && x < ix + sprite && y >= iy && y < iy + sprite) {
                            v = sprite_tex(x - ix, y - iy);
                            mask.at(y, x) = 255;
                        } else {
                            v = background(x, y);
                        }
                        if (spec.noise > 0.0) v += gaussian(rng) * spec.noise;
                        frame.at(y, x) = static_cast<std::uint8_t>(
                            std::clamp(std::lround(v), 0l, 255l));
                    }
                }
                sample.frames.frames.push_back(std::move(frame));
                sample.frames.source_indices.push_back(t);
                masks.push_back(std::move(mask));

                // joints: sprite center plus the four corners, z identifies the joint
                const double cxp = ix + sprite / 2.0, cyp = iy + sprite / 2.0;
                const double half = sprite / 2.0 - 1.0;
                const double jx[5] = {cxp, cxp - half, cxp + half, cxp - half, cxp + half};
                const double jy[5] = {cyp, cyp - half, cyp - half, cyp + half, cyp + half};
                sk.frame_indices.push_back(t);
                for (int j = 0; j < 5; ++j) {
                    sk.at(t, j, 0) = jx[j];
                    sk.at(t, j, 1) = jy[j];
                    sk.at(t, j, 2) = 2.0 * j;
                }
            }
            sample.skeleton = std::move(sk);
            out.data.samples.push_back(std::move(sample));
            out.truth_masks.push_back(std::move(masks));
        }
    }
    return out;
}

void write_dataset(const fs::path& root, const SyntheticDataset& ds) {
    fs::create_directories(root);
    for (std::size_t i = 0; i < ds.data.samples.size(); ++i) {
        const LabeledSample& s = ds.data.samples[i];
        const fs::path dir = root / ds.data.class_names[s.label] / s.frames.sample_id;
        fs::create_directories(dir);
        char name[32];
        for (int f = 0; f < s.frames.length(); ++f) {
            std::snprintf(name, sizeof(name), "frame_%05d.pgm", f);
            write_pnm(dir / name, s.frames.frames[f]);
            if (i < ds.truth_masks.size() && f < static_cast<int>(ds.truth_masks[i].size())) {
                std::snprintf(name, sizeof(name), "mask_%05d.pgm", f);
                write_pnm(dir / name, ds.truth_masks[i][f]);
            }
        }
        if (s.skeleton) {
            std::ofstream csv(dir / "skeleton.csv");
            csv << "frame,joint,x,y,z\n";
            const SkeletonSequence& sk = *s.skeleton;
            csv.precision(10);
            for (int f = 0; f < sk.num_frames; ++f)
                for (int j = 0; j < sk.num_joints; ++j)
                    csv << sk.frame_indices[f] << "," << j << "," << sk.at(f, j, 0) << ","
                        << sk.at(f, j, 1) << "," << sk.at(f, j, 2) << "\n";
        }
    }
}

DatasetSplit split_dataset(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed) {
    const double parts[3] = {ratios.train, ratios.val, ratios.test};
    double sum = 0;
    for (double p : parts) {
        if (p <= 0.0) throw ConfigError("split ratios must all be positive");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

    const int num_classes = static_cast<int>(ds.class_names.size());
    std::vector<std::vector<int>> by_class(num_classes);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const int label = ds.samples[i].label;
        if (label < 0 || label >= num_classes)
            throw DataError("sample label out of range: " + std::to_string(label));
        by_class[label].push_back(static_cast<int>(i));
    }

    DatasetSplit out;
    out.train.class_names = out.val.class_names = out.test.class_names = ds.class_names;
    for (int c = 0; c < num_classes; ++c) {
        auto& idx = by_class[c];
        const int n = static_cast<int>(idx.size());
        if (n < 3)
            throw DataError("class '" + ds.class_names[c] + "' has " + std::to_string(n) +
                            " samples, fewer than the 3 split parts");
        Rng rng(seed * 0x9E3779B97F4A7C15ull ^ (0x5EEDull + c));
        shuffle_indices(idx, rng);

        // largest-remainder apportionment with at least one sample per part
        int counts[3];
        double frac[3];
        int assigned = 0;
        for (int p = 0; p < 3; ++p) {
            const double exact = parts[p] * n;
            counts[p] = static_cast<int>(exact);
            frac[p] = exact - counts[p];
            assigned += counts[p];
        }
        while (assigned < n) {
            int best = 0;
            for (int p = 1; p < 3; ++p)
                if (frac[p] > frac[best]) best = p;
            ++counts[best];
            frac[best] = -1.0;
            ++assigned;
        }
        for (int p = 0; p < 3; ++p) {
            if (counts[p] >= 1) continue;
            int donor = 0;
            for (int q = 1; q < 3; ++q)
                if (counts[q] > counts[donor]) donor = q;
            --counts[donor];
            ++counts[p];
        }

        int pos = 0;
        Dataset* dests[3] = {&out.train, &out.val, &out.test};
        for (int p = 0; p < 3; ++p)
            for (int k = 0; k < counts[p]; ++k) dests[p]->samples.push_back(ds.samples[idx[pos++]]);
    }
    return out;
}

}  // namespace frdl
