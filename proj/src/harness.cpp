#include "frdl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace frdl {

int hog_length(const TrainConfig& cfg) {
    return hog_layout(cfg.roi_size, cfg.roi_size, cfg.hog).length();
}

NetworkConfig network_config_for(const TrainConfig& cfg, int num_classes, bool with_skeleton) {
    NetworkConfig net;
    net.input = {cfg.roi_size, cfg.roi_size, 1};
    net.skeleton_input = {32, 32, 3};
    net.hog_dim = hog_length(cfg);
    net.fusion.cnn_embedding = true;
    net.fusion.hog = true;
    net.fusion.skeleton_embedding = with_skeleton;
    net.layers = {ConvSpec{5, 5, 2, 16}, ReluSpec{}, PoolSpec{2, 2},
                  ConvSpec{3, 3, 2, 32}, ReluSpec{}, PoolSpec{2, 2},
                  FcSpec{cfg.embed_dim}, ReluSpec{},
                  LstmSpec{cfg.hidden_dim, cfg.lstm_layers, cfg.bidirectional},
                  SoftmaxHeadSpec{num_classes}};
    validate_config(net);
    return net;
}

bool dataset_has_skeletons(const Dataset& ds) {
    return !ds.samples.empty() &&
           std::all_of(ds.samples.begin(), ds.samples.end(),
                       [](const LabeledSample& s) { return s.skeleton.has_value(); });
}

namespace {

Tensor image_to_unit_tensor(const Image8& img) {
    Tensor t({static_cast<std::size_t>(img.channels), static_cast<std::size_t>(img.rows),
              static_cast<std::size_t>(img.cols)});
    for (int ch = 0; ch < img.channels; ++ch)
        for (int r = 0; r < img.rows; ++r)
            for (int c = 0; c < img.cols; ++c)
                t.at(ch, r, c) = img.at(r, c, ch) / 255.0;
    return t;
}

}  // namespace

FusedSample preprocess_sample(const LabeledSample& sample, const TrainConfig& cfg,
                              bool with_skeleton) {
    try {
        if (sample.frames.frames.empty())
            throw DataError("frame sequence is empty");

        FusedSample out;
        out.label = sample.label;
        out.sample_id = sample.frames.sample_id;

        const FrameSequence reps = select_representatives(sample.frames, cfg.jump);
        std::vector<Image8> gray;
        gray.reserve(reps.frames.size());
        for (const Image8& f : reps.frames) gray.push_back(to_gray(f));

        BackgroundModel model = init_background_model(
            gray.front(), cfg.bgs, cfg.seed ^ fnv1a(out.sample_id));

        for (const Image8& g : gray) {
            const ForegroundMask raw = classify_foreground(model, g);
            update_background_model(model, g, raw);
            const ForegroundMask mask = morph_open(raw);
            const BoundingBox box = extract_roi(mask);

            Image8 silhouette(g.rows, g.cols, 1);
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < g.cols; ++c)
                    silhouette.at(r, c) = mask.at(r, c) ? g.at(r, c) : 0;

            const Image8 resized =
                resize_bilinear(crop(silhouette, box), cfg.roi_size, cfg.roi_size);
            FrameFeatures feat;
            feat.hog = hog_descriptor(resized, cfg.hog).values;
            feat.crop = image_to_unit_tensor(resized);
            out.steps.push_back(std::move(feat));
        }

        if (with_skeleton) {
            if (!sample.skeleton)
                throw DataError("skeleton data requested but the sample has none");
            const SkeletonSequence aligned = align_skeleton(*sample.skeleton, reps);
            const NormalizedSkeleton ns = normalize_skeleton(aligned);
            const SkeletonImage img = encode_skeleton_image(ns, cfg.skeleton_frames);
            const Image8 resized = resize_nearest(img.pixels, 32, 32);
            out.skeleton_image = image_to_unit_tensor(resized);
        }
        return out;
    } catch (const DataError& e) {
        throw DataError("sample '" + sample.frames.sample_id + "': " + e.what());
    }
}

std::vector<FusedSample> preprocess_dataset(const Dataset& ds, const TrainConfig& cfg,
                                            bool with_skeleton) {
    std::vector<FusedSample> out(ds.samples.size());
    const int threads = std::max(1, cfg.threads);
    if (threads == 1 || ds.samples.size() < 2) {
        for (std::size_t i = 0; i < ds.samples.size(); ++i)
            out[i] = preprocess_sample(ds.samples[i], cfg, with_skeleton);
        return out;
    }

    std::vector<std::exception_ptr> errors(ds.samples.size());
    std::vector<std::thread> pool;
    const int workers = std::min<int>(threads, static_cast<int>(ds.samples.size()));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < ds.samples.size(); i += workers) {
                try {
                    out[i] = preprocess_sample(ds.samples[i], cfg, with_skeleton);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& val_set) {
    if (cfg.learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (train_set.samples.empty()) throw DataError("train set is empty");
    if (val_set.samples.empty()) throw DataError("validation set is empty");

    const bool with_skeleton =
        dataset_has_skeletons(train_set) && dataset_has_skeletons(val_set);
    const int num_classes = static_cast<int>(train_set.class_names.size());
    if (num_classes < 2) throw DataError("training needs at least 2 classes");

    TrainResult result;
    result.used_skeleton = with_skeleton;
    result.network = network_config_for(cfg, num_classes, with_skeleton);

    const std::vector<FusedSample> train_feat =
        preprocess_dataset(train_set, cfg, with_skeleton);
    const std::vector<FusedSample> val_feat = preprocess_dataset(val_set, cfg, with_skeleton);

    NetworkParams params = init_params(result.network, cfg.seed);
    NetworkParams best_params = params;
    double best_val = -1.0;

    std::vector<int> order(train_feat.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(cfg.seed * 0x9E3779B97F4A7C15ull ^ 0x5148ull);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);

        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size();
             start += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            NetworkParams batch_grads;
            double batch_loss = 0.0;
            for (std::size_t n = start; n < end; ++n) {
                const FusedSample& sample = train_feat[order[n]];
                ForwardResult fwd = forward(result.network, params, sample);
                batch_loss += cross_entropy(fwd.trace.logits, sample.label);
                std::vector<double> dlogits = fwd.probabilities;
                dlogits[sample.label] -= 1.0;
                NetworkParams grads = backward(result.network, params, fwd.trace, dlogits);
                if (batch_grads.empty())
                    batch_grads = std::move(grads);
                else
                    accumulate(batch_grads, grads);
            }
            if (!std::isfinite(batch_loss))
                throw DivergenceError(epoch, batch_index,
                                      "non-finite loss at epoch " + std::to_string(epoch) +
                                          ", batch " + std::to_string(batch_index));
            const double inv = 1.0 / static_cast<double>(end - start);
            scale(batch_grads, inv);
            sgd_step(params, batch_grads, cfg.learning_rate);
            epoch_loss += batch_loss;
        }
        epoch_loss /= static_cast<double>(train_feat.size());

        std::size_t correct = 0;
        for (const FusedSample& sample : val_feat) {
            const ForwardResult fwd = forward(result.network, params, sample);
            int arg = 0;
            for (std::size_t j = 1; j < fwd.probabilities.size(); ++j)
                if (fwd.probabilities[j] > fwd.probabilities[arg]) arg = static_cast<int>(j);
            correct += arg == sample.label;
        }
        const double val_acc = static_cast<double>(correct) / val_feat.size();
        result.history.push_back({epoch, epoch_loss, val_acc});
        if (val_acc > best_val) {
            best_val = val_acc;
            best_params = params;
        }
    }

    result.params = std::move(best_params);
    result.gallery = build_gallery(result.network, result.params, train_feat);
    return result;
}

// ---------------------------------------------------------------------------
// evaluation

void ConfusionMatrix::add(int truth, int predicted) {
    if (truth < 0 || predicted < 0 || truth >= static_cast<int>(counts_.size()) ||
        predicted >= static_cast<int>(counts_.size()))
        throw DataError("confusion matrix index out of range");
    ++counts_[truth][predicted];
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t n = 0;
    for (const auto& row : counts_)
        for (std::uint64_t v : row) n += v;
    return n;
}

std::uint64_t ConfusionMatrix::diagonal() const {
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < counts_.size(); ++i) n += counts_[i][i];
    return n;
}

double ConfusionMatrix::accuracy() const {
    const std::uint64_t t = total();
    return t == 0 ? 0.0 : static_cast<double>(diagonal()) / static_cast<double>(t);
}

std::vector<double> ConfusionMatrix::per_class_accuracy() const {
    std::vector<double> acc(counts_.size(), 0.0);
    for (std::size_t i = 0; i < counts_.size(); ++i) {
        std::uint64_t row = 0;
        for (std::uint64_t v : counts_[i]) row += v;
        acc[i] = row == 0 ? 0.0 : static_cast<double>(counts_[i][i]) / static_cast<double>(row);
    }
    return acc;
}

std::string ConfusionMatrix::to_csv(const std::vector<std::string>& class_names) const {
    if (class_names.size() != counts_.size())
        throw ConfigError("confusion csv needs one name per class");
    std::ostringstream out;
    out << "true\\predicted";
    for (const std::string& name : class_names) out << "," << name;
    out << "\n";
    for (std::size_t i = 0; i < counts_.size(); ++i) {
        out << class_names[i];
        for (std::uint64_t v : counts_[i]) out << "," << v;
        out << "\n";
    }
    return out.str();
}

std::pair<Metrics, ConfusionMatrix> evaluate_features(
    const NetworkConfig& net, const NetworkParams& params, const Gallery& gallery,
    const KnnParams& knn, const std::vector<FusedSample>& features, std::size_t num_classes) {
    if (features.empty()) throw DataError("evaluate called with an empty test set");
    ConfusionMatrix cm(num_classes);
    Metrics metrics;
    for (const FusedSample& sample : features) {
        const ForwardResult fwd = forward(net, params, sample);
        const Decision d = decide(fwd.probabilities, fwd.penultimate, gallery, knn);
        cm.add(sample.label, d.label);
        metrics.knn_routed += d.route == Route::knn;
    }
    metrics.total = features.size();
    metrics.accuracy = cm.accuracy();
    metrics.per_class = cm.per_class_accuracy();
    return {metrics, cm};
}

std::pair<Metrics, ConfusionMatrix> evaluate(const TrainConfig& cfg, const TrainResult& model,
                                             const Dataset& test_set) {
    const std::vector<FusedSample> features =
        preprocess_dataset(test_set, cfg, model.used_skeleton);
    return evaluate_features(model.network, model.params, model.gallery, cfg.knn, features,
                             test_set.class_names.size());
}

// ---------------------------------------------------------------------------
// jump benchmark

std::vector<BenchmarkRow> benchmark_jump(TrainConfig cfg, const Dataset& ds,
                                         const std::vector<int>& jumps) {
    if (jumps.empty()) throw ConfigError("benchmark needs at least one jump value");
    std::vector<BenchmarkRow> rows;
    for (int jump : jumps) {
        cfg.jump = jump;
        const DatasetSplit split = split_dataset(ds, cfg.split, cfg.seed);
        const TrainResult model = train(cfg, split.train, split.val);
        const auto [metrics, cm] = evaluate(cfg, model, split.test);

        // timing: single-threaded preprocessing + forward over the test
        // clips; best of three passes to damp scheduler noise
        TrainConfig timing_cfg = cfg;
        timing_cfg.threads = 1;
        double best_mean = std::numeric_limits<double>::infinity();
        for (int pass = 0; pass < 3; ++pass) {
            double sum_per_second = 0.0;
            for (const LabeledSample& sample : split.test.samples) {
                const auto t0 = std::chrono::steady_clock::now();
                const FusedSample feat =
                    preprocess_sample(sample, timing_cfg, model.used_skeleton);
                (void)forward(model.network, model.params, feat);
                const auto t1 = std::chrono::steady_clock::now();
                const double secs = std::chrono::duration<double>(t1 - t0).count();
                const double clip_seconds =
                    sample.frames.frames.size() / sample.frames.nominal_rate;
                sum_per_second += secs / clip_seconds;
            }
            best_mean = std::min(best_mean, sum_per_second / split.test.samples.size());
        }
        rows.push_back({jump, best_mean, metrics.accuracy});
    }
    return rows;
}

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows) {
    std::ostringstream out;
    out << "Methods,Frame Jump,Average time (S),Average Acc. %\n";
    char line[160];
    for (const BenchmarkRow& row : rows) {
        std::snprintf(line, sizeof(line), "measured,%d.0,%.6f,%.2f%%\n", row.jump,
                      row.seconds_per_clip_second, row.accuracy * 100.0);
        out << line;
    }
    // published full-scale reference values; annotation only, never asserted
    out << "published reference,4.0,2.10,95.62%\n";
    out << "published reference,6.0,1.6,93.9%\n";
    out << "published reference,8.0,1.10,89.6%\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// config files

namespace {

bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("bad boolean for " + key + ": " + value);
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
    try {
        if (key == "learning_rate") cfg.learning_rate = std::stod(value);
        else if (key == "epochs") cfg.epochs = std::stoi(value);
        else if (key == "batch_size") cfg.batch_size = std::stoi(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "jump") cfg.jump = std::stoi(value);
        else if (key == "knn_k") cfg.knn.k = std::stoi(value);
        else if (key == "margin_tau") cfg.knn.margin_tau = std::stod(value);
        else if (key == "split_train") cfg.split.train = std::stod(value);
        else if (key == "split_val") cfg.split.val = std::stod(value);
        else if (key == "split_test") cfg.split.test = std::stod(value);
        else if (key == "hog_cell") cfg.hog.cell_size = std::stoi(value);
        else if (key == "hog_block") cfg.hog.block_size = std::stoi(value);
        else if (key == "hog_stride") cfg.hog.block_stride = std::stoi(value);
        else if (key == "hog_bins") cfg.hog.bins = std::stoi(value);
        else if (key == "bgs_samples") cfg.bgs.samples_per_pixel = std::stoi(value);
        else if (key == "bgs_radius") cfg.bgs.neighborhood_radius = std::stoi(value);
        else if (key == "bgs_match_radius") cfg.bgs.match_radius = std::stoi(value);
        else if (key == "bgs_min_matches") cfg.bgs.min_matches = std::stoi(value);
        else if (key == "bgs_subsampling") cfg.bgs.update_subsampling = std::stoi(value);
        else if (key == "roi_size") cfg.roi_size = std::stoi(value);
        else if (key == "skeleton_frames") cfg.skeleton_frames = std::stoi(value);
        else if (key == "hidden_dim") cfg.hidden_dim = std::stoi(value);
        else if (key == "lstm_layers") cfg.lstm_layers = std::stoi(value);
        else if (key == "bidirectional") cfg.bidirectional = parse_bool(value, key);
        else if (key == "embed_dim") cfg.embed_dim = std::stoi(value);
        else if (key == "threads") cfg.threads = std::stoi(value);
        else throw ConfigError("unknown config key: " + key);
    } catch (const std::invalid_argument&) {
        throw ConfigError("bad value for " + key + ": " + value);
    } catch (const std::out_of_range&) {
        throw ConfigError("value out of range for " + key + ": " + value);
    }
}

namespace {

void apply_config_stream(TrainConfig& cfg, std::istream& in, const std::string& origin) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value at " + origin + ":" +
                              std::to_string(line_no));
        apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

}  // namespace

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    TrainConfig cfg;
    apply_config_stream(cfg, in, path.string());
    return cfg;
}

std::string train_config_to_string(const TrainConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "learning_rate = " << cfg.learning_rate << "\n"
        << "epochs = " << cfg.epochs << "\n"
        << "batch_size = " << cfg.batch_size << "\n"
        << "seed = " << cfg.seed << "\n"
        << "jump = " << cfg.jump << "\n"
        << "knn_k = " << cfg.knn.k << "\n"
        << "margin_tau = " << cfg.knn.margin_tau << "\n"
        << "split_train = " << cfg.split.train << "\n"
        << "split_val = " << cfg.split.val << "\n"
        << "split_test = " << cfg.split.test << "\n"
        << "hog_cell = " << cfg.hog.cell_size << "\n"
        << "hog_block = " << cfg.hog.block_size << "\n"
        << "hog_stride = " << cfg.hog.block_stride << "\n"
        << "hog_bins = " << cfg.hog.bins << "\n"
        << "bgs_samples = " << cfg.bgs.samples_per_pixel << "\n"
        << "bgs_radius = " << cfg.bgs.neighborhood_radius << "\n"
        << "bgs_match_radius = " << cfg.bgs.match_radius << "\n"
        << "bgs_min_matches = " << cfg.bgs.min_matches << "\n"
        << "bgs_subsampling = " << cfg.bgs.update_subsampling << "\n"
        << "roi_size = " << cfg.roi_size << "\n"
        << "skeleton_frames = " << cfg.skeleton_frames << "\n"
        << "hidden_dim = " << cfg.hidden_dim << "\n"
        << "lstm_layers = " << cfg.lstm_layers << "\n"
        << "bidirectional = " << (cfg.bidirectional ? "true" : "false") << "\n"
        << "embed_dim = " << cfg.embed_dim << "\n"
        << "threads = " << cfg.threads << "\n";
    return out.str();
}

void save_checkpoint_meta(const std::filesystem::path& path, const CheckpointMeta& meta) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint meta: " + path.string());
    out << train_config_to_string(meta.config);
    out << "# derived\n";
    out << "classes =";
    for (std::size_t i = 0; i < meta.class_names.size(); ++i)
        out << (i ? "," : " ") << meta.class_names[i];
    out << "\n";
    out << "used_skeleton = " << (meta.used_skeleton ? "true" : "false") << "\n";
}

CheckpointMeta load_checkpoint_meta(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint meta: " + path.string());
    CheckpointMeta meta;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("malformed checkpoint meta line: " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "classes") {
            std::stringstream ss(value);
            std::string name;
            while (std::getline(ss, name, ',')) meta.class_names.push_back(name);
        } else if (key == "used_skeleton") {
            meta.used_skeleton = value == "true";
        } else {
            apply_config_entry(meta.config, key, value);
        }
    }
    return meta;
}

}  // namespace frdl
