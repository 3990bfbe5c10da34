#include "frdl/net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace frdl {

namespace {

const Tensor& get_param(const NetworkParams& params, const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("missing parameter tensor '" + name + "'");
    return it->second;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y = W * a + b, column-vector convention
std::vector<double> matvec(const Tensor& W, const Tensor& b, const std::vector<double>& a) {
    const std::size_t rows = W.shape()[0], cols = W.shape()[1];
    std::vector<double> y(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = b[r];
        const double* wr = W.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * a[c];
        y[r] = acc;
    }
    return y;
}

// a += W^T * d
void add_matvec_transposed(const Tensor& W, const std::vector<double>& d,
                           std::vector<double>& a) {
    const std::size_t rows = W.shape()[0], cols = W.shape()[1];
    for (std::size_t r = 0; r < rows; ++r) {
        const double* wr = W.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) a[c] += wr[c] * d[r];
    }
}

// W += d (outer) a, b += d
void add_outer(Tensor& dW, Tensor& db, const std::vector<double>& d,
               const std::vector<double>& a) {
    const std::size_t rows = dW.shape()[0], cols = dW.shape()[1];
    for (std::size_t r = 0; r < rows; ++r) {
        double* wr = dW.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) wr[c] += d[r] * a[c];
        db[r] += d[r];
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// layer primitives

namespace detail {

Tensor conv_forward(const Tensor& in, const Tensor& kernel, const Tensor& bias, int stride) {
    const auto& ks = kernel.shape();  // (out, in, kh, kw)
    const std::size_t oc = ks[0], ic = ks[1], kh = ks[2], kw = ks[3];
    const std::size_t ih = in.shape()[1], iw = in.shape()[2];
    const std::size_t oh = (ih - kh) / stride + 1, ow = (iw - kw) / stride + 1;
    Tensor out({oc, oh, ow});
    for (std::size_t o = 0; o < oc; ++o) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = bias[o];
                for (std::size_t i = 0; i < ic; ++i)
                    for (std::size_t dy = 0; dy < kh; ++dy)
                        for (std::size_t dx = 0; dx < kw; ++dx)
                            acc += in.at(i, y * stride + dy, x * stride + dx) *
                                   kernel.at(o, i, dy, dx);
                out.at(o, y, x) = acc;
            }
        }
    }
    return out;
}

void conv_backward(const Tensor& in, const Tensor& kernel, int stride, const Tensor& dout,
                   Tensor& din, Tensor& dkernel, Tensor& dbias) {
    const auto& ks = kernel.shape();
    const std::size_t oc = ks[0], ic = ks[1], kh = ks[2], kw = ks[3];
    const std::size_t oh = dout.shape()[1], ow = dout.shape()[2];
    for (std::size_t o = 0; o < oc; ++o) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                const double d = dout.at(o, y, x);
                if (d == 0.0) continue;
                dbias[o] += d;
                for (std::size_t i = 0; i < ic; ++i) {
                    for (std::size_t dy = 0; dy < kh; ++dy) {
                        for (std::size_t dx = 0; dx < kw; ++dx) {
                            dkernel.at(o, i, dy, dx) += d * in.at(i, y * stride + dy, x * stride + dx);
                            din.at(i, y * stride + dy, x * stride + dx) += d * kernel.at(o, i, dy, dx);
                        }
                    }
                }
            }
        }
    }
}

Tensor maxpool_forward(const Tensor& in, int kernel, int stride,
                       std::vector<std::size_t>& argmax) {
    const std::size_t ch = in.shape()[0], ih = in.shape()[1], iw = in.shape()[2];
    const std::size_t oh = (ih - kernel) / stride + 1, ow = (iw - kernel) / stride + 1;
    Tensor out({ch, oh, ow});
    argmax.assign(out.size(), 0);
    std::size_t n = 0;
    for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x, ++n) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = 0;
                for (int dy = 0; dy < kernel; ++dy) {
                    for (int dx = 0; dx < kernel; ++dx) {
                        const std::size_t yy = y * stride + dy, xx = x * stride + dx;
                        const double v = in.at(c, yy, xx);
                        if (v > best) {
                            best = v;
                            best_idx = (c * ih + yy) * iw + xx;
                        }
                    }
                }
                out.at(c, y, x) = best;
                argmax[n] = best_idx;
            }
        }
    }
    return out;
}

void maxpool_backward(const Tensor& dout, const std::vector<std::size_t>& argmax, Tensor& din) {
    for (std::size_t n = 0; n < dout.size(); ++n) din[argmax[n]] += dout[n];
}

Tensor relu_forward(const Tensor& in) {
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
    return out;
}

void relu_backward(const Tensor& out, const Tensor& dout, Tensor& din) {
    for (std::size_t i = 0; i < out.size(); ++i) din[i] += out[i] > 0.0 ? dout[i] : 0.0;
}

std::vector<double> fc_forward(const Tensor& weight, const Tensor& bias,
                               const std::vector<double>& in) {
    return matvec(weight, bias, in);
}

void fc_backward(const Tensor& weight, const std::vector<double>& in,
                 const std::vector<double>& dout, Tensor& dweight, Tensor& dbias,
                 std::vector<double>& din) {
    add_outer(dweight, dbias, dout, in);
    add_matvec_transposed(weight, dout, din);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// configuration

std::vector<LayerShape> tower_shapes(const NetworkConfig& config, const InputSpec& input) {
    std::vector<LayerShape> shapes;
    int conv_i = 0, pool_i = 0, fc_i = 0, relu_i = 0;
    std::vector<std::size_t> cur = {static_cast<std::size_t>(input.channels),
                                    static_cast<std::size_t>(input.height),
                                    static_cast<std::size_t>(input.width)};
    if (input.channels < 1 || input.height < 1 || input.width < 1)
        throw ConfigError("input spec dimensions must be positive");

    for (const LayerSpec& layer : config.layers) {
        if (std::holds_alternative<LstmSpec>(layer) ||
            std::holds_alternative<SoftmaxHeadSpec>(layer))
            break;
        if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
            const std::string name = "conv" + std::to_string(++conv_i);
            if (cur.size() != 3) throw ConfigError(name + " follows a flattened layer");
            if (conv->kernel_h < 1 || conv->kernel_w < 1 || conv->stride < 1 ||
                conv->out_channels < 1)
                throw ConfigError(name + " has non-positive kernel/stride/channels");
            if (cur[1] < static_cast<std::size_t>(conv->kernel_h) ||
                cur[2] < static_cast<std::size_t>(conv->kernel_w))
                throw ConfigError(name + ": kernel " + std::to_string(conv->kernel_h) + "x" +
                                  std::to_string(conv->kernel_w) + " exceeds input " +
                                  std::to_string(cur[1]) + "x" + std::to_string(cur[2]));
            cur = {static_cast<std::size_t>(conv->out_channels),
                   (cur[1] - conv->kernel_h) / conv->stride + 1,
                   (cur[2] - conv->kernel_w) / conv->stride + 1};
            shapes.push_back({name, cur});
        } else if (const auto* pool = std::get_if<PoolSpec>(&layer)) {
            const std::string name = "pool" + std::to_string(++pool_i);
            if (cur.size() != 3) throw ConfigError(name + " follows a flattened layer");
            if (pool->kernel < 1 || pool->stride < 1)
                throw ConfigError(name + " has non-positive kernel/stride");
            if (cur[1] < static_cast<std::size_t>(pool->kernel) ||
                cur[2] < static_cast<std::size_t>(pool->kernel))
                throw ConfigError(name + ": kernel exceeds input " + std::to_string(cur[1]) +
                                  "x" + std::to_string(cur[2]));
            cur = {cur[0], (cur[1] - pool->kernel) / pool->stride + 1,
                   (cur[2] - pool->kernel) / pool->stride + 1};
            shapes.push_back({name, cur});
        } else if (std::holds_alternative<ReluSpec>(layer)) {
            shapes.push_back({"relu" + std::to_string(++relu_i), cur});
        } else if (const auto* fc = std::get_if<FcSpec>(&layer)) {
            const std::string name = "fc" + std::to_string(++fc_i);
            if (fc->out_dim < 1) throw ConfigError(name + " has non-positive width");
            cur = {static_cast<std::size_t>(fc->out_dim)};
            shapes.push_back({name, cur});
        }
    }
    return shapes;
}

namespace {

const LstmSpec* find_lstm(const NetworkConfig& config) {
    for (const LayerSpec& layer : config.layers)
        if (const auto* l = std::get_if<LstmSpec>(&layer)) return l;
    return nullptr;
}

const SoftmaxHeadSpec* find_head(const NetworkConfig& config) {
    for (const LayerSpec& layer : config.layers)
        if (const auto* h = std::get_if<SoftmaxHeadSpec>(&layer)) return h;
    return nullptr;
}

// width of the embedding produced by a tower (the last fc before the lstm)
std::size_t tower_embed_dim(const NetworkConfig& config, const InputSpec& input) {
    const auto shapes = tower_shapes(config, input);
    for (auto it = shapes.rbegin(); it != shapes.rend(); ++it)
        if (it->dims.size() == 1) return it->dims[0];
    throw ConfigError("tower has no fc layer to produce an embedding");
}

std::size_t fused_width(const NetworkConfig& config) {
    std::size_t w = 0;
    if (config.fusion.cnn_embedding) w += tower_embed_dim(config, config.input);
    if (config.fusion.hog) w += static_cast<std::size_t>(config.hog_dim);
    if (config.fusion.skeleton_embedding)
        w += tower_embed_dim(config, config.skeleton_input);
    return w;
}

}  // namespace

void validate_config(const NetworkConfig& config) {
    int heads = 0, lstms = 0;
    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        if (std::holds_alternative<SoftmaxHeadSpec>(config.layers[i])) {
            ++heads;
            if (i + 1 != config.layers.size())
                throw ConfigError("softmax_head must be the last layer");
        }
        if (std::holds_alternative<LstmSpec>(config.layers[i])) {
            ++lstms;
            if (i + 2 != config.layers.size() ||
                !std::holds_alternative<SoftmaxHeadSpec>(config.layers[i + 1]))
                throw ConfigError("the lstm stage must immediately precede softmax_head");
        }
    }
    if (heads != 1) throw ConfigError("config needs exactly one softmax_head");
    if (lstms > 1) throw ConfigError("config supports at most one lstm stage");

    const SoftmaxHeadSpec* head = find_head(config);
    if (head->num_classes < 2) throw ConfigError("softmax_head needs at least 2 classes");

    tower_shapes(config, config.input);  // throws on a bad frame chain
    if (const LstmSpec* lstm = find_lstm(config)) {
        if (lstm->hidden_dim < 1 || lstm->num_layers < 1)
            throw ConfigError("lstm needs positive hidden_dim and num_layers");
        if (config.fusion.hog && config.hog_dim < 1)
            throw ConfigError("fusion includes hog but hog_dim is not set");
        if (config.fusion.skeleton_embedding)
            tower_shapes(config, config.skeleton_input);  // throws on a bad skeleton chain
        if (fused_width(config) == 0)
            throw ConfigError("fusion spec selects no feature blocks");
        tower_embed_dim(config, config.input);  // requires an fc before the lstm
    }
}

NetworkConfig desk_config(int num_classes, int hog_dim) {
    NetworkConfig cfg;
    cfg.input = {64, 64, 1};
    cfg.skeleton_input = {32, 32, 3};
    cfg.hog_dim = hog_dim;
    cfg.layers = {ConvSpec{5, 5, 2, 16}, ReluSpec{}, PoolSpec{2, 2},
                  ConvSpec{3, 3, 2, 32}, ReluSpec{}, PoolSpec{2, 2},
                  FcSpec{64},            ReluSpec{},
                  LstmSpec{64, 2, true}, SoftmaxHeadSpec{num_classes}};
    return cfg;
}

NetworkConfig alexnet_preset() {
    NetworkConfig cfg;
    cfg.input = {227, 227, 3};
    cfg.fusion = {true, false, false};
    cfg.hog_dim = 0;
    cfg.layers = {ConvSpec{11, 11, 4, 96}, ReluSpec{}, PoolSpec{3, 2},
                  ConvSpec{5, 5, 1, 256},  ReluSpec{}, PoolSpec{3, 2},
                  ConvSpec{3, 3, 1, 384},  ReluSpec{},
                  ConvSpec{3, 3, 1, 384},  ReluSpec{},
                  ConvSpec{3, 3, 1, 256},  ReluSpec{}, PoolSpec{3, 2},
                  FcSpec{4096},            ReluSpec{},
                  FcSpec{4096},            ReluSpec{},
                  FcSpec{1000},
                  SoftmaxHeadSpec{1000}};
    return cfg;
}

// ---------------------------------------------------------------------------
// parameters

std::vector<std::pair<std::string, std::vector<std::size_t>>> param_spec(
    const NetworkConfig& config) {
    validate_config(config);
    std::vector<std::pair<std::string, std::vector<std::size_t>>> spec;

    auto tower = [&](const std::string& prefix, const InputSpec& input) {
        int conv_i = 0, fc_i = 0;
        std::size_t ch = input.channels;
        std::size_t flat = 0;
        const auto shapes = tower_shapes(config, input);
        std::size_t shape_i = 0;
        std::vector<std::size_t> cur = {ch, static_cast<std::size_t>(input.height),
                                        static_cast<std::size_t>(input.width)};
        for (const LayerSpec& layer : config.layers) {
            if (std::holds_alternative<LstmSpec>(layer) ||
                std::holds_alternative<SoftmaxHeadSpec>(layer))
                break;
            if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
                const std::string base = prefix + "conv" + std::to_string(conv_i++);
                spec.push_back({base + ".kernel",
                                {static_cast<std::size_t>(conv->out_channels), cur[0],
                                 static_cast<std::size_t>(conv->kernel_h),
                                 static_cast<std::size_t>(conv->kernel_w)}});
                spec.push_back({base + ".bias", {static_cast<std::size_t>(conv->out_channels)}});
            } else if (const auto* fc = std::get_if<FcSpec>(&layer)) {
                flat = Tensor::count(cur);
                const std::string base = prefix + "fc" + std::to_string(fc_i++);
                spec.push_back({base + ".weight", {static_cast<std::size_t>(fc->out_dim), flat}});
                spec.push_back({base + ".bias", {static_cast<std::size_t>(fc->out_dim)}});
            }
            cur = shapes[shape_i++].dims;
        }
    };

    tower("frame.", config.input);
    if (config.fusion.skeleton_embedding) tower("skel.", config.skeleton_input);

    const LstmSpec* lstm = find_lstm(config);
    if (lstm) {
        const std::size_t hidden = lstm->hidden_dim;
        spec.push_back({"proj.weight", {hidden, fused_width(config)}});
        spec.push_back({"proj.bias", {hidden}});
        const int dirs = lstm->bidirectional ? 2 : 1;
        for (int d = 0; d < dirs; ++d) {
            for (int L = 0; L < lstm->num_layers; ++L) {
                const std::string base =
                    "lstm." + std::string(d == 0 ? "fw" : "bw") + ".l" + std::to_string(L) + ".";
                for (const char* gate : {"Wi", "Wf", "Wo", "Wg"})
                    spec.push_back({base + gate, {hidden, hidden}});
                for (const char* gate : {"bi", "bf", "bo", "bg"})
                    spec.push_back({base + gate, {hidden}});
            }
        }
        const std::size_t penult = hidden * dirs;
        const SoftmaxHeadSpec* head = find_head(config);
        spec.push_back({"head.weight", {static_cast<std::size_t>(head->num_classes), penult}});
        spec.push_back({"head.bias", {static_cast<std::size_t>(head->num_classes)}});
    }
    return spec;
}

NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    NetworkParams params;
    for (const auto& [name, shape] : param_spec(config)) {
        Tensor t(shape);
        const bool is_bias = shape.size() == 1;
        if (is_bias) {
            // forget-gate biases start open so early training can carry state
            if (name.size() > 2 && name.substr(name.size() - 2) == "bf") t.fill(1.0);
        } else {
            double fan_in = 0, fan_out = 0;
            if (shape.size() == 2) {
                fan_in = static_cast<double>(shape[1]);
                fan_out = static_cast<double>(shape[0]);
            } else {  // conv kernel (out, in, kh, kw)
                const double rf = static_cast<double>(shape[2] * shape[3]);
                fan_in = static_cast<double>(shape[1]) * rf;
                fan_out = static_cast<double>(shape[0]) * rf;
            }
            const double a = std::sqrt(6.0 / (fan_in + fan_out));
            for (std::size_t i = 0; i < t.size(); ++i)
                t[i] = snap_f32(uniform(rng, -a, a));
        }
        params.emplace(name, std::move(t));
    }
    return params;
}

void validate_params(const NetworkConfig& config, const NetworkParams& params) {
    for (const auto& [name, shape] : param_spec(config)) {
        auto it = params.find(name);
        if (it == params.end())
            throw ConfigError("checkpoint is missing tensor '" + name + "'");
        if (it->second.shape() != shape)
            throw ConfigError("shape mismatch for tensor '" + name + "': got " +
                              shape_to_string(it->second.shape()) + ", expected " +
                              shape_to_string(shape));
    }
}

// ---------------------------------------------------------------------------
// recurrent cell

namespace {

LstmStepTrace cell_step_traced(const LstmLayerParams& p, const std::vector<double>& x,
                               const LstmState& prev) {
    const std::size_t hidden = p.Wi->shape()[0];
    if (x.size() != hidden)
        throw ConfigError("lstm input width " + std::to_string(x.size()) +
                          " does not match hidden_dim " + std::to_string(hidden));
    LstmStepTrace t;
    t.gate_input.resize(hidden);
    for (std::size_t k = 0; k < hidden; ++k)
        t.gate_input[k] = x[k] + (prev.hidden.empty() ? 0.0 : prev.hidden[k]);
    t.i = matvec(*p.Wi, *p.bi, t.gate_input);
    t.f = matvec(*p.Wf, *p.bf, t.gate_input);
    t.o = matvec(*p.Wo, *p.bo, t.gate_input);
    t.g = matvec(*p.Wg, *p.bg, t.gate_input);
    t.c.resize(hidden);
    t.s.resize(hidden);
    t.c_prev = prev.cell.empty() ? std::vector<double>(hidden, 0.0) : prev.cell;
    for (std::size_t k = 0; k < hidden; ++k) {
        t.i[k] = sigmoid(t.i[k]);
        t.f[k] = sigmoid(t.f[k]);
        t.o[k] = sigmoid(t.o[k]);
        t.g[k] = std::tanh(t.g[k]);
        t.c[k] = t.c_prev[k] * t.f[k] + t.g[k] * t.i[k];
        t.s[k] = std::tanh(t.c[k]) * t.o[k];
    }
    return t;
}

LstmLayerParams lstm_layer_view(const NetworkParams& params, int direction, int layer) {
    const std::string base =
        "lstm." + std::string(direction == 0 ? "fw" : "bw") + ".l" + std::to_string(layer) + ".";
    return LstmLayerParams{&get_param(params, base + "Wi"), &get_param(params, base + "Wf"),
                           &get_param(params, base + "Wo"), &get_param(params, base + "Wg"),
                           &get_param(params, base + "bi"), &get_param(params, base + "bf"),
                           &get_param(params, base + "bo"), &get_param(params, base + "bg")};
}

}  // namespace

LstmState lstm_cell_step(const LstmLayerParams& p, const std::vector<double>& x,
                         const LstmState& prev) {
    const LstmStepTrace t = cell_step_traced(p, x, prev);
    return LstmState{t.s, t.c};
}

// ---------------------------------------------------------------------------
// forward

namespace {

// Walks the tower layers (everything before the lstm stage) for one input.
std::pair<std::vector<double>, TowerTrace> tower_forward(const NetworkConfig& config,
                                                         const NetworkParams& params,
                                                         const std::string& prefix,
                                                         Tensor input) {
    TowerTrace trace;
    trace.input = std::move(input);
    int conv_i = 0, fc_i = 0;
    const Tensor* cur = &trace.input;
    std::vector<double> flat;

    auto flatten = [](const Tensor& t) { return t.values(); };

    for (const LayerSpec& layer : config.layers) {
        if (std::holds_alternative<LstmSpec>(layer) ||
            std::holds_alternative<SoftmaxHeadSpec>(layer))
            break;
        trace.pool_argmax.emplace_back();
        if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
            const std::string base = prefix + "conv" + std::to_string(conv_i++);
            trace.activations.push_back(detail::conv_forward(
                *cur, get_param(params, base + ".kernel"), get_param(params, base + ".bias"),
                conv->stride));
        } else if (const auto* pool = std::get_if<PoolSpec>(&layer)) {
            trace.activations.push_back(
                detail::maxpool_forward(*cur, pool->kernel, pool->stride,
                                        trace.pool_argmax.back()));
        } else if (std::holds_alternative<ReluSpec>(layer)) {
            trace.activations.push_back(detail::relu_forward(*cur));
        } else if (std::get_if<FcSpec>(&layer)) {
            const std::string base = prefix + "fc" + std::to_string(fc_i++);
            flat = detail::fc_forward(get_param(params, base + ".weight"),
                                      get_param(params, base + ".bias"), flatten(*cur));
            trace.activations.push_back(Tensor({flat.size()}, flat));
        }
        cur = &trace.activations.back();
    }
    return {flatten(*cur), std::move(trace)};
}

void check_tensor_input(const Tensor& t, const InputSpec& spec, const std::string& what) {
    const std::vector<std::size_t> expect = {static_cast<std::size_t>(spec.channels),
                                             static_cast<std::size_t>(spec.height),
                                             static_cast<std::size_t>(spec.width)};
    if (t.shape() != expect)
        throw DataError(what + " has shape " + shape_to_string(t.shape()) +
                        ", expected " + shape_to_string(expect));
}

}  // namespace

ForwardResult forward(const NetworkConfig& config, const NetworkParams& params,
                      const FusedSample& sample) {
    const LstmSpec* lstm = find_lstm(config);
    if (!lstm) throw ConfigError("forward requires a config with an lstm stage");
    validate_config(config);
    const SoftmaxHeadSpec* head = find_head(config);
    if (sample.steps.empty())
        throw DataError("sample '" + sample.sample_id + "' has no feature steps");

    const std::size_t T = sample.steps.size();
    ForwardTrace trace;

    // per-frame CNN embeddings
    std::vector<std::vector<double>> frame_embed(T);
    for (std::size_t t = 0; t < T; ++t) {
        check_tensor_input(sample.steps[t].crop, config.input,
                           "sample '" + sample.sample_id + "' crop " + std::to_string(t));
        auto [embed, tw] = tower_forward(config, params, "frame.", sample.steps[t].crop);
        frame_embed[t] = std::move(embed);
        trace.frame_towers.push_back(std::move(tw));
    }

    // skeleton embedding, shared across timesteps
    std::vector<double> skel_embed;
    if (config.fusion.skeleton_embedding) {
        if (!sample.skeleton_image)
            throw DataError("sample '" + sample.sample_id +
                            "' has no skeleton data but the fusion spec includes it");
        check_tensor_input(*sample.skeleton_image, config.skeleton_input,
                           "sample '" + sample.sample_id + "' skeleton image");
        auto [embed, tw] = tower_forward(config, params, "skel.", *sample.skeleton_image);
        skel_embed = std::move(embed);
        trace.skeleton_tower = std::move(tw);
    }

    // fusion + projection to the recurrent width
    const Tensor& pw = get_param(params, "proj.weight");
    const Tensor& pb = get_param(params, "proj.bias");
    trace.fused.resize(T);
    trace.projected.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        std::vector<double>& fused = trace.fused[t];
        if (config.fusion.cnn_embedding)
            fused.insert(fused.end(), frame_embed[t].begin(), frame_embed[t].end());
        if (config.fusion.hog) {
            if (sample.steps[t].hog.size() != static_cast<std::size_t>(config.hog_dim))
                throw DataError("sample '" + sample.sample_id + "' hog width " +
                                std::to_string(sample.steps[t].hog.size()) +
                                " does not match configured " + std::to_string(config.hog_dim));
            fused.insert(fused.end(), sample.steps[t].hog.begin(), sample.steps[t].hog.end());
        }
        if (config.fusion.skeleton_embedding)
            fused.insert(fused.end(), skel_embed.begin(), skel_embed.end());
        if (fused.size() != pw.shape()[1])
            throw ConfigError("fused width " + std::to_string(fused.size()) +
                              " does not match projection " + shape_to_string(pw.shape()));
        trace.projected[t] = matvec(pw, pb, fused);
    }

    // recurrent rollout; direction 1 consumes the sequence in reverse
    const int dirs = lstm->bidirectional ? 2 : 1;
    trace.lstm.resize(dirs);
    for (int d = 0; d < dirs; ++d) {
        trace.lstm[d].resize(lstm->num_layers);
        for (int L = 0; L < lstm->num_layers; ++L) {
            const LstmLayerParams lp = lstm_layer_view(params, d, L);
            LstmState state;
            for (std::size_t p = 0; p < T; ++p) {
                const std::size_t orig = d == 0 ? p : T - 1 - p;
                const std::vector<double>& x =
                    L == 0 ? trace.projected[orig] : trace.lstm[d][L - 1][p].s;
                LstmStepTrace st = cell_step_traced(lp, x, state);
                state.hidden = st.s;
                state.cell = st.c;
                trace.lstm[d][L].push_back(std::move(st));
            }
        }
    }

    // concatenated final states -> output projection -> softmax
    for (int d = 0; d < dirs; ++d) {
        const auto& s = trace.lstm[d][lstm->num_layers - 1][T - 1].s;
        trace.penultimate.insert(trace.penultimate.end(), s.begin(), s.end());
    }
    const Tensor& hw = get_param(params, "head.weight");
    const Tensor& hb = get_param(params, "head.bias");
    if (trace.penultimate.size() != hw.shape()[1])
        throw ConfigError("penultimate width does not match head " +
                          shape_to_string(hw.shape()));
    trace.logits = matvec(hw, hb, trace.penultimate);
    trace.probabilities = softmax(trace.logits);
    (void)head;

    ForwardResult result;
    result.probabilities = trace.probabilities;
    result.penultimate = trace.penultimate;
    result.trace = std::move(trace);
    return result;
}

// ---------------------------------------------------------------------------
// backward

namespace {

void tower_backward(const NetworkConfig& config, const NetworkParams& params,
                    const std::string& prefix, const TowerTrace& trace,
                    const std::vector<double>& dembed, NetworkParams& grads) {
    // collect the tower layers in order (specs parallel to trace.activations)
    std::vector<const LayerSpec*> layers;
    for (const LayerSpec& layer : config.layers) {
        if (std::holds_alternative<LstmSpec>(layer) ||
            std::holds_alternative<SoftmaxHeadSpec>(layer))
            break;
        layers.push_back(&layer);
    }
    int conv_total = 0, fc_total = 0;
    for (const LayerSpec* l : layers) {
        conv_total += std::holds_alternative<ConvSpec>(*l);
        fc_total += std::holds_alternative<FcSpec>(*l);
    }

    Tensor dcur(trace.activations.back().shape());
    for (std::size_t i = 0; i < dembed.size(); ++i) dcur[i] = dembed[i];

    int conv_i = conv_total, fc_i = fc_total;
    for (int li = static_cast<int>(layers.size()) - 1; li >= 0; --li) {
        const Tensor& in = li == 0 ? trace.input : trace.activations[li - 1];
        Tensor din(in.shape());
        if (const auto* conv = std::get_if<ConvSpec>(layers[li])) {
            const std::string base = prefix + "conv" + std::to_string(--conv_i);
            detail::conv_backward(in, get_param(params, base + ".kernel"), conv->stride, dcur,
                                  din, grads.at(base + ".kernel"), grads.at(base + ".bias"));
        } else if (std::get_if<PoolSpec>(layers[li])) {
            detail::maxpool_backward(dcur, trace.pool_argmax[li], din);
        } else if (std::holds_alternative<ReluSpec>(*layers[li])) {
            detail::relu_backward(trace.activations[li], dcur, din);
        } else if (std::get_if<FcSpec>(layers[li])) {
            const std::string base = prefix + "fc" + std::to_string(--fc_i);
            std::vector<double> din_flat(in.size(), 0.0);
            detail::fc_backward(get_param(params, base + ".weight"), in.values(),
                                dcur.values(), grads.at(base + ".weight"),
                                grads.at(base + ".bias"), din_flat);
            din = Tensor(in.shape(), std::move(din_flat));
        }
        dcur = std::move(din);
    }
}

}  // namespace

NetworkParams backward(const NetworkConfig& config, const NetworkParams& params,
                       const ForwardTrace& trace, const std::vector<double>& dlogits) {
    const LstmSpec* lstm = find_lstm(config);
    if (!lstm) throw ConfigError("backward requires a config with an lstm stage");
    if (trace.projected.empty()) throw ConfigError("backward called with an empty trace");
    const std::size_t T = trace.projected.size();
    const std::size_t hidden = lstm->hidden_dim;
    const int dirs = lstm->bidirectional ? 2 : 1;
    if (static_cast<int>(trace.lstm.size()) != dirs)
        throw ConfigError("trace does not match the config's lstm stage");

    NetworkParams grads;
    for (const auto& [name, shape] : param_spec(config)) grads.emplace(name, Tensor(shape));

    // head
    const Tensor& hw = get_param(params, "head.weight");
    std::vector<double> dpenult(trace.penultimate.size(), 0.0);
    if (dlogits.size() != hw.shape()[0])
        throw ConfigError("dlogits width does not match the softmax head");
    add_outer(grads.at("head.weight"), grads.at("head.bias"), dlogits, trace.penultimate);
    add_matvec_transposed(hw, dlogits, dpenult);

    // recurrent stage, per direction from the top layer down
    std::vector<std::vector<double>> dproj(T, std::vector<double>(hidden, 0.0));
    for (int d = 0; d < dirs; ++d) {
        std::vector<std::vector<double>> ds_above(T, std::vector<double>(hidden, 0.0));
        for (std::size_t k = 0; k < hidden; ++k)
            ds_above[T - 1][k] = dpenult[d * hidden + k];

        for (int L = lstm->num_layers - 1; L >= 0; --L) {
            const LstmLayerParams lp = lstm_layer_view(params, d, L);
            const std::string base =
                "lstm." + std::string(d == 0 ? "fw" : "bw") + ".l" + std::to_string(L) + ".";
            Tensor& dWi = grads.at(base + "Wi");
            Tensor& dWf = grads.at(base + "Wf");
            Tensor& dWo = grads.at(base + "Wo");
            Tensor& dWg = grads.at(base + "Wg");
            Tensor& dbi = grads.at(base + "bi");
            Tensor& dbf = grads.at(base + "bf");
            Tensor& dbo = grads.at(base + "bo");
            Tensor& dbg = grads.at(base + "bg");

            std::vector<std::vector<double>> dx(T, std::vector<double>(hidden, 0.0));
            std::vector<double> ds_rec(hidden, 0.0), dc_rec(hidden, 0.0);
            std::vector<double> dzi(hidden), dzf(hidden), dzo(hidden), dzg(hidden);
            for (int p = static_cast<int>(T) - 1; p >= 0; --p) {
                const LstmStepTrace& st = trace.lstm[d][L][p];
                for (std::size_t k = 0; k < hidden; ++k) {
                    const double ds = ds_above[p][k] + ds_rec[k];
                    const double tc = std::tanh(st.c[k]);
                    const double do_ = ds * tc;
                    const double dc = dc_rec[k] + ds * st.o[k] * (1.0 - tc * tc);
                    const double df = dc * st.c_prev[k];
                    const double di = dc * st.g[k];
                    const double dg = dc * st.i[k];
                    dzi[k] = di * st.i[k] * (1.0 - st.i[k]);
                    dzf[k] = df * st.f[k] * (1.0 - st.f[k]);
                    dzo[k] = do_ * st.o[k] * (1.0 - st.o[k]);
                    dzg[k] = dg * (1.0 - st.g[k] * st.g[k]);
                    dc_rec[k] = dc * st.f[k];
                }
                add_outer(dWi, dbi, dzi, st.gate_input);
                add_outer(dWf, dbf, dzf, st.gate_input);
                add_outer(dWo, dbo, dzo, st.gate_input);
                add_outer(dWg, dbg, dzg, st.gate_input);
                // gate input is x_t + s_{t-1}: the same gradient flows to both
                std::vector<double> da(hidden, 0.0);
                add_matvec_transposed(*lp.Wi, dzi, da);
                add_matvec_transposed(*lp.Wf, dzf, da);
                add_matvec_transposed(*lp.Wo, dzo, da);
                add_matvec_transposed(*lp.Wg, dzg, da);
                dx[p] = da;
                ds_rec = std::move(da);
            }
            if (L > 0) {
                ds_above = std::move(dx);
            } else {
                for (std::size_t p = 0; p < T; ++p) {
                    const std::size_t orig = d == 0 ? p : T - 1 - p;
                    for (std::size_t k = 0; k < hidden; ++k) dproj[orig][k] += dx[p][k];
                }
            }
        }
    }

    // projection
    const Tensor& pw = get_param(params, "proj.weight");
    std::vector<std::vector<double>> dfused(T);
    for (std::size_t t = 0; t < T; ++t) {
        dfused[t].assign(trace.fused[t].size(), 0.0);
        detail::fc_backward(pw, trace.fused[t], dproj[t], grads.at("proj.weight"),
                            grads.at("proj.bias"), dfused[t]);
    }

    // split the fused gradient back into its blocks
    const std::size_t embed_dim =
        config.fusion.cnn_embedding ? tower_embed_dim(config, config.input) : 0;
    const std::size_t hog_dim = config.fusion.hog ? config.hog_dim : 0;
    const std::size_t skel_dim =
        config.fusion.skeleton_embedding ? tower_embed_dim(config, config.skeleton_input) : 0;

    std::vector<double> dskel(skel_dim, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        if (config.fusion.cnn_embedding) {
            std::vector<double> dembed(dfused[t].begin(), dfused[t].begin() + embed_dim);
            tower_backward(config, params, "frame.", trace.frame_towers[t], dembed, grads);
        }
        if (config.fusion.skeleton_embedding)
            for (std::size_t k = 0; k < skel_dim; ++k)
                dskel[k] += dfused[t][embed_dim + hog_dim + k];
    }
    if (config.fusion.skeleton_embedding && trace.skeleton_tower)
        tower_backward(config, params, "skel.", *trace.skeleton_tower, dskel, grads);

    return grads;
}

void sgd_step(NetworkParams& params, const NetworkParams& grads, double lr) {
    for (const auto& [name, g] : grads) {
        Tensor& w = params.at(name);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = snap_f32(w[i] - lr * g[i]);
    }
}

void accumulate(NetworkParams& into, const NetworkParams& grads) {
    for (const auto& [name, g] : grads) {
        Tensor& t = into.at(name);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += g[i];
    }
}

void scale(NetworkParams& grads, double factor) {
    for (auto& [name, g] : grads)
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= factor;
}

NetworkParams zeros_like(const NetworkParams& params) {
    NetworkParams out;
    for (const auto& [name, t] : params) out.emplace(name, Tensor(t.shape()));
    return out;
}

// ---------------------------------------------------------------------------
// loss helpers

std::vector<double> softmax(const std::vector<double>& logits) {
    std::vector<double> out(logits.size());
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

double cross_entropy(const std::vector<double>& logits, int label) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - m);
    return m + std::log(sum) - logits[label];
}

// ---------------------------------------------------------------------------
// checkpoint I/O

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                                static_cast<unsigned char>((v >> 8) & 0xFF),
                                static_cast<unsigned char>((v >> 16) & 0xFF),
                                static_cast<unsigned char>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t take_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw DataError(std::string("truncated checkpoint (") + what + ")");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path.string());
    out.write("FRDL", 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, tensor] : params) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        for (std::size_t i = 0; i < tensor.size(); ++i)
            put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(tensor[i])));
    }
    if (!out) throw DataError("failed writing checkpoint: " + path.string());
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "FRDL", 4) != 0)
        throw DataError("bad magic in checkpoint: " + path.string());
    const std::uint32_t version = take_u32(in, "version");
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " +
                        path.string());
    const std::uint32_t count = take_u32(in, "tensor count");

    NetworkParams params;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = take_u32(in, "name length");
        if (name_len == 0 || name_len > 4096)
            throw DataError("corrupt tensor name in checkpoint: " + path.string());
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (static_cast<std::uint32_t>(in.gcount()) != name_len)
            throw DataError("truncated checkpoint (tensor name)");
        const std::uint32_t rank = take_u32(in, "rank");
        if (rank > 16) throw DataError("corrupt tensor rank in checkpoint: " + path.string());
        std::vector<std::size_t> shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) shape[d] = take_u32(in, "dimension");
        const std::size_t total = Tensor::count(shape);
        Tensor t(shape);
        for (std::size_t k = 0; k < total; ++k)
            t[k] = static_cast<double>(std::bit_cast<float>(take_u32(in, "tensor data")));
        params.emplace(std::move(name), std::move(t));
    }
    return params;
}

}  // namespace frdl
