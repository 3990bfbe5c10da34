#ifndef FRDL_NET_HPP
#define FRDL_NET_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "frdl/tensor.hpp"

namespace frdl {

// ---------------------------------------------------------------------------
// configuration

struct ConvSpec {
    int kernel_h = 3;
    int kernel_w = 3;
    int stride = 1;
    int out_channels = 1;
};
struct PoolSpec {
    int kernel = 2;
    int stride = 2;
};
struct ReluSpec {};
struct FcSpec {
    int out_dim = 0;
};
struct LstmSpec {
    int hidden_dim = 64;
    int num_layers = 2;
    bool bidirectional = true;
};
struct SoftmaxHeadSpec {
    int num_classes = 0;
};

using LayerSpec = std::variant<ConvSpec, PoolSpec, ReluSpec, FcSpec, LstmSpec, SoftmaxHeadSpec>;

struct InputSpec {
    int height = 64;
    int width = 64;
    int channels = 1;
};

/// Which per-frame feature blocks are concatenated before the recurrent
/// stage. Order in the fused vector: cnn_embedding, hog, skeleton_embedding.
struct FusionSpec {
    bool cnn_embedding = true;
    bool hog = true;
    bool skeleton_embedding = true;
};

struct NetworkConfig {
    InputSpec input;                 // per-frame ROI crop going into the CNN
    InputSpec skeleton_input{32, 32, 3};  // skeleton image after resize
    std::vector<LayerSpec> layers;
    FusionSpec fusion;
    int hog_dim = 0;  // width of the HOG block when fusion.hog is set
};

struct LayerShape {
    std::string name;                // conv1, pool1, fc2, ... numbered by kind
    std::vector<std::size_t> dims;   // output dims (channels, h, w) or (units)
};

/// Output shape after every layer up to (excluding) the recurrent stage,
/// starting from `input`. Throws ConfigError naming the first bad layer.
std::vector<LayerShape> tower_shapes(const NetworkConfig& config, const InputSpec& input);

/// Structural validation of the full config (tower chains for both inputs,
/// recurrent stage, head placement). Throws ConfigError on violations.
void validate_config(const NetworkConfig& config);

/// Desk-scale default: two conv layers (16/32 channels), 64-wide embedding,
/// bidirectional two-layer recurrent stage of width 64.
NetworkConfig desk_config(int num_classes, int hog_dim);

/// The classic large preset (Conv1..FC8); used for shape-fidelity checks.
NetworkConfig alexnet_preset();

// ---------------------------------------------------------------------------
// parameters

using NetworkParams = std::map<std::string, Tensor>;

/// Canonical (name, shape) list for a config; also the serialization order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> param_spec(
    const NetworkConfig& config);

/// Seeded uniform [-a, a] with a = sqrt(6 / (fan_in + fan_out)); forget-gate
/// biases start at 1, other biases at 0. Values are snapped to the float32
/// grid so checkpoints round-trip bit-exactly.
NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed);

/// Checks that every tensor required by the config exists with the right
/// shape; throws ConfigError naming the first offending tensor.
void validate_params(const NetworkConfig& config, const NetworkParams& params);

// ---------------------------------------------------------------------------
// inputs

/// One representative frame's feature blocks.
struct FrameFeatures {
    Tensor crop;              // (channels, h, w), values in [0, 1]
    std::vector<double> hog;  // flattened descriptor
};

/// Per-frame fused inputs for one sample, plus the optional skeleton image.
struct FusedSample {
    std::vector<FrameFeatures> steps;
    std::optional<Tensor> skeleton_image;  // (3, h, w), values in [0, 1]
    int label = 0;
    std::string sample_id;
};

// ---------------------------------------------------------------------------
// recurrent cell

struct LstmState {
    std::vector<double> hidden;  // s_t
    std::vector<double> cell;    // c_t
};

/// One recurrent layer's gate tensors (views into NetworkParams).
struct LstmLayerParams {
    const Tensor* Wi;
    const Tensor* Wf;
    const Tensor* Wo;
    const Tensor* Wg;
    const Tensor* bi;
    const Tensor* bf;
    const Tensor* bo;
    const Tensor* bg;
};

/// Gate arithmetic on the additive combination (x_t + s_{t-1}):
///   i,f,o = sigmoid(W(x+s) + b),  g = tanh(W(x+s) + b),
///   c_t = c_{t-1} * f + g * i,    s_t = tanh(c_t) * o.
LstmState lstm_cell_step(const LstmLayerParams& p, const std::vector<double>& x,
                         const LstmState& prev);

// ---------------------------------------------------------------------------
// forward / backward

struct TowerTrace {
    Tensor input;
    std::vector<Tensor> activations;                    // one per tower layer
    std::vector<std::vector<std::size_t>> pool_argmax;  // parallel to layers
};

struct LstmStepTrace {
    std::vector<double> gate_input;  // x_t + s_{t-1}
    std::vector<double> i, f, o, g;
    std::vector<double> c, s;
    std::vector<double> c_prev;
};

struct ForwardTrace {
    std::vector<TowerTrace> frame_towers;
    std::optional<TowerTrace> skeleton_tower;
    std::vector<std::vector<double>> fused;      // per timestep
    std::vector<std::vector<double>> projected;  // per timestep, width hidden
    // lstm[direction][layer][processing step]; direction 0 runs forward in
    // time, direction 1 (when bidirectional) runs reverse
    std::vector<std::vector<std::vector<LstmStepTrace>>> lstm;
    std::vector<double> penultimate;
    std::vector<double> logits;
    std::vector<double> probabilities;
};

struct ForwardResult {
    std::vector<double> probabilities;
    std::vector<double> penultimate;
    ForwardTrace trace;
};

/// Full pass: CNN towers per frame (and skeleton image), fusion with the HOG
/// block, learned projection to the recurrent width, bidirectional rollout,
/// concatenated final states through the output projection and Softmax.
ForwardResult forward(const NetworkConfig& config, const NetworkParams& params,
                      const FusedSample& sample);

/// Gradients of every parameter for the given upstream logit gradient
/// (cross-entropy: probabilities - one_hot(label)). Keys and shapes mirror
/// the params map.
NetworkParams backward(const NetworkConfig& config, const NetworkParams& params,
                       const ForwardTrace& trace, const std::vector<double>& dlogits);

/// w -= lr * g for every tensor, then snap to the float32 grid.
void sgd_step(NetworkParams& params, const NetworkParams& grads, double lr);

void accumulate(NetworkParams& into, const NetworkParams& grads);
void scale(NetworkParams& grads, double factor);
NetworkParams zeros_like(const NetworkParams& params);

// ---------------------------------------------------------------------------
// loss helpers

/// Numerically stable softmax (log-sum-exp shift).
std::vector<double> softmax(const std::vector<double>& logits);

/// Cross entropy of softmax(logits) against the label, computed as
/// logsumexp(logits) - logits[label].
double cross_entropy(const std::vector<double>& logits, int label);

// ---------------------------------------------------------------------------
// checkpoint I/O (magic "FRDL", version 1, float32 tensors, little-endian)

void save_checkpoint(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// layer primitives, exposed for the isolation gradient tests

namespace detail {

Tensor conv_forward(const Tensor& in, const Tensor& kernel, const Tensor& bias, int stride);
void conv_backward(const Tensor& in, const Tensor& kernel, int stride, const Tensor& dout,
                   Tensor& din, Tensor& dkernel, Tensor& dbias);
Tensor maxpool_forward(const Tensor& in, int kernel, int stride,
                       std::vector<std::size_t>& argmax);
void maxpool_backward(const Tensor& dout, const std::vector<std::size_t>& argmax, Tensor& din);
Tensor relu_forward(const Tensor& in);
void relu_backward(const Tensor& out, const Tensor& dout, Tensor& din);
std::vector<double> fc_forward(const Tensor& weight, const Tensor& bias,
                               const std::vector<double>& in);
void fc_backward(const Tensor& weight, const std::vector<double>& in,
                 const std::vector<double>& dout, Tensor& dweight, Tensor& dbias,
                 std::vector<double>& din);

}  // namespace detail

}  // namespace frdl

#endif
