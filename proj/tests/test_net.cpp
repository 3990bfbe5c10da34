#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "frdl/net.hpp"
#include "gradcheck.hpp"

using namespace frdl;
namespace fs = std::filesystem;

namespace {

// independent gate arithmetic for the cell checks
double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

LstmLayerParams make_layer(const Tensor& W1, const Tensor& Wf, const Tensor& Wo,
                           const Tensor& Wg, const Tensor& bi, const Tensor& bf,
                           const Tensor& bo, const Tensor& bg) {
    return LstmLayerParams{&W1, &Wf, &Wo, &Wg, &bi, &bf, &bo, &bg};
}

}  // namespace

TEST_SUITE("net") {

TEST_CASE("lstm_cell_step matches the gate equations") {
    SUBCASE("all-zero weights give half-open gates and zero state") {
        const Tensor W({2, 2}), b({2});
        const auto p = make_layer(W, W, W, W, b, b, b, b);
        const LstmState out = lstm_cell_step(p, {0.0, 0.0}, LstmState{});
        for (double s : out.hidden) CHECK(s == 0.0);  // tanh(0) * sigmoid(0)
        for (double c : out.cell) CHECK(c == 0.0);
    }
    SUBCASE("scalar case with unit weights") {
        Tensor W({1, 1});
        W[0] = 1.0;
        const Tensor b({1});
        const auto p = make_layer(W, W, W, W, b, b, b, b);
        const LstmState out = lstm_cell_step(p, {1.0}, LstmState{});

        // independent evaluation of the same equations
        const double gate = sig(1.0);
        const double candidate = std::tanh(1.0);
        const double cell = candidate * gate;
        const double hidden = std::tanh(cell) * gate;
        CHECK(out.cell[0] == doctest::Approx(cell).epsilon(1e-12));
        CHECK(out.hidden[0] == doctest::Approx(hidden).epsilon(1e-12));
        CHECK(std::abs(out.cell[0] - 0.5568) <= 1e-4);
        CHECK(std::abs(out.hidden[0] - 0.3697) <= 1e-4);
    }
    SUBCASE("a saturated forget gate carries the cell") {
        const Tensor Wz({1, 1});  // all zero weights
        Tensor bf({1});
        bf[0] = 10.0;
        const Tensor b0({1});
        const auto p = make_layer(Wz, Wz, Wz, Wz, b0, bf, b0, b0);
        LstmState prev;
        prev.hidden = {0.0};
        prev.cell = {0.8};
        const LstmState out = lstm_cell_step(p, {0.0}, prev);
        // i = 0.5 but g = tanh(0) = 0, so only the forget path is active
        CHECK(std::abs(out.cell[0] - 0.8) <= 1e-3);
    }
    SUBCASE("input width must equal the hidden width") {
        const Tensor W({2, 2}), b({2});
        const auto p = make_layer(W, W, W, W, b, b, b, b);
        CHECK_THROWS_AS(lstm_cell_step(p, {0.0, 0.0, 0.0}, LstmState{}), ConfigError);
    }
    SUBCASE("gates stay in range and the cell growth is bounded") {
        Rng rng(3);
        Tensor W({3, 3}), b({3});
        for (std::size_t i = 0; i < W.size(); ++i) W[i] = uniform(rng, -2.0, 2.0);
        const auto p = make_layer(W, W, W, W, b, b, b, b);
        LstmState state;
        double max_g = 0.0;
        for (int t = 1; t <= 10; ++t) {
            std::vector<double> x(3);
            for (double& v : x) v = uniform(rng, -3.0, 3.0);
            // recompute the gates the cell sees to bound |g|
            std::vector<double> a(3);
            for (int k = 0; k < 3; ++k) a[k] = x[k] + (state.hidden.empty() ? 0.0 : state.hidden[k]);
            for (int r = 0; r < 3; ++r) {
                double z = 0;
                for (int c = 0; c < 3; ++c) z += W.at(r, c) * a[c];
                max_g = std::max(max_g, std::abs(std::tanh(z)));
            }
            state = lstm_cell_step(p, x, state);
            for (double c : state.cell) CHECK(std::abs(c) <= t * std::max(max_g, 1e-12) + 1e-12);
        }
    }
}

TEST_CASE("softmax is stable and normalized") {
    Rng rng(10);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + uniform_index(rng, 6);
        std::vector<double> logits(n);
        for (double& v : logits) v = uniform(rng, -50.0, 50.0);
        const std::vector<double> p = softmax(logits);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("forward through the full stack") {
    const NetworkConfig cfg = gradcheck::tiny_config();
    Rng rng(20);
    const FusedSample sample = gradcheck::random_sample(cfg, 4, 1, rng);

    SUBCASE("a zero output projection gives the uniform distribution") {
        NetworkParams params = init_params(cfg, 1);
        params.at("head.weight").fill(0.0);
        params.at("head.bias").fill(0.0);
        const ForwardResult r = forward(cfg, params, sample);
        for (double p : r.probabilities) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));
    }
    SUBCASE("rigged logits (ln 2, 0) give probabilities (2/3, 1/3)") {
        NetworkConfig two = cfg;
        two.layers.back() = SoftmaxHeadSpec{2};
        NetworkParams params = init_params(two, 1);
        params.at("head.weight").fill(0.0);
        params.at("head.bias").fill(0.0);
        params.at("head.bias")[0] = std::log(2.0);
        const ForwardResult r = forward(two, params, sample);
        CHECK(r.probabilities[0] == doctest::Approx(2.0 / 3).epsilon(1e-9));
        CHECK(r.probabilities[1] == doctest::Approx(1.0 / 3).epsilon(1e-9));
    }
    SUBCASE("forward is deterministic") {
        const NetworkParams params = init_params(cfg, 2);
        const ForwardResult a = forward(cfg, params, sample);
        const ForwardResult b = forward(cfg, params, sample);
        CHECK(a.probabilities == b.probabilities);
        CHECK(a.penultimate == b.penultimate);
    }
    SUBCASE("the penultimate width is hidden * directions") {
        const NetworkParams params = init_params(cfg, 3);
        const ForwardResult r = forward(cfg, params, sample);
        CHECK(r.penultimate.size() == 8);
    }
    SUBCASE("a missing skeleton image is a data error when fused") {
        const NetworkParams params = init_params(cfg, 4);
        FusedSample broken = sample;
        broken.skeleton_image.reset();
        CHECK_THROWS_WITH_AS(forward(cfg, params, broken), doctest::Contains("skeleton"),
                             DataError);
    }
    SUBCASE("a wrong crop shape names the offender") {
        const NetworkParams params = init_params(cfg, 5);
        FusedSample broken = sample;
        broken.steps[2].crop = Tensor({1, 8, 8});
        CHECK_THROWS_WITH_AS(forward(cfg, params, broken), doctest::Contains("crop 2"),
                             DataError);
    }
}

TEST_CASE("the large preset instantiates with the published layer table") {
    const NetworkConfig preset = alexnet_preset();
    validate_config(preset);
    const std::vector<LayerShape> shapes = tower_shapes(preset, preset.input);

    int convs = 0, pools = 0;
    for (const LayerShape& s : shapes) {
        convs += s.name.rfind("conv", 0) == 0;
        pools += s.name.rfind("pool", 0) == 0;
    }
    CHECK(convs == 5);
    CHECK(pools == 3);

    // Conv1: 11x11 stride 4 over 227x227x3 -> 55x55x96
    CHECK(shapes.front().name == "conv1");
    CHECK(shapes.front().dims == std::vector<std::size_t>{96, 55, 55});

    // FC8 output width 1000
    const LayerShape* last_fc = nullptr;
    for (const LayerShape& s : shapes)
        if (s.name.rfind("fc", 0) == 0) last_fc = &s;
    REQUIRE(last_fc != nullptr);
    CHECK(last_fc->name == "fc3");
    CHECK(last_fc->dims == std::vector<std::size_t>{1000});
}

TEST_CASE("config validation names structural problems") {
    NetworkConfig cfg = gradcheck::tiny_config();
    SUBCASE("misplaced head") {
        cfg.layers.push_back(ReluSpec{});
        CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("softmax_head"),
                             ConfigError);
    }
    SUBCASE("oversized kernel names the layer") {
        cfg.input = {4, 4, 1};
        CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("conv"), ConfigError);
    }
    SUBCASE("hog block needs a width") {
        cfg.hog_dim = 0;
        CHECK_THROWS_WITH_AS(validate_config(cfg), doctest::Contains("hog"), ConfigError);
    }
}

TEST_CASE("backward gradients") {
    const NetworkConfig cfg = gradcheck::tiny_config();
    Rng rng(30);
    const FusedSample sample = gradcheck::random_sample(cfg, 4, 2, rng);
    NetworkParams params = init_params(cfg, 31);

    SUBCASE("zero loss gradient gives zero parameter gradients") {
        const ForwardResult fwd = forward(cfg, params, sample);
        const std::vector<double> zero(3, 0.0);
        const NetworkParams grads = backward(cfg, params, fwd.trace, zero);
        for (const auto& [name, g] : grads)
            for (std::size_t i = 0; i < g.size(); ++i) REQUIRE(g[i] == 0.0);
    }
    SUBCASE("duplicating a sample doubles its summed gradient") {
        const ForwardResult fwd = forward(cfg, params, sample);
        std::vector<double> dlogits = fwd.probabilities;
        dlogits[sample.label] -= 1.0;
        const NetworkParams once = backward(cfg, params, fwd.trace, dlogits);
        NetworkParams sum = once;
        accumulate(sum, backward(cfg, params, fwd.trace, dlogits));
        for (const auto& [name, g] : once)
            for (std::size_t i = 0; i < g.size(); ++i)
                CHECK(sum.at(name)[i] == doctest::Approx(2.0 * g[i]).epsilon(1e-12));
    }
    SUBCASE("full-stack gradient check") {
        const gradcheck::Result r = gradcheck::check_gradients(cfg, params, sample);
        CAPTURE(r.worst_tensor);
        CHECK(r.max_rel < 1e-4);
        CHECK(r.checked > 500);
    }
    SUBCASE("fc + lstm + head in isolation") {
        NetworkConfig small;
        small.input = {2, 2, 1};
        small.fusion = {true, false, false};
        small.hog_dim = 0;
        small.layers = {FcSpec{4}, LstmSpec{4, 1, false}, SoftmaxHeadSpec{3}};
        Rng r2(40);
        const FusedSample s = gradcheck::random_sample(small, 3, 0, r2);
        const gradcheck::Result r = gradcheck::check_gradients(small, init_params(small, 41), s);
        CAPTURE(r.worst_tensor);
        CHECK(r.max_rel < 1e-4);
    }
}

TEST_CASE("layer primitives match finite differences in isolation") {
    Rng rng(50);
    const double h = 1e-6;

    SUBCASE("conv") {
        Tensor in({2, 5, 5}), kernel({3, 2, 3, 3}), bias({3});
        for (std::size_t i = 0; i < in.size(); ++i) in[i] = uniform(rng, -1, 1);
        for (std::size_t i = 0; i < kernel.size(); ++i) kernel[i] = uniform(rng, -1, 1);
        for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = uniform(rng, -1, 1);
        const Tensor out = detail::conv_forward(in, kernel, bias, 2);
        Tensor dout(out.shape());
        for (std::size_t i = 0; i < dout.size(); ++i) dout[i] = uniform(rng, -1, 1);

        auto loss = [&](const Tensor& input, const Tensor& k, const Tensor& b) {
            const Tensor o = detail::conv_forward(input, k, b, 2);
            double sum = 0;
            for (std::size_t i = 0; i < o.size(); ++i) sum += o[i] * dout[i];
            return sum;
        };
        Tensor din(in.shape()), dk(kernel.shape()), db(bias.shape());
        detail::conv_backward(in, kernel, 2, dout, din, dk, db);
        for (std::size_t i = 0; i < in.size(); ++i) {
            Tensor p = in, m = in;
            p[i] += h;
            m[i] -= h;
            const double fd = (loss(p, kernel, bias) - loss(m, kernel, bias)) / (2 * h);
            CHECK(oracle::rel_err(din[i], fd) < 1e-5);
        }
        for (std::size_t i = 0; i < kernel.size(); ++i) {
            Tensor p = kernel, m = kernel;
            p[i] += h;
            m[i] -= h;
            const double fd = (loss(in, p, bias) - loss(in, m, bias)) / (2 * h);
            CHECK(oracle::rel_err(dk[i], fd) < 1e-5);
        }
    }
    SUBCASE("maxpool") {
        Tensor in({2, 6, 6});
        for (std::size_t i = 0; i < in.size(); ++i) in[i] = uniform(rng, -1, 1);
        std::vector<std::size_t> argmax;
        const Tensor out = detail::maxpool_forward(in, 2, 2, argmax);
        Tensor dout(out.shape());
        for (std::size_t i = 0; i < dout.size(); ++i) dout[i] = uniform(rng, -1, 1);
        Tensor din(in.shape());
        detail::maxpool_backward(dout, argmax, din);
        auto loss = [&](const Tensor& input) {
            std::vector<std::size_t> am;
            const Tensor o = detail::maxpool_forward(input, 2, 2, am);
            double sum = 0;
            for (std::size_t i = 0; i < o.size(); ++i) sum += o[i] * dout[i];
            return sum;
        };
        for (std::size_t i = 0; i < in.size(); ++i) {
            Tensor p = in, m = in;
            p[i] += h;
            m[i] -= h;
            const double fd = (loss(p) - loss(m)) / (2 * h);
            CHECK(oracle::rel_err(din[i], fd) < 1e-5);
        }
    }
    SUBCASE("relu") {
        Tensor in({10});
        for (std::size_t i = 0; i < in.size(); ++i) in[i] = uniform(rng, -1, 1);
        const Tensor out = detail::relu_forward(in);
        Tensor dout(out.shape());
        for (std::size_t i = 0; i < dout.size(); ++i) dout[i] = uniform(rng, -1, 1);
        Tensor din(in.shape());
        detail::relu_backward(out, dout, din);
        for (std::size_t i = 0; i < in.size(); ++i) {
            Tensor p = in, m = in;
            p[i] += h;
            m[i] -= h;
            auto val = [&](const Tensor& t) {
                const Tensor o = detail::relu_forward(t);
                double sum = 0;
                for (std::size_t k = 0; k < o.size(); ++k) sum += o[k] * dout[k];
                return sum;
            };
            const double fd = (val(p) - val(m)) / (2 * h);
            CHECK(oracle::rel_err(din[i], fd) < 1e-5);
        }
    }
    SUBCASE("fc") {
        Tensor W({3, 5}), b({3});
        for (std::size_t i = 0; i < W.size(); ++i) W[i] = uniform(rng, -1, 1);
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = uniform(rng, -1, 1);
        std::vector<double> in(5), dout(3);
        for (double& v : in) v = uniform(rng, -1, 1);
        for (double& v : dout) v = uniform(rng, -1, 1);
        Tensor dW(W.shape()), db(b.shape());
        std::vector<double> din(5, 0.0);
        detail::fc_backward(W, in, dout, dW, db, din);
        auto loss = [&](const Tensor& w, const Tensor& bias, const std::vector<double>& input) {
            const std::vector<double> o = detail::fc_forward(w, bias, input);
            double sum = 0;
            for (std::size_t i = 0; i < o.size(); ++i) sum += o[i] * dout[i];
            return sum;
        };
        for (std::size_t i = 0; i < W.size(); ++i) {
            Tensor p = W, m = W;
            p[i] += h;
            m[i] -= h;
            CHECK(oracle::rel_err(dW[i], (loss(p, b, in) - loss(m, b, in)) / (2 * h)) < 1e-5);
        }
        for (std::size_t i = 0; i < in.size(); ++i) {
            std::vector<double> p = in, m = in;
            p[i] += h;
            m[i] -= h;
            CHECK(oracle::rel_err(din[i], (loss(W, b, p) - loss(W, b, m)) / (2 * h)) < 1e-5);
        }
    }
}

TEST_CASE("checkpoint round trips and rejects corrupt files") {
    const fs::path dir = fs::temp_directory_path() / "frdl_ckpt_test";
    fs::create_directories(dir);
    const fs::path file = dir / "model.frdl";

    const NetworkConfig cfg = gradcheck::tiny_config();
    const NetworkParams params = init_params(cfg, 77);

    SUBCASE("load(save(p)) is bit-exact and re-saving is byte-identical") {
        save_checkpoint(params, file);
        const NetworkParams loaded = load_checkpoint(file);
        REQUIRE(loaded.size() == params.size());
        for (const auto& [name, t] : params) {
            const Tensor& lt = loaded.at(name);
            REQUIRE(lt.shape() == t.shape());
            for (std::size_t i = 0; i < t.size(); ++i) REQUIRE(lt[i] == t[i]);
        }
        const fs::path file2 = dir / "model2.frdl";
        save_checkpoint(loaded, file2);
        std::ifstream a(file, std::ios::binary), b(file2, std::ios::binary);
        const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
        const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
        CHECK(bytes_a == bytes_b);
    }
    SUBCASE("bad magic") {
        std::ofstream out(file, std::ios::binary);
        out << "NOPE" << std::string(64, '\0');
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(file), doctest::Contains("bad magic"), DataError);
    }
    SUBCASE("version mismatch") {
        std::ofstream out(file, std::ios::binary);
        out << "FRDL";
        const unsigned char version[4] = {9, 0, 0, 0};
        out.write(reinterpret_cast<const char*>(version), 4);
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(file), doctest::Contains("version"), DataError);
    }
    SUBCASE("truncated file") {
        save_checkpoint(params, file);
        const auto size = fs::file_size(file);
        fs::resize_file(file, size / 2);
        CHECK_THROWS_WITH_AS(load_checkpoint(file), doctest::Contains("truncated"), DataError);
    }
    SUBCASE("a checkpoint from another shape names the first offender") {
        NetworkConfig other = cfg;
        for (LayerSpec& layer : other.layers)
            if (auto* lstm = std::get_if<LstmSpec>(&layer)) lstm->hidden_dim = 8;
        const NetworkParams wrong = init_params(other, 1);
        CHECK_THROWS_WITH_AS(validate_params(cfg, wrong),
                             doctest::Contains("shape mismatch for tensor"), ConfigError);
    }
    fs::remove_all(dir);
}

TEST_CASE("init_params is deterministic and float32-exact") {
    const NetworkConfig cfg = gradcheck::tiny_config();
    const NetworkParams a = init_params(cfg, 5);
    const NetworkParams b = init_params(cfg, 5);
    for (const auto& [name, t] : a) {
        const Tensor& tb = b.at(name);
        for (std::size_t i = 0; i < t.size(); ++i) {
            REQUIRE(t[i] == tb[i]);
            REQUIRE(t[i] == snap_f32(t[i]));
        }
    }
    // forget-gate biases start open
    CHECK(a.at("lstm.fw.l0.bf")[0] == 1.0);
    CHECK(a.at("lstm.bw.l1.bf")[2] == 1.0);
    CHECK(a.at("lstm.fw.l0.bi")[0] == 0.0);
}

}  // TEST_SUITE
