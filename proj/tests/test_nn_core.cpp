#include <catch2/catch_amalgamated.hpp>

#include "persig/grad_check.hpp"
#include "persig/loss.hpp"
#include "persig/network.hpp"
#include "persig/optim.hpp"
#include "test_util.hpp"

using namespace persig;

TEST_CASE("conv2d 1x1 identity kernel reproduces its input") {
    std::vector<LayerSpec> specs{LayerSpec::conv2d(1, 1, 1, 1, 0)};
    ParamBundle params;
    Tensor w({1, 1, 1, 1});
    w.data[0] = 1.0f;
    Tensor b({1});
    params.tensors.push_back({"layer0.weight", w});
    params.tensors.push_back({"layer0.bias", b});

    Tensor x = testutil::random_tensor({2, 1, 5, 5}, 7);
    Tensor y = forward(specs, params, x);
    REQUIRE(y.shape == x.shape);
    REQUIRE(y.data == x.data);
}

TEST_CASE("convtranspose2d stride-2 k4 p1 doubles a 7x7 map") {
    auto out = layer_out_shape(LayerSpec::convtranspose2d(8, 4, 4, 2, 1), {8, 7, 7});
    REQUIRE(out == std::vector<int>{4, 14, 14});
}

TEST_CASE("dense layer with zero weights returns its bias for any input") {
    std::vector<LayerSpec> specs{LayerSpec::dense(6, 3)};
    ParamBundle params;
    Tensor w({3, 6});
    Tensor b({3});
    b.data = {0.5f, -1.0f, 2.0f};
    params.tensors.push_back({"layer0.weight", w});
    params.tensors.push_back({"layer0.bias", b});

    Tensor x = testutil::random_tensor({4, 6}, 11, -3.0f, 3.0f);
    Tensor y = forward(specs, params, x);
    for (int r = 0; r < 4; ++r)
        for (int o = 0; o < 3; ++o)
            REQUIRE(y.data[static_cast<size_t>(r) * 3 + o] == b.data[static_cast<size_t>(o)]);
}

TEST_CASE("mirrored conv / convtranspose settings restore the spatial extent") {
    struct Case {
        int k, s, p;
    };
    for (Case c : {Case{4, 2, 1}, Case{2, 2, 0}, Case{6, 2, 2}, Case{3, 1, 1}, Case{5, 1, 2}}) {
        for (int extent : {7, 14, 10}) {
            int down = conv_out_extent(extent, c.k, c.s, c.p);
            // only exact (non-flooring) downsamples invert cleanly
            if ((extent + 2 * c.p - c.k) % c.s != 0) continue;
            REQUIRE(convtranspose_out_extent(down, c.k, c.s, c.p) == extent);
        }
    }
    // the decoder's 7 -> 14 -> 28 chain
    REQUIRE(convtranspose_out_extent(7, 4, 2, 1) == 14);
    REQUIRE(convtranspose_out_extent(14, 4, 2, 1) == 28);
    REQUIRE(conv_out_extent(28, 4, 2, 1) == 14);
    REQUIRE(conv_out_extent(14, 4, 2, 1) == 7);
}

TEST_CASE("softmax of ten zeros is uniform") {
    Tensor logits({1, 10});
    Tensor p = softmax(logits);
    for (float v : p.data) REQUIRE(v == Catch::Approx(0.1).margin(1e-7));
}

TEST_CASE("softmax is stable for huge logits") {
    Tensor logits({1, 10});
    logits.data[0] = 1000.0f;
    Tensor p = softmax(logits);
    REQUIRE(p.all_finite());
    REQUIRE(p.data[0] == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("softmax rows sum to one and shift invariance holds") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Tensor logits = testutil::random_tensor({3, 10}, seed, -5.0f, 5.0f);
        Tensor p = softmax(logits);
        for (int r = 0; r < 3; ++r) {
            double sum = 0;
            for (int c = 0; c < 10; ++c) sum += p.data[static_cast<size_t>(r) * 10 + c];
            REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
        }
        Tensor shifted = logits;
        for (auto& v : shifted.data) v += 3.25f;
        Tensor q = softmax(shifted);
        for (size_t i = 0; i < p.data.size(); ++i)
            REQUIRE(q.data[i] == Catch::Approx(p.data[i]).margin(1e-6));
    }
}

TEST_CASE("softmax rejects non-finite input") {
    Tensor logits({1, 4});
    logits.data[2] = std::numeric_limits<float>::infinity();
    REQUIRE_THROWS_AS(softmax(logits), Error);
}

TEST_CASE("cross entropy endpoints") {
    Tensor p({10});
    p.data[3] = 1.0f;
    REQUIRE(cross_entropy_loss(p, 3) == 0.0f);

    Tensor uniform({10});
    uniform.fill(0.1f);
    REQUIRE(cross_entropy_loss(uniform, 7) ==
            Catch::Approx(2.302585).margin(1e-5)); // ln 10

    REQUIRE_THROWS_AS(cross_entropy_loss(uniform, 10), Error);
    REQUIRE_THROWS_AS(cross_entropy_loss(uniform, -1), Error);
}

TEST_CASE("cross entropy gradient is p minus onehot") {
    Tensor p({4});
    p.data = {0.1f, 0.2f, 0.3f, 0.4f};
    Tensor grad;
    cross_entropy_loss(p, 2, &grad);
    REQUIRE(grad.data[0] == Catch::Approx(0.1));
    REQUIRE(grad.data[2] == Catch::Approx(0.3 - 1.0));
}

TEST_CASE("mse endpoints and gradient") {
    Tensor a = testutil::random_tensor({2, 5}, 3);
    REQUIRE(mse_loss(a, a) == 0.0f);

    Tensor b = a;
    for (auto& v : b.data) v += 1.0f;
    REQUIRE(mse_loss(b, a) == Catch::Approx(1.0).margin(1e-6));

    Tensor grad;
    mse_loss(b, a, &grad);
    for (float g : grad.data) REQUIRE(g == Catch::Approx(2.0 / 10.0).margin(1e-6));

    Tensor c({3, 5});
    REQUIRE_THROWS_AS(mse_loss(a, c), Error);
}

TEST_CASE("zero upstream gradient produces all-zero parameter gradients") {
    std::vector<LayerSpec> specs{LayerSpec::conv2d(1, 2, 3, 1, 1), LayerSpec::relu(),
                                 LayerSpec::flatten(), LayerSpec::dense(2 * 6 * 6, 4)};
    ParamBundle params = init_params(specs, 5);
    Tensor x = testutil::random_tensor({2, 1, 6, 6}, 6);
    ForwardTrace<float> trace;
    Tensor y = forward(specs, params, x, &trace);
    Tensor dy(y.shape);
    Gradients grads;
    Tensor dx = backward(specs, params, trace, dy, grads);
    for (const auto& g : grads.tensors)
        for (float v : g.tensor.data) REQUIRE(v == 0.0f);
    for (float v : dx.data) REQUIRE(v == 0.0f);
}

TEST_CASE("backward is deterministic for a fixed retained state") {
    std::vector<LayerSpec> specs{LayerSpec::dense(8, 8), LayerSpec::leakyrelu(0.2f),
                                 LayerSpec::dense(8, 3)};
    ParamBundle params = init_params(specs, 9);
    Tensor x = testutil::random_tensor({3, 8}, 10, -1.0f, 1.0f);
    ForwardTrace<float> trace;
    Tensor y = forward(specs, params, x, &trace);
    Tensor dy = testutil::random_tensor(y.shape, 11, -1.0f, 1.0f);

    Gradients g1, g2;
    Tensor dx1 = backward(specs, params, trace, dy, g1);
    Tensor dx2 = backward(specs, params, trace, dy, g2);
    REQUIRE(dx1.data == dx2.data);
    for (size_t t = 0; t < g1.tensors.size(); ++t)
        REQUIRE(g1.tensors[t].tensor.data == g2.tensors[t].tensor.data);
}

TEST_CASE("backward without a forward trace is rejected") {
    std::vector<LayerSpec> specs{LayerSpec::dense(4, 2)};
    ParamBundle params = init_params(specs, 1);
    ForwardTrace<float> empty;
    Tensor dy({1, 2});
    Gradients grads;
    REQUIRE_THROWS_AS(backward(specs, params, empty, dy, grads), Error);
}

TEST_CASE("forward is bitwise deterministic") {
    std::vector<LayerSpec> specs{LayerSpec::conv2d(2, 3, 3, 2, 1), LayerSpec::relu(),
                                 LayerSpec::flatten(), LayerSpec::dense(3 * 4 * 4, 5),
                                 LayerSpec::sigmoid()};
    ParamBundle params = init_params(specs, 21);
    Tensor x = testutil::random_tensor({4, 2, 7, 7}, 22, -1.0f, 1.0f);
    Tensor y1 = forward(specs, params, x);
    Tensor y2 = forward(specs, params, x);
    REQUIRE(y1.data == y2.data);
}

TEST_CASE("sgd without momentum moves params by lr times gradient") {
    std::vector<LayerSpec> specs{LayerSpec::dense(2, 2)};
    ParamBundle params = init_params(specs, 2);
    ParamBundle before = params;
    Gradients grads = zeros_like(params);
    for (auto& t : grads.tensors)
        for (auto& v : t.tensor.data) v = 0.5f;

    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::sgd_momentum;
    cfg.momentum = 0.0f;
    cfg.lr = 0.1f;
    OptimizerState state = OptimizerState::make(params);
    optimizer_step(params, grads, state, cfg);
    for (size_t t = 0; t < params.tensors.size(); ++t)
        for (size_t i = 0; i < params.tensors[t].tensor.data.size(); ++i)
            REQUIRE(params.tensors[t].tensor.data[i] ==
                    Catch::Approx(before.tensors[t].tensor.data[i] - 0.1f * 0.5f).margin(1e-7));
}

TEST_CASE("zero gradients leave sgd params unchanged") {
    std::vector<LayerSpec> specs{LayerSpec::dense(3, 3)};
    ParamBundle params = init_params(specs, 3);
    ParamBundle before = params;
    Gradients grads = zeros_like(params);
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::sgd_momentum;
    cfg.momentum = 0.0f;
    OptimizerState state = OptimizerState::make(params);
    optimizer_step(params, grads, state, cfg);
    for (size_t t = 0; t < params.tensors.size(); ++t)
        REQUIRE(params.tensors[t].tensor.data == before.tensors[t].tensor.data);
}

TEST_CASE("adam's first step is approximately lr times the gradient sign") {
    // hand-executed update on a 2-element tensor: m_hat = g, v_hat = g*g,
    // step = lr * g / (|g| + eps) ~= lr * sign(g)
    ParamBundle params;
    Tensor t({2});
    t.data = {1.0f, -2.0f};
    params.tensors.push_back({"p", t});
    Gradients grads;
    Tensor g({2});
    g.data = {0.04f, -0.4f};
    grads.tensors.push_back({"p", g});

    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::adam;
    cfg.lr = 0.01f;
    OptimizerState state = OptimizerState::make(params);
    optimizer_step(params, grads, state, cfg);

    REQUIRE(params.tensors[0].tensor.data[0] == Catch::Approx(1.0f - 0.01f).margin(1e-5));
    REQUIRE(params.tensors[0].tensor.data[1] == Catch::Approx(-2.0f + 0.01f).margin(1e-5));
}

TEST_CASE("optimizer rejects incongruent bundles") {
    std::vector<LayerSpec> specs{LayerSpec::dense(2, 2)};
    ParamBundle params = init_params(specs, 4);
    ParamBundle other = init_params({LayerSpec::dense(3, 2)}, 4);
    OptimizerState state = OptimizerState::make(params);
    OptimizerConfig cfg;
    REQUIRE_THROWS_AS(optimizer_step(params, other, state, cfg), Error);
}

TEST_CASE("layer shape errors are reported") {
    REQUIRE_THROWS_AS(layer_out_shape(LayerSpec::dense(4, 2), {5}), Error);
    REQUIRE_THROWS_AS(layer_out_shape(LayerSpec::conv2d(1, 1, 9, 1, 0), {1, 4, 4}), Error);
    REQUIRE_THROWS_AS(layer_out_shape(LayerSpec::reshape(2, 3, 3), {17}), Error);
}
