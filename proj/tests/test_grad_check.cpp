#include <catch2/catch_amalgamated.hpp>

#include "persig/grad_check.hpp"
#include "test_util.hpp"

using namespace persig;

namespace {

TensorT<double> random_input_d(std::vector<int> shape, uint64_t seed) {
    TensorT<double> t(std::move(shape));
    Rng rng(seed);
    for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

double check_ce(const std::vector<LayerSpec>& specs, uint64_t seed,
                const std::vector<int>& in_shape, std::vector<int> labels) {
    auto params = init_params<double>(specs, seed);
    auto input = random_input_d(in_shape, seed + 1000);
    return grad_check(specs, params, input, GradCheckLoss::ce(std::move(labels)));
}

double check_mse(const std::vector<LayerSpec>& specs, uint64_t seed,
                 const std::vector<int>& in_shape, const std::vector<int>& out_shape) {
    auto params = init_params<double>(specs, seed);
    auto input = random_input_d(in_shape, seed + 1000);
    auto target = random_input_d(out_shape, seed + 2000);
    return grad_check(specs, params, input, GradCheckLoss::mse(std::move(target)));
}

} // namespace

TEST_CASE("dense+relu+dense+softmax toy network passes the gradient check") {
    std::vector<LayerSpec> specs{LayerSpec::dense(6, 8), LayerSpec::relu(),
                                 LayerSpec::dense(8, 4)};
    REQUIRE(check_ce(specs, 42, {2, 6}, {1, 3}) <= 1e-4);
}

TEST_CASE("conv2d toy network passes the gradient check") {
    std::vector<LayerSpec> specs{LayerSpec::conv2d(1, 3, 3, 1, 1), LayerSpec::relu(),
                                 LayerSpec::conv2d(3, 2, 3, 2, 1), LayerSpec::relu(),
                                 LayerSpec::flatten(), LayerSpec::dense(2 * 4 * 4, 3)};
    REQUIRE(check_ce(specs, 7, {2, 1, 7, 7}, {0, 2}) <= 1e-4);
}

TEST_CASE("convtranspose2d toy network passes the gradient check") {
    std::vector<LayerSpec> specs{LayerSpec::dense(5, 2 * 2 * 2), LayerSpec::leakyrelu(0.2f),
                                 LayerSpec::reshape(2, 2, 2),
                                 LayerSpec::convtranspose2d(2, 2, 4, 2, 1),
                                 LayerSpec::leakyrelu(0.2f),
                                 LayerSpec::convtranspose2d(2, 1, 4, 2, 1), LayerSpec::sigmoid()};
    REQUIRE(check_mse(specs, 13, {2, 5}, {2, 1, 8, 8}) <= 1e-4);
}

TEST_CASE("every layer kind passes the gradient check across 20 random seeds") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        // dense
        REQUIRE(check_mse({LayerSpec::dense(5, 4)}, seed, {2, 5}, {2, 4}) <= 1e-4);
        // conv2d (odd extents exercise padding edges)
        REQUIRE(check_mse({LayerSpec::conv2d(2, 2, 3, 2, 1)}, seed, {2, 2, 5, 5}, {2, 2, 3, 3}) <=
                1e-4);
        // convtranspose2d
        REQUIRE(check_mse({LayerSpec::convtranspose2d(2, 2, 4, 2, 1)}, seed, {2, 2, 3, 3},
                          {2, 2, 6, 6}) <= 1e-4);
        // activations and shape layers behind a dense head
        REQUIRE(check_mse({LayerSpec::dense(4, 8), LayerSpec::relu(), LayerSpec::dense(8, 4)},
                          seed, {2, 4}, {2, 4}) <= 1e-4);
        REQUIRE(check_mse({LayerSpec::dense(4, 8), LayerSpec::leakyrelu(0.2f),
                           LayerSpec::dense(8, 4)},
                          seed, {2, 4}, {2, 4}) <= 1e-4);
        REQUIRE(check_mse({LayerSpec::dense(4, 8), LayerSpec::sigmoid(), LayerSpec::dense(8, 4)},
                          seed, {2, 4}, {2, 4}) <= 1e-4);
        REQUIRE(check_mse({LayerSpec::reshape(2, 2, 2), LayerSpec::conv2d(2, 2, 3, 1, 1),
                           LayerSpec::flatten()},
                          seed, {2, 8}, {2, 8}) <= 1e-4);
        // softmax cross-entropy head
        REQUIRE(check_ce({LayerSpec::dense(5, 4), LayerSpec::relu(), LayerSpec::dense(4, 3)},
                         seed, {2, 5}, {static_cast<int>(seed % 3), 2}) <= 1e-4);
    }
}

TEST_CASE("tiny variants of both production architectures pass the gradient check") {
    // classifier-like: three strided convs then two dense layers
    std::vector<LayerSpec> cls{
        LayerSpec::conv2d(1, 2, 5, 1, 2),  LayerSpec::relu(),
        LayerSpec::conv2d(2, 3, 5, 2, 2),  LayerSpec::relu(),
        LayerSpec::conv2d(3, 3, 3, 2, 1),  LayerSpec::relu(),
        LayerSpec::flatten(),
        LayerSpec::dense(3 * 2 * 2, 8),    LayerSpec::relu(),
        LayerSpec::dense(8, 4),
    };
    REQUIRE(check_ce(cls, 99, {2, 1, 8, 8}, {0, 3}) <= 1e-4);

    // decoder-like: projection, reshape, two upsampling transpose convs
    std::vector<LayerSpec> dec{
        LayerSpec::dense(8, 2 * 2 * 2),
        LayerSpec::leakyrelu(0.2f),
        LayerSpec::reshape(2, 2, 2),
        LayerSpec::convtranspose2d(2, 2, 4, 2, 1),
        LayerSpec::leakyrelu(0.2f),
        LayerSpec::convtranspose2d(2, 1, 4, 2, 1),
        LayerSpec::sigmoid(),
    };
    REQUIRE(check_mse(dec, 100, {2, 8}, {2, 1, 8, 8}) <= 1e-4);
}
