#include <catch2/catch_amalgamated.hpp>

#include <type_traits>

#include "persig/oracle.hpp"
#include "test_util.hpp"

using namespace persig;

namespace {

ClassifierModel tiny_model(uint64_t seed) { return build_default_classifier(seed); }

} // namespace

TEST_CASE("the zero perturbation never flips") {
    ClassifierModel m = tiny_model(1);
    OracleSession s(m, testutil::random_tensor({28, 28}, 2));
    Tensor zero({28, 28});
    REQUIRE(s.query(zero) == true);
    REQUIRE(s.stats().queries == 1);
    REQUIRE(s.stats().flips == 0);
}

TEST_CASE("the query counter counts every probe") {
    ClassifierModel m = tiny_model(3);
    OracleSession s(m, testutil::random_tensor({28, 28}, 4));
    REQUIRE(s.stats().queries == 0);
    for (uint64_t i = 1; i <= 5; ++i) {
        s.query(testutil::random_tensor({28, 28}, i, -1.0f, 1.0f));
        REQUIRE(s.stats().queries == i);
    }
    s.query_batch(testutil::random_tensor({7, 28, 28}, 99, -1.0f, 1.0f));
    REQUIRE(s.stats().queries == 12);
    REQUIRE(s.stats().flips <= s.stats().queries);
}

TEST_CASE("two sessions over the same secret answer identically") {
    ClassifierModel m = tiny_model(5);
    Tensor secret = testutil::random_tensor({28, 28}, 6);
    OracleSession a(m, secret);
    OracleSession b(m, secret);
    for (uint64_t i = 0; i < 20; ++i) {
        Tensor pert = testutil::random_tensor({28, 28}, 100 + i, -4.0f, 4.0f);
        REQUIRE(a.query(pert) == b.query(pert));
    }
}

TEST_CASE("query_batch equals mapped query on random batches") {
    ClassifierModel m = tiny_model(7);
    Tensor secret = testutil::random_tensor({28, 28}, 8);
    OracleSession batched(m, secret);
    OracleSession sequential(m, secret);
    for (uint64_t round = 0; round < 5; ++round) {
        Tensor batch = testutil::random_tensor({20, 28, 28}, 200 + round, -6.0f, 6.0f);
        std::vector<bool> res = batched.query_batch(batch);
        for (int i = 0; i < 20; ++i) {
            Tensor single({28, 28});
            std::copy(batch.data.begin() + i * 784, batch.data.begin() + (i + 1) * 784,
                      single.data.begin());
            REQUIRE(res[static_cast<size_t>(i)] == sequential.query(single));
        }
    }
    REQUIRE(batched.stats().queries == sequential.stats().queries);
    REQUIRE(batched.stats().flips == sequential.stats().flips);
}

TEST_CASE("empty batches are rejected") {
    ClassifierModel m = tiny_model(9);
    OracleSession s(m, testutil::random_tensor({28, 28}, 10));
    // a (0,28,28) tensor cannot even be built; the shape guard rejects rank-2 input too
    REQUIRE_THROWS_AS(s.query_batch(Tensor({28, 28})), Error);
}

TEST_CASE("non-finite perturbations are rejected without counting") {
    ClassifierModel m = tiny_model(11);
    OracleSession s(m, testutil::random_tensor({28, 28}, 12));
    Tensor bad({28, 28});
    bad.data[0] = std::numeric_limits<float>::infinity();
    REQUIRE_THROWS_AS(s.query(bad), Error);
    REQUIRE(s.stats().queries == 0);
}

TEST_CASE("oracle surface exposes only booleans and counters") {
    // information confinement: the public API cannot leak X, M(X), or logits
    static_assert(std::is_same_v<decltype(std::declval<OracleSession&>().query(
                                     std::declval<const Tensor&>())),
                                 bool>);
    static_assert(std::is_same_v<decltype(std::declval<OracleSession&>().query_batch(
                                     std::declval<const Tensor&>())),
                                 std::vector<bool>>);
    static_assert(
        std::is_same_v<decltype(std::declval<const OracleSession&>().stats()), OracleStats>);
    static_assert(std::is_same_v<decltype(OracleStats::queries), uint64_t>);
    static_assert(std::is_same_v<decltype(OracleStats::flips), uint64_t>);
    SUCCEED();
}

TEST_CASE("flips never exceed queries under heavy perturbation") {
    ClassifierModel m = tiny_model(13);
    OracleSession s(m, testutil::random_tensor({28, 28}, 14));
    for (uint64_t i = 0; i < 30; ++i)
        s.query(testutil::random_tensor({28, 28}, 300 + i, -50.0f, 50.0f));
    OracleStats st = s.stats();
    REQUIRE(st.queries == 30);
    REQUIRE(st.flips <= st.queries);
}
