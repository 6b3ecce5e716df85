#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "persig/classifier.hpp"
#include "persig/extractor.hpp"
#include "persig/oracle.hpp"
#include "test_util.hpp"

using namespace persig;

namespace {

double l2(const Tensor& t) {
    double sq = 0.0;
    for (float v : t.data) sq += static_cast<double>(v) * static_cast<double>(v);
    return std::sqrt(sq);
}

// Synthetic monotone-flip oracle: along any ray the class flips exactly when
// the perturbation norm reaches a per-ray threshold. Unit directions make the
// probed magnitude equal to the norm.
struct RayThresholdOracle {
    std::function<double(const Tensor&)> threshold;
    uint64_t queries = 0;

    bool query(const Tensor& pert) {
        ++queries;
        double n = l2(pert);
        if (n == 0.0) return true;
        return n < threshold(pert);
    }

    std::vector<bool> query_batch(const Tensor& perts) {
        const int batch = perts.shape[0];
        std::vector<bool> out(static_cast<size_t>(batch));
        for (int b = 0; b < batch; ++b) {
            Tensor single({perts.shape[1], perts.shape[2]});
            std::copy(perts.data.begin() + b * single.numel(),
                      perts.data.begin() + (b + 1) * single.numel(), single.data.begin());
            out[static_cast<size_t>(b)] = query(single);
        }
        return out;
    }
};

RayThresholdOracle fixed_threshold(double t) {
    RayThresholdOracle o;
    o.threshold = [t](const Tensor&) { return t; };
    return o;
}

// Independent reference: scan the ray at a fixed step and report the first
// flipping magnitude.
template <class Oracle>
double brute_force_crossing(Oracle& oracle, const Tensor& direction, double eps_max,
                            double step = 1e-4) {
    for (double e = step; e <= eps_max + step / 2; e += step) {
        Tensor probe = scaled_direction(direction.data.data(), direction.shape[0],
                                        direction.shape[1], e);
        if (!oracle.query(probe)) return e;
    }
    return -1.0; // no flip in range
}

} // namespace

TEST_CASE("direction generation is bitwise reproducible and unit-norm") {
    DirectionSet a = generate_directions(123, 100);
    DirectionSet b = generate_directions(123, 100);
    DirectionSet c = generate_directions(124, 100);
    REQUIRE(a.values == b.values);
    REQUIRE(a.values != c.values);
    REQUIRE(a.count == 100);
    REQUIRE(a.values.size() == 100 * 784);
    for (int i = 0; i < a.count; ++i)
        REQUIRE(std::abs(l2(a.direction_tensor(i)) - 1.0) <= 1e-6);
}

TEST_CASE("direction set file round-trips bitwise and matches regeneration") {
    testutil::TempDir tmp("dirs");
    DirectionSet set = generate_directions(42, 16);
    save_directions(set, tmp.path("d.pdir"));
    DirectionSet loaded = load_directions(tmp.path("d.pdir"));
    REQUIRE(loaded.seed == set.seed);
    REQUIRE(loaded.count == set.count);
    REQUIRE(loaded.values == set.values);

    DirectionSet regen = generate_directions(loaded.seed, loaded.count);
    REQUIRE(regen.values == loaded.values);

    save_directions(loaded, tmp.path("d2.pdir"));
    REQUIRE(testutil::files_identical(tmp.path("d.pdir"), tmp.path("d2.pdir")));
}

TEST_CASE("bisection agrees with the brute-force scan on known crossings") {
    DirectionSet dirs = generate_directions(7, 4);
    SearchConfig cfg;

    for (double threshold : {3.2, 0.7, 7.77, 12.5, 26.0, 49.5}) {
        for (int d = 0; d < dirs.count; ++d) {
            Tensor dir = dirs.direction_tensor(d);
            RayThresholdOracle search_oracle = fixed_threshold(threshold);
            EpsResult res = find_epsilon(search_oracle, dir, cfg);
            REQUIRE_FALSE(res.saturated);

            RayThresholdOracle ref_oracle = fixed_threshold(threshold);
            double reference = brute_force_crossing(ref_oracle, dir, cfg.eps_max);
            REQUIRE(reference > 0.0);
            REQUIRE(std::abs(res.epsilon - reference) <= cfg.tolerance + 1e-4);
        }
    }
}

TEST_CASE("a crossing below eps_start is bisected inside [0, eps_start]") {
    DirectionSet dirs = generate_directions(9, 1);
    Tensor dir = dirs.direction_tensor(0);
    SearchConfig cfg;
    RayThresholdOracle oracle = fixed_threshold(0.05);
    EpsResult res = find_epsilon(oracle, dir, cfg);
    REQUIRE_FALSE(res.saturated);
    REQUIRE(res.epsilon <= cfg.eps_start);

    RayThresholdOracle ref = fixed_threshold(0.05);
    double reference = brute_force_crossing(ref, dir, cfg.eps_max);
    REQUIRE(std::abs(res.epsilon - reference) <= cfg.tolerance + 1e-4);
}

TEST_CASE("rays that never flip saturate at eps_max") {
    DirectionSet dirs = generate_directions(10, 1);
    Tensor dir = dirs.direction_tensor(0);
    SearchConfig cfg;
    RayThresholdOracle oracle = fixed_threshold(1000.0);
    EpsResult res = find_epsilon(oracle, dir, cfg);
    REQUIRE(res.saturated);
    REQUIRE(res.epsilon == cfg.eps_max);
}

TEST_CASE("the zero direction saturates") {
    Tensor zero({28, 28});
    SearchConfig cfg;
    RayThresholdOracle oracle = fixed_threshold(1.0);
    EpsResult res = find_epsilon(oracle, zero, cfg);
    REQUIRE(res.saturated);
    REQUIRE(res.epsilon == cfg.eps_max);
}

TEST_CASE("per-direction query budget stays within bracketing plus bisection") {
    DirectionSet dirs = generate_directions(11, 8);
    SearchConfig cfg;
    const uint64_t budget =
        static_cast<uint64_t>(std::ceil(std::log2(cfg.eps_max / cfg.eps_start))) + 1 +
        static_cast<uint64_t>(cfg.max_iterations);
    REQUIRE(budget == 50);

    for (double threshold : {0.03, 0.4, 5.0, 31.0, 49.9, 200.0}) {
        for (int d = 0; d < dirs.count; ++d) {
            RayThresholdOracle oracle = fixed_threshold(threshold);
            find_epsilon(oracle, dirs.direction_tensor(d), cfg);
            REQUIRE(oracle.queries <= budget);
        }
    }
}

TEST_CASE("bracket width at termination is at most the tolerance") {
    SearchConfig cfg;
    for (double threshold : {0.25, 3.2, 17.3, 42.0}) {
        EpsSearch search(cfg);
        while (!search.done()) {
            double probe = search.current_probe();
            search.advance(probe >= threshold, cfg);
        }
        EpsResult res = search.result();
        REQUIRE_FALSE(res.saturated);
        REQUIRE(search.bracket_hi() - search.bracket_lo() <= cfg.tolerance);
        REQUIRE(search.bracket_hi() >= threshold);
        REQUIRE(search.bracket_lo() < threshold);
    }
}

TEST_CASE("lockstep extraction equals sequential search on a synthetic oracle") {
    DirectionSet dirs = generate_directions(13, 25);
    SearchConfig cfg;
    // per-ray threshold varies with the ray's overlap against a fixed probe image
    Tensor anchor = testutil::random_tensor({28, 28}, 14, -1.0f, 1.0f);
    auto threshold_fn = [&anchor](const Tensor& pert) {
        double n = l2(pert);
        double dot = 0.0;
        for (size_t i = 0; i < pert.data.size(); ++i)
            dot += static_cast<double>(pert.data[i]) * static_cast<double>(anchor.data[i]);
        return 2.0 + 3.0 * std::abs(dot / (n > 0 ? n : 1.0));
    };

    RayThresholdOracle lockstep;
    lockstep.threshold = threshold_fn;
    Signature sig = extract_signature(lockstep, dirs, cfg);
    REQUIRE(sig.size() == dirs.count);
    REQUIRE(sig.direction_seed == dirs.seed);

    RayThresholdOracle sequential;
    sequential.threshold = threshold_fn;
    for (int d = 0; d < dirs.count; ++d) {
        EpsResult res = find_epsilon(sequential, dirs.direction_tensor(d), cfg);
        REQUIRE(sig.epsilons[static_cast<size_t>(d)] == res.epsilon);
        REQUIRE((sig.saturated[static_cast<size_t>(d)] != 0) == res.saturated);
    }
    REQUIRE(lockstep.queries == sequential.queries);
}

TEST_CASE("lockstep extraction equals sequential search against the real model") {
    ClassifierModel model = build_default_classifier(15);
    Tensor secret = testutil::random_tensor({28, 28}, 16);
    DirectionSet dirs = generate_directions(17, 10);
    SearchConfig cfg;

    OracleSession lockstep_session(model, secret);
    Signature sig = extract_signature(lockstep_session, dirs, cfg);

    OracleSession sequential_session(model, secret);
    for (int d = 0; d < dirs.count; ++d) {
        EpsResult res = find_epsilon(sequential_session, dirs.direction_tensor(d), cfg);
        REQUIRE(sig.epsilons[static_cast<size_t>(d)] == res.epsilon);
        REQUIRE((sig.saturated[static_cast<size_t>(d)] != 0) == res.saturated);
    }
    REQUIRE(lockstep_session.stats().queries == sequential_session.stats().queries);
}

TEST_CASE("an all-zero direction set saturates every entry") {
    DirectionSet zeros;
    zeros.seed = 999;
    zeros.count = 5;
    zeros.values.assign(5 * 784, 0.0f);
    SearchConfig cfg;
    RayThresholdOracle oracle = fixed_threshold(3.0);
    Signature sig = extract_signature(oracle, zeros, cfg);
    for (int d = 0; d < 5; ++d) {
        REQUIRE(sig.saturated[static_cast<size_t>(d)] == 1);
        REQUIRE(sig.epsilons[static_cast<size_t>(d)] == cfg.eps_max);
    }
}

TEST_CASE("extraction is deterministic") {
    ClassifierModel model = build_default_classifier(18);
    Tensor secret = testutil::random_tensor({28, 28}, 19);
    DirectionSet dirs = generate_directions(20, 6);
    SearchConfig cfg;
    OracleSession s1(model, secret);
    OracleSession s2(model, secret);
    Signature a = extract_signature(s1, dirs, cfg);
    Signature b = extract_signature(s2, dirs, cfg);
    REQUIRE(a.epsilons == b.epsilons);
    REQUIRE(a.saturated == b.saturated);
}

TEST_CASE("flip certificate holds on the synthetic oracle") {
    DirectionSet dirs = generate_directions(21, 12);
    SearchConfig cfg;
    RayThresholdOracle oracle = fixed_threshold(4.4);
    Signature sig = extract_signature(oracle, dirs, cfg);
    for (int d = 0; d < dirs.count; ++d) {
        REQUIRE(sig.saturated[static_cast<size_t>(d)] == 0);
        Tensor dir = dirs.direction_tensor(d);
        Tensor at_eps = scaled_direction(dir.data.data(), 28, 28,
                                         sig.epsilons[static_cast<size_t>(d)]);
        REQUIRE(oracle.query(at_eps) == false); // flips at the reported magnitude
        Tensor below = scaled_direction(dir.data.data(), 28, 28,
                                        sig.epsilons[static_cast<size_t>(d)] - cfg.tolerance);
        REQUIRE(oracle.query(below) == true); // no flip one tolerance below
    }
}

TEST_CASE("search config validation rejects nonsense") {
    SearchConfig bad;
    bad.eps_start = 0.0f;
    REQUIRE_THROWS_AS(bad.validate(), Error);
    bad = SearchConfig{};
    bad.eps_max = 0.05f;
    REQUIRE_THROWS_AS(bad.validate(), Error);
    bad = SearchConfig{};
    bad.growth = 1.0f;
    REQUIRE_THROWS_AS(bad.validate(), Error);
    bad = SearchConfig{};
    bad.tolerance = 0.0f;
    REQUIRE_THROWS_AS(bad.validate(), Error);
}
