#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <string>
#include <vector>

#include "persig/binio.hpp"
#include "persig/rng.hpp"
#include "persig/tensor.hpp"

namespace persig {

// ---------------------------------------------------------------------------
// Fixed perturbation directions: i.i.d. standard normal per element, scaled
// to unit L2 norm, bitwise reproducible from (seed, count).
// ---------------------------------------------------------------------------

struct DirectionSet {
    uint64_t seed = 0;
    int count = 0;
    int rows = 28, cols = 28;
    std::vector<float> values; // count * rows * cols

    const float* direction(int i) const {
        return values.data() + static_cast<size_t>(i) * rows * cols;
    }

    Tensor direction_tensor(int i) const {
        Tensor t({rows, cols});
        const float* p = direction(i);
        std::copy(p, p + static_cast<size_t>(rows) * cols, t.data.begin());
        return t;
    }
};

inline DirectionSet generate_directions(uint64_t seed, int count = 100, int rows = 28,
                                        int cols = 28) {
    if (count < 1) throw Error(Errc::count_mismatch, "direction count must be >= 1");
    DirectionSet set;
    set.seed = seed;
    set.count = count;
    set.rows = rows;
    set.cols = cols;
    const size_t dim = static_cast<size_t>(rows) * cols;
    set.values.resize(static_cast<size_t>(count) * dim);
    Rng rng(seed);
    for (int d = 0; d < count; ++d) {
        float* p = set.values.data() + static_cast<size_t>(d) * dim;
        double sq = 0.0;
        for (size_t i = 0; i < dim; ++i) {
            p[i] = static_cast<float>(rng.normal());
            sq += static_cast<double>(p[i]) * static_cast<double>(p[i]);
        }
        double norm = std::sqrt(sq);
        if (norm > 0.0)
            for (size_t i = 0; i < dim; ++i)
                p[i] = static_cast<float>(static_cast<double>(p[i]) / norm);
    }
    return set;
}

// DirectionSet file: magic "PSIG-DIR" | u64 seed | u32 count | u32 rows |
// u32 cols | f32 values. Values are regenerable from the seed and stored for
// audit.
inline void save_directions(const DirectionSet& set, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::io_failure, "cannot open " + path + " for write");
    write_magic(f, "PSIG-DIR");
    write_le<uint64_t>(f, set.seed);
    write_le<uint32_t>(f, static_cast<uint32_t>(set.count));
    write_le<uint32_t>(f, static_cast<uint32_t>(set.rows));
    write_le<uint32_t>(f, static_cast<uint32_t>(set.cols));
    write_f32_array(f, set.values.data(), set.values.size());
    if (!f) throw Error(Errc::io_failure, "write failed: " + path);
}

inline DirectionSet load_directions(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::io_failure, "cannot open " + path);
    expect_magic(f, "PSIG-DIR", "direction set");
    DirectionSet set;
    set.seed = read_le<uint64_t>(f);
    set.count = static_cast<int>(read_le<uint32_t>(f));
    set.rows = static_cast<int>(read_le<uint32_t>(f));
    set.cols = static_cast<int>(read_le<uint32_t>(f));
    set.values.resize(static_cast<size_t>(set.count) * set.rows * set.cols);
    read_f32_array(f, set.values.data(), set.values.size());
    return set;
}

// ---------------------------------------------------------------------------
// Minimal flip magnitude search: exponential bracketing from eps_start,
// capped at eps_max, then bisection on the first enclosed crossing.
// ---------------------------------------------------------------------------

struct SearchConfig {
    float eps_start = 0.1f;
    float eps_max = 50.0f;
    float growth = 2.0f;
    float tolerance = 1e-2f;
    int max_iterations = 40;

    void validate() const {
        if (!(eps_start > 0.0f) || !(eps_start < eps_max) || !(tolerance > 0.0f) ||
            !(growth > 1.0f) || max_iterations < 1)
            throw Error(Errc::bad_config, "search config out of range");
    }
};

// Fingerprint vector E_x. saturated[i] != 0 marks directions where no flip
// occurred within the search range; those entries carry eps_max.
struct Signature {
    std::vector<float> epsilons;
    std::vector<uint8_t> saturated;
    uint64_t direction_seed = 0;

    int size() const { return static_cast<int>(epsilons.size()); }
};

struct EpsResult {
    float epsilon = 0.0f;
    bool saturated = false;
};

// Shared search state machine; sequential and lockstep execution both drive
// it, so the probe sequence (and therefore the result) is identical.
class EpsSearch {
public:
    explicit EpsSearch(const SearchConfig& cfg) : probe_(cfg.eps_start) { cfg.validate(); }

    bool done() const { return phase_ == Phase::done; }

    double current_probe() const {
        return phase_ == Phase::bracketing ? probe_ : 0.5 * (lo_ + hi_);
    }

    void advance(bool flipped, const SearchConfig& cfg) {
        const double eps_max = cfg.eps_max;
        const double tol = cfg.tolerance;
        if (phase_ == Phase::bracketing) {
            if (flipped) {
                hi_ = probe_;
                phase_ = Phase::bisecting;
                if (hi_ - lo_ <= tol) finish(false);
                return;
            }
            lo_ = probe_;
            if (probe_ >= eps_max) {
                result_ = static_cast<float>(eps_max);
                saturated_ = true;
                phase_ = Phase::done;
                return;
            }
            probe_ = std::min(probe_ * cfg.growth, eps_max);
            return;
        }
        if (phase_ == Phase::bisecting) {
            double mid = 0.5 * (lo_ + hi_);
            if (flipped)
                hi_ = mid;
            else
                lo_ = mid;
            ++iters_;
            if (hi_ - lo_ <= tol || iters_ >= cfg.max_iterations) finish(false);
        }
    }

    EpsResult result() const { return {result_, saturated_}; }
    double bracket_lo() const { return lo_; }
    double bracket_hi() const { return hi_; }

private:
    enum class Phase { bracketing, bisecting, done };

    void finish(bool saturated) {
        result_ = static_cast<float>(hi_);
        saturated_ = saturated;
        phase_ = Phase::done;
    }

    Phase phase_ = Phase::bracketing;
    double lo_ = 0.0;
    double hi_ = 0.0;
    double probe_;
    int iters_ = 0;
    float result_ = 0.0f;
    bool saturated_ = false;
};

template <class S>
concept OracleLike = requires(S s, const Tensor& t) {
    { s.query(t) } -> std::same_as<bool>;
    { s.query_batch(t) } -> std::same_as<std::vector<bool>>;
};

inline Tensor scaled_direction(const float* dir, int rows, int cols, double eps) {
    Tensor t({rows, cols});
    const float e = static_cast<float>(eps);
    const size_t dim = static_cast<size_t>(rows) * cols;
    for (size_t i = 0; i < dim; ++i) t.data[i] = e * dir[i];
    return t;
}

// Sequential reference: one oracle query per probe.
template <OracleLike S>
EpsResult find_epsilon(S& session, const Tensor& direction, const SearchConfig& cfg) {
    if (!direction.all_finite()) throw Error(Errc::non_finite_value, "direction");
    EpsSearch search(cfg);
    while (!search.done()) {
        Tensor probe = scaled_direction(direction.data.data(), direction.shape[0],
                                        direction.shape[1], search.current_probe());
        bool equal = session.query(probe);
        search.advance(!equal, cfg);
    }
    return search.result();
}

// Lockstep extraction: all direction searches advance in rounds, one
// query_batch per round over the still-active searches. Element-wise equal to
// sequential find_epsilon calls.
template <OracleLike S>
Signature extract_signature(S& session, const DirectionSet& directions, const SearchConfig& cfg) {
    cfg.validate();
    const int count = directions.count;
    std::vector<EpsSearch> searches;
    searches.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) searches.emplace_back(cfg);

    const size_t dim = static_cast<size_t>(directions.rows) * directions.cols;
    std::vector<int> active;
    active.reserve(static_cast<size_t>(count));

    while (true) {
        active.clear();
        for (int i = 0; i < count; ++i)
            if (!searches[static_cast<size_t>(i)].done()) active.push_back(i);
        if (active.empty()) break;

        Tensor batch({static_cast<int>(active.size()), directions.rows, directions.cols});
        for (size_t k = 0; k < active.size(); ++k) {
            const int i = active[k];
            const float e = static_cast<float>(searches[static_cast<size_t>(i)].current_probe());
            const float* dir = directions.direction(i);
            float* row = batch.data.data() + k * dim;
            for (size_t j = 0; j < dim; ++j) row[j] = e * dir[j];
        }
        std::vector<bool> equal = session.query_batch(batch);
        for (size_t k = 0; k < active.size(); ++k)
            searches[static_cast<size_t>(active[k])].advance(!equal[k], cfg);
    }

    Signature sig;
    sig.direction_seed = directions.seed;
    sig.epsilons.resize(static_cast<size_t>(count));
    sig.saturated.resize(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        EpsResult r = searches[static_cast<size_t>(i)].result();
        sig.epsilons[static_cast<size_t>(i)] = r.epsilon;
        sig.saturated[static_cast<size_t>(i)] = r.saturated ? 1 : 0;
    }
    return sig;
}

} // namespace persig
