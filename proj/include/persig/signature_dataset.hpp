#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "persig/binio.hpp"
#include "persig/extractor.hpp"
#include "persig/mnist.hpp"
#include "persig/oracle.hpp"

namespace persig {

struct SignatureRecord {
    uint32_t index = 0; // original position in the source image set
    Signature signature;
    Tensor image; // (28,28)
};

// Persisted (E_x, x) pairs with the exact direction seed and search config
// that produced them, plus per-dimension epsilon statistics.
struct SignatureDataset {
    uint64_t direction_seed = 0;
    int direction_count = 0;
    SearchConfig config;
    std::vector<SignatureRecord> records;
    std::vector<float> stat_mean;
    std::vector<float> stat_std;

    bool has_stats() const {
        return !records.empty() && stat_mean.size() == static_cast<size_t>(direction_count) &&
               stat_std.size() == static_cast<size_t>(direction_count);
    }
};

struct ExtractionStats {
    uint64_t total_queries = 0;
    uint64_t total_flips = 0;
    std::vector<uint64_t> per_image_queries;

    double mean_queries_per_signature() const {
        if (per_image_queries.empty()) return 0.0;
        return static_cast<double>(total_queries) / static_cast<double>(per_image_queries.size());
    }
};

// Population mean and std per dimension; std below 1e-8 is replaced by 1 so
// constant dimensions pass through normalization unscaled.
inline void compute_dataset_stats(SignatureDataset& ds) {
    const size_t dims = static_cast<size_t>(ds.direction_count);
    const size_t n = ds.records.size();
    ds.stat_mean.assign(dims, 0.0f);
    ds.stat_std.assign(dims, 1.0f);
    if (n == 0) return;
    std::vector<double> mean(dims, 0.0), sq(dims, 0.0);
    for (const auto& r : ds.records)
        for (size_t d = 0; d < dims; ++d) mean[d] += r.signature.epsilons[d];
    for (size_t d = 0; d < dims; ++d) mean[d] /= static_cast<double>(n);
    for (const auto& r : ds.records)
        for (size_t d = 0; d < dims; ++d) {
            double diff = r.signature.epsilons[d] - mean[d];
            sq[d] += diff * diff;
        }
    for (size_t d = 0; d < dims; ++d) {
        double sd = std::sqrt(sq[d] / static_cast<double>(n));
        ds.stat_mean[d] = static_cast<float>(mean[d]);
        ds.stat_std[d] = sd < 1e-8 ? 1.0f : static_cast<float>(sd);
    }
}

// One oracle session per image, images distributed across workers. Output is
// ordered by original index, so the result does not depend on parallelism.
inline SignatureDataset build_dataset(const ClassifierModel& model, const ImageSet& images,
                                      const DirectionSet& directions, const SearchConfig& cfg,
                                      int parallelism, ExtractionStats* stats = nullptr) {
    if (images.count() == 0) throw Error(Errc::empty_dataset, "no images to fingerprint");
    cfg.validate();
    const size_t n = images.count();

    SignatureDataset ds;
    ds.direction_seed = directions.seed;
    ds.direction_count = directions.count;
    ds.config = cfg;
    ds.records.resize(n);
    std::vector<uint64_t> queries(n, 0), flips(n, 0);

    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&] {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                Tensor image = images.image(i);
                OracleSession session(model, image);
                Signature sig = extract_signature(session, directions, cfg);
                OracleStats s = session.stats();
                ds.records[i] = SignatureRecord{static_cast<uint32_t>(i), std::move(sig),
                                                std::move(image)};
                queries[i] = s.queries;
                flips[i] = s.flips;
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };

    int workers = std::max(1, parallelism);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    compute_dataset_stats(ds);
    if (stats) {
        stats->per_image_queries = queries;
        stats->total_queries = 0;
        stats->total_flips = 0;
        for (size_t i = 0; i < n; ++i) {
            stats->total_queries += queries[i];
            stats->total_flips += flips[i];
        }
    }
    return ds;
}

inline std::vector<float> normalize_signature(const Signature& sig,
                                              const std::vector<float>& mean,
                                              const std::vector<float>& std_dev) {
    if (sig.epsilons.size() != mean.size() || mean.size() != std_dev.size())
        throw Error(Errc::length_mismatch, "signature vs stats length");
    std::vector<float> out(sig.epsilons.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = (sig.epsilons[i] - mean[i]) / std_dev[i];
    return out;
}

inline std::vector<float> denormalize_signature(const std::vector<float>& normalized,
                                                const std::vector<float>& mean,
                                                const std::vector<float>& std_dev) {
    if (normalized.size() != mean.size() || mean.size() != std_dev.size())
        throw Error(Errc::length_mismatch, "vector vs stats length");
    std::vector<float> out(normalized.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = normalized[i] * std_dev[i] + mean[i];
    return out;
}

// ---------------------------------------------------------------------------
// SignatureDataset file:
//   magic "PSIG-DS1" | u64 direction seed | u32 direction count |
//   f32 eps_start | f32 eps_max | f32 growth | f32 tolerance |
//   u32 max iterations | u32 record count | f32 mean[count] | f32 std[count] |
//   records: u32 index | f32 eps[count] | u8 mask[count] | f32 image[784]
// ---------------------------------------------------------------------------

inline void save_dataset(const SignatureDataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::io_failure, "cannot open " + path + " for write");
    write_magic(f, "PSIG-DS1");
    write_le<uint64_t>(f, ds.direction_seed);
    write_le<uint32_t>(f, static_cast<uint32_t>(ds.direction_count));
    write_le<float>(f, ds.config.eps_start);
    write_le<float>(f, ds.config.eps_max);
    write_le<float>(f, ds.config.growth);
    write_le<float>(f, ds.config.tolerance);
    write_le<uint32_t>(f, static_cast<uint32_t>(ds.config.max_iterations));
    write_le<uint32_t>(f, static_cast<uint32_t>(ds.records.size()));
    write_f32_array(f, ds.stat_mean.data(), ds.stat_mean.size());
    write_f32_array(f, ds.stat_std.data(), ds.stat_std.size());
    for (const auto& r : ds.records) {
        write_le<uint32_t>(f, r.index);
        write_f32_array(f, r.signature.epsilons.data(), r.signature.epsilons.size());
        write_bytes(f, r.signature.saturated.data(), r.signature.saturated.size());
        write_f32_array(f, r.image.data.data(), r.image.data.size());
    }
    if (!f) throw Error(Errc::io_failure, "write failed: " + path);
}

inline SignatureDataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::io_failure, "cannot open " + path);
    expect_magic(f, "PSIG-DS1", "signature dataset");
    SignatureDataset ds;
    ds.direction_seed = read_le<uint64_t>(f);
    ds.direction_count = static_cast<int>(read_le<uint32_t>(f));
    ds.config.eps_start = read_le<float>(f);
    ds.config.eps_max = read_le<float>(f);
    ds.config.growth = read_le<float>(f);
    ds.config.tolerance = read_le<float>(f);
    ds.config.max_iterations = static_cast<int>(read_le<uint32_t>(f));
    uint32_t count = read_le<uint32_t>(f);
    const size_t dims = static_cast<size_t>(ds.direction_count);
    ds.stat_mean.resize(dims);
    ds.stat_std.resize(dims);
    read_f32_array(f, ds.stat_mean.data(), dims);
    read_f32_array(f, ds.stat_std.data(), dims);
    ds.records.resize(count);
    for (auto& r : ds.records) {
        r.index = read_le<uint32_t>(f);
        r.signature.epsilons.resize(dims);
        r.signature.saturated.resize(dims);
        r.signature.direction_seed = ds.direction_seed;
        read_f32_array(f, r.signature.epsilons.data(), dims);
        read_bytes(f, r.signature.saturated.data(), dims);
        r.image = Tensor({28, 28});
        read_f32_array(f, r.image.data.data(), 784);
    }
    return ds;
}

} // namespace persig
