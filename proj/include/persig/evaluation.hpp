#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "persig/classifier.hpp"
#include "persig/decoder.hpp"
#include "persig/signature_dataset.hpp"

namespace persig {

struct EvalReport {
    size_t records = 0;
    float mean_mse = 0.0f;
    float baseline_mse = 0.0f;
    float agreement = 0.0f;       // fraction with matching top-1 class
    float noise_agreement = 0.0f; // seeded random-image stub, same metric
    bool beats_baseline = false;
    double mean_queries = 0.0; // oracle queries per signature, from the manifest
    struct PerClass {
        size_t count = 0;
        float agreement = 0.0f;
    };
    std::array<PerClass, 10> per_class{};
};

inline Tensor mean_image(const ImageSet& train) {
    if (train.count() == 0) throw Error(Errc::empty_dataset, "mean image of empty set");
    Tensor mean({28, 28});
    std::vector<double> acc(784, 0.0);
    for (size_t i = 0; i < train.count(); ++i) {
        const float* img = train.pixels.data() + i * 784;
        for (size_t p = 0; p < 784; ++p) acc[p] += img[p];
    }
    for (size_t p = 0; p < 784; ++p)
        mean.data[p] = static_cast<float>(acc[p] / static_cast<double>(train.count()));
    return mean;
}

inline float baseline_mse(const Tensor& mean_img, const SignatureDataset& targets) {
    if (targets.records.empty()) throw Error(Errc::empty_dataset, "baseline over empty dataset");
    double total = 0.0;
    for (const auto& r : targets.records)
        total += static_cast<double>(mse_loss(mean_img, r.image));
    return static_cast<float>(total / static_cast<double>(targets.records.size()));
}

// Metric core, parameterized over the reconstruction so the identity and
// noise-stub baselines can run through the exact same code path.
inline EvalReport evaluate_with(const ClassifierModel& model, const SignatureDataset& dataset,
                                const std::function<Tensor(const SignatureRecord&)>& reconstruct_fn,
                                const Tensor* mean_img = nullptr, uint64_t noise_seed = 0,
                                double mean_queries = 0.0) {
    if (dataset.records.empty()) throw Error(Errc::empty_dataset, "evaluate over empty dataset");
    EvalReport report;
    report.records = dataset.records.size();
    report.mean_queries = mean_queries;

    Rng noise_rng(noise_seed);
    double mse_total = 0.0;
    size_t agree = 0, noise_agree = 0;
    std::array<size_t, 10> class_count{}, class_agree{};

    for (const auto& rec : dataset.records) {
        Tensor recon = reconstruct_fn(rec);
        if (recon.shape != std::vector<int>{28, 28})
            throw Error(Errc::shape_mismatch, "reconstruction must be (28,28)");
        mse_total += static_cast<double>(mse_loss(recon, rec.image));

        int orig_class = predict_top1(model, rec.image);
        int recon_class = predict_top1(model, recon);
        bool match = orig_class == recon_class;
        if (match) ++agree;
        class_count[static_cast<size_t>(orig_class)] += 1;
        if (match) class_agree[static_cast<size_t>(orig_class)] += 1;

        Tensor noise({28, 28});
        for (auto& v : noise.data) v = static_cast<float>(noise_rng.uniform01());
        if (predict_top1(model, noise) == orig_class) ++noise_agree;
    }

    report.mean_mse = static_cast<float>(mse_total / static_cast<double>(report.records));
    report.agreement = static_cast<float>(agree) / static_cast<float>(report.records);
    report.noise_agreement = static_cast<float>(noise_agree) / static_cast<float>(report.records);
    for (int c = 0; c < 10; ++c) {
        report.per_class[static_cast<size_t>(c)].count = class_count[static_cast<size_t>(c)];
        report.per_class[static_cast<size_t>(c)].agreement =
            class_count[static_cast<size_t>(c)] == 0
                ? 0.0f
                : static_cast<float>(class_agree[static_cast<size_t>(c)]) /
                      static_cast<float>(class_count[static_cast<size_t>(c)]);
    }
    if (mean_img) {
        report.baseline_mse = baseline_mse(*mean_img, dataset);
        report.beats_baseline = report.mean_mse < report.baseline_mse;
    }
    return report;
}

inline EvalReport evaluate(const DecoderModel& decoder, const ClassifierModel& model,
                           const SignatureDataset& dataset, const Tensor* mean_img = nullptr,
                           uint64_t noise_seed = 0, double mean_queries = 0.0) {
    if (decoder.direction_seed != dataset.direction_seed)
        throw Error(Errc::direction_set_mismatch,
                    "dataset direction seed " + std::to_string(dataset.direction_seed) +
                        ", decoder bound to " + std::to_string(decoder.direction_seed));
    return evaluate_with(
        model, dataset,
        [&decoder](const SignatureRecord& rec) { return reconstruct(decoder, rec.signature); },
        mean_img, noise_seed, mean_queries);
}

inline std::vector<size_t> filter_by_class(const SignatureDataset& dataset,
                                           const ClassifierModel& model, int cls) {
    std::vector<size_t> out;
    for (size_t i = 0; i < dataset.records.size(); ++i)
        if (predict_top1(model, dataset.records[i].image) == cls) out.push_back(i);
    return out;
}

// ---------------------------------------------------------------------------
// Binary PGM (P5) export: originals on top, reconstructions below, 1-pixel
// separators at gray value 0.5, pixel byte = round(value*255).
// For n pairs: width n*28 + (n-1), height 57.
// ---------------------------------------------------------------------------

struct PgmImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> bytes;
};

inline uint8_t pixel_byte(float v) {
    long b = std::lround(static_cast<double>(v) * 255.0);
    if (b < 0) b = 0;
    if (b > 255) b = 255;
    return static_cast<uint8_t>(b);
}

inline PgmImage make_grid(const std::vector<Tensor>& originals,
                          const std::vector<Tensor>& reconstructions) {
    if (originals.size() != reconstructions.size())
        throw Error(Errc::count_mismatch, "original vs reconstruction counts");
    if (originals.empty()) throw Error(Errc::count_mismatch, "grid needs at least one pair");
    const int n = static_cast<int>(originals.size());
    PgmImage img;
    img.width = n * 28 + (n - 1);
    img.height = 2 * 28 + 1;
    img.bytes.assign(static_cast<size_t>(img.width) * img.height, pixel_byte(0.5f));

    auto blit = [&](const Tensor& t, int x0, int y0) {
        if (t.shape != std::vector<int>{28, 28})
            throw Error(Errc::shape_mismatch, "grid images must be (28,28)");
        for (int y = 0; y < 28; ++y)
            for (int x = 0; x < 28; ++x)
                img.bytes[static_cast<size_t>(y0 + y) * img.width + (x0 + x)] =
                    pixel_byte(t.data[static_cast<size_t>(y) * 28 + x]);
    };
    for (int k = 0; k < n; ++k) {
        blit(originals[static_cast<size_t>(k)], k * 29, 0);
        blit(reconstructions[static_cast<size_t>(k)], k * 29, 29);
    }
    return img;
}

inline void write_pgm(const PgmImage& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::io_failure, "cannot open " + path + " for write");
    f << "P5\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.bytes.data()),
            static_cast<std::streamsize>(img.bytes.size()));
    if (!f) throw Error(Errc::io_failure, "write failed: " + path);
}

inline void export_grid(const std::vector<Tensor>& originals,
                        const std::vector<Tensor>& reconstructions, const std::string& path) {
    write_pgm(make_grid(originals, reconstructions), path);
}

inline PgmImage read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::io_failure, "cannot open " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw Error(Errc::bad_magic, "not a P5 PGM: " + path);
    int width = 0, height = 0, maxval = 0;
    f >> width >> height >> maxval;
    if (!f || width <= 0 || height <= 0 || maxval != 255)
        throw Error(Errc::bad_shape, "unsupported PGM header in " + path);
    f.get(); // single whitespace after maxval
    PgmImage img;
    img.width = width;
    img.height = height;
    img.bytes.resize(static_cast<size_t>(width) * height);
    f.read(reinterpret_cast<char*>(img.bytes.data()),
           static_cast<std::streamsize>(img.bytes.size()));
    if (static_cast<size_t>(f.gcount()) != img.bytes.size())
        throw Error(Errc::truncated, "PGM payload short in " + path);
    return img;
}

// ---------------------------------------------------------------------------
// Report file: key=value lines plus a per-class table.
// ---------------------------------------------------------------------------

inline void write_report(const EvalReport& r, const std::string& path) {
    std::vector<std::pair<std::string, std::string>> kv = {
        {"records", std::to_string(r.records)},
        {"mean_mse", format_float(r.mean_mse)},
        {"baseline_mse", format_float(r.baseline_mse)},
        {"beats_baseline", r.beats_baseline ? "1" : "0"},
        {"agreement", format_float(r.agreement)},
        {"noise_agreement", format_float(r.noise_agreement)},
        {"mean_queries", format_float(static_cast<float>(r.mean_queries))},
    };
    for (int c = 0; c < 10; ++c) {
        const auto& pc = r.per_class[static_cast<size_t>(c)];
        kv.push_back({"class_" + std::to_string(c) + ".count", std::to_string(pc.count)});
        kv.push_back({"class_" + std::to_string(c) + ".agreement", format_float(pc.agreement)});
    }
    write_kv_file(path, kv);
}

inline EvalReport read_report(const std::string& path) {
    auto kv = read_kv_file(path);
    auto get = [&](const char* key) -> std::string {
        auto it = kv.find(key);
        if (it == kv.end()) throw Error(Errc::io_failure, std::string("report lacks ") + key);
        return it->second;
    };
    EvalReport r;
    r.records = std::stoull(get("records"));
    r.mean_mse = std::stof(get("mean_mse"));
    r.baseline_mse = std::stof(get("baseline_mse"));
    r.beats_baseline = get("beats_baseline") == "1";
    r.agreement = std::stof(get("agreement"));
    r.noise_agreement = std::stof(get("noise_agreement"));
    r.mean_queries = std::stod(get("mean_queries"));
    for (int c = 0; c < 10; ++c) {
        auto& pc = r.per_class[static_cast<size_t>(c)];
        pc.count = std::stoull(get(("class_" + std::to_string(c) + ".count").c_str()));
        pc.agreement = std::stof(get(("class_" + std::to_string(c) + ".agreement").c_str()));
    }
    return r;
}

} // namespace persig
