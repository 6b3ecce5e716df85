#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <string>

#include "persig/config.hpp"
#include "persig/evaluation.hpp"
#include "persig/wire.hpp"

namespace persig {

// ---------------------------------------------------------------------------
// Stage orchestration. Every stage reads declared upstream artifacts only and
// records file digests plus timings in manifest.txt, so stages re-run
// independently and `verify` can re-derive the digests.
// ---------------------------------------------------------------------------

namespace artifact {

inline std::string classifier_params(const std::string& out) { return out + "/classifier.pnn"; }
inline std::string classifier_meta(const std::string& out) { return out + "/classifier.meta"; }
inline std::string directions(const std::string& out) { return out + "/directions.pdir"; }
inline std::string train_dataset(const std::string& out) { return out + "/sig_train.pds"; }
inline std::string test_dataset(const std::string& out) { return out + "/sig_test.pds"; }
inline std::string decoder_params(const std::string& out) { return out + "/decoder.pnn"; }
inline std::string decoder_meta(const std::string& out) { return out + "/decoder.meta"; }
inline std::string report(const std::string& out) { return out + "/report.txt"; }
inline std::string test_grid(const std::string& out) { return out + "/grid_test.pgm"; }
inline std::string class_grid(const std::string& out, int cls) {
    return out + "/grid_class_" + std::to_string(cls) + ".pgm";
}
inline std::string manifest(const std::string& out) { return out + "/manifest.txt"; }

} // namespace artifact

inline std::string digest_hex(uint64_t digest) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

class Manifest {
public:
    explicit Manifest(const std::string& out_dir)
        : path_(artifact::manifest(out_dir)), out_dir_(out_dir) {
        if (std::filesystem::exists(path_)) entries_ = read_kv_file(path_);
    }

    void record_file(const std::string& stage, const std::string& file_path) {
        std::string rel = std::filesystem::path(file_path).filename().string();
        entries_["stage." + stage + ".file." + rel] = digest_hex(file_digest(file_path));
    }

    void record_value(const std::string& key, const std::string& value) {
        entries_[key] = value;
    }

    void record_seconds(const std::string& stage, double seconds) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", seconds);
        entries_["stage." + stage + ".seconds"] = buf;
    }

    std::string value(const std::string& key, const std::string& def = "") const {
        auto it = entries_.find(key);
        return it == entries_.end() ? def : it->second;
    }

    void save() const {
        std::vector<std::pair<std::string, std::string>> kv(entries_.begin(), entries_.end());
        write_kv_file(path_, kv);
    }

    // Re-derives every recorded digest; returns the mismatched or missing files.
    std::vector<std::string> verify() const {
        std::vector<std::string> bad;
        for (const auto& [key, digest] : entries_) {
            auto pos = key.find(".file.");
            if (pos == std::string::npos || key.rfind("stage.", 0) != 0) continue;
            std::string file = out_dir_ + "/" + key.substr(pos + 6);
            if (!std::filesystem::exists(file)) {
                bad.push_back(file + " (missing)");
                continue;
            }
            if (digest_hex(file_digest(file)) != digest) bad.push_back(file + " (digest mismatch)");
        }
        return bad;
    }

private:
    std::string path_;
    std::string out_dir_;
    std::map<std::string, std::string> entries_;
};

namespace detail {

class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline void require_artifact(const std::string& path, const std::string& producer) {
    if (!std::filesystem::exists(path))
        throw Error(Errc::missing_artifact, path + " (run " + producer + " first)");
}

inline ImageSet load_train_set(const PipelineConfig& cfg) {
    if (cfg.train_images.empty() || cfg.train_labels.empty())
        throw Error(Errc::bad_config, "data.train_images / data.train_labels not set");
    require_artifact(cfg.train_images, "nothing; provide MNIST");
    require_artifact(cfg.train_labels, "nothing; provide MNIST");
    return load_split(cfg.train_images, cfg.train_labels);
}

inline ImageSet load_test_set(const PipelineConfig& cfg) {
    if (cfg.test_images.empty() || cfg.test_labels.empty())
        throw Error(Errc::bad_config, "data.test_images / data.test_labels not set");
    require_artifact(cfg.test_images, "nothing; provide MNIST");
    require_artifact(cfg.test_labels, "nothing; provide MNIST");
    return load_split(cfg.test_images, cfg.test_labels);
}

} // namespace detail

inline void cmd_train_classifier(PipelineConfig cfg, std::ostream& log) {
    cfg.apply_seeds();
    std::filesystem::create_directories(cfg.out_dir);
    detail::StageTimer timer;

    ImageSet train = detail::load_train_set(cfg);
    ImageSet test = detail::load_test_set(cfg);
    log << "training classifier on " << train.count() << " images, seed "
        << cfg.classifier_init_seed() << "\n";
    ClassifierModel model = build_default_classifier(cfg.classifier_init_seed());
    train_classifier(model, train, &test, cfg.classifier, &log);
    save_classifier(model, artifact::classifier_params(cfg.out_dir),
                    artifact::classifier_meta(cfg.out_dir));

    Manifest manifest(cfg.out_dir);
    manifest.record_file("classifier", artifact::classifier_params(cfg.out_dir));
    manifest.record_file("classifier", artifact::classifier_meta(cfg.out_dir));
    manifest.record_seconds("classifier", timer.seconds());
    manifest.record_value("classifier.accuracy", format_float(model.accuracy));
    manifest.save();
    log << "classifier accuracy " << model.accuracy << " (" << timer.seconds() << "s)\n";
}

inline void cmd_extract(PipelineConfig cfg, std::ostream& log) {
    cfg.apply_seeds();
    detail::require_artifact(artifact::classifier_params(cfg.out_dir), "train-classifier");
    ClassifierModel model = load_classifier(artifact::classifier_params(cfg.out_dir),
                                            artifact::classifier_meta(cfg.out_dir));
    ImageSet train = detail::load_train_set(cfg);
    ImageSet test = detail::load_test_set(cfg);
    if (train.count() < static_cast<size_t>(cfg.signature_train) ||
        test.count() < static_cast<size_t>(cfg.signature_test))
        throw Error(Errc::count_mismatch, "dataset sizes exceed available images");

    DirectionSet dirs = generate_directions(cfg.direction_seed(), cfg.direction_count);
    save_directions(dirs, artifact::directions(cfg.out_dir));

    Manifest manifest(cfg.out_dir);
    detail::StageTimer timer;
    log << "extracting " << cfg.signature_train << " train signatures, parallelism "
        << cfg.parallelism << "\n";
    ExtractionStats train_stats;
    SignatureDataset ds_train =
        build_dataset(model, train.slice(0, static_cast<size_t>(cfg.signature_train)), dirs,
                      cfg.search, cfg.parallelism, &train_stats);
    save_dataset(ds_train, artifact::train_dataset(cfg.out_dir));
    log << "train extraction: " << train_stats.total_queries << " queries ("
        << train_stats.mean_queries_per_signature() << " per signature)\n";

    log << "extracting " << cfg.signature_test << " test signatures\n";
    ExtractionStats test_stats;
    SignatureDataset ds_test =
        build_dataset(model, test.slice(0, static_cast<size_t>(cfg.signature_test)), dirs,
                      cfg.search, cfg.parallelism, &test_stats);
    save_dataset(ds_test, artifact::test_dataset(cfg.out_dir));
    log << "test extraction: " << test_stats.total_queries << " queries ("
        << test_stats.mean_queries_per_signature() << " per signature)\n";

    manifest.record_file("extract", artifact::directions(cfg.out_dir));
    manifest.record_file("extract", artifact::train_dataset(cfg.out_dir));
    manifest.record_file("extract", artifact::test_dataset(cfg.out_dir));
    manifest.record_seconds("extract", timer.seconds());
    manifest.record_value("oracle.train.queries", std::to_string(train_stats.total_queries));
    manifest.record_value("oracle.train.flips", std::to_string(train_stats.total_flips));
    manifest.record_value("oracle.train.mean_queries",
                          format_float(static_cast<float>(train_stats.mean_queries_per_signature())));
    manifest.record_value("oracle.test.queries", std::to_string(test_stats.total_queries));
    manifest.record_value("oracle.test.flips", std::to_string(test_stats.total_flips));
    manifest.record_value("oracle.test.mean_queries",
                          format_float(static_cast<float>(test_stats.mean_queries_per_signature())));
    manifest.save();
}

inline void cmd_train_decoder(PipelineConfig cfg, std::ostream& log) {
    cfg.apply_seeds();
    detail::require_artifact(artifact::train_dataset(cfg.out_dir), "extract");
    SignatureDataset ds = load_dataset(artifact::train_dataset(cfg.out_dir));
    detail::StageTimer timer;
    log << "training decoder on " << ds.records.size() << " records, seed "
        << cfg.decoder_init_seed() << "\n";
    DecoderModel decoder = build_default_decoder(cfg.decoder_init_seed(), ds.direction_count);
    train_decoder(decoder, ds, cfg.decoder, &log);
    save_decoder(decoder, artifact::decoder_params(cfg.out_dir),
                 artifact::decoder_meta(cfg.out_dir));

    Manifest manifest(cfg.out_dir);
    manifest.record_file("decoder", artifact::decoder_params(cfg.out_dir));
    manifest.record_file("decoder", artifact::decoder_meta(cfg.out_dir));
    manifest.record_seconds("decoder", timer.seconds());
    manifest.save();
    log << "decoder final train mse " << decoder.final_train_loss << " val mse "
        << decoder.final_val_loss << " (" << timer.seconds() << "s)\n";
}

inline EvalReport cmd_evaluate(PipelineConfig cfg, std::ostream& log) {
    cfg.apply_seeds();
    detail::require_artifact(artifact::classifier_params(cfg.out_dir), "train-classifier");
    detail::require_artifact(artifact::decoder_params(cfg.out_dir), "train-decoder");
    detail::require_artifact(artifact::test_dataset(cfg.out_dir), "extract");

    ClassifierModel model = load_classifier(artifact::classifier_params(cfg.out_dir),
                                            artifact::classifier_meta(cfg.out_dir));
    DecoderModel decoder = load_decoder(artifact::decoder_params(cfg.out_dir),
                                        artifact::decoder_meta(cfg.out_dir));
    SignatureDataset ds = load_dataset(artifact::test_dataset(cfg.out_dir));
    ImageSet train = detail::load_train_set(cfg);

    detail::StageTimer timer;
    Manifest manifest(cfg.out_dir);
    double mean_queries = 0.0;
    if (std::string v = manifest.value("oracle.test.mean_queries"); !v.empty())
        mean_queries = std::stod(v);

    Tensor mean_img = mean_image(train);
    EvalReport report =
        evaluate(decoder, model, ds, &mean_img, cfg.noise_stub_seed(), mean_queries);
    write_report(report, artifact::report(cfg.out_dir));

    // Two-row grid of the first 10 held-out pairs, then one per digit class.
    auto grid_for = [&](const std::vector<size_t>& idx, const std::string& path) {
        if (idx.empty()) return false;
        std::vector<Tensor> originals, recons;
        for (size_t i : idx) {
            originals.push_back(ds.records[i].image);
            recons.push_back(reconstruct(decoder, ds.records[i].signature));
        }
        export_grid(originals, recons, path);
        return true;
    };
    std::vector<size_t> first10;
    for (size_t i = 0; i < std::min<size_t>(10, ds.records.size()); ++i) first10.push_back(i);
    grid_for(first10, artifact::test_grid(cfg.out_dir));
    manifest.record_file("evaluate", artifact::test_grid(cfg.out_dir));
    for (int cls = 0; cls < 10; ++cls) {
        std::vector<size_t> members = filter_by_class(ds, model, cls);
        if (members.size() > 10) members.resize(10);
        if (grid_for(members, artifact::class_grid(cfg.out_dir, cls)))
            manifest.record_file("evaluate", artifact::class_grid(cfg.out_dir, cls));
    }

    manifest.record_file("evaluate", artifact::report(cfg.out_dir));
    manifest.record_seconds("evaluate", timer.seconds());
    manifest.save();

    log << "records " << report.records << "\n"
        << "mean mse " << report.mean_mse << " baseline " << report.baseline_mse
        << (report.beats_baseline ? " (beats baseline)" : " (does NOT beat baseline)") << "\n"
        << "class agreement " << report.agreement << " noise stub " << report.noise_agreement
        << "\n";
    return report;
}

inline EvalReport cmd_run_all(const PipelineConfig& cfg, std::ostream& log) {
    cmd_train_classifier(cfg, log);
    cmd_extract(cfg, log);
    cmd_train_decoder(cfg, log);
    return cmd_evaluate(cfg, log);
}

inline bool cmd_verify(const PipelineConfig& cfg, std::ostream& log) {
    detail::require_artifact(artifact::manifest(cfg.out_dir), "any stage");
    Manifest manifest(cfg.out_dir);
    std::vector<std::string> bad = manifest.verify();
    if (bad.empty()) {
        log << "manifest ok\n";
        return true;
    }
    for (const auto& b : bad) log << "MISMATCH " << b << "\n";
    return false;
}

// Serves the wire protocol on the configured endpoint; the secret is the
// configured test-set image. Blocks until the process is interrupted.
inline void cmd_serve_oracle(PipelineConfig cfg, std::ostream& log) {
    detail::require_artifact(artifact::classifier_params(cfg.out_dir), "train-classifier");
    ClassifierModel model = load_classifier(artifact::classifier_params(cfg.out_dir),
                                            artifact::classifier_meta(cfg.out_dir));
    ImageSet test = detail::load_test_set(cfg);
    if (cfg.oracle_secret_index < 0 ||
        static_cast<size_t>(cfg.oracle_secret_index) >= test.count())
        throw Error(Errc::bad_config, "oracle.secret_index out of range");
    Tensor secret = test.image(static_cast<size_t>(cfg.oracle_secret_index));
    OracleServer server(model, secret, cfg.oracle_host, cfg.oracle_port);
    log << "serving equality oracle on " << cfg.oracle_host << ":" << server.port() << "\n";
    server.run();
}

} // namespace persig
