#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>

#include "persig/decoder.hpp"
#include "persig/extractor.hpp"

namespace persig {

// Line-based key=value config with dotted sections. '#' starts a comment,
// blank lines ignored, whitespace around keys/values trimmed.
class KvConfig {
public:
    static KvConfig parse_string(const std::string& text) {
        KvConfig cfg;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            auto pos = t.find('=');
            if (pos == std::string::npos)
                throw Error(Errc::bad_config,
                            "line " + std::to_string(lineno) + " has no '=': " + t);
            cfg.values_[trim(t.substr(0, pos))] = trim(t.substr(pos + 1));
        }
        return cfg;
    }

    static KvConfig parse_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw Error(Errc::io_failure, "cannot open config " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return parse_string(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string str(const std::string& key, const std::string& def) const {
        auto it = values_.find(key);
        return it == values_.end() ? def : it->second;
    }

    std::string require(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw Error(Errc::bad_config, "missing config key " + key);
        return it->second;
    }

    int64_t i64(const std::string& key, int64_t def) const {
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        try {
            return std::stoll(it->second);
        } catch (const std::exception&) {
            throw Error(Errc::bad_config, "key " + key + " is not an integer: " + it->second);
        }
    }

    uint64_t u64(const std::string& key, uint64_t def) const {
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        try {
            return std::stoull(it->second);
        } catch (const std::exception&) {
            throw Error(Errc::bad_config, "key " + key + " is not an integer: " + it->second);
        }
    }

    float f32(const std::string& key, float def) const {
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        try {
            return std::stof(it->second);
        } catch (const std::exception&) {
            throw Error(Errc::bad_config, "key " + key + " is not a number: " + it->second);
        }
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        size_t b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        size_t e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

// Sub-seeds derive from the master seed by fixed offsets, so one stage's
// stream can be re-seeded without disturbing the others.
struct PipelineConfig {
    std::string train_images, train_labels, test_images, test_labels;
    uint64_t master_seed = 42;

    ClassifierTrainConfig classifier;
    int direction_count = 100;
    SearchConfig search;
    int signature_train = 10000;
    int signature_test = 1000;
    DecoderTrainConfig decoder;

    std::string out_dir = "run";
    int parallelism = 1;

    std::string oracle_host = "127.0.0.1";
    uint16_t oracle_port = 7795;
    int oracle_secret_index = 0;

    uint64_t classifier_init_seed() const { return master_seed + 0x101; }
    uint64_t classifier_shuffle_seed() const { return master_seed + 0x102; }
    uint64_t direction_seed() const { return master_seed + 0x103; }
    uint64_t decoder_init_seed() const { return master_seed + 0x104; }
    uint64_t decoder_shuffle_seed() const { return master_seed + 0x105; }
    uint64_t noise_stub_seed() const { return master_seed + 0x106; }

    static PipelineConfig from_kv(const KvConfig& kv) {
        PipelineConfig c;
        c.train_images = kv.str("data.train_images", "");
        c.train_labels = kv.str("data.train_labels", "");
        c.test_images = kv.str("data.test_images", "");
        c.test_labels = kv.str("data.test_labels", "");
        c.master_seed = kv.u64("seed", c.master_seed);

        c.classifier.epochs = static_cast<int>(kv.i64("classifier.epochs", 3));
        c.classifier.batch = static_cast<int>(kv.i64("classifier.batch", 64));
        c.classifier.lr = kv.f32("classifier.lr", 1e-3f);

        c.direction_count = static_cast<int>(kv.i64("directions.count", 100));
        c.search.eps_start = kv.f32("search.eps_start", 0.1f);
        c.search.eps_max = kv.f32("search.eps_max", 50.0f);
        c.search.growth = kv.f32("search.growth", 2.0f);
        c.search.tolerance = kv.f32("search.tolerance", 1e-2f);
        c.search.max_iterations = static_cast<int>(kv.i64("search.max_iterations", 40));

        c.signature_train = static_cast<int>(kv.i64("dataset.train_size", 10000));
        c.signature_test = static_cast<int>(kv.i64("dataset.test_size", 1000));

        c.decoder.epochs = static_cast<int>(kv.i64("decoder.epochs", 30));
        c.decoder.batch = static_cast<int>(kv.i64("decoder.batch", 64));
        c.decoder.lr = kv.f32("decoder.lr", 1e-3f);
        c.decoder.validation_fraction = kv.f32("decoder.validation_fraction", 0.1f);

        c.out_dir = kv.str("out", c.out_dir);
        c.parallelism = static_cast<int>(kv.i64("parallelism", 1));

        c.oracle_host = kv.str("oracle.host", c.oracle_host);
        c.oracle_port = static_cast<uint16_t>(kv.i64("oracle.port", c.oracle_port));
        c.oracle_secret_index = static_cast<int>(kv.i64("oracle.secret_index", 0));

        c.validate();
        return c;
    }

    static PipelineConfig from_file(const std::string& path) {
        return from_kv(KvConfig::parse_file(path));
    }

    void validate() const {
        if (signature_train < 1 || signature_test < 1)
            throw Error(Errc::bad_config, "dataset sizes must be >= 1");
        if (direction_count < 1) throw Error(Errc::bad_config, "direction count must be >= 1");
        if (parallelism < 1) throw Error(Errc::bad_config, "parallelism must be >= 1");
        search.validate();
    }

    void apply_seeds() {
        classifier.shuffle_seed = classifier_shuffle_seed();
        decoder.shuffle_seed = decoder_shuffle_seed();
    }
};

} // namespace persig
