#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "persig/binio.hpp"
#include "persig/tensor.hpp"

namespace persig {

// ---------------------------------------------------------------------------
// MNIST IDX container, bit-exact:
//   images: u32be magic 2051 | u32be count | u32be rows | u32be cols | pixels u8
//   labels: u32be magic 2049 | u32be count | labels u8
// Pixels normalise to [0,1] as v/255.
// ---------------------------------------------------------------------------

constexpr uint32_t kIdxImageMagic = 2051;
constexpr uint32_t kIdxLabelMagic = 2049;

struct ParsedImages {
    uint32_t count = 0;
    uint32_t rows = 0;
    uint32_t cols = 0;
    std::vector<float> pixels; // count*rows*cols in [0,1]
};

struct ImageSet {
    uint32_t rows = 28;
    uint32_t cols = 28;
    std::vector<float> pixels;
    std::vector<uint8_t> labels;

    size_t count() const { return labels.size(); }

    Tensor image(size_t i) const {
        Tensor t({static_cast<int>(rows), static_cast<int>(cols)});
        const float* src = pixels.data() + i * rows * cols;
        std::copy(src, src + rows * cols, t.data.begin());
        return t;
    }

    ImageSet slice(size_t offset, size_t n) const {
        if (offset + n > count()) throw Error(Errc::count_mismatch, "slice out of range");
        ImageSet out;
        out.rows = rows;
        out.cols = cols;
        out.pixels.assign(pixels.begin() + static_cast<ptrdiff_t>(offset * rows * cols),
                          pixels.begin() + static_cast<ptrdiff_t>((offset + n) * rows * cols));
        out.labels.assign(labels.begin() + static_cast<ptrdiff_t>(offset),
                          labels.begin() + static_cast<ptrdiff_t>(offset + n));
        return out;
    }
};

inline ParsedImages parse_idx_images(const std::vector<uint8_t>& bytes, bool strict_28 = true) {
    if (bytes.size() < 16) throw Error(Errc::truncated, "image header needs 16 bytes");
    uint32_t magic = read_u32_be(bytes.data());
    if (magic != kIdxImageMagic)
        throw Error(Errc::bad_magic, "image magic " + std::to_string(magic));
    ParsedImages out;
    out.count = read_u32_be(bytes.data() + 4);
    out.rows = read_u32_be(bytes.data() + 8);
    out.cols = read_u32_be(bytes.data() + 12);
    if (strict_28 && (out.rows != 28 || out.cols != 28))
        throw Error(Errc::bad_shape, std::to_string(out.rows) + "x" + std::to_string(out.cols));
    size_t need = static_cast<size_t>(out.count) * out.rows * out.cols;
    if (bytes.size() - 16 < need)
        throw Error(Errc::truncated, "payload " + std::to_string(bytes.size() - 16) +
                                         " bytes, header claims " + std::to_string(need));
    out.pixels.resize(need);
    for (size_t i = 0; i < need; ++i) out.pixels[i] = static_cast<float>(bytes[16 + i]) / 255.0f;
    return out;
}

inline std::vector<uint8_t> parse_idx_labels(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8) throw Error(Errc::truncated, "label header needs 8 bytes");
    uint32_t magic = read_u32_be(bytes.data());
    if (magic != kIdxLabelMagic)
        throw Error(Errc::bad_magic, "label magic " + std::to_string(magic));
    uint32_t count = read_u32_be(bytes.data() + 4);
    if (bytes.size() - 8 < count)
        throw Error(Errc::truncated, "payload " + std::to_string(bytes.size() - 8) +
                                         " labels, header claims " + std::to_string(count));
    std::vector<uint8_t> labels(bytes.begin() + 8, bytes.begin() + 8 + count);
    for (uint8_t v : labels)
        if (v > 9) throw Error(Errc::label_out_of_range, "label byte " + std::to_string(v));
    return labels;
}

inline ImageSet load_split(const std::string& images_path, const std::string& labels_path,
                           bool strict_28 = true) {
    ParsedImages imgs = parse_idx_images(read_file_bytes(images_path), strict_28);
    std::vector<uint8_t> labels = parse_idx_labels(read_file_bytes(labels_path));
    if (imgs.count != labels.size())
        throw Error(Errc::count_mismatch, std::to_string(imgs.count) + " images vs " +
                                              std::to_string(labels.size()) + " labels");
    ImageSet out;
    out.rows = imgs.rows == 0 ? 28 : imgs.rows;
    out.cols = imgs.cols == 0 ? 28 : imgs.cols;
    out.pixels = std::move(imgs.pixels);
    out.labels = std::move(labels);
    return out;
}

// Inverse of parse: emits IDX bytes that reparse to bitwise-identical pixels.
inline std::vector<uint8_t> images_to_idx(const ImageSet& set) {
    std::vector<uint8_t> out;
    out.reserve(16 + set.pixels.size());
    write_u32_be(out, kIdxImageMagic);
    write_u32_be(out, static_cast<uint32_t>(set.count()));
    write_u32_be(out, set.rows);
    write_u32_be(out, set.cols);
    for (float p : set.pixels) out.push_back(static_cast<uint8_t>(std::lround(p * 255.0f)));
    return out;
}

inline std::vector<uint8_t> labels_to_idx(const ImageSet& set) {
    std::vector<uint8_t> out;
    out.reserve(8 + set.labels.size());
    write_u32_be(out, kIdxLabelMagic);
    write_u32_be(out, static_cast<uint32_t>(set.count()));
    out.insert(out.end(), set.labels.begin(), set.labels.end());
    return out;
}

} // namespace persig
