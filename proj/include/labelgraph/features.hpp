#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lg {

// n x d row-major matrix of unit-norm float32 embeddings with one opaque id
// per row. Immutable after construction.
class FeatureMatrix {
public:
    FeatureMatrix() = default;

    // Takes already-normalized rows. Throws Format on shape mismatch,
    // duplicate ids or non-finite values.
    FeatureMatrix(std::size_t n, std::size_t d, std::vector<float> data, std::vector<std::string> ids);

    std::size_t n() const { return n_; }
    std::size_t d() const { return d_; }

    std::span<const float> row(std::size_t i) const { return {data_.data() + i * d_, d_}; }
    std::span<const float> data() const { return data_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::string& id(std::size_t i) const { return ids_[i]; }

    std::optional<std::size_t> index_of(std::string_view id) const;

    // Rows `indices` in the given order, ids carried along.
    FeatureMatrix subset(std::span<const std::size_t> indices) const;

private:
    std::size_t n_ = 0;
    std::size_t d_ = 0;
    std::vector<float> data_;
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Parses a feature file (binary "LGF1" or JSON lines, detected by the magic
// bytes) and L2-normalizes every row. Zero-norm rows and non-finite values are
// rejected with their position.
FeatureMatrix ingest_features(std::string_view bytes);

// Reads `path` and forwards to ingest_features. Missing file -> NotFound.
FeatureMatrix read_feature_file(const std::filesystem::path& path);

// Decodes an LGF1 payload produced by encode_features without renormalizing,
// so the rows come back bit-identical.
FeatureMatrix decode_normalized_features(std::string_view bytes);

// Binary LGF1 encoding (magic, u32 n, u32 d, f32 data, u16-prefixed ids).
std::string encode_features(const FeatureMatrix& features);

// Same layout from raw, un-normalized rows; used by generators that want the
// file to carry the original vectors.
std::string encode_raw_features(std::size_t n, std::size_t d, std::span<const float> data,
                                std::span<const std::string> ids);

// Dot product accumulated in double, in index order. Rows are unit-norm, so
// this is the cosine similarity.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

std::string read_file_bytes(const std::filesystem::path& path);

}  // namespace lg
