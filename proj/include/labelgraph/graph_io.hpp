#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "labelgraph/features.hpp"
#include "labelgraph/knn_graph.hpp"

namespace lg {

// A graph file optionally embeds the feature matrix it was built from, so
// that ids resolve and sub-graphs can be rebuilt without the original file.
struct GraphBundle {
    KnnGraph graph;
    std::optional<FeatureMatrix> features;
};

// Layout (little-endian): "LGG1", u32 version, u32 n, u32 k, f64 T,
// n*k u32 neighbor indices, n*k f64 similarities, u8 has_features,
// [u64 length + LGF1 bytes], then the 64 hex characters of the SHA-256 of
// everything before them.
// Symmetrized and normalized matrices are rebuilt on load.
std::string encode_graph(const KnnGraph& graph, const FeatureMatrix* features);

// `source` names the file in integrity errors.
GraphBundle decode_graph(std::string_view bytes, const std::string& source);

void write_graph_file(const std::filesystem::path& path, const KnnGraph& graph, const FeatureMatrix* features);
GraphBundle read_graph_file(const std::filesystem::path& path);

// Writes via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace lg
