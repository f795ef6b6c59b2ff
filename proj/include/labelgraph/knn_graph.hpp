#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "labelgraph/csr.hpp"
#include "labelgraph/features.hpp"

namespace lg {

// Exact k-nearest-neighbor similarity graph.
//
// Edge weights are exp((s - 1) / T) for cosine similarity s. That is the
// weight exp(s / T) rescaled by the global constant exp(-1 / T), which keeps
// small temperatures finite and leaves the normalized operator unchanged.
// raw_weight() recovers the unscaled value.
class KnnGraph {
public:
    KnnGraph() = default;

    std::size_t n() const { return n_; }
    std::size_t k() const { return k_; }
    double temperature() const { return temperature_; }

    // Directed k-NN lists before symmetrization, ordered by decreasing
    // similarity (ties: lower index first).
    std::span<const std::uint32_t> neighbors(std::size_t i) const { return {neighbors_.data() + i * k_, k_}; }
    std::span<const double> neighbor_similarities(std::size_t i) const {
        return {neighbor_sims_.data() + i * k_, k_};
    }

    // Symmetrized W = max(W, W^T), its row sums, and D^-1/2 W D^-1/2.
    const CsrMatrix& adjacency() const { return adjacency_; }
    const std::vector<double>& degree() const { return degree_; }
    const CsrMatrix& normalized() const { return normalized_; }

    // Weight of the stored edge for a similarity value.
    double edge_weight(double similarity) const;
    // exp(s / T) without the global rescaling; may overflow to inf for tiny T.
    double raw_weight(double similarity) const;

    std::size_t edge_count() const { return adjacency_.nnz(); }

    // Assembles a graph from directed neighbor lists (n*k entries each).
    // Used by build_knn_graph and by deserialization.
    static KnnGraph from_neighbors(std::size_t n, std::size_t k, double temperature,
                                   std::vector<std::uint32_t> neighbors, std::vector<double> similarities);

    friend bool operator==(const KnnGraph&, const KnnGraph&) = default;

private:
    std::size_t n_ = 0;
    std::size_t k_ = 0;
    double temperature_ = 1.0;
    std::vector<std::uint32_t> neighbors_;
    std::vector<double> neighbor_sims_;
    CsrMatrix adjacency_;
    std::vector<double> degree_;
    CsrMatrix normalized_;
};

// Requires 1 <= k < n and temperature > 0 (Parameter error otherwise).
KnnGraph build_knn_graph(const FeatureMatrix& features, std::size_t k, double temperature);

// Row sums of W.
std::vector<double> row_degrees(const CsrMatrix& w);

// D^-1/2 W D^-1/2 with the sparsity pattern of W. A zero-degree row raises a
// Degenerate error naming the node.
CsrMatrix normalize_symmetric(const CsrMatrix& w);

}  // namespace lg
