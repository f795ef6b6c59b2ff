#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "labelgraph/knn_graph.hpp"
#include "labelgraph/labels.hpp"

namespace lg {

inline constexpr int kDefaultIterations = 20;

// One-hot row for every sample with a given class (trusted or not), zero
// rows elsewhere.
SoftLabelMatrix init_label_matrix(const LabelState& labels);

struct PropagationOptions {
    int iterations = kDefaultIterations;
    // Stop once the largest entry change in an iteration falls below this.
    std::optional<double> early_stop_tolerance;
    // Called with t = 0 (initial matrix) and after every iteration.
    std::function<void(int, const SoftLabelMatrix&)> observer;
};

// Label propagation over the normalized graph operator: each round computes
// normalized * Y, keeps the result for untrusted rows and restores trusted
// rows to their initial one-hot. With no trusted rows this is plain
// diffusion from the initial labels.
SoftLabelMatrix propagate(const KnnGraph& graph, const LabelState& labels, const PropagationOptions& options = {});
SoftLabelMatrix propagate(const KnnGraph& graph, const LabelState& labels, int iterations);

struct PseudoLabels {
    std::vector<std::int32_t> classes;  // kUndetermined for all-zero rows
    std::vector<double> confidence;     // max / row sum, 0 for all-zero rows
};

PseudoLabels pseudo_labels(const SoftLabelMatrix& soft);

// Argmax with ties to the lower class; kUndetermined when every entry is 0.
std::int32_t argmax_class(std::span<const double> row);

// Weighted vote over each target's original k neighbors using the
// symmetrized adjacency weights. `label_rows` is n x num_classes; a target
// whose neighbors all have zero rows is kUndetermined.
std::vector<std::int32_t> weighted_knn_classify(const KnnGraph& graph, std::span<const double> label_rows,
                                                std::size_t num_classes, std::span<const std::size_t> targets);

// Hard-label form: kUndetermined entries contribute nothing.
std::vector<std::int32_t> weighted_knn_classify(const KnnGraph& graph, std::span<const std::int32_t> labels,
                                                std::size_t num_classes, std::span<const std::size_t> targets);

struct LabelErrorCandidate {
    std::size_t index;
    double score;
};

// For every sample with a given class: 1 - soft[given] / row sum (0 for an
// all-zero row). Sorted by descending score, ties by index.
std::vector<LabelErrorCandidate> label_error_scores(const SoftLabelMatrix& soft, const LabelState& labels);

}  // namespace lg
