#include "labelgraph/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "labelgraph/error.hpp"

namespace lg {

SoftLabelMatrix init_label_matrix(const LabelState& labels) {
    SoftLabelMatrix y;
    y.n = labels.n();
    y.num_classes = labels.num_classes;
    y.scores.assign(y.n * y.num_classes, 0.0);
    for (std::size_t i = 0; i < y.n; ++i) {
        if (labels.given[i]) y.scores[i * y.num_classes + std::size_t(*labels.given[i])] = 1.0;
    }
    return y;
}

SoftLabelMatrix propagate(const KnnGraph& graph, const LabelState& labels, const PropagationOptions& options) {
    labels.validate();
    if (graph.n() != labels.n()) {
        fail(ErrorKind::Parameter, "graph has " + std::to_string(graph.n()) + " nodes but labels cover " +
                                       std::to_string(labels.n()));
    }
    if (options.iterations < 1) fail(ErrorKind::Parameter, "iterations must be >= 1");
    if (labels.labeled_count() == 0) fail(ErrorKind::Validation, "nothing to propagate");

    const SoftLabelMatrix initial = init_label_matrix(labels);
    const std::size_t c = initial.num_classes;
    std::vector<std::size_t> clamped;
    for (std::size_t i = 0; i < labels.n(); ++i) {
        if (labels.trusted[i]) clamped.push_back(i);
    }

    SoftLabelMatrix y = initial;
    SoftLabelMatrix next = initial;
    if (options.observer) options.observer(0, y);

    for (int t = 1; t <= options.iterations; ++t) {
        graph.normalized().multiply(y.scores, c, next.scores);
        for (std::size_t i : clamped) {
            std::copy_n(initial.scores.begin() + std::ptrdiff_t(i * c), c, next.scores.begin() + std::ptrdiff_t(i * c));
        }
        next.iterations = t;

        double max_change = 0.0;
        if (options.early_stop_tolerance) {
            for (std::size_t e = 0; e < y.scores.size(); ++e) {
                max_change = std::max(max_change, std::fabs(next.scores[e] - y.scores[e]));
            }
        }
        std::swap(y, next);
        if (options.observer) options.observer(t, y);
        if (options.early_stop_tolerance && max_change < *options.early_stop_tolerance) break;
    }
    return y;
}

SoftLabelMatrix propagate(const KnnGraph& graph, const LabelState& labels, int iterations) {
    PropagationOptions options;
    options.iterations = iterations;
    return propagate(graph, labels, options);
}

std::int32_t argmax_class(std::span<const double> row) {
    std::int32_t best = kUndetermined;
    double best_value = 0.0;
    for (std::size_t m = 0; m < row.size(); ++m) {
        if (row[m] > best_value) {
            best_value = row[m];
            best = std::int32_t(m);
        }
    }
    return best;
}

PseudoLabels pseudo_labels(const SoftLabelMatrix& soft) {
    PseudoLabels out;
    out.classes.resize(soft.n);
    out.confidence.resize(soft.n);
    for (std::size_t i = 0; i < soft.n; ++i) {
        auto row = soft.row(i);
        double sum = 0.0;
        for (double v : row) sum += v;
        const auto cls = argmax_class(row);
        out.classes[i] = cls;
        out.confidence[i] = (cls == kUndetermined || sum <= 0.0) ? 0.0 : row[std::size_t(cls)] / sum;
    }
    return out;
}

std::vector<std::int32_t> weighted_knn_classify(const KnnGraph& graph, std::span<const double> label_rows,
                                                std::size_t num_classes, std::span<const std::size_t> targets) {
    if (label_rows.size() != graph.n() * num_classes) fail(ErrorKind::Parameter, "label rows do not match graph size");
    std::vector<std::int32_t> out;
    out.reserve(targets.size());
    std::vector<double> score(num_classes);
    for (std::size_t target : targets) {
        if (target >= graph.n()) fail(ErrorKind::Parameter, "target index out of range");
        std::fill(score.begin(), score.end(), 0.0);
        auto nbrs = graph.neighbors(target);
        auto sims = graph.neighbor_similarities(target);
        for (std::size_t slot = 0; slot < nbrs.size(); ++slot) {
            const double w = graph.edge_weight(sims[slot]);
            const double* row = label_rows.data() + std::size_t(nbrs[slot]) * num_classes;
            for (std::size_t m = 0; m < num_classes; ++m) score[m] += w * row[m];
        }
        out.push_back(argmax_class(score));
    }
    return out;
}

std::vector<std::int32_t> weighted_knn_classify(const KnnGraph& graph, std::span<const std::int32_t> labels,
                                                std::size_t num_classes, std::span<const std::size_t> targets) {
    if (labels.size() != graph.n()) fail(ErrorKind::Parameter, "labels do not match graph size");
    std::vector<double> rows(graph.n() * num_classes, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == kUndetermined) continue;
        if (labels[i] < 0 || std::size_t(labels[i]) >= num_classes) fail(ErrorKind::Parameter, "class out of range");
        rows[i * num_classes + std::size_t(labels[i])] = 1.0;
    }
    return weighted_knn_classify(graph, rows, num_classes, targets);
}

std::vector<LabelErrorCandidate> label_error_scores(const SoftLabelMatrix& soft, const LabelState& labels) {
    if (soft.n != labels.n()) fail(ErrorKind::Parameter, "soft labels do not match label state");
    std::vector<LabelErrorCandidate> out;
    for (std::size_t i = 0; i < soft.n; ++i) {
        if (!labels.given[i]) continue;
        auto row = soft.row(i);
        double sum = 0.0;
        for (double v : row) sum += v;
        const double score = sum > 0.0 ? 1.0 - row[std::size_t(*labels.given[i])] / sum : 0.0;
        out.push_back({i, score});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const LabelErrorCandidate& a, const LabelErrorCandidate& b) { return a.score > b.score; });
    return out;
}

}  // namespace lg
