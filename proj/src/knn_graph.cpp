#include "labelgraph/knn_graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "labelgraph/error.hpp"
#include "labelgraph/parallel.hpp"

namespace lg {

namespace {

constexpr std::size_t kRowBlock = 32;

void check_parameters(std::size_t n, std::size_t k, double temperature) {
    if (k == 0) fail(ErrorKind::Parameter, "k must be >= 1");
    if (k >= n) fail(ErrorKind::Parameter, "k must be < n");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) fail(ErrorKind::Parameter, "temperature must be > 0");
}

// Higher similarity first, lower index on ties.
bool closer(const std::pair<double, std::uint32_t>& a, const std::pair<double, std::uint32_t>& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
}

}  // namespace

double KnnGraph::edge_weight(double similarity) const { return std::exp((similarity - 1.0) / temperature_); }

double KnnGraph::raw_weight(double similarity) const { return std::exp(similarity / temperature_); }

KnnGraph KnnGraph::from_neighbors(std::size_t n, std::size_t k, double temperature,
                                  std::vector<std::uint32_t> neighbors, std::vector<double> similarities) {
    check_parameters(n, k, temperature);
    if (neighbors.size() != n * k || similarities.size() != n * k) {
        fail(ErrorKind::Parameter, "neighbor lists must hold n*k entries");
    }

    KnnGraph g;
    g.n_ = n;
    g.k_ = k;
    g.temperature_ = temperature;
    g.neighbors_ = std::move(neighbors);
    g.neighbor_sims_ = std::move(similarities);

    // Symmetrize: (i, j) and (j, i) both carry max(s_ij, s_ji).
    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(n);
    for (auto& r : rows) r.reserve(2 * k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t slot = 0; slot < k; ++slot) {
            const std::uint32_t j = g.neighbors_[i * k + slot];
            const double s = g.neighbor_sims_[i * k + slot];
            if (j >= n) fail(ErrorKind::Parameter, "neighbor index out of range at node " + std::to_string(i));
            if (j == i) fail(ErrorKind::Parameter, "self-loop at node " + std::to_string(i));
            rows[i].emplace_back(j, s);
            rows[j].emplace_back(std::uint32_t(i), s);
        }
    }

    CsrMatrix& w = g.adjacency_;
    w.n = n;
    w.row_ptr.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        auto& r = rows[i];
        std::sort(r.begin(), r.end());
        std::size_t kept = 0;
        for (std::size_t e = 0; e < r.size(); ++e) {
            if (kept > 0 && r[kept - 1].first == r[e].first) {
                r[kept - 1].second = std::max(r[kept - 1].second, r[e].second);
            } else {
                r[kept++] = r[e];
            }
        }
        r.resize(kept);
        w.row_ptr[i + 1] = w.row_ptr[i] + kept;
    }
    w.cols.reserve(w.row_ptr[n]);
    w.values.reserve(w.row_ptr[n]);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& [j, s] : rows[i]) {
            w.cols.push_back(j);
            w.values.push_back(g.edge_weight(s));
        }
    }

    g.degree_ = row_degrees(w);
    g.normalized_ = normalize_symmetric(w);
    return g;
}

KnnGraph build_knn_graph(const FeatureMatrix& features, std::size_t k, double temperature) {
    const std::size_t n = features.n();
    check_parameters(n, k, temperature);

    std::vector<std::uint32_t> neighbors(n * k);
    std::vector<double> sims(n * k);

    const std::size_t blocks = (n + kRowBlock - 1) / kRowBlock;
    parallel_for(blocks, [&](std::size_t block_begin, std::size_t block_end) {
        std::vector<double> block_sims(kRowBlock * n);
        std::vector<std::pair<double, std::uint32_t>> candidates;
        candidates.reserve(n);
        for (std::size_t b = block_begin; b < block_end; ++b) {
            const std::size_t row_begin = b * kRowBlock;
            const std::size_t row_end = std::min(n, row_begin + kRowBlock);
            // Each column row is loaded once per block of query rows.
            for (std::size_t j = 0; j < n; ++j) {
                const auto col = features.row(j);
                for (std::size_t i = row_begin; i < row_end; ++i) {
                    block_sims[(i - row_begin) * n + j] = cosine_similarity(features.row(i), col);
                }
            }
            for (std::size_t i = row_begin; i < row_end; ++i) {
                candidates.clear();
                const double* s = block_sims.data() + (i - row_begin) * n;
                for (std::size_t j = 0; j < n; ++j) {
                    if (j != i) candidates.emplace_back(s[j], std::uint32_t(j));
                }
                std::partial_sort(candidates.begin(), candidates.begin() + std::ptrdiff_t(k), candidates.end(), closer);
                for (std::size_t slot = 0; slot < k; ++slot) {
                    sims[i * k + slot] = candidates[slot].first;
                    neighbors[i * k + slot] = candidates[slot].second;
                }
            }
        }
    });

    return KnnGraph::from_neighbors(n, k, temperature, std::move(neighbors), std::move(sims));
}

std::vector<double> row_degrees(const CsrMatrix& w) {
    std::vector<double> degree(w.n, 0.0);
    for (std::size_t i = 0; i < w.n; ++i) {
        double sum = 0.0;
        for (double v : w.row_values(i)) sum += v;
        degree[i] = sum;
    }
    return degree;
}

CsrMatrix normalize_symmetric(const CsrMatrix& w) {
    const auto degree = row_degrees(w);
    for (std::size_t i = 0; i < w.n; ++i) {
        if (!(degree[i] > 0.0)) fail(ErrorKind::Degenerate, "node " + std::to_string(i) + " has zero degree");
    }
    // sqrt(D_i * D_j) is symmetric in (i, j), so the result is bit-symmetric.
    CsrMatrix out = w;
    for (std::size_t i = 0; i < w.n; ++i) {
        for (std::size_t e = w.row_ptr[i]; e < w.row_ptr[i + 1]; ++e) {
            out.values[e] = w.values[e] / std::sqrt(degree[i] * degree[w.cols[e]]);
        }
    }
    return out;
}

}  // namespace lg
