// Shared helpers for the test binaries: random data, scratch directories and
// dense reference implementations that share no code with the library.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "labelgraph/features.hpp"
#include "labelgraph/knn_graph.hpp"
#include "labelgraph/labels.hpp"

namespace lgtest {

namespace fs = std::filesystem;

// Removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "lg") {
        static std::atomic<unsigned> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::vector<std::string> make_ids(std::size_t n, const std::string& prefix = "s") {
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = prefix + std::to_string(i);
    return ids;
}

// n x d standard Gaussian rows (not normalized).
inline std::vector<float> gaussian_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    std::vector<float> data(n * d);
    for (auto& v : data) v = gauss(rng);
    return data;
}

inline lg::FeatureMatrix random_features(std::size_t n, std::size_t d, std::uint64_t seed) {
    const auto raw = gaussian_rows(n, d, seed);
    const auto ids = make_ids(n);
    return lg::ingest_features(lg::encode_raw_features(n, d, raw, ids));
}

// --- dense oracles ----------------------------------------------------------

// Top-k neighbor indices of every row by exhaustive scan, sorted ascending as
// sets. Similarities are recomputed here in double.
inline std::vector<std::vector<std::uint32_t>> brute_force_knn(const lg::FeatureMatrix& f, std::size_t k) {
    const std::size_t n = f.n();
    std::vector<std::vector<std::uint32_t>> out(n);
    std::vector<std::pair<double, std::uint32_t>> cand;
    for (std::size_t i = 0; i < n; ++i) {
        cand.clear();
        auto a = f.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            auto b = f.row(j);
            double s = 0;
            for (std::size_t c = 0; c < f.d(); ++c) s += double(a[c]) * double(b[c]);
            cand.emplace_back(s, std::uint32_t(j));
        }
        // Highest similarity first; equal similarity -> lower index first.
        std::sort(cand.begin(), cand.end(), [](const auto& x, const auto& y) {
            return x.first != y.first ? x.first > y.first : x.second < y.second;
        });
        for (std::size_t r = 0; r < k; ++r) out[i].push_back(cand[r].second);
        std::sort(out[i].begin(), out[i].end());
    }
    return out;
}

inline Eigen::MatrixXd dense(const lg::CsrMatrix& m) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(Eigen::Index(m.n), Eigen::Index(m.n));
    for (std::size_t i = 0; i < m.n; ++i) {
        auto cols = m.row_cols(i);
        auto vals = m.row_values(i);
        for (std::size_t e = 0; e < cols.size(); ++e) out(Eigen::Index(i), Eigen::Index(cols[e])) = vals[e];
    }
    return out;
}

// D^-1/2 W D^-1/2 with dense arithmetic.
inline Eigen::MatrixXd dense_normalize(const Eigen::MatrixXd& w) {
    const Eigen::VectorXd deg = w.rowwise().sum();
    const Eigen::VectorXd inv = deg.array().sqrt().inverse();
    return inv.asDiagonal() * w * inv.asDiagonal();
}

inline Eigen::MatrixXd dense_init(const lg::LabelState& labels) {
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(Eigen::Index(labels.n()), Eigen::Index(labels.num_classes));
    for (std::size_t i = 0; i < labels.n(); ++i) {
        if (labels.given[i]) y(Eigen::Index(i), *labels.given[i]) = 1.0;
    }
    return y;
}

// Dense clamped recurrence; returns Y at t = 0..iterations.
inline std::vector<Eigen::MatrixXd> dense_propagate(const Eigen::MatrixXd& s, const lg::LabelState& labels,
                                                    int iterations) {
    const Eigen::MatrixXd y0 = dense_init(labels);
    std::vector<Eigen::MatrixXd> trace{y0};
    Eigen::MatrixXd y = y0;
    for (int t = 0; t < iterations; ++t) {
        y = s * y;
        for (std::size_t i = 0; i < labels.n(); ++i) {
            if (labels.trusted[i]) y.row(Eigen::Index(i)) = y0.row(Eigen::Index(i));
        }
        trace.push_back(y);
    }
    return trace;
}

inline double max_abs_diff(const Eigen::MatrixXd& dense_y, const lg::SoftLabelMatrix& soft) {
    double worst = 0;
    for (std::size_t i = 0; i < soft.n; ++i) {
        for (std::size_t c = 0; c < soft.num_classes; ++c) {
            worst = std::max(worst, std::abs(dense_y(Eigen::Index(i), Eigen::Index(c)) - soft.row(i)[c]));
        }
    }
    return worst;
}

// Random label state with round(fraction * n) trusted samples.
inline lg::LabelState random_trusted(std::size_t n, std::size_t classes, double fraction, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<std::int32_t> cls(0, std::int32_t(classes) - 1);
    auto labels = lg::LabelState::unlabeled(n, classes);
    const auto m = std::size_t(std::llround(fraction * double(n)));
    for (std::size_t r = 0; r < m; ++r) labels.set_trusted(order[r], cls(rng));
    return labels;
}

}  // namespace lgtest
