#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <future>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "labelgraph/features.hpp"
#include "labelgraph/knn_graph.hpp"
#include "labelgraph/parallel.hpp"
#include "labelgraph/propagation.hpp"

namespace lg {

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

// Isotropic Gaussian blobs. Each blob has unit RMS radius (per-coordinate
// standard deviation 1/sqrt(dim)); `separation` is the distance between
// class centers in those units. For classes <= dim the centers sit on
// orthogonal axes, otherwise on random directions at the same radius.
struct BlobConfig {
    std::size_t classes = 10;
    std::size_t n = 1000;
    std::size_t dim = 32;
    double separation = 4.0;
    std::uint64_t seed = 0;
};

struct BlobDataset {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<float> raw;  // un-normalized rows
    std::vector<std::string> ids;
    std::vector<std::int32_t> classes;

    std::string feature_file() const;  // LGF1 bytes of the raw rows
    std::string truth_file() const;    // {"id", "class"} lines
    FeatureMatrix features() const;    // ingested (normalized)
};

BlobDataset generate_blobs(const BlobConfig& config);

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

// Replaces the class of exactly round(noise_rate * n) samples, chosen
// uniformly without replacement, with a uniform draw over the other c - 1
// classes.
std::vector<std::int32_t> inject_noise(std::span<const std::int32_t> labels, double noise_rate,
                                       std::size_t num_classes, std::uint64_t seed);

// Fraction of positions where pseudo != truth; kUndetermined never matches.
double noise_level(std::span<const std::int32_t> pseudo, std::span<const std::int32_t> truth);

// Deterministic held-out split: round(fraction * n) indices (at least one),
// ascending.
std::vector<std::size_t> make_eval_split(std::size_t n, double fraction, std::uint64_t seed);

struct NoiseExperimentConfig {
    double noise_rate = 0.5;
    int iterations = kDefaultIterations;
    std::uint64_t seed = 0;
    std::vector<std::size_t> eval_split;  // held-out nodes; never labeled
};

struct NoiseStudyResult {
    double noise_rate = 0.0;
    std::vector<double> noise_trace;  // pool pseudo-label noise at t = 0..iterations
    double accuracy_lp = 0.0;         // eval k-NN accuracy from LP pseudo-labels
    double accuracy_baseline = 0.0;   // eval k-NN accuracy from corrupted labels
};

// Corrupts the pool (every non-eval node), diffuses the corrupted labels
// without clamping and tracks pseudo-label noise per iteration, then scores
// weighted k-NN on the eval split with both label sources.
NoiseStudyResult run_noise_study(const KnnGraph& graph, std::span<const std::int32_t> clean_labels,
                                 std::size_t num_classes, const NoiseExperimentConfig& config);

// ---------------------------------------------------------------------------
// Active learning
// ---------------------------------------------------------------------------

struct ActiveLearningConfig {
    std::size_t batch_size = 10;
    std::size_t budget = 100;
    std::uint64_t seed = 0;
    std::vector<std::size_t> eval_split;
    // false: propagate over a graph rebuilt on labeled + eval nodes only.
    bool include_unlabeled_pool = true;
    std::string strategy = "random";
    int iterations = kDefaultIterations;
};

struct CurvePoint {
    std::size_t labels_spent = 0;
    double accuracy = 0.0;

    bool operator==(const CurvePoint&) const = default;
};

using LabelOracle = std::function<std::int32_t(std::size_t)>;

// Throws Parameter for an invalid configuration against a graph of n nodes.
void validate(const ActiveLearningConfig& config, std::size_t n);

// Random-acquisition loop starting from zero labels. `features` is required
// for the labeled-only ablation, which rebuilds the graph per round.
std::vector<CurvePoint> run_active_learning(const KnnGraph& graph, const FeatureMatrix* features,
                                            const LabelOracle& oracle, std::size_t num_classes,
                                            const ActiveLearningConfig& config);

// Pointwise mean of equally shaped curves.
std::vector<CurvePoint> mean_curve(std::span<const std::vector<CurvePoint>> curves);

// Runs fn(seed) for every seed, concurrently up to max_threads(). Results
// come back in seed order.
template <typename Result>
std::vector<Result> run_seeds(std::span<const std::uint64_t> seeds, const std::function<Result(std::uint64_t)>& fn) {
    std::vector<Result> results(seeds.size());
    const std::size_t width = std::max<std::size_t>(1, max_threads());
    for (std::size_t begin = 0; begin < seeds.size(); begin += width) {
        const std::size_t end = std::min(seeds.size(), begin + width);
        std::vector<std::future<Result>> pending;
        for (std::size_t s = begin; s < end; ++s) {
            pending.push_back(std::async(end - begin > 1 ? std::launch::async : std::launch::deferred, fn, seeds[s]));
        }
        for (std::size_t s = begin; s < end; ++s) results[s] = pending[s - begin].get();
    }
    return results;
}

// Top-1 accuracy of `predicted` against `truth` over `targets`.
double accuracy_on(std::span<const std::int32_t> predicted, std::span<const std::int32_t> truth,
                   std::span<const std::size_t> targets);

// ---------------------------------------------------------------------------
// Output and configuration
// ---------------------------------------------------------------------------

// "labels_spent,accuracy" rows.
std::string format_active_learning_csv(std::span<const CurvePoint> curve);

// One group per noise rate: an "iteration,noise_level" table followed by a
// "noise_rate,acc_lp,acc_baseline" summary row; groups separated by a blank
// line.
std::string format_noise_csv(std::span<const NoiseStudyResult> results);

// Reads the fields of the config types from a JSON document. Missing fields
// keep the values already in `config`; "eval_fraction" builds a split over
// `n` nodes seeded by "split_seed" (default 0).
void apply_json(ActiveLearningConfig& config, const nlohmann::json& doc, std::size_t n);
void apply_json(NoiseExperimentConfig& config, const nlohmann::json& doc, std::size_t n);

// Shortest round-trip decimal form.
std::string format_double(double value);

}  // namespace lg
