#include "labelgraph/workflows.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "labelgraph/error.hpp"

namespace lg {

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

std::string BlobDataset::feature_file() const { return encode_raw_features(n, dim, raw, ids); }

std::string BlobDataset::truth_file() const {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        out += nlohmann::json{{"id", ids[i]}, {"class", classes[i]}}.dump();
        out += '\n';
    }
    return out;
}

FeatureMatrix BlobDataset::features() const { return ingest_features(feature_file()); }

BlobDataset generate_blobs(const BlobConfig& config) {
    if (config.classes < 2) fail(ErrorKind::Parameter, "need >=2 classes");
    if (config.n < config.classes) fail(ErrorKind::Parameter, "need at least one sample per class");
    if (config.dim == 0) fail(ErrorKind::Parameter, "dimension must be >= 1");
    if (!(config.separation >= 0.0)) fail(ErrorKind::Parameter, "separation must be >= 0");

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    const double radius = config.separation / std::sqrt(2.0);
    std::vector<double> centers(config.classes * config.dim, 0.0);
    for (std::size_t c = 0; c < config.classes; ++c) {
        double* center = centers.data() + c * config.dim;
        if (config.classes <= config.dim) {
            center[c] = radius;
        } else {
            double sq = 0.0;
            for (std::size_t j = 0; j < config.dim; ++j) {
                center[j] = normal(rng);
                sq += center[j] * center[j];
            }
            const double scale = radius / std::sqrt(sq);
            for (std::size_t j = 0; j < config.dim; ++j) center[j] *= scale;
        }
    }

    BlobDataset out;
    out.n = config.n;
    out.dim = config.dim;
    out.raw.resize(config.n * config.dim);
    out.classes.resize(config.n);
    out.ids.reserve(config.n);
    const double sigma = 1.0 / std::sqrt(double(config.dim));
    const int width = int(std::to_string(config.n - 1).size());
    for (std::size_t i = 0; i < config.n; ++i) {
        const std::size_t cls = i % config.classes;
        out.classes[i] = std::int32_t(cls);
        const double* center = centers.data() + cls * config.dim;
        for (std::size_t j = 0; j < config.dim; ++j) {
            out.raw[i * config.dim + j] = float(center[j] + sigma * normal(rng));
        }
        std::string digits = std::to_string(i);
        out.ids.push_back("blob_" + std::string(std::size_t(width) - digits.size(), '0') + digits);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

std::vector<std::int32_t> inject_noise(std::span<const std::int32_t> labels, double noise_rate,
                                       std::size_t num_classes, std::uint64_t seed) {
    if (num_classes < 2) fail(ErrorKind::Parameter, "need >=2 classes");
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) fail(ErrorKind::Parameter, "noise rate must be in [0, 1]");
    for (auto cls : labels) {
        if (cls < 0 || std::size_t(cls) >= num_classes) fail(ErrorKind::Parameter, "clean label outside [0, c)");
    }

    std::vector<std::int32_t> out(labels.begin(), labels.end());
    const auto count = std::size_t(std::llround(noise_rate * double(labels.size())));
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<std::int32_t> other(0, std::int32_t(num_classes) - 2);
    for (std::size_t s = 0; s < count; ++s) {
        const std::size_t i = order[s];
        const std::int32_t draw = other(rng);
        out[i] = draw < labels[i] ? draw : draw + 1;
    }
    return out;
}

double noise_level(std::span<const std::int32_t> pseudo, std::span<const std::int32_t> truth) {
    if (pseudo.size() != truth.size()) fail(ErrorKind::Parameter, "noise_level: length mismatch");
    if (pseudo.empty()) return 0.0;
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < pseudo.size(); ++i) {
        if (pseudo[i] == kUndetermined || pseudo[i] != truth[i]) ++wrong;
    }
    return double(wrong) / double(pseudo.size());
}

std::vector<std::size_t> make_eval_split(std::size_t n, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) fail(ErrorKind::Parameter, "eval fraction must be in (0, 1)");
    std::size_t count = std::max<std::size_t>(1, std::size_t(std::llround(fraction * double(n))));
    if (count >= n) fail(ErrorKind::Parameter, "eval split leaves an empty pool");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(count);
    std::sort(order.begin(), order.end());
    return order;
}

double accuracy_on(std::span<const std::int32_t> predicted, std::span<const std::int32_t> truth,
                   std::span<const std::size_t> targets) {
    if (targets.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        if (predicted[t] != kUndetermined && predicted[t] == truth[targets[t]]) ++correct;
    }
    return double(correct) / double(targets.size());
}

namespace {

// Complement of `eval` in [0, n); validates the split.
std::vector<std::size_t> pool_of(std::size_t n, std::span<const std::size_t> eval) {
    std::vector<std::uint8_t> is_eval(n, 0);
    for (auto i : eval) {
        if (i >= n) fail(ErrorKind::Parameter, "eval split index out of range");
        if (is_eval[i]) fail(ErrorKind::Parameter, "eval split has duplicate indices");
        is_eval[i] = 1;
    }
    std::vector<std::size_t> pool;
    pool.reserve(n - eval.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_eval[i]) pool.push_back(i);
    }
    return pool;
}

}  // namespace

NoiseStudyResult run_noise_study(const KnnGraph& graph, std::span<const std::int32_t> clean_labels,
                                 std::size_t num_classes, const NoiseExperimentConfig& config) {
    if (clean_labels.size() != graph.n()) fail(ErrorKind::Parameter, "clean labels do not match graph size");
    if (config.eval_split.empty()) fail(ErrorKind::Parameter, "noise study needs a non-empty eval split");
    const auto pool = pool_of(graph.n(), config.eval_split);

    std::vector<std::int32_t> pool_truth;
    pool_truth.reserve(pool.size());
    for (auto i : pool) pool_truth.push_back(clean_labels[i]);
    const auto pool_corrupted = inject_noise(pool_truth, config.noise_rate, num_classes, config.seed);

    std::vector<std::int32_t> corrupted(graph.n(), kUndetermined);
    LabelState labels = LabelState::unlabeled(graph.n(), num_classes);
    for (std::size_t p = 0; p < pool.size(); ++p) {
        corrupted[pool[p]] = pool_corrupted[p];
        labels.set_untrusted(pool[p], pool_corrupted[p]);
    }

    NoiseStudyResult result;
    result.noise_rate = config.noise_rate;
    std::vector<std::int32_t> pool_pseudo(pool.size());
    PropagationOptions options;
    options.iterations = config.iterations;
    options.observer = [&](int, const SoftLabelMatrix& y) {
        for (std::size_t p = 0; p < pool.size(); ++p) pool_pseudo[p] = argmax_class(y.row(pool[p]));
        result.noise_trace.push_back(noise_level(pool_pseudo, pool_truth));
    };
    const auto soft = propagate(graph, labels, options);

    std::vector<std::int32_t> lp_labels(graph.n(), kUndetermined);
    const auto pseudo = pseudo_labels(soft);
    for (auto i : pool) lp_labels[i] = pseudo.classes[i];

    const auto lp_pred = weighted_knn_classify(graph, std::span<const std::int32_t>(lp_labels), num_classes, config.eval_split);
    const auto base_pred =
        weighted_knn_classify(graph, std::span<const std::int32_t>(corrupted), num_classes, config.eval_split);
    result.accuracy_lp = accuracy_on(lp_pred, clean_labels, config.eval_split);
    result.accuracy_baseline = accuracy_on(base_pred, clean_labels, config.eval_split);
    return result;
}

// ---------------------------------------------------------------------------
// Active learning
// ---------------------------------------------------------------------------

void validate(const ActiveLearningConfig& config, std::size_t n) {
    if (config.strategy != "random") fail(ErrorKind::Parameter, "unknown acquisition strategy '" + config.strategy + "'");
    if (config.batch_size == 0) fail(ErrorKind::Parameter, "batch size must be >= 1");
    if (config.eval_split.empty()) fail(ErrorKind::Parameter, "active learning needs a non-empty eval split");
    if (config.iterations < 1) fail(ErrorKind::Parameter, "iterations must be >= 1");
    const auto pool = pool_of(n, config.eval_split);
    if (config.batch_size > config.budget) fail(ErrorKind::Parameter, "batch size exceeds budget");
    if (config.budget > pool.size()) fail(ErrorKind::Parameter, "budget exceeds pool size");
}

std::vector<CurvePoint> run_active_learning(const KnnGraph& graph, const FeatureMatrix* features,
                                            const LabelOracle& oracle, std::size_t num_classes,
                                            const ActiveLearningConfig& config) {
    validate(config, graph.n());
    if (!config.include_unlabeled_pool && !features) {
        fail(ErrorKind::Parameter, "the labeled-only ablation needs the feature matrix");
    }
    if (features && features->n() != graph.n()) fail(ErrorKind::Parameter, "features do not match graph size");

    auto pool = pool_of(graph.n(), config.eval_split);
    std::mt19937_64 rng(config.seed);
    std::shuffle(pool.begin(), pool.end(), rng);

    std::vector<std::int32_t> truth(graph.n(), kUndetermined);
    for (auto i : config.eval_split) truth[i] = oracle(i);

    LabelState labels = LabelState::unlabeled(graph.n(), num_classes);
    std::vector<std::size_t> trusted;
    std::vector<CurvePoint> curve;

    std::size_t spent = 0;
    while (spent < config.budget) {
        const std::size_t take = std::min(config.batch_size, config.budget - spent);
        for (std::size_t s = spent; s < spent + take; ++s) {
            const std::size_t node = pool[s];
            labels.set_trusted(node, oracle(node));
            trusted.push_back(node);
        }
        spent += take;

        std::vector<std::int32_t> predicted;
        predicted.reserve(config.eval_split.size());
        if (config.include_unlabeled_pool) {
            const auto soft = propagate(graph, labels, config.iterations);
            for (auto i : config.eval_split) predicted.push_back(argmax_class(soft.row(i)));
        } else {
            // Sub-graph over labeled + eval nodes only.
            std::vector<std::size_t> nodes(trusted);
            nodes.insert(nodes.end(), config.eval_split.begin(), config.eval_split.end());
            std::sort(nodes.begin(), nodes.end());
            const auto sub_features = features->subset(nodes);
            const std::size_t sub_k = std::min(graph.k(), nodes.size() - 1);
            const auto sub_graph = build_knn_graph(sub_features, sub_k, graph.temperature());
            LabelState sub_labels = LabelState::unlabeled(nodes.size(), num_classes);
            std::vector<std::size_t> eval_positions;
            for (std::size_t p = 0; p < nodes.size(); ++p) {
                if (labels.trusted[nodes[p]]) {
                    sub_labels.set_trusted(p, *labels.given[nodes[p]]);
                } else {
                    eval_positions.push_back(p);
                }
            }
            const auto soft = propagate(sub_graph, sub_labels, config.iterations);
            for (auto p : eval_positions) predicted.push_back(argmax_class(soft.row(p)));
        }
        curve.push_back({spent, accuracy_on(predicted, truth, config.eval_split)});
    }
    return curve;
}

std::vector<CurvePoint> mean_curve(std::span<const std::vector<CurvePoint>> curves) {
    if (curves.empty()) return {};
    std::vector<CurvePoint> out = curves.front();
    for (auto& p : out) p.accuracy = 0.0;
    for (const auto& curve : curves) {
        if (curve.size() != out.size()) fail(ErrorKind::Parameter, "curves differ in length");
        for (std::size_t b = 0; b < curve.size(); ++b) {
            if (curve[b].labels_spent != out[b].labels_spent) fail(ErrorKind::Parameter, "curves differ in budget points");
            out[b].accuracy += curve[b].accuracy;
        }
    }
    for (auto& p : out) p.accuracy /= double(curves.size());
    return out;
}

// ---------------------------------------------------------------------------
// Output and configuration
// ---------------------------------------------------------------------------

std::string format_double(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

std::string format_active_learning_csv(std::span<const CurvePoint> curve) {
    std::string out = "labels_spent,accuracy\n";
    for (const auto& p : curve) out += std::to_string(p.labels_spent) + "," + format_double(p.accuracy) + "\n";
    return out;
}

std::string format_noise_csv(std::span<const NoiseStudyResult> results) {
    std::string out;
    for (std::size_t r = 0; r < results.size(); ++r) {
        const auto& res = results[r];
        if (r > 0) out += "\n";
        out += "iteration,noise_level\n";
        for (std::size_t t = 0; t < res.noise_trace.size(); ++t) {
            out += std::to_string(t) + "," + format_double(res.noise_trace[t]) + "\n";
        }
        out += "noise_rate,acc_lp,acc_baseline\n";
        out += format_double(res.noise_rate) + "," + format_double(res.accuracy_lp) + "," +
               format_double(res.accuracy_baseline) + "\n";
    }
    return out;
}

namespace {

template <typename T>
void read_field(const nlohmann::json& doc, const char* key, T& out) {
    if (!doc.contains(key)) return;
    try {
        out = doc.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorKind::Parameter, std::string("config field '") + key + "' has the wrong type");
    }
}

void read_eval_split(const nlohmann::json& doc, std::vector<std::size_t>& split, std::size_t n) {
    if (doc.contains("eval_split")) {
        read_field(doc, "eval_split", split);
        std::sort(split.begin(), split.end());
    } else if (doc.contains("eval_fraction")) {
        double fraction = 0.0;
        std::uint64_t split_seed = 0;
        read_field(doc, "eval_fraction", fraction);
        read_field(doc, "split_seed", split_seed);
        split = make_eval_split(n, fraction, split_seed);
    }
}

}  // namespace

void apply_json(ActiveLearningConfig& config, const nlohmann::json& doc, std::size_t n) {
    if (!doc.is_object()) fail(ErrorKind::Parameter, "config must be a JSON object");
    read_field(doc, "batch_size", config.batch_size);
    read_field(doc, "budget", config.budget);
    read_field(doc, "seed", config.seed);
    read_field(doc, "include_unlabeled_pool", config.include_unlabeled_pool);
    read_field(doc, "strategy", config.strategy);
    read_field(doc, "iterations", config.iterations);
    read_eval_split(doc, config.eval_split, n);
}

void apply_json(NoiseExperimentConfig& config, const nlohmann::json& doc, std::size_t n) {
    if (!doc.is_object()) fail(ErrorKind::Parameter, "config must be a JSON object");
    read_field(doc, "noise_rate", config.noise_rate);
    read_field(doc, "iterations", config.iterations);
    read_field(doc, "seed", config.seed);
    read_eval_split(doc, config.eval_split, n);
    if (!(config.noise_rate >= 0.0 && config.noise_rate <= 1.0)) fail(ErrorKind::Parameter, "noise_rate must be in [0, 1]");
}

}  // namespace lg
