#include <set>

#include <doctest.h>

#include "labelgraph/error.hpp"
#include "labelgraph/workflows.hpp"
#include "support.hpp"

using namespace lg;

namespace {

struct BlobFixture {
    BlobDataset blobs;
    FeatureMatrix features;
    KnnGraph graph;

    BlobFixture(std::size_t classes, std::size_t n, std::size_t dim, std::uint64_t seed, double sep = 4.0) {
        BlobConfig config;
        config.classes = classes;
        config.n = n;
        config.dim = dim;
        config.separation = sep;
        config.seed = seed;
        blobs = generate_blobs(config);
        features = blobs.features();
        graph = build_knn_graph(features, 10, 0.01);
    }
};

std::size_t differences(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
    std::size_t diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] != b[i];
    return diff;
}

}  // namespace

TEST_CASE("inject_noise examples") {
    std::vector<std::int32_t> clean(1000);
    for (std::size_t i = 0; i < clean.size(); ++i) clean[i] = std::int32_t(i % 10);

    CHECK(inject_noise(clean, 0.0, 10, 1) == clean);

    std::vector<std::int32_t> binary(37);
    for (std::size_t i = 0; i < binary.size(); ++i) binary[i] = std::int32_t(i % 2);
    const auto flipped = inject_noise(binary, 1.0, 2, 5);
    for (std::size_t i = 0; i < binary.size(); ++i) CHECK(flipped[i] == 1 - binary[i]);

    const auto half = inject_noise(clean, 0.5, 10, 2);
    CHECK(differences(clean, half) == 500);
    CHECK(noise_level(half, clean) == 0.5);
    for (auto v : half) CHECK((v >= 0 && v < 10));
}

TEST_CASE("inject_noise counts and determinism") {
    std::vector<std::int32_t> clean(333);
    for (std::size_t i = 0; i < clean.size(); ++i) clean[i] = std::int32_t(i % 4);
    for (double rate : {0.01, 0.1, 0.37, 0.9}) {
        const auto a = inject_noise(clean, rate, 4, 11);
        CHECK(differences(clean, a) == std::size_t(std::llround(rate * 333)));
        CHECK(a == inject_noise(clean, rate, 4, 11));
    }
    CHECK(inject_noise(clean, 0.5, 4, 1) != inject_noise(clean, 0.5, 4, 2));
    CHECK_THROWS_AS(inject_noise(clean, 1.5, 4, 1), Error);
    CHECK_THROWS_AS(inject_noise(clean, 0.5, 1, 1), Error);
}

TEST_CASE("noise_level examples") {
    const std::vector<std::int32_t> a{0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
    CHECK(noise_level(a, a) == 0.0);
    std::vector<std::int32_t> b(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) b[i] = (a[i] + 1) % 3;
    CHECK(noise_level(b, a) == 1.0);
    auto c = a;
    c[1] = 0;
    c[4] = kUndetermined;
    c[9] = 2;
    CHECK(noise_level(c, a) == doctest::Approx(0.3));
    const std::vector<std::int32_t> shorter{0, 1};
    CHECK_THROWS_AS(noise_level(shorter, a), Error);
}

TEST_CASE("eval split") {
    const auto s = make_eval_split(1000, 0.1, 3);
    CHECK(s.size() == 100);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 100);
    CHECK(s == make_eval_split(1000, 0.1, 3));
    CHECK(make_eval_split(10, 0.01, 0).size() == 1);
    CHECK_THROWS_AS(make_eval_split(10, 0.0, 0), Error);
}

TEST_CASE("blob generator") {
    BlobConfig config;
    config.classes = 4;
    config.n = 40;
    config.dim = 6;
    config.seed = 9;
    const auto a = generate_blobs(config);
    CHECK(a.feature_file() == generate_blobs(config).feature_file());
    CHECK(a.ids.front() == "blob_00");
    CHECK(a.classes[5] == 1);
    config.seed = 10;
    CHECK(a.feature_file() != generate_blobs(config).feature_file());
    config.classes = 1;
    try {
        generate_blobs(config);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()) == "need >=2 classes");
    }
}

TEST_CASE("noise study on a clean pool") {
    BlobFixture fx(3, 600, 16, 1);
    NoiseExperimentConfig config;
    config.noise_rate = 0.0;
    config.eval_split = make_eval_split(600, 0.1, 0);
    const auto r = run_noise_study(fx.graph, fx.blobs.classes, 3, config);
    CHECK(r.noise_trace.size() == 21);
    for (double v : r.noise_trace) CHECK(v == 0.0);
    CHECK(r.accuracy_lp == r.accuracy_baseline);
}

TEST_CASE("noise study shape on three blobs") {
    BlobFixture fx(3, 3000, 32, 2);
    NoiseExperimentConfig config;
    config.eval_split = make_eval_split(3000, 0.1, 0);
    config.seed = 5;

    config.noise_rate = 0.5;
    const auto half = run_noise_study(fx.graph, fx.blobs.classes, 3, config);
    CHECK(half.noise_trace.front() == doctest::Approx(0.5));
    CHECK(half.noise_trace.back() < half.noise_trace.front());
    CHECK(half.accuracy_lp > half.accuracy_baseline);

    config.noise_rate = 0.9;
    const auto heavy = run_noise_study(fx.graph, fx.blobs.classes, 3, config);
    CHECK(heavy.noise_trace.back() >= heavy.noise_trace.front());
}

TEST_CASE("active learning validation") {
    BlobFixture fx(3, 90, 8, 3);
    ActiveLearningConfig config;
    config.eval_split = make_eval_split(90, 0.1, 0);
    config.batch_size = 5;
    config.budget = 82;
    CHECK_THROWS_AS(validate(config, 90), Error);
    config.budget = 81;
    CHECK_NOTHROW(validate(config, 90));
    config.batch_size = 100;
    CHECK_THROWS_AS(validate(config, 90), Error);
    config.batch_size = 0;
    CHECK_THROWS_AS(validate(config, 90), Error);
    config.batch_size = 5;
    config.strategy = "entropy";
    CHECK_THROWS_AS(validate(config, 90), Error);
    config.strategy = "random";
    config.eval_split = {3, 3};
    CHECK_THROWS_AS(validate(config, 90), Error);
    config.eval_split = make_eval_split(90, 0.1, 0);
    config.include_unlabeled_pool = false;
    const LabelOracle oracle = [&](std::size_t i) { return fx.blobs.classes[i]; };
    CHECK_THROWS_AS(run_active_learning(fx.graph, nullptr, oracle, 3, config), Error);
}

TEST_CASE("one label per blob is enough on three blobs") {
    BlobFixture fx(3, 900, 32, 4);
    ActiveLearningConfig config;
    config.eval_split = make_eval_split(900, 0.1, 0);
    config.batch_size = 3;
    config.budget = 3;
    std::size_t covered_runs = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        config.seed = seed;
        std::set<std::int32_t> seen;
        const LabelOracle oracle = [&](std::size_t i) {
            if (std::find(config.eval_split.begin(), config.eval_split.end(), i) == config.eval_split.end()) {
                seen.insert(fx.blobs.classes[i]);
            }
            return fx.blobs.classes[i];
        };
        const auto curve = run_active_learning(fx.graph, &fx.features, oracle, 3, config);
        REQUIRE(curve.size() == 1);
        CHECK(curve[0].labels_spent == 3);
        if (seen.size() == 3) {
            ++covered_runs;
            CHECK(curve[0].accuracy >= 0.95);
        }
    }
    CHECK(covered_runs > 0);
}

TEST_CASE("active learning curves") {
    BlobFixture fx(5, 1000, 16, 6);
    ActiveLearningConfig config;
    config.eval_split = make_eval_split(1000, 0.1, 0);
    config.batch_size = 4;
    config.budget = 40;
    const LabelOracle oracle = [&](std::size_t i) { return fx.blobs.classes[i]; };

    SUBCASE("seed determinism") {
        config.seed = 3;
        CHECK(run_active_learning(fx.graph, &fx.features, oracle, 5, config) ==
              run_active_learning(fx.graph, &fx.features, oracle, 5, config));
    }

    SUBCASE("full pool dominates labeled-only") {
        std::vector<std::vector<CurvePoint>> full, labeled_only;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            config.seed = seed;
            config.include_unlabeled_pool = true;
            full.push_back(run_active_learning(fx.graph, &fx.features, oracle, 5, config));
            config.include_unlabeled_pool = false;
            labeled_only.push_back(run_active_learning(fx.graph, &fx.features, oracle, 5, config));
        }
        const auto a = mean_curve(full);
        const auto b = mean_curve(labeled_only);
        REQUIRE(a.size() == 10);
        for (std::size_t p = 0; p < a.size(); ++p) {
            CHECK(a[p].labels_spent == 4 * (p + 1));
            CHECK(a[p].accuracy >= b[p].accuracy);
        }
        CHECK(a.back().accuracy >= a.front().accuracy);
    }
}

TEST_CASE("full budget matches weighted k-NN with the labeled pool") {
    BlobFixture fx(4, 400, 16, 8, 3.0);
    ActiveLearningConfig config;
    config.eval_split = make_eval_split(400, 0.1, 1);
    config.batch_size = 90;
    config.budget = 360;
    const LabelOracle oracle = [&](std::size_t i) { return fx.blobs.classes[i]; };
    const auto curve = run_active_learning(fx.graph, &fx.features, oracle, 4, config);

    std::vector<std::int32_t> pool_labels(fx.blobs.classes);
    for (auto i : config.eval_split) pool_labels[i] = kUndetermined;
    const auto knn = weighted_knn_classify(fx.graph, std::span<const std::int32_t>(pool_labels), 4, config.eval_split);
    const double knn_accuracy = accuracy_on(knn, fx.blobs.classes, config.eval_split);
    MESSAGE("LP " << curve.back().accuracy << " vs k-NN " << knn_accuracy);
    CHECK(curve.back().accuracy == knn_accuracy);
}

TEST_CASE("run_seeds keeps seed order") {
    const std::vector<std::uint64_t> seeds{5, 1, 9, 3};
    const auto out = run_seeds<std::uint64_t>(seeds, [](std::uint64_t s) { return s * 2; });
    CHECK(out == std::vector<std::uint64_t>{10, 2, 18, 6});
}

TEST_CASE("mean curve") {
    const std::vector<std::vector<CurvePoint>> curves{{{5, 0.5}, {10, 1.0}}, {{5, 0.25}, {10, 0.5}}};
    const auto m = mean_curve(curves);
    CHECK(m[0].accuracy == 0.375);
    CHECK(m[1].accuracy == 0.75);
    const std::vector<std::vector<CurvePoint>> ragged{{{5, 0.5}}, {{5, 0.25}, {10, 0.5}}};
    CHECK_THROWS_AS(mean_curve(ragged), Error);
}

TEST_CASE("csv output") {
    const std::vector<CurvePoint> curve{{5, 0.5}, {10, 0.1}};
    CHECK(format_active_learning_csv(curve) == "labels_spent,accuracy\n5,0.5\n10,0.1\n");

    std::vector<NoiseStudyResult> results(2);
    results[0] = {0.0, {0.0, 0.0}, 1.0, 1.0};
    results[1] = {0.5, {0.5, 0.25}, 0.9, 0.75};
    CHECK(format_noise_csv(results) ==
          "iteration,noise_level\n0,0\n1,0\nnoise_rate,acc_lp,acc_baseline\n0,1,1\n"
          "\n"
          "iteration,noise_level\n0,0.5\n1,0.25\nnoise_rate,acc_lp,acc_baseline\n0.5,0.9,0.75\n");
}

TEST_CASE("json config") {
    ActiveLearningConfig al;
    apply_json(al, nlohmann::json::parse(R"({"batch_size": 7, "budget": 70, "seed": 4,
        "include_unlabeled_pool": false, "eval_fraction": 0.2, "split_seed": 1})"),
               100);
    CHECK(al.batch_size == 7);
    CHECK(al.budget == 70);
    CHECK(al.seed == 4);
    CHECK_FALSE(al.include_unlabeled_pool);
    CHECK(al.eval_split == make_eval_split(100, 0.2, 1));
    apply_json(al, nlohmann::json::parse(R"({"eval_split": [9, 2, 4]})"), 100);
    CHECK(al.eval_split == std::vector<std::size_t>{2, 4, 9});
    CHECK_THROWS_AS(apply_json(al, nlohmann::json::parse(R"({"budget": "lots"})"), 100), Error);

    NoiseExperimentConfig noise;
    apply_json(noise, nlohmann::json::parse(R"({"noise_rate": 0.3, "iterations": 5})"), 100);
    CHECK(noise.noise_rate == 0.3);
    CHECK(noise.iterations == 5);
    CHECK_THROWS_AS(apply_json(noise, nlohmann::json::parse(R"({"noise_rate": 2})"), 100), Error);
}
