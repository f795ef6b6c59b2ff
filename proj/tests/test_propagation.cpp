#include <cmath>
#include <set>

#include <doctest.h>

#include "labelgraph/error.hpp"
#include "labelgraph/parallel.hpp"
#include "labelgraph/propagation.hpp"
#include "labelgraph/workflows.hpp"
#include "support.hpp"

using namespace lg;

namespace {

KnnGraph two_node_graph() {
    const std::vector<float> data{1, 0, 0.6f, 0.8f};
    return build_knn_graph(ingest_features(encode_raw_features(2, 2, data, lgtest::make_ids(2))), 1, 1.0);
}

SoftLabelMatrix soft_of(std::size_t c, std::vector<double> scores) {
    SoftLabelMatrix s;
    s.num_classes = c;
    s.n = scores.size() / c;
    s.scores = std::move(scores);
    return s;
}

}  // namespace

TEST_CASE("init_label_matrix examples") {
    auto labels = LabelState::unlabeled(3, 2);
    labels.set_trusted(0, 0);
    labels.set_untrusted(2, 1);
    CHECK(init_label_matrix(labels).scores == std::vector<double>{1, 0, 0, 0, 0, 1});

    CHECK(init_label_matrix(LabelState::unlabeled(4, 3)).scores == std::vector<double>(12, 0.0));

    const std::vector<std::int32_t> noisy{0, 0, 1, 1};
    const auto n = LabelState::noisy(noisy, 2);
    CHECK(n.trusted_count() == 0);
    CHECK(init_label_matrix(n).scores == std::vector<double>{1, 0, 1, 0, 0, 1, 0, 1});
}

TEST_CASE("two-node single step") {
    const auto g = two_node_graph();
    CHECK(g.normalized().at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
    auto labels = LabelState::unlabeled(2, 2);
    labels.set_trusted(0, 0);
    const auto soft = propagate(g, labels, 1);
    CHECK(soft.row(0)[0] == 1.0);
    CHECK(soft.row(1)[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(soft.row(1)[1] == 0.0);
    CHECK(soft.iterations == 1);
}

TEST_CASE("all trusted returns the initial matrix") {
    const auto f = lgtest::random_features(50, 4, 3);
    const auto g = build_knn_graph(f, 5, 0.1);
    const auto labels = lgtest::random_trusted(50, 4, 1.0, 9);
    for (int t : {1, 5, 20}) CHECK(propagate(g, labels, t).scores == init_label_matrix(labels).scores);
}

TEST_CASE("dense oracle at every iteration") {
    const auto f = lgtest::random_features(200, 10, 21);
    const auto g = build_knn_graph(f, 8, 0.05);
    const auto labels = lgtest::random_trusted(200, 4, 0.2, 22);
    const Eigen::MatrixXd s = lgtest::dense_normalize(lgtest::dense(g.adjacency()));
    const auto trace = lgtest::dense_propagate(s, labels, 20);
    double worst = 0;
    PropagationOptions options;
    options.observer = [&](int t, const SoftLabelMatrix& y) {
        worst = std::max(worst, lgtest::max_abs_diff(trace[std::size_t(t)], y));
    };
    propagate(g, labels, options);
    CHECK(worst <= 1e-9);
}

TEST_CASE("noisy mode is unclamped diffusion") {
    const auto f = lgtest::random_features(120, 6, 5);
    const auto g = build_knn_graph(f, 6, 0.1);
    std::vector<std::int32_t> given(120);
    for (std::size_t i = 0; i < given.size(); ++i) given[i] = std::int32_t(i % 3);
    const auto labels = LabelState::noisy(given, 3);
    const Eigen::MatrixXd s = lgtest::dense_normalize(lgtest::dense(g.adjacency()));
    const auto trace = lgtest::dense_propagate(s, labels, 7);
    CHECK(lgtest::max_abs_diff(trace.back(), propagate(g, labels, 7)) <= 1e-9);
}

TEST_CASE("trusted rows stay bit-equal to their one-hot") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto f = lgtest::random_features(80, 5, seed);
        const auto g = build_knn_graph(f, 1 + seed % 7, 0.01 + 0.1 * double(seed % 3));
        auto labels = lgtest::random_trusted(80, 2 + seed % 4, 0.3, seed + 100);
        // Add untrusted noisy labels too.
        for (std::size_t i = 0; i < 80; i += 7) {
            if (!labels.trusted[i]) labels.set_untrusted(i, 0);
        }
        const auto soft = propagate(g, labels, 1 + int(seed % 20));
        const auto init = init_label_matrix(labels);
        for (std::size_t i = 0; i < 80; ++i) {
            if (!labels.trusted[i]) continue;
            for (std::size_t c = 0; c < labels.num_classes; ++c) CHECK(soft.row(i)[c] == init.row(i)[c]);
        }
    }
}

TEST_CASE("class permutation equivariance") {
    const auto f = lgtest::random_features(150, 6, 31);
    const auto g = build_knn_graph(f, 7, 0.05);
    const auto labels = lgtest::random_trusted(150, 4, 0.2, 32);
    const std::vector<std::int32_t> perm{2, 0, 3, 1};
    auto permuted = labels;
    for (auto& cls : permuted.given) {
        if (cls) cls = perm[std::size_t(*cls)];
    }
    const auto a = propagate(g, labels);
    const auto b = propagate(g, permuted);
    const auto pa = pseudo_labels(a);
    const auto pb = pseudo_labels(b);
    for (std::size_t i = 0; i < 150; ++i) {
        for (std::size_t c = 0; c < 4; ++c) CHECK(b.row(i)[std::size_t(perm[c])] == a.row(i)[c]);
        // Exact ties could resolve differently after permuting, so compare
        // only rows with a strict maximum.
        auto row = a.row(i);
        const double top = *std::max_element(row.begin(), row.end());
        if (std::count(row.begin(), row.end(), top) == 1) CHECK(pb.classes[i] == perm[std::size_t(pa.classes[i])]);
    }
}

TEST_CASE("unreachable nodes stay at zero") {
    // Two disconnected 5-cycles: 0..4 and 5..9.
    std::vector<std::uint32_t> nbrs;
    std::vector<double> sims;
    for (std::uint32_t i = 0; i < 10; ++i) {
        const std::uint32_t base = i < 5 ? 0 : 5;
        nbrs.push_back(base + (i - base + 1) % 5);
        nbrs.push_back(base + (i - base + 4) % 5);
        sims.push_back(0.9);
        sims.push_back(0.8);
    }
    const auto g = KnnGraph::from_neighbors(10, 2, 0.1, nbrs, sims);
    auto labels = LabelState::unlabeled(10, 2);
    labels.set_trusted(0, 1);
    for (int t : {1, 20, 200}) {
        const auto soft = propagate(g, labels, t);
        for (std::size_t i = 5; i < 10; ++i) CHECK(soft.row(i)[0] + soft.row(i)[1] == 0.0);
        CHECK(soft.row(1)[1] > 0.0);
        const auto p = pseudo_labels(soft);
        CHECK(p.classes[7] == kUndetermined);
        CHECK(p.confidence[7] == 0.0);
    }
}

TEST_CASE("determinism across runs and thread counts") {
    const auto f = lgtest::random_features(500, 8, 41);
    const auto g = build_knn_graph(f, 10, 0.01);
    const auto labels = lgtest::random_trusted(500, 5, 0.1, 42);
    set_max_threads(1);
    const auto a = propagate(g, labels);
    set_max_threads(3);
    const auto b = propagate(g, labels);
    set_max_threads(0);
    const auto c = propagate(g, labels);
    CHECK(a == b);
    CHECK(a == c);
}

TEST_CASE("early stop stays within tolerance") {
    const auto f = lgtest::random_features(200, 6, 51);
    const auto g = build_knn_graph(f, 8, 0.1);
    const auto labels = lgtest::random_trusted(200, 3, 0.3, 52);
    PropagationOptions options;
    options.iterations = 500;
    options.early_stop_tolerance = 1e-7;
    const auto early = propagate(g, labels, options);
    CHECK(early.iterations < 500);
    CHECK(early.iterations >= 1);
    CHECK(pseudo_labels(early).classes == pseudo_labels(propagate(g, labels, 500)).classes);
}

TEST_CASE("propagate errors") {
    const auto g = two_node_graph();
    CHECK_THROWS_AS(propagate(g, LabelState::unlabeled(3, 2), 1), Error);
    auto labels = LabelState::unlabeled(2, 2);
    try {
        propagate(g, labels, 1);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()) == "nothing to propagate");
    }
    labels.set_trusted(0, 1);
    CHECK_THROWS_AS(propagate(g, labels, 0), Error);
}

TEST_CASE("pseudo label examples") {
    const auto p = pseudo_labels(soft_of(3, {0.2, 0.7, 0.1, 0, 0, 0}));
    CHECK(p.classes[0] == 1);
    CHECK(p.confidence[0] == doctest::Approx(0.7));
    CHECK(p.classes[1] == kUndetermined);
    CHECK(p.confidence[1] == 0.0);
    CHECK(pseudo_labels(soft_of(2, {0.5, 0.5})).classes[0] == 0);
}

TEST_CASE("weighted vote examples") {
    // Node 0's neighbors 1, 2, 3 with weights proportional to 5.0, 2.0, 2.5.
    const double t = 1.0;
    auto sim = [&](double w) { return 1.0 + t * std::log(w / 5.0); };
    const double s[4][4] = {{0, sim(5.0), sim(2.0), sim(2.5)},
                            {sim(5.0), 0, 0.1, 0.2},
                            {sim(2.0), 0.1, 0, 0.3},
                            {sim(2.5), 0.2, 0.3, 0}};
    std::vector<std::uint32_t> nbrs;
    std::vector<double> sims;
    for (std::uint32_t i = 0; i < 4; ++i) {
        std::vector<std::uint32_t> others;
        for (std::uint32_t j = 0; j < 4; ++j)
            if (j != i) others.push_back(j);
        std::sort(others.begin(), others.end(), [&](auto a, auto b) { return s[i][a] > s[i][b]; });
        for (auto j : others) {
            nbrs.push_back(j);
            sims.push_back(s[i][j]);
        }
    }
    const auto g = KnnGraph::from_neighbors(4, 3, t, nbrs, sims);
    const std::vector<std::size_t> target{0};

    const std::vector<std::int32_t> mixed{kUndetermined, 0, 1, 1};
    CHECK(weighted_knn_classify(g, mixed, 2, target)[0] == 0);

    const std::vector<std::int32_t> same{kUndetermined, 1, 1, 1};
    CHECK(weighted_knn_classify(g, same, 2, target)[0] == 1);

    const std::vector<std::int32_t> none{kUndetermined, kUndetermined, kUndetermined, kUndetermined};
    CHECK(weighted_knn_classify(g, none, 2, target)[0] == kUndetermined);

    // Soft rows: class 1 mass outweighs.
    const std::vector<double> rows{0, 0, 0.1, 0, 0, 1, 0, 1};
    CHECK(weighted_knn_classify(g, rows, 2, target)[0] == 1);
}

TEST_CASE("weighted vote matches a brute-force vote on blobs") {
    BlobConfig config;
    config.classes = 3;
    config.n = 300;
    config.dim = 8;
    config.separation = 2.0;
    config.seed = 3;
    const auto blobs = generate_blobs(config);
    const auto f = blobs.features();
    const std::size_t k = 10;
    const double t = 0.05;
    const auto g = build_knn_graph(f, k, t);

    const auto eval = make_eval_split(f.n(), 0.2, 4);
    std::vector<std::int32_t> train(blobs.classes);
    for (auto i : eval) train[i] = kUndetermined;

    // Independent similarities, neighbor sets and max-symmetrized weights.
    const std::size_t n = f.n();
    Eigen::MatrixXd sim(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) sim(Eigen::Index(i), Eigen::Index(j)) = cosine_similarity(f.row(i), f.row(j));
    const auto nn = lgtest::brute_force_knn(f, k);
    auto directed = [&](std::size_t i, std::size_t j) {
        return std::binary_search(nn[i].begin(), nn[i].end(), std::uint32_t(j))
                   ? std::exp((sim(Eigen::Index(i), Eigen::Index(j)) - 1.0) / t)
                   : 0.0;
    };

    const auto got = weighted_knn_classify(g, train, 3, eval);
    std::size_t agree = 0;
    for (std::size_t e = 0; e < eval.size(); ++e) {
        const auto i = eval[e];
        std::vector<double> score(3, 0.0);
        for (auto j : nn[i]) {
            if (train[j] == kUndetermined) continue;
            score[std::size_t(train[j])] += std::max(directed(i, j), directed(j, i));
        }
        std::int32_t best = kUndetermined;
        double best_score = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            if (score[c] > best_score) {
                best_score = score[c];
                best = std::int32_t(c);
            }
        }
        if (best == got[e]) ++agree;
    }
    CHECK(agree == eval.size());
}

TEST_CASE("label error score examples") {
    auto labels = LabelState::unlabeled(3, 2);
    labels.set_untrusted(0, 0);
    labels.set_untrusted(1, 1);
    const auto scores = label_error_scores(soft_of(2, {1, 0, 0.9, 0.1, 0.3, 0.7}), labels);
    REQUIRE(scores.size() == 2);
    CHECK(scores[0].index == 1);
    CHECK(scores[0].score == doctest::Approx(0.9));
    CHECK(scores[1].index == 0);
    CHECK(scores[1].score == 0.0);
}

TEST_CASE("label error ranking finds injected corruption") {
    BlobConfig config;
    config.classes = 5;
    config.n = 1000;
    config.dim = 16;
    config.seed = 17;
    const auto blobs = generate_blobs(config);
    const auto g = build_knn_graph(blobs.features(), 10, 0.01);
    const auto corrupted = inject_noise(blobs.classes, 0.1, 5, 18);
    const auto labels = LabelState::noisy(corrupted, 5);
    const auto ranking = label_error_scores(propagate(g, labels), labels);

    std::set<std::size_t> bad;
    for (std::size_t i = 0; i < corrupted.size(); ++i)
        if (corrupted[i] != blobs.classes[i]) bad.insert(i);
    REQUIRE(bad.size() == 100);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < bad.size(); ++r) hits += bad.count(ranking[r].index);
    const double precision = double(hits) / double(bad.size());
    MESSAGE("precision@corrupted = " << precision);
    CHECK(precision >= 0.9);
}
