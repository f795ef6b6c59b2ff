// lg: command-line entry points for graph building, propagation, simulation
// and the annotation service.
//
// Exit codes: 0 success, 2 usage or validation failure, 1 runtime failure.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "labelgraph/error.hpp"
#include "labelgraph/graph_io.hpp"
#include "labelgraph/parallel.hpp"
#include "labelgraph/propagation.hpp"
#include "labelgraph/service.hpp"
#include "labelgraph/workflows.hpp"

namespace {

using namespace lg;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Format:
        case ErrorKind::Parameter:
        case ErrorKind::Validation:
        case ErrorKind::NotFound:
        case ErrorKind::Conflict:
        case ErrorKind::Degenerate: return kExitUsage;
        case ErrorKind::Integrity:
        case ErrorKind::Io: return kExitRuntime;
    }
    return kExitRuntime;
}

void write_output(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + path);
    out << bytes;
    if (!out) fail(ErrorKind::Io, "write failed for " + path);
}

GraphBundle load_graph_with_features(const std::string& path) {
    auto bundle = read_graph_file(path);
    if (!bundle.features) fail(ErrorKind::Validation, "graph file " + path + " carries no feature ids; rebuild it with lg build");
    return bundle;
}

std::string read_input(const std::string& path, const char* what) {
    if (!std::filesystem::exists(path)) fail(ErrorKind::NotFound, std::string(what) + " file not found: " + path);
    return read_file_bytes(path);
}

std::size_t class_count(std::span<const std::int32_t> truth) {
    const auto max_class = *std::max_element(truth.begin(), truth.end());
    return std::max<std::size_t>(2, std::size_t(max_class + 1));
}

// --- build ------------------------------------------------------------------

struct BuildArgs {
    std::string features;
    std::size_t k = 10;
    double temperature = 0.01;
    std::string out;
};

void run_build(const BuildArgs& args) {
    const auto start = std::chrono::steady_clock::now();
    const auto features = read_feature_file(args.features);
    const auto graph = build_knn_graph(features, args.k, args.temperature);
    write_graph_file(args.out, graph, &features);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("# lg build k=%zu T=%s\n", args.k, format_double(args.temperature).c_str());
    std::printf("n=%zu d=%zu edges=%zu build_seconds=%.3f\n", features.n(), features.d(), graph.edge_count(), seconds);
}

// --- propagate --------------------------------------------------------------

struct PropagateArgs {
    std::string graph;
    std::string labels;
    int iterations = kDefaultIterations;
    std::optional<std::size_t> classes;
    std::string out;
};

void run_propagate(const PropagateArgs& args) {
    const auto bundle = load_graph_with_features(args.graph);
    const auto labels = parse_label_file(read_input(args.labels, "labels"), *bundle.features, args.classes);
    const auto soft = propagate(bundle.graph, labels, args.iterations);
    write_output(args.out, format_soft_labels(soft, *bundle.features));
    std::printf("n=%zu c=%zu trusted=%zu iterations=%d\n", soft.n, soft.num_classes, labels.trusted_count(),
                soft.iterations);
}

// --- simulate-al ------------------------------------------------------------

struct ActiveLearningArgs {
    std::string graph;
    std::string truth;
    std::size_t batch = 10;
    std::size_t budget = 100;
    std::size_t seeds = 1;
    std::string ablation = "full";
    double eval_fraction = 0.1;
    int iterations = kDefaultIterations;
    std::string config;
    std::string out;
};

void run_simulate_al(const ActiveLearningArgs& args) {
    const auto bundle = load_graph_with_features(args.graph);
    const auto truth = parse_truth_file(read_input(args.truth, "truth"), *bundle.features);
    const auto classes = class_count(truth);
    const std::size_t n = bundle.graph.n();

    ActiveLearningConfig base;
    base.batch_size = args.batch;
    base.budget = args.budget;
    base.iterations = args.iterations;
    base.include_unlabeled_pool = args.ablation == "full";
    base.eval_split = make_eval_split(n, args.eval_fraction, 0);
    if (!args.config.empty()) apply_json(base, nlohmann::json::parse(read_input(args.config, "config")), n);
    validate(base, n);

    std::vector<std::uint64_t> seeds(args.seeds);
    std::iota(seeds.begin(), seeds.end(), base.seed);
    const LabelOracle oracle = [&](std::size_t i) { return truth[i]; };
    const auto curves = run_seeds<std::vector<CurvePoint>>(seeds, [&](std::uint64_t seed) {
        auto config = base;
        config.seed = seed;
        return run_active_learning(bundle.graph, &*bundle.features, oracle, classes, config);
    });
    write_output(args.out, format_active_learning_csv(mean_curve(curves)));
    std::printf("ablation=%s seeds=%zu points=%zu\n", args.ablation.c_str(), seeds.size(), curves.front().size());
}

// --- simulate-noise ---------------------------------------------------------

struct NoiseArgs {
    std::string graph;
    std::string truth;
    std::vector<double> rates;
    int iterations = kDefaultIterations;
    std::uint64_t seed = 0;
    double eval_fraction = 0.1;
    std::string config;
    std::string out;
};

void run_simulate_noise(const NoiseArgs& args) {
    const auto bundle = load_graph_with_features(args.graph);
    const auto truth = parse_truth_file(read_input(args.truth, "truth"), *bundle.features);
    const auto classes = class_count(truth);
    const std::size_t n = bundle.graph.n();

    NoiseExperimentConfig base;
    base.iterations = args.iterations;
    base.seed = args.seed;
    base.eval_split = make_eval_split(n, args.eval_fraction, 0);
    if (!args.config.empty()) apply_json(base, nlohmann::json::parse(read_input(args.config, "config")), n);

    std::vector<NoiseStudyResult> results;
    for (double rate : args.rates) {
        auto config = base;
        config.noise_rate = rate;
        results.push_back(run_noise_study(bundle.graph, truth, classes, config));
    }
    write_output(args.out, format_noise_csv(results));
    std::printf("rates=%zu iterations=%d\n", results.size(), base.iterations);
}

// --- gen-blobs --------------------------------------------------------------

struct BlobArgs {
    BlobConfig config;
    std::string out;
    std::string truth_out;
};

void run_gen_blobs(const BlobArgs& args) {
    if (args.config.classes < 2) fail(ErrorKind::Parameter, "need ≥2 classes");
    const auto blobs = generate_blobs(args.config);
    write_output(args.out, blobs.feature_file());
    const auto truth_path = args.truth_out.empty() ? args.out + ".truth.jsonl" : args.truth_out;
    write_output(truth_path, blobs.truth_file());
    std::printf("n=%zu d=%zu classes=%zu truth=%s\n", blobs.n, blobs.dim, args.config.classes, truth_path.c_str());
}

// --- serve ------------------------------------------------------------------

struct ServeArgs {
    std::string store;
    std::string addr = "127.0.0.1:8080";
};

void run_serve(const ServeArgs& args) {
    const auto colon = args.addr.rfind(':');
    if (colon == std::string::npos) fail(ErrorKind::Parameter, "--addr must be HOST:PORT");
    const auto host = args.addr.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(args.addr.substr(colon + 1));
    } catch (const std::exception&) {
        fail(ErrorKind::Parameter, "--addr must be HOST:PORT");
    }

    AnnotationService service(args.store);
    httplib::Server server;
    service.bind(server);
    // Port 0 picks a free port; the bound address is printed once listening.
    if (port == 0) {
        port = server.bind_to_any_port(host);
        if (port < 0) fail(ErrorKind::Io, "cannot bind " + host);
    } else if (!server.bind_to_port(host, port)) {
        fail(ErrorKind::Io, "cannot bind " + args.addr);
    }
    std::printf("listening on %s:%d store=%s\n", host.c_str(), port, args.store.c_str());
    std::fflush(stdout);
    if (!server.listen_after_bind()) fail(ErrorKind::Io, "server on " + args.addr + " stopped");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lg: k-NN graph label propagation for annotation workflows"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "Worker thread cap (0 = all cores)");

    BuildArgs build;
    auto* build_cmd = app.add_subcommand("build", "Build a k-NN graph from a feature file");
    build_cmd->add_option("--features", build.features)->required();
    build_cmd->add_option("--k", build.k, "Neighbors per node")->capture_default_str();
    build_cmd->add_option("--temp", build.temperature, "Edge temperature T")->capture_default_str();
    build_cmd->add_option("--out", build.out)->required();

    PropagateArgs prop;
    auto* prop_cmd = app.add_subcommand("propagate", "Propagate labels over a graph");
    prop_cmd->add_option("--graph", prop.graph)->required();
    prop_cmd->add_option("--labels", prop.labels)->required();
    prop_cmd->add_option("--iters", prop.iterations)->capture_default_str();
    prop_cmd->add_option("--classes", prop.classes, "Class count (default: inferred from labels)");
    prop_cmd->add_option("--out", prop.out)->required();

    ActiveLearningArgs al;
    auto* al_cmd = app.add_subcommand("simulate-al", "Simulate random-acquisition active learning");
    al_cmd->add_option("--graph", al.graph)->required();
    al_cmd->add_option("--truth", al.truth)->required();
    al_cmd->add_option("--batch", al.batch)->capture_default_str();
    al_cmd->add_option("--budget", al.budget)->capture_default_str();
    al_cmd->add_option("--seeds", al.seeds, "Number of seeds averaged into the curve")->capture_default_str();
    al_cmd->add_option("--ablation", al.ablation)->check(CLI::IsMember({"full", "labeled-only"}))->capture_default_str();
    al_cmd->add_option("--eval-fraction", al.eval_fraction)->capture_default_str();
    al_cmd->add_option("--iters", al.iterations)->capture_default_str();
    al_cmd->add_option("--config", al.config, "JSON config overriding the flags");
    al_cmd->add_option("--out", al.out)->required();

    NoiseArgs noise;
    auto* noise_cmd = app.add_subcommand("simulate-noise", "Label-noise study");
    noise_cmd->add_option("--graph", noise.graph)->required();
    noise_cmd->add_option("--truth", noise.truth)->required();
    noise_cmd->add_option("--rates", noise.rates)->delimiter(',')->required();
    noise_cmd->add_option("--iters", noise.iterations)->capture_default_str();
    noise_cmd->add_option("--seed", noise.seed)->capture_default_str();
    noise_cmd->add_option("--eval-fraction", noise.eval_fraction)->capture_default_str();
    noise_cmd->add_option("--config", noise.config, "JSON config overriding the flags");
    noise_cmd->add_option("--out", noise.out)->required();

    BlobArgs blobs;
    auto* blobs_cmd = app.add_subcommand("gen-blobs", "Generate a synthetic Gaussian-blob feature file");
    blobs_cmd->add_option("--classes", blobs.config.classes)->capture_default_str();
    blobs_cmd->add_option("--n", blobs.config.n)->capture_default_str();
    blobs_cmd->add_option("--dim", blobs.config.dim)->capture_default_str();
    blobs_cmd->add_option("--sep", blobs.config.separation)->capture_default_str();
    blobs_cmd->add_option("--seed", blobs.config.seed)->capture_default_str();
    blobs_cmd->add_option("--out", blobs.out)->required();
    blobs_cmd->add_option("--truth-out", blobs.truth_out, "Ground-truth label file (default: <out>.truth.jsonl)");

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "Run the annotation HTTP service");
    serve_cmd->add_option("--store", serve.store)->required();
    serve_cmd->add_option("--addr", serve.addr)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        set_max_threads(threads);
        if (*build_cmd) run_build(build);
        if (*prop_cmd) run_propagate(prop);
        if (*al_cmd) run_simulate_al(al);
        if (*noise_cmd) run_simulate_noise(noise);
        if (*blobs_cmd) run_gen_blobs(blobs);
        if (*serve_cmd) run_serve(serve);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e.kind());
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "error: invalid JSON: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return 0;
}
