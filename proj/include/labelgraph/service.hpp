#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "labelgraph/propagation.hpp"
#include "labelgraph/session_store.hpp"

namespace httplib {
class Server;
}

namespace lg {

struct HttpResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
    std::vector<std::pair<std::string, std::string>> headers;

    nlohmann::json json() const { return nlohmann::json::parse(body); }
};

// Latest completed propagation for a session and the label version it
// reflects.
struct SoftState {
    std::uint64_t version = 0;
    LabelState labels;
    SoftLabelMatrix soft;
    PseudoLabels pseudo;
    std::int64_t completed_ms = 0;
};

// Background propagation for one session. schedule() never blocks on the
// computation: a request arriving while a run is in flight marks a single
// pending run, so bursts cost at most one extra run.
class PropagationScheduler {
public:
    PropagationScheduler(std::shared_ptr<Session> session, int iterations);
    ~PropagationScheduler();

    PropagationScheduler(const PropagationScheduler&) = delete;
    PropagationScheduler& operator=(const PropagationScheduler&) = delete;

    void schedule();
    void wait_idle();
    std::shared_ptr<const SoftState> latest() const;
    std::uint64_t runs() const;

private:
    void loop();
    void run_once();

    std::shared_ptr<Session> session_;
    int iterations_;

    mutable std::mutex mutex_;
    std::condition_variable cv_;
    bool pending_ = false;
    bool running_ = false;
    bool stop_ = false;
    std::uint64_t runs_ = 0;
    std::shared_ptr<const SoftState> latest_;
    std::thread worker_;
};

struct ServiceOptions {
    int iterations = kDefaultIterations;
};

// HTTP/JSON surface over the session store. Handlers are plain methods so
// they can be exercised without a socket; bind() registers them on an
// httplib server.
class AnnotationService {
public:
    explicit AnnotationService(std::filesystem::path store_root, ServiceOptions options = {});
    ~AnnotationService();

    HttpResponse create_session(std::string_view feature_bytes, const nlohmann::json& params);
    HttpResponse list_sessions();
    HttpResponse get_session(const std::string& id);
    HttpResponse next(const std::string& id, std::optional<std::string> count, std::optional<std::string> strategy);
    HttpResponse post_labels(const std::string& id, std::string_view body);
    HttpResponse pseudo(const std::string& id, std::optional<std::string> ids);
    HttpResponse verify(const std::string& id, std::optional<std::string> limit);
    HttpResponse export_session(const std::string& id, std::optional<std::string> part);

    void bind(httplib::Server& server);

    // Test and shutdown hooks.
    void wait_idle(const std::string& id);
    std::uint64_t propagation_runs(const std::string& id);
    SessionStore& store() { return store_; }

private:
    struct Runtime {
        std::shared_ptr<Session> session;
        std::unique_ptr<PropagationScheduler> scheduler;
        std::mutex suggest_mutex;
        std::mt19937_64 rng;
        std::unordered_set<std::size_t> suggested;
    };

    Runtime& runtime(const std::string& id);
    nlohmann::json descriptor(Runtime& rt);

    SessionStore store_;
    ServiceOptions options_;
    std::mutex mutex_;
    std::map<std::string, std::unique_ptr<Runtime>> runtimes_;
};

// Maps an error kind to its HTTP status.
int http_status(ErrorKind kind);

}  // namespace lg
