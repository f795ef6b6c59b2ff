#include "labelgraph/service.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>

#include <httplib.h>

#include "labelgraph/hashing.hpp"

namespace lg {

namespace {

using nlohmann::json;

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

HttpResponse json_response(int status, const json& body) { return {status, body.dump(), "application/json", {}}; }

HttpResponse error_response(int status, ErrorKind kind, const std::string& message, json detail = json::object()) {
    return json_response(status, {{"code", to_string(kind)}, {"message", message}, {"detail", std::move(detail)}});
}

template <typename Fn>
HttpResponse guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const EventRejected& e) {
        return error_response(422, e.kind(), e.what(), {{"index", e.index()}});
    } catch (const Error& e) {
        return error_response(http_status(e.kind()), e.kind(), e.what());
    } catch (const std::exception& e) {
        return error_response(500, ErrorKind::Io, e.what());
    }
}

std::size_t parse_count(const std::optional<std::string>& text, std::size_t fallback, const char* name) {
    if (!text) return fallback;
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(text->data(), text->data() + text->size(), value);
    if (ec != std::errc() || ptr != text->data() + text->size()) {
        fail(ErrorKind::Validation, std::string(name) + " must be a non-negative integer");
    }
    return value;
}

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find(',', start);
        if (end == std::string::npos) end = text.size();
        if (end > start) out.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return out;
}

SoftState empty_soft_state(const Session& session, const Session::LabelSnapshot& snap) {
    SoftState state;
    state.version = snap.version;
    state.labels = snap.labels;
    state.soft.n = session.features().n();
    state.soft.num_classes = snap.labels.num_classes;
    state.soft.scores.assign(state.soft.n * state.soft.num_classes, 0.0);
    state.pseudo = pseudo_labels(state.soft);
    return state;
}

// Soft row of sample i widened to `classes` columns.
std::vector<double> soft_row(const SoftState& state, std::size_t i, std::size_t classes) {
    std::vector<double> row(classes, 0.0);
    auto src = state.soft.row(i);
    std::copy_n(src.begin(), std::min(src.size(), classes), row.begin());
    return row;
}

}  // namespace

int http_status(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Parameter:
        case ErrorKind::Validation: return 400;
        case ErrorKind::Format:
        case ErrorKind::Degenerate: return 422;
        case ErrorKind::NotFound: return 404;
        case ErrorKind::Conflict: return 409;
        case ErrorKind::Integrity:
        case ErrorKind::Io: return 500;
    }
    return 500;
}

// ---------------------------------------------------------------------------
// PropagationScheduler
// ---------------------------------------------------------------------------

PropagationScheduler::PropagationScheduler(std::shared_ptr<Session> session, int iterations)
    : session_(std::move(session)), iterations_(iterations) {
    latest_ = std::make_shared<const SoftState>(empty_soft_state(*session_, session_->labels()));
    worker_ = std::thread([this] { loop(); });
}

PropagationScheduler::~PropagationScheduler() {
    {
        std::lock_guard lock(mutex_);
        stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
}

void PropagationScheduler::schedule() {
    {
        std::lock_guard lock(mutex_);
        pending_ = true;
    }
    cv_.notify_all();
}

void PropagationScheduler::wait_idle() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return stop_ || (!pending_ && !running_); });
}

std::shared_ptr<const SoftState> PropagationScheduler::latest() const {
    std::lock_guard lock(mutex_);
    return latest_;
}

std::uint64_t PropagationScheduler::runs() const {
    std::lock_guard lock(mutex_);
    return runs_;
}

void PropagationScheduler::loop() {
    std::unique_lock lock(mutex_);
    while (true) {
        cv_.wait(lock, [this] { return stop_ || pending_; });
        if (stop_) return;
        pending_ = false;
        running_ = true;
        lock.unlock();
        run_once();
        lock.lock();
        running_ = false;
        ++runs_;
        cv_.notify_all();
    }
}

void PropagationScheduler::run_once() {
    const auto snap = session_->labels();
    std::shared_ptr<SoftState> state;
    if (snap.labels.labeled_count() == 0) {
        state = std::make_shared<SoftState>(empty_soft_state(*session_, snap));
    } else {
        state = std::make_shared<SoftState>();
        state->version = snap.version;
        state->labels = snap.labels;
        state->soft = propagate(session_->graph(), snap.labels, iterations_);
        state->pseudo = pseudo_labels(state->soft);
    }
    state->completed_ms = now_ms();
    std::lock_guard lock(mutex_);
    // Versions published here only move forward.
    if (!latest_ || latest_->version <= state->version) latest_ = std::move(state);
}

// ---------------------------------------------------------------------------
// AnnotationService
// ---------------------------------------------------------------------------

AnnotationService::AnnotationService(std::filesystem::path store_root, ServiceOptions options)
    : store_(std::move(store_root)), options_(options) {}

AnnotationService::~AnnotationService() = default;

AnnotationService::Runtime& AnnotationService::runtime(const std::string& id) {
    std::lock_guard lock(mutex_);
    auto it = runtimes_.find(id);
    if (it != runtimes_.end()) return *it->second;

    auto rt = std::make_unique<Runtime>();
    rt->session = store_.open(id);
    rt->scheduler = std::make_unique<PropagationScheduler>(rt->session, options_.iterations);
    rt->rng.seed(std::stoull(sha256_hex(id).substr(0, 16), nullptr, 16));
    // Sessions restored with labels get a fresh propagation.
    if (rt->session->version() > 0) rt->scheduler->schedule();
    auto& ref = *rt;
    runtimes_.emplace(id, std::move(rt));
    return ref;
}

json AnnotationService::descriptor(Runtime& rt) {
    const auto& meta = rt.session->meta();
    const auto snap = rt.session->labels();
    const auto soft = rt.scheduler->latest();
    return {{"session_id", meta.session_id},
            {"n", meta.n},
            {"d", meta.d},
            {"c", meta.num_classes ? json(*meta.num_classes) : json(nullptr)},
            {"k", meta.k},
            {"T", meta.temperature},
            {"mode", to_string(meta.mode)},
            {"version", snap.version},
            {"soft_version", soft->version},
            {"labeled", snap.labels.labeled_count()},
            {"trusted", snap.labels.trusted_count()},
            {"last_propagation_ms", soft->completed_ms},
            {"propagation_runs", rt.scheduler->runs()}};
}

HttpResponse AnnotationService::create_session(std::string_view feature_bytes, const json& params) {
    return guarded([&] {
        if (!params.is_object()) fail(ErrorKind::Validation, "params must be a JSON object");
        std::size_t k = 10;
        double temperature = 0.01;
        WorkflowMode mode = WorkflowMode::ActiveLearning;
        std::optional<std::size_t> classes;
        try {
            if (params.contains("k")) {
                const auto v = params.at("k").get<std::int64_t>();
                if (v < 1) fail(ErrorKind::Validation, "k must be >= 1");
                k = std::size_t(v);
            }
            if (params.contains("T")) temperature = params.at("T").get<double>();
            if (params.contains("temperature")) temperature = params.at("temperature").get<double>();
            if (params.contains("mode")) mode = parse_mode(params.at("mode").get<std::string>());
            if (params.contains("num_classes") && !params.at("num_classes").is_null()) {
                classes = params.at("num_classes").get<std::size_t>();
            }
        } catch (const json::exception& e) {
            fail(ErrorKind::Validation, std::string("invalid params: ") + e.what());
        }
        auto result = store_.create_session(feature_bytes, k, temperature, mode, classes);
        auto& rt = runtime(result.session->id());
        return json_response(result.created ? 201 : 200, descriptor(rt));
    });
}

HttpResponse AnnotationService::list_sessions() {
    return guarded([&] {
        json items = json::array();
        for (const auto& id : store_.list()) items.push_back(descriptor(runtime(id)));
        return json_response(200, {{"sessions", items}});
    });
}

HttpResponse AnnotationService::get_session(const std::string& id) {
    return guarded([&] { return json_response(200, descriptor(runtime(id))); });
}

HttpResponse AnnotationService::next(const std::string& id, std::optional<std::string> count,
                                     std::optional<std::string> strategy) {
    return guarded([&] {
        auto& rt = runtime(id);
        if (strategy && *strategy != "random") fail(ErrorKind::Validation, "unknown strategy '" + *strategy + "'");
        const std::size_t wanted = parse_count(count, 10, "count");
        const auto snap = rt.session->labels();
        const auto soft = rt.scheduler->latest();

        std::vector<std::size_t> picked;
        {
            std::lock_guard lock(rt.suggest_mutex);
            std::vector<std::size_t> pool;
            for (std::size_t i = 0; i < snap.labels.n(); ++i) {
                if (!snap.labels.trusted[i] && !rt.suggested.contains(i)) pool.push_back(i);
            }
            if (pool.empty()) {
                return error_response(409, ErrorKind::Conflict, "annotation pool exhausted",
                                      {{"version", snap.version}, {"soft_version", soft->version}});
            }
            const std::size_t m = std::min(wanted, pool.size());
            for (std::size_t s = 0; s < m; ++s) {
                std::uniform_int_distribution<std::size_t> pick(s, pool.size() - 1);
                std::swap(pool[s], pool[pick(rt.rng)]);
                picked.push_back(pool[s]);
                rt.suggested.insert(pool[s]);
            }
        }

        json items = json::array();
        for (auto i : picked) {
            items.push_back({{"id", rt.session->features().id(i)},
                             {"pseudo", soft->pseudo.classes[i]},
                             {"confidence", soft->pseudo.confidence[i]}});
        }
        const bool exhausted = picked.size() < wanted;
        auto response = json_response(200, {{"suggestions", items},
                                            {"exhausted", exhausted},
                                            {"version", snap.version},
                                            {"soft_version", soft->version}});
        if (exhausted) response.headers.emplace_back("X-Pool-Exhausted", "true");
        return response;
    });
}

HttpResponse AnnotationService::post_labels(const std::string& id, std::string_view body) {
    return guarded([&] {
        auto& rt = runtime(id);
        json doc;
        try {
            doc = json::parse(body);
        } catch (const json::parse_error& e) {
            fail(ErrorKind::Validation, std::string("body is not JSON: ") + e.what());
        }
        const json* list = &doc;
        if (doc.is_object() && doc.contains("events")) list = &doc["events"];
        if (!list->is_array()) fail(ErrorKind::Validation, "expected {\"events\": [...]} or an array of events");

        std::vector<LabelEvent> events;
        events.reserve(list->size());
        for (std::size_t e = 0; e < list->size(); ++e) {
            try {
                events.push_back(event_from_json((*list)[e]));
            } catch (const Error& err) {
                throw EventRejected(e, ErrorKind::Validation, "event " + std::to_string(e) + ": " + err.what());
            }
        }
        const auto version = rt.session->apply(events);
        {
            std::lock_guard lock(rt.suggest_mutex);
            for (const auto& event : events) {
                if (event.action == LabelAction::Reject) rt.suggested.erase(*rt.session->features().index_of(event.sample_id));
            }
        }
        rt.scheduler->schedule();
        return json_response(200, {{"version", version},
                                   {"soft_version", rt.scheduler->latest()->version},
                                   {"applied", events.size()},
                                   {"propagation", "scheduled"}});
    });
}

HttpResponse AnnotationService::pseudo(const std::string& id, std::optional<std::string> ids) {
    return guarded([&] {
        auto& rt = runtime(id);
        const auto soft = rt.scheduler->latest();
        const auto& features = rt.session->features();
        json results = json::array();
        json missing = json::array();
        auto emit = [&](std::size_t i) {
            auto row = soft->soft.row(i);
            results.push_back({{"id", features.id(i)},
                               {"scores", std::vector<double>(row.begin(), row.end())},
                               {"pseudo", soft->pseudo.classes[i]},
                               {"confidence", soft->pseudo.confidence[i]}});
        };
        if (ids) {
            for (const auto& sample : split_csv(*ids)) {
                if (auto idx = features.index_of(sample)) {
                    emit(*idx);
                } else {
                    missing.push_back(sample);
                }
            }
        } else {
            for (std::size_t i = 0; i < features.n(); ++i) emit(i);
        }
        return json_response(200, {{"results", results},
                                   {"missing", missing},
                                   {"version", rt.session->version()},
                                   {"soft_version", soft->version}});
    });
}

HttpResponse AnnotationService::verify(const std::string& id, std::optional<std::string> limit) {
    return guarded([&] {
        auto& rt = runtime(id);
        const auto snap = rt.session->labels();
        const auto soft = rt.scheduler->latest();
        if (snap.labels.labeled_count() == 0) {
            return error_response(409, ErrorKind::Conflict, "no labels to verify",
                                  {{"version", snap.version}, {"soft_version", soft->version}});
        }
        const std::size_t wanted = parse_count(limit, 20, "limit");

        SoftLabelMatrix widened;
        widened.n = snap.labels.n();
        widened.num_classes = snap.labels.num_classes;
        widened.scores.reserve(widened.n * widened.num_classes);
        for (std::size_t i = 0; i < widened.n; ++i) {
            auto row = soft_row(*soft, i, widened.num_classes);
            widened.scores.insert(widened.scores.end(), row.begin(), row.end());
        }
        auto candidates = label_error_scores(widened, snap.labels);
        const auto& features = rt.session->features();
        std::stable_sort(candidates.begin(), candidates.end(), [&](const auto& a, const auto& b) {
            if (a.score != b.score) return a.score > b.score;
            return features.id(a.index) < features.id(b.index);
        });

        json items = json::array();
        for (std::size_t r = 0; r < std::min(wanted, candidates.size()); ++r) {
            const auto i = candidates[r].index;
            items.push_back({{"id", features.id(i)},
                             {"given", *snap.labels.given[i]},
                             {"trusted", bool(snap.labels.trusted[i])},
                             {"pseudo", argmax_class(widened.row(i))},
                             {"score", candidates[r].score}});
        }
        return json_response(200, {{"items", items}, {"version", snap.version}, {"soft_version", soft->version}});
    });
}

HttpResponse AnnotationService::export_session(const std::string& id, std::optional<std::string> part) {
    return guarded([&] {
        auto& rt = runtime(id);
        const auto snap = rt.session->labels();
        const auto soft = rt.scheduler->latest();
        const auto& features = rt.session->features();
        const std::vector<std::pair<std::string, std::string>> headers = {
            {"X-Version", std::to_string(snap.version)}, {"X-Soft-Version", std::to_string(soft->version)}};
        if (!part) {
            return json_response(200, {{"labels", format_label_file(snap.labels, features)},
                                       {"soft", format_soft_labels(soft->soft, features)},
                                       {"version", snap.version},
                                       {"soft_version", soft->version}});
        }
        HttpResponse response;
        response.content_type = "application/x-ndjson";
        response.headers = headers;
        if (*part == "labels") {
            response.body = format_label_file(snap.labels, features);
        } else if (*part == "soft") {
            response.body = format_soft_labels(soft->soft, features);
        } else {
            fail(ErrorKind::Validation, "part must be 'labels' or 'soft'");
        }
        return response;
    });
}

void AnnotationService::wait_idle(const std::string& id) { runtime(id).scheduler->wait_idle(); }

std::uint64_t AnnotationService::propagation_runs(const std::string& id) { return runtime(id).scheduler->runs(); }

void AnnotationService::bind(httplib::Server& server) {
    auto reply = [](httplib::Response& res, const HttpResponse& out) {
        res.status = out.status;
        for (const auto& [k, v] : out.headers) res.set_header(k, v);
        res.set_content(out.body, out.content_type);
    };
    auto param = [](const httplib::Request& req, const char* key) -> std::optional<std::string> {
        if (!req.has_param(key)) return std::nullopt;
        return req.get_param_value(key);
    };

    server.Post("/sessions", [this, reply](const httplib::Request& req, httplib::Response& res) {
        if (!req.has_file("features")) {
            reply(res, error_response(400, ErrorKind::Validation, "multipart field 'features' is required"));
            return;
        }
        json params = json::object();
        if (req.has_file("params")) {
            try {
                params = json::parse(req.get_file_value("params").content);
            } catch (const json::parse_error&) {
                reply(res, error_response(400, ErrorKind::Validation, "params is not valid JSON"));
                return;
            }
        }
        reply(res, create_session(req.get_file_value("features").content, params));
    });
    server.Get("/sessions", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, list_sessions()); });
    server.Get(R"(/sessions/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, get_session(req.matches[1]));
    });
    server.Get(R"(/sessions/([^/]+)/next)", [this, reply, param](const httplib::Request& req, httplib::Response& res) {
        reply(res, next(req.matches[1], param(req, "count"), param(req, "strategy")));
    });
    server.Post(R"(/sessions/([^/]+)/labels)", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, post_labels(req.matches[1], req.body));
    });
    server.Get(R"(/sessions/([^/]+)/pseudo)", [this, reply, param](const httplib::Request& req, httplib::Response& res) {
        reply(res, pseudo(req.matches[1], param(req, "ids")));
    });
    server.Get(R"(/sessions/([^/]+)/verify)", [this, reply, param](const httplib::Request& req, httplib::Response& res) {
        reply(res, verify(req.matches[1], param(req, "limit")));
    });
    server.Get(R"(/sessions/([^/]+)/export)", [this, reply, param](const httplib::Request& req, httplib::Response& res) {
        reply(res, export_session(req.matches[1], param(req, "part")));
    });
}

}  // namespace lg
