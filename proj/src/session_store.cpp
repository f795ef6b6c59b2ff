#include "labelgraph/session_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>

#include "labelgraph/graph_io.hpp"
#include "labelgraph/hashing.hpp"

namespace lg {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFeaturesFile = "features.lgf";
constexpr const char* kGraphFile = "graph.bin";
constexpr const char* kEventsFile = "events.jsonl";
constexpr const char* kMetaFile = "meta.json";

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

// Shared by live application and replay so both fold identically.
void fold_event(LabelState& state, std::size_t index, const LabelEvent& event) {
    switch (event.action) {
        case LabelAction::Label:
            if (event.trusted) {
                state.set_trusted(index, *event.cls);
            } else {
                state.set_untrusted(index, *event.cls);
            }
            break;
        case LabelAction::Relabel:
            state.set_trusted(index, *event.cls);
            break;
        case LabelAction::Verify:
            state.set_trusted(index, event.cls ? *event.cls : *state.given[index]);
            break;
        case LabelAction::Reject:
            state.clear(index);
            break;
    }
}

std::size_t inferred_classes(const LabelState& state, std::optional<std::size_t> declared) {
    if (declared) return *declared;
    std::int32_t max_class = -1;
    for (const auto& g : state.given) {
        if (g) max_class = std::max(max_class, *g);
    }
    return std::max<std::size_t>(2, std::size_t(max_class + 1));
}

nlohmann::json meta_to_json(const SessionMeta& meta) {
    nlohmann::json doc = {{"session_id", meta.session_id},
                          {"k", meta.k},
                          {"T", meta.temperature},
                          {"mode", to_string(meta.mode)},
                          {"feature_hash", meta.feature_hash},
                          {"n", meta.n},
                          {"d", meta.d}};
    doc["c"] = meta.num_classes ? nlohmann::json(*meta.num_classes) : nlohmann::json(nullptr);
    return doc;
}

SessionMeta meta_from_json(const nlohmann::json& doc) {
    SessionMeta meta;
    meta.session_id = doc.at("session_id").get<std::string>();
    meta.k = doc.at("k").get<std::size_t>();
    meta.temperature = doc.at("T").get<double>();
    meta.mode = parse_mode(doc.at("mode").get<std::string>());
    meta.feature_hash = doc.at("feature_hash").get<std::string>();
    meta.n = doc.at("n").get<std::size_t>();
    meta.d = doc.at("d").get<std::size_t>();
    if (doc.contains("c") && !doc.at("c").is_null()) meta.num_classes = doc.at("c").get<std::size_t>();
    return meta;
}

void write_all(int fd, std::string_view bytes, const fs::path& path) {
    while (!bytes.empty()) {
        const ssize_t written = ::write(fd, bytes.data(), bytes.size());
        if (written < 0) fail(ErrorKind::Io, "write failed for " + path.string());
        bytes.remove_prefix(std::size_t(written));
    }
}

}  // namespace

const char* to_string(WorkflowMode mode) {
    return mode == WorkflowMode::ActiveLearning ? "active_learning" : "verification";
}

const char* to_string(LabelAction action) {
    switch (action) {
        case LabelAction::Label: return "label";
        case LabelAction::Relabel: return "relabel";
        case LabelAction::Verify: return "verify";
        case LabelAction::Reject: return "reject";
    }
    return "label";
}

WorkflowMode parse_mode(std::string_view text) {
    if (text == "active_learning") return WorkflowMode::ActiveLearning;
    if (text == "verification") return WorkflowMode::Verification;
    fail(ErrorKind::Validation, "unknown workflow mode '" + std::string(text) + "'");
}

LabelAction parse_action(std::string_view text) {
    if (text == "label") return LabelAction::Label;
    if (text == "relabel") return LabelAction::Relabel;
    if (text == "verify") return LabelAction::Verify;
    if (text == "reject") return LabelAction::Reject;
    fail(ErrorKind::Validation, "unknown action '" + std::string(text) + "'");
}

nlohmann::json to_json(const LabelEvent& event) {
    nlohmann::json obj = {{"sample_id", event.sample_id},
                          {"annotator", event.annotator},
                          {"ts", event.timestamp_ms},
                          {"action", to_string(event.action)},
                          {"trusted", event.trusted}};
    obj["class"] = event.cls ? nlohmann::json(*event.cls) : nlohmann::json(nullptr);
    return obj;
}

LabelEvent event_from_json(const nlohmann::json& obj) {
    if (!obj.is_object()) fail(ErrorKind::Validation, "event must be an object");
    LabelEvent event;
    const char* id_key = obj.contains("sample_id") ? "sample_id" : "id";
    if (!obj.contains(id_key) || !obj[id_key].is_string()) fail(ErrorKind::Validation, "event needs a string sample_id");
    event.sample_id = obj[id_key].get<std::string>();
    if (obj.contains("action")) {
        if (!obj["action"].is_string()) fail(ErrorKind::Validation, "action must be a string");
        event.action = parse_action(obj["action"].get<std::string>());
    }
    if (obj.contains("class") && !obj["class"].is_null()) {
        if (!obj["class"].is_number_integer()) fail(ErrorKind::Validation, "class must be an integer");
        const auto cls = obj["class"].get<std::int64_t>();
        if (cls < 0 || cls > INT32_MAX) fail(ErrorKind::Validation, "class out of range");
        event.cls = std::int32_t(cls);
    }
    if (obj.contains("annotator")) {
        if (!obj["annotator"].is_string()) fail(ErrorKind::Validation, "annotator must be a string");
        event.annotator = obj["annotator"].get<std::string>();
    }
    if (obj.contains("ts")) {
        if (!obj["ts"].is_number_integer()) fail(ErrorKind::Validation, "ts must be an integer");
        event.timestamp_ms = obj["ts"].get<std::int64_t>();
    }
    if (obj.contains("trusted")) {
        if (!obj["trusted"].is_boolean()) fail(ErrorKind::Validation, "trusted must be a boolean");
        event.trusted = obj["trusted"].get<bool>();
    }
    return event;
}

LabelState replay_events(std::span<const LabelEvent> events, const FeatureMatrix& features,
                         std::optional<std::size_t> num_classes) {
    LabelState state = LabelState::unlabeled(features.n(), 2);
    for (const auto& event : events) {
        const auto idx = features.index_of(event.sample_id);
        if (!idx) fail(ErrorKind::Validation, "event for unknown sample '" + event.sample_id + "'");
        fold_event(state, *idx, event);
    }
    state.num_classes = inferred_classes(state, num_classes);
    return state;
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

Session::~Session() {
    if (log_fd_ >= 0) ::close(log_fd_);
}

std::size_t Session::effective_classes(const LabelState& state) const {
    return inferred_classes(state, meta_.num_classes);
}

Session::LabelSnapshot Session::labels() const {
    std::shared_lock lock(mutex_);
    return {labels_, events_.size()};
}

std::uint64_t Session::version() const {
    std::shared_lock lock(mutex_);
    return events_.size();
}

std::vector<LabelEvent> Session::events() const {
    std::shared_lock lock(mutex_);
    return events_;
}

void Session::validate_event(const LabelEvent& event, std::size_t index, const LabelState& state) const {
    const std::string where = "event " + std::to_string(index) + ": ";
    const auto idx = features_.index_of(event.sample_id);
    if (!idx) throw EventRejected(index, ErrorKind::NotFound, where + "unknown sample '" + event.sample_id + "'");
    if (event.cls && meta_.num_classes && std::size_t(*event.cls) >= *meta_.num_classes) {
        throw EventRejected(index, ErrorKind::Validation,
                            where + "class " + std::to_string(*event.cls) + " outside [0, " +
                                std::to_string(*meta_.num_classes) + ")");
    }
    if (!event.trusted && event.action != LabelAction::Label) {
        throw EventRejected(index, ErrorKind::Validation, where + "only label events may be untrusted");
    }
    switch (event.action) {
        case LabelAction::Label:
        case LabelAction::Relabel:
            if (!event.cls) throw EventRejected(index, ErrorKind::Validation, where + "missing class");
            break;
        case LabelAction::Verify:
            if (!event.cls && !state.given[*idx]) {
                throw EventRejected(index, ErrorKind::Validation, where + "verify needs a class for an unlabeled sample");
            }
            break;
        case LabelAction::Reject:
            break;
    }
}

std::uint64_t Session::apply(std::span<const LabelEvent> events) {
    std::unique_lock lock(mutex_);
    LabelState next = labels_;
    std::vector<LabelEvent> stamped(events.begin(), events.end());
    const auto stamp = now_ms();
    for (std::size_t e = 0; e < stamped.size(); ++e) {
        validate_event(stamped[e], e, next);
        if (stamped[e].timestamp_ms == 0) stamped[e].timestamp_ms = stamp;
        fold_event(next, *features_.index_of(stamped[e].sample_id), stamped[e]);
    }
    if (stamped.empty()) return events_.size();

    std::string lines;
    for (std::size_t e = 0; e < stamped.size(); ++e) {
        auto obj = to_json(stamped[e]);
        obj["seq"] = events_.size() + e + 1;
        lines += obj.dump();
        lines += '\n';
    }
    const auto log_path = dir_ / kEventsFile;
    write_all(log_fd_, lines, log_path);
    if (::fsync(log_fd_) != 0) fail(ErrorKind::Io, "fsync failed for " + log_path.string());

    next.num_classes = effective_classes(next);
    labels_ = std::move(next);
    events_.insert(events_.end(), stamped.begin(), stamped.end());
    return events_.size();
}

void Session::snapshot() const {
    std::shared_lock lock(mutex_);
    if (::fsync(log_fd_) != 0) fail(ErrorKind::Io, "fsync failed for " + (dir_ / kEventsFile).string());
    if (!fs::exists(dir_ / kGraphFile)) write_graph_file(dir_ / kGraphFile, graph_, nullptr);
}

// ---------------------------------------------------------------------------
// SessionStore
// ---------------------------------------------------------------------------

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

std::string SessionStore::session_id_for(const std::string& feature_hash, std::size_t k, double temperature,
                                         WorkflowMode mode) {
    char t[64];
    std::snprintf(t, sizeof t, "%.17g", temperature);
    const std::string key = feature_hash + "|" + std::to_string(k) + "|" + t + "|" + to_string(mode);
    return sha256_hex(key).substr(0, 16);
}

SessionStore::CreateResult SessionStore::create_session(std::string_view feature_bytes, std::size_t k,
                                                        double temperature, WorkflowMode mode,
                                                        std::optional<std::size_t> num_classes) {
    if (num_classes && *num_classes < 2) fail(ErrorKind::Parameter, "need >=2 classes");
    const auto hash = sha256_hex(feature_bytes);
    const auto id = session_id_for(hash, k, temperature, mode);

    std::unique_lock lock(mutex_);
    if (fs::exists(root_ / id)) {
        lock.unlock();
        return {open(id), false};
    }

    auto features = ingest_features(feature_bytes);
    auto graph = build_knn_graph(features, k, temperature);

    SessionMeta meta;
    meta.session_id = id;
    meta.k = k;
    meta.temperature = temperature;
    meta.num_classes = num_classes;
    meta.mode = mode;
    meta.feature_hash = hash;
    meta.n = features.n();
    meta.d = features.d();

    // Stage in a scratch directory so a failure never leaves partial state.
    std::random_device rd;
    const auto staging = root_ / (".staging-" + id + "-" + std::to_string(rd()));
    fs::create_directories(staging);
    try {
        write_file_atomic(staging / kFeaturesFile, feature_bytes);
        write_graph_file(staging / kGraphFile, graph, nullptr);
        write_file_atomic(staging / kEventsFile, "");
        write_file_atomic(staging / kMetaFile, meta_to_json(meta).dump(2) + "\n");
        fs::rename(staging, root_ / id);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }

    auto session = load(id);
    cache_[id] = session;
    return {session, true};
}

SessionStore::CreateResult SessionStore::create_session_from_file(const fs::path& feature_file, std::size_t k,
                                                                  double temperature, WorkflowMode mode,
                                                                  std::optional<std::size_t> num_classes) {
    if (!fs::exists(feature_file)) fail(ErrorKind::NotFound, "features file not found: " + feature_file.string());
    return create_session(read_file_bytes(feature_file), k, temperature, mode, num_classes);
}

std::shared_ptr<Session> SessionStore::open(const std::string& session_id) {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(session_id);
    if (it != cache_.end()) return it->second;
    auto session = load(session_id);
    cache_[session_id] = session;
    return session;
}

std::shared_ptr<Session> SessionStore::restore(const std::string& session_id) {
    std::lock_guard lock(mutex_);
    cache_.erase(session_id);
    auto session = load(session_id);
    cache_[session_id] = session;
    return session;
}

std::uint64_t SessionStore::apply_label_event(const std::string& session_id, const LabelEvent& event) {
    auto session = open(session_id);
    try {
        return session->apply(std::span<const LabelEvent>(&event, 1));
    } catch (const EventRejected& e) {
        throw Error(e.kind(), e.what());
    }
}

std::vector<std::string> SessionStore::list() const {
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(root_)) {
        const auto name = entry.path().filename().string();
        if (entry.is_directory() && !name.starts_with(".")) ids.push_back(name);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::shared_ptr<Session> SessionStore::load(const std::string& session_id) const {
    if (session_id.empty() || session_id.find('/') != std::string::npos || session_id.starts_with(".")) {
        fail(ErrorKind::NotFound, "unknown session '" + session_id + "'");
    }
    const auto dir = root_ / session_id;
    if (!fs::is_directory(dir)) fail(ErrorKind::NotFound, "unknown session '" + session_id + "'");

    auto session = std::shared_ptr<Session>(new Session());
    session->dir_ = dir;

    const auto meta_path = dir / kMetaFile;
    try {
        session->meta_ = meta_from_json(nlohmann::json::parse(read_file_bytes(meta_path)));
    } catch (const std::exception& e) {
        fail(ErrorKind::Integrity, "corrupt session metadata " + meta_path.string() + ": " + e.what());
    }
    const auto& meta = session->meta_;

    const auto features_path = dir / kFeaturesFile;
    std::string feature_bytes;
    try {
        feature_bytes = read_file_bytes(features_path);
        if (sha256_hex(feature_bytes) != meta.feature_hash) fail(ErrorKind::Integrity, "hash mismatch");
        session->features_ = ingest_features(feature_bytes);
    } catch (const std::exception& e) {
        fail(ErrorKind::Integrity, "corrupt feature file " + features_path.string() + ": " + e.what());
    }

    const auto graph_path = dir / kGraphFile;
    if (fs::exists(graph_path)) {
        session->graph_ = read_graph_file(graph_path).graph;
        const auto& g = session->graph_;
        if (g.n() != meta.n || g.k() != meta.k || g.temperature() != meta.temperature) {
            fail(ErrorKind::Integrity, "graph file " + graph_path.string() + " does not match " + meta_path.string());
        }
    } else {
        session->graph_ = build_knn_graph(session->features_, meta.k, meta.temperature);
        write_graph_file(graph_path, session->graph_, nullptr);
    }

    const auto events_path = dir / kEventsFile;
    std::string log;
    try {
        log = read_file_bytes(events_path);
    } catch (const Error&) {
        fail(ErrorKind::Integrity, "missing event log " + events_path.string());
    }
    if (!log.empty() && log.back() != '\n') fail(ErrorKind::Integrity, "event log " + events_path.string() + " is truncated");
    std::size_t start = 0;
    while (start < log.size()) {
        const auto end = log.find('\n', start);
        const auto line = std::string_view(log).substr(start, end - start);
        start = end + 1;
        try {
            const auto obj = nlohmann::json::parse(line);
            if (obj.at("seq").get<std::uint64_t>() != session->events_.size() + 1) fail(ErrorKind::Integrity, "sequence gap");
            session->events_.push_back(event_from_json(obj));
        } catch (const std::exception& e) {
            fail(ErrorKind::Integrity, "corrupt event log " + events_path.string() + " at record " +
                                           std::to_string(session->events_.size() + 1) + ": " + e.what());
        }
    }
    try {
        session->labels_ = replay_events(session->events_, session->features_, meta.num_classes);
    } catch (const Error& e) {
        fail(ErrorKind::Integrity, "event log " + events_path.string() + " does not replay: " + e.what());
    }

    session->log_fd_ = ::open(events_path.c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
    if (session->log_fd_ < 0) fail(ErrorKind::Io, "cannot open " + events_path.string() + " for append");
    return session;
}

}  // namespace lg
