#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "labelgraph/error.hpp"
#include "labelgraph/features.hpp"
#include "labelgraph/knn_graph.hpp"
#include "labelgraph/labels.hpp"

namespace lg {

enum class WorkflowMode { ActiveLearning, Verification };
enum class LabelAction { Label, Relabel, Verify, Reject };

const char* to_string(WorkflowMode mode);
const char* to_string(LabelAction action);
WorkflowMode parse_mode(std::string_view text);
LabelAction parse_action(std::string_view text);

struct LabelEvent {
    std::string sample_id;
    std::optional<std::int32_t> cls;  // required except for reject (and verify of a labeled sample)
    std::string annotator;
    std::int64_t timestamp_ms = 0;  // 0 -> stamped on apply
    LabelAction action = LabelAction::Label;
    // A label event with trusted = false records an unverified (possibly
    // noisy) class, e.g. when importing an existing annotation file.
    bool trusted = true;
};

nlohmann::json to_json(const LabelEvent& event);
// Throws Validation on a malformed object.
LabelEvent event_from_json(const nlohmann::json& obj);

// Thrown when a batch is rejected; `index` is the first offending event.
class EventRejected : public Error {
public:
    EventRejected(std::size_t index, ErrorKind kind, const std::string& message)
        : Error(kind, message), index_(index) {}
    std::size_t index() const { return index_; }

private:
    std::size_t index_;
};

struct SessionMeta {
    std::string session_id;
    std::size_t k = 10;
    double temperature = 0.01;
    std::optional<std::size_t> num_classes;  // absent: inferred from labels
    WorkflowMode mode = WorkflowMode::ActiveLearning;
    std::string feature_hash;
    std::size_t n = 0;
    std::size_t d = 0;
};

// Folds events over an empty label state. Events must already be valid for
// `features`; classes beyond `num_classes` widen the result.
LabelState replay_events(std::span<const LabelEvent> events, const FeatureMatrix& features,
                         std::optional<std::size_t> num_classes);

// One annotation session: immutable features and graph plus an event-sourced
// label state. Writers are serialized; readers see a consistent version.
class Session {
public:
    struct LabelSnapshot {
        LabelState labels;
        std::uint64_t version = 0;
    };

    const SessionMeta& meta() const { return meta_; }
    const std::string& id() const { return meta_.session_id; }
    const FeatureMatrix& features() const { return features_; }
    const KnnGraph& graph() const { return graph_; }
    const std::filesystem::path& directory() const { return dir_; }

    LabelSnapshot labels() const;
    std::uint64_t version() const;
    std::vector<LabelEvent> events() const;

    // Validates the whole batch, appends it durably, then updates the label
    // state. Each event advances the version by one. Nothing is applied when
    // any event is invalid.
    std::uint64_t apply(std::span<const LabelEvent> events);

    // Forces log data to disk and rewrites a missing graph cache.
    void snapshot() const;

private:
    friend class SessionStore;
    Session() = default;

    void validate_event(const LabelEvent& event, std::size_t index, const LabelState& state) const;
    std::size_t effective_classes(const LabelState& state) const;

    SessionMeta meta_;
    std::filesystem::path dir_;
    FeatureMatrix features_;
    KnnGraph graph_;

    mutable std::shared_mutex mutex_;
    LabelState labels_;
    std::vector<LabelEvent> events_;
    int log_fd_ = -1;

public:
    ~Session();
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;
};

// On-disk layout: <root>/<session_id>/{features.lgf, graph.bin,
// events.jsonl, meta.json}.
class SessionStore {
public:
    explicit SessionStore(std::filesystem::path root);

    struct CreateResult {
        std::shared_ptr<Session> session;
        bool created = false;
    };

    // Ingests and builds before anything touches disk. Identical (feature
    // hash, k, T, mode) returns the existing session.
    CreateResult create_session(std::string_view feature_bytes, std::size_t k, double temperature, WorkflowMode mode,
                                std::optional<std::size_t> num_classes = std::nullopt);
    CreateResult create_session_from_file(const std::filesystem::path& feature_file, std::size_t k,
                                          double temperature, WorkflowMode mode,
                                          std::optional<std::size_t> num_classes = std::nullopt);

    // Cached session, loading from disk on first use. NotFound when absent.
    std::shared_ptr<Session> open(const std::string& session_id);

    // Drops the cached instance and reloads from disk.
    std::shared_ptr<Session> restore(const std::string& session_id);

    std::uint64_t apply_label_event(const std::string& session_id, const LabelEvent& event);

    std::vector<std::string> list() const;
    const std::filesystem::path& root() const { return root_; }

    static std::string session_id_for(const std::string& feature_hash, std::size_t k, double temperature,
                                       WorkflowMode mode);

private:
    std::shared_ptr<Session> load(const std::string& session_id) const;

    std::filesystem::path root_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::shared_ptr<Session>> cache_;
};

}  // namespace lg
