#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "chatcbm/error.hpp"
#include "chatcbm/intervention.hpp"

namespace chatcbm {

class SessionNotFound : public Error {
public:
    explicit SessionNotFound(const std::string& id) : Error("unknown session '" + id + "'") {}
};

class UnknownExample : public Error {
public:
    explicit UnknownExample(const std::string& id) : Error("unknown example '" + id + "'") {}
};

// Another request on the same session is in flight.
class SessionBusy : public Error {
public:
    explicit SessionBusy(const std::string& id) : Error("session '" + id + "' is busy") {}
};

struct ServiceConfig {
    std::chrono::seconds ttl{3600};
    std::chrono::seconds sweep_interval{60};
    // Sessions are written here as JSON Lines on shutdown.
    std::optional<std::filesystem::path> export_path;
    ClassMasking masking;
};

struct CreateRequest {
    std::optional<std::string> example_id;
    std::optional<std::vector<double>> activations;
};

struct InterveneRequest {
    InterventionKind kind = InterventionKind::correct_text;
    // set_score
    std::vector<ScoreEdit> edits;
    // every other kind
    std::string text;
};

struct PredictResult {
    Classification classification;
    SessionState state;
};

struct InterveneResult {
    SessionState state;
    std::optional<Classification> classification;
    std::vector<std::string> warnings;
};

// In-memory store of interactive sessions. Operations on one session are
// exclusive: a request that finds the session busy fails with SessionBusy
// instead of waiting. Mutations work on a copy that is committed only when
// the operation succeeds.
class SessionService {
public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;

    SessionService(Pipeline pipeline, std::shared_ptr<ChatBackend> backend, std::vector<ActivationRecord> examples,
                   ServiceConfig config = {}, Clock clock = {});
    ~SessionService();

    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    const Pipeline& pipeline() const noexcept { return pipeline_; }
    const std::string& backend_name() const noexcept { return backend_name_; }

    SessionState create(const CreateRequest& request);
    SessionState get(const std::string& id);
    PredictResult predict(const std::string& id);
    InterveneResult intervene(const std::string& id, const InterveneRequest& request);

    std::size_t size() const;
    // Evicts sessions idle for longer than the TTL. Returns the number evicted.
    std::size_t sweep();
    void start_sweeper();
    // Stops the sweeper and writes the export file when configured.
    void shutdown();

    void export_jsonl(std::ostream& out) const;

private:
    struct Entry {
        std::mutex mu;
        SessionState state;
        std::chrono::steady_clock::time_point last_used;
    };

    std::shared_ptr<Entry> find(const std::string& id) const;
    std::string new_id();

    template <class Fn>
    auto with_session(const std::string& id, Fn&& fn);

    Pipeline pipeline_;
    std::shared_ptr<ChatBackend> backend_;
    std::string backend_name_;
    std::map<std::string, std::size_t> example_index_;
    std::vector<ActivationRecord> examples_;
    ServiceConfig config_;
    Clock clock_;

    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;

    std::mutex sweeper_mu_;
    std::condition_variable sweeper_cv_;
    bool stopping_ = false;
    std::thread sweeper_;
    bool shut_down_ = false;
};

// ---------------------------------------------------------------------------
// JSON codec shared by the HTTP layer and the session export.

nlohmann::json to_json(const SemanticSet& s);
nlohmann::json to_json(const CandidateSet& c);
nlohmann::json to_json(const std::vector<Message>& messages);
nlohmann::json to_json(const InterventionAction& a);
nlohmann::json to_json(const std::optional<Prediction>& p);
nlohmann::json prediction_json(const Classification& c);
// Full session view: activations, semantics, candidates, prediction, counts.
nlohmann::json session_json(const SessionState& s, const ConceptBank& bank);
nlohmann::json history_json(const SessionState& s);

CreateRequest parse_create_request(const nlohmann::json& body);
// Throws FieldError naming the offending field.
InterveneRequest parse_intervene_request(const nlohmann::json& body);

}  // namespace chatcbm
