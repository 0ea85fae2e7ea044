#include "chatcbm/session_service.hpp"

#include <fstream>
#include <iostream>
#include <random>

#include "chatcbm/text.hpp"

namespace chatcbm {

using nlohmann::json;

SessionService::SessionService(Pipeline pipeline, std::shared_ptr<ChatBackend> backend,
                               std::vector<ActivationRecord> examples, ServiceConfig config, Clock clock)
    : pipeline_(std::move(pipeline)),
      backend_(std::move(backend)),
      examples_(std::move(examples)),
      config_(std::move(config)),
      clock_(std::move(clock)) {
    if (!backend_) throw ConfigError("session service needs a backend");
    backend_name_ = backend_->name();
    if (!clock_) clock_ = [] { return std::chrono::steady_clock::now(); };
    for (std::size_t i = 0; i < examples_.size(); ++i) {
        if (!example_index_.emplace(examples_[i].example_id, i).second) {
            throw DatasetError("duplicate example_id '" + examples_[i].example_id + "'");
        }
    }
    // Validate the masking table once, up front.
    mask_class_names("", pipeline_.roster(), config_.masking);
}

SessionService::~SessionService() {
    try {
        shutdown();
    } catch (const std::exception& e) {
        std::cerr << "session export failed: " << e.what() << '\n';
    }
}

std::string SessionService::new_id() {
    static thread_local std::mt19937_64 gen{std::random_device{}()};
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(gen()),
                  static_cast<unsigned long long>(gen()));
    return buf;
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw SessionNotFound(id);
    return it->second;
}

template <class Fn>
auto SessionService::with_session(const std::string& id, Fn&& fn) {
    auto entry = find(id);
    std::unique_lock lock(entry->mu, std::try_to_lock);
    if (!lock.owns_lock()) throw SessionBusy(id);
    entry->last_used = clock_();
    return fn(*entry);
}

SessionState SessionService::create(const CreateRequest& request) {
    std::vector<double> activations;
    if (request.example_id && request.activations) {
        throw FieldError("example_id", "give either example_id or activations, not both");
    }
    if (request.example_id) {
        const auto it = example_index_.find(*request.example_id);
        if (it == example_index_.end()) throw UnknownExample(*request.example_id);
        activations = examples_[it->second].activations;
    } else if (request.activations) {
        activations = *request.activations;
    } else {
        throw FieldError("activations", "either example_id or activations is required");
    }

    auto entry = std::make_shared<Entry>();
    std::string id;
    {
        std::lock_guard lock(mu_);
        do {
            id = new_id();
        } while (sessions_.count(id));
    }
    entry->state = pipeline_.start_session(id, std::move(activations));
    entry->last_used = clock_();
    SessionState snapshot = entry->state;
    std::lock_guard lock(mu_);
    sessions_.emplace(id, std::move(entry));
    return snapshot;
}

SessionState SessionService::get(const std::string& id) {
    return with_session(id, [](Entry& e) { return e.state; });
}

PredictResult SessionService::predict(const std::string& id) {
    return with_session(id, [&](Entry& e) {
        SessionState work = e.state;
        auto c = chatcbm::predict(pipeline_, work, *backend_);
        e.state = work;
        return PredictResult{std::move(c), std::move(work)};
    });
}

InterveneResult SessionService::intervene(const std::string& id, const InterveneRequest& request) {
    return with_session(id, [&](Entry& e) {
        SessionState work = e.state;
        InterveneResult r;
        if (request.kind == InterventionKind::set_score) {
            if (request.edits.empty()) throw FieldError("edits", "set_score needs at least one edit");
            apply_numerical(pipeline_, work, request.edits);
        } else if (request.kind == InterventionKind::external_description) {
            auto out = apply_external_description(pipeline_, work, request.text, config_.masking, *backend_);
            r.classification = std::move(out.classification);
            r.warnings = std::move(out.warnings);
        } else {
            auto out = apply_conversational(pipeline_, work, InterventionAction::with_text(request.kind, request.text),
                                            *backend_);
            r.classification = std::move(out.classification);
            r.warnings = std::move(out.warnings);
        }
        e.state = work;
        r.state = std::move(work);
        return r;
    });
}

std::size_t SessionService::size() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
}

std::size_t SessionService::sweep() {
    const auto now = clock_();
    std::size_t evicted = 0;
    std::lock_guard lock(mu_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        auto& entry = *it->second;
        std::unique_lock session_lock(entry.mu, std::try_to_lock);
        // A busy session is in use and therefore not idle.
        if (session_lock.owns_lock() && now - entry.last_used > config_.ttl) {
            session_lock.unlock();
            it = sessions_.erase(it);
            ++evicted;
        } else {
            ++it;
        }
    }
    return evicted;
}

void SessionService::start_sweeper() {
    std::lock_guard lock(sweeper_mu_);
    if (sweeper_.joinable()) return;
    stopping_ = false;
    sweeper_ = std::thread([this] {
        std::unique_lock lock(sweeper_mu_);
        while (!sweeper_cv_.wait_for(lock, config_.sweep_interval, [this] { return stopping_; })) {
            lock.unlock();
            sweep();
            lock.lock();
        }
    });
}

void SessionService::shutdown() {
    {
        std::lock_guard lock(sweeper_mu_);
        stopping_ = true;
    }
    sweeper_cv_.notify_all();
    if (sweeper_.joinable()) sweeper_.join();
    if (shut_down_) return;
    shut_down_ = true;
    if (config_.export_path) {
        std::ofstream out(*config_.export_path);
        if (!out) throw DatasetError("cannot write session export '" + config_.export_path->string() + "'");
        export_jsonl(out);
    }
}

void SessionService::export_jsonl(std::ostream& out) const {
    std::vector<std::shared_ptr<Entry>> entries;
    {
        std::lock_guard lock(mu_);
        for (const auto& [_, e] : sessions_) entries.push_back(e);
    }
    for (const auto& e : entries) {
        std::lock_guard lock(e->mu);
        json line = session_json(e->state, pipeline_.bank());
        line["history"] = to_json(e->state.history);
        json log = json::array();
        for (const auto& a : e->state.intervention_log) log.push_back(to_json(a));
        line["intervention_log"] = log;
        out << line.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// JSON codec

json to_json(const SemanticSet& s) {
    json entries = json::array();
    for (const auto& e : s.entries()) {
        json j{{"text", e.text}, {"provenance", std::string(to_string(e.provenance))}};
        j["weight"] = e.weight ? json(*e.weight) : json(nullptr);
        entries.push_back(std::move(j));
    }
    return {{"entries", entries}, {"removed", s.removed()}};
}

json to_json(const CandidateSet& c) {
    json out = json::array();
    for (std::size_t i = 0; i < c.size(); ++i) {
        out.push_back({{"class_name", c[i].class_name}, {"score", c[i].score}, {"rank", i}});
    }
    return out;
}

json to_json(const std::vector<Message>& messages) {
    json out = json::array();
    for (const auto& m : messages) out.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    return out;
}

json to_json(const InterventionAction& a) {
    json j{{"kind", std::string(to_string(a.kind))}};
    if (a.kind == InterventionKind::set_score) {
        j["concept_id"] = a.concept_id;
        j["value"] = a.value;
    } else {
        j["text"] = a.text;
    }
    return j;
}

json to_json(const std::optional<Prediction>& p) {
    if (!p) return nullptr;
    json j{{"raw_response", p->raw_response}, {"parse_ok", p->parse_ok}};
    j["predicted_class"] = p->class_name ? json(*p->class_name) : json(nullptr);
    return j;
}

json prediction_json(const Classification& c) {
    json j{{"parse_ok", c.response.parse_ok}, {"raw_response", c.response.raw}, {"latency_ms", c.latency_ms}};
    j["analysis"] = c.response.analysis ? json(*c.response.analysis) : json(nullptr);
    j["answer"] = c.response.answer ? json(*c.response.answer) : json(nullptr);
    j["predicted_class"] = c.predicted_class ? json(*c.predicted_class) : json(nullptr);
    return j;
}

json session_json(const SessionState& s, const ConceptBank& bank) {
    json concepts = json::array();
    for (std::size_t i = 0; i < s.activations.size() && i < bank.size(); ++i) {
        concepts.push_back({{"id", i}, {"text", bank[i].text}, {"activation", s.activations[i]}});
    }
    return {{"session_id", s.session_id},
            {"concepts", concepts},
            {"semantics", to_json(s.semantics)},
            {"candidates", to_json(s.candidates)},
            {"last_prediction", to_json(s.last_prediction)},
            {"history_length", s.history.size()},
            {"intervention_count", s.intervention_log.size()}};
}

json history_json(const SessionState& s) {
    json log = json::array();
    for (const auto& a : s.intervention_log) log.push_back(to_json(a));
    return {{"session_id", s.session_id},
            {"history", to_json(s.history)},
            {"intervention_log", log},
            {"transcript", to_json(s.last_transcript)}};
}

CreateRequest parse_create_request(const json& body) {
    if (!body.is_object()) throw FieldError("", "request body must be a JSON object");
    CreateRequest r;
    if (body.contains("example_id")) {
        if (!body["example_id"].is_string()) throw FieldError("example_id", "example_id must be a string");
        r.example_id = body["example_id"].get<std::string>();
    }
    if (body.contains("activations")) {
        const auto& a = body["activations"];
        if (!a.is_array()) throw FieldError("activations", "activations must be an array of numbers");
        std::vector<double> v;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!a[i].is_number()) {
                throw FieldError("activations[" + std::to_string(i) + "]", "activation must be a number");
            }
            v.push_back(a[i].get<double>());
        }
        r.activations = std::move(v);
    }
    return r;
}

InterveneRequest parse_intervene_request(const json& body) {
    if (!body.is_object()) throw FieldError("", "request body must be a JSON object");
    if (!body.contains("kind") || !body["kind"].is_string()) throw FieldError("kind", "kind must be a string");
    InterveneRequest r;
    try {
        r.kind = parse_intervention_kind(body["kind"].get<std::string>());
    } catch (const Error& e) {
        throw FieldError("kind", e.what());
    }
    if (r.kind == InterventionKind::set_score) {
        auto number_field = [](const json& obj, const std::string& key, const std::string& path) {
            if (!obj.contains(key) || !obj[key].is_number()) throw FieldError(path, path + " must be a number");
            return obj[key];
        };
        if (body.contains("edits")) {
            const auto& edits = body["edits"];
            if (!edits.is_array()) throw FieldError("edits", "edits must be an array");
            for (std::size_t i = 0; i < edits.size(); ++i) {
                const auto base = "edits[" + std::to_string(i) + "]";
                if (!edits[i].is_object()) throw FieldError(base, base + " must be an object");
                const auto id = number_field(edits[i], "concept_id", base + ".concept_id");
                if (!id.is_number_unsigned()) throw FieldError(base + ".concept_id", "concept_id must be >= 0");
                r.edits.push_back({id.get<std::size_t>(), number_field(edits[i], "value", base + ".value").get<double>()});
            }
        } else {
            const auto id = number_field(body, "concept_id", "concept_id");
            if (!id.is_number_unsigned()) throw FieldError("concept_id", "concept_id must be >= 0");
            r.edits.push_back({id.get<std::size_t>(), number_field(body, "value", "value").get<double>()});
        }
    } else {
        if (!body.contains("text") || !body["text"].is_string()) throw FieldError("text", "text must be a string");
        r.text = body["text"].get<std::string>();
        if (text::trim(r.text).empty()) throw FieldError("text", "text must not be empty");
    }
    return r;
}

}  // namespace chatcbm
