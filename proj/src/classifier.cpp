#include "chatcbm/classifier.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

#include "chatcbm/digest.hpp"
#include "chatcbm/error.hpp"
#include "chatcbm/text.hpp"

namespace chatcbm {
namespace {

using nlohmann::json;

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

struct TagSpan {
    std::string body;
};

// Every complete "<name: body>" tag in order of appearance.
std::vector<TagSpan> find_tags(std::string_view raw, std::string_view name) {
    std::vector<TagSpan> out;
    for (std::size_t pos = 0; pos < raw.size(); ++pos) {
        if (raw[pos] != '<') continue;
        std::size_t i = pos + 1;
        while (i < raw.size() && is_space(raw[i])) ++i;
        if (raw.size() - i < name.size()) continue;
        bool same = true;
        for (std::size_t k = 0; k < name.size(); ++k) {
            if (std::tolower(static_cast<unsigned char>(raw[i + k])) != name[k]) {
                same = false;
                break;
            }
        }
        if (!same) continue;
        i += name.size();
        while (i < raw.size() && is_space(raw[i])) ++i;
        if (i >= raw.size() || raw[i] != ':') continue;
        ++i;
        int depth = 1;
        std::size_t j = i;
        for (; j < raw.size(); ++j) {
            if (raw[j] == '<') ++depth;
            if (raw[j] == '>' && --depth == 0) break;
        }
        if (j >= raw.size()) continue;  // unterminated
        out.push_back({std::string(raw.substr(i, j - i))});
    }
    return out;
}

std::optional<std::string> last_tag_body(std::string_view raw, std::string_view name, bool strip_comma) {
    const auto tags = find_tags(raw, name);
    if (tags.empty()) return std::nullopt;
    auto body = text::trim(tags.back().body);
    if (strip_comma) {
        while (!body.empty() && (body.back() == ',' || is_space(body.back()))) body.pop_back();
    }
    if (body.empty()) return std::nullopt;
    return body;
}

std::string join_list(const std::vector<std::string>& items) {
    return items.empty() ? std::string("(none)") : text::join(items, "; ");
}

}  // namespace

void GenerationParams::validate() const {
    if (max_length < 1) throw ConfigError("max_length must be >= 1");
    if (do_sample && top_k < 1) throw ConfigError("top_k must be >= 1 when sampling");
    if (temperature && !(*temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
}

void PromptBundle::validate() const {
    generation.validate();
    if (candidates.empty()) throw PreconditionError("prompt bundle has no class candidates");
    if (priors) {
        const auto names = candidates.names();
        const std::set<std::string> want(names.begin(), names.end());
        std::set<std::string> have;
        for (const auto& [name, _] : priors->priors()) have.insert(name);
        if (want != have) throw PreconditionError("priors must cover exactly the candidate classes");
    }
}

// ---------------------------------------------------------------------------
// Rendering

std::string render_semantics_message(const SemanticSet& semantics, const CandidateSet& candidates,
                                     const std::optional<std::string>& probe_hint) {
    std::string out = "Concepts of the image: " + join_list(semantics.texts()) + "\n";
    if (!semantics.removed().empty()) out += "Ignore these concepts: " + join_list(semantics.removed()) + "\n";
    out += "Class candidates: " + join_list(candidates.names());
    if (probe_hint) out += "\nTop prediction of the concept-score classifier: " + *probe_hint;
    return out;
}

std::string render_answer(const std::string& analysis, const std::string& class_name) {
    return "<analysis: " + analysis + "> <answer: " + class_name + ">";
}

std::vector<Message> render_messages(const PromptBundle& bundle) {
    bundle.validate();
    std::vector<Message> out;
    std::size_t total = 0;
    auto push = [&](Role role, std::string content, const char* section) {
        total += content.size();
        if (total > bundle.char_cap) throw OversizeError(section, total, bundle.char_cap);
        out.push_back({role, std::move(content)});
    };

    push(Role::system, bundle.demonstrations.instruction + " " + kFormatClause, "system");
    for (const auto& shot : bundle.demonstrations.shots) {
        push(Role::user, render_semantics_message(shot.semantics, bundle.candidates, shot.probe_hint),
             "demonstrations");
        push(Role::assistant,
             render_answer("the concepts are consistent with " + shot.class_name, shot.class_name),
             "demonstrations");
    }
    if (bundle.priors) {
        std::string p = "Prior knowledge about the class candidates:";
        for (const auto& name : bundle.candidates.names()) p += "\n" + bundle.priors->at(name).description;
        push(Role::user, std::move(p), "priors");
    }
    for (const auto& m : bundle.history) push(m.role, m.content, "history");
    push(Role::user, render_semantics_message(bundle.query_semantics, bundle.candidates), "query");
    return out;
}

// ---------------------------------------------------------------------------
// Parsing and matching

ParsedResponse parse_response(std::string_view raw) {
    ParsedResponse r;
    r.raw = std::string(raw);
    r.answer = last_tag_body(raw, "answer", false);
    r.analysis = last_tag_body(raw, "analysis", true);
    r.parse_ok = r.answer.has_value();
    return r;
}

std::optional<std::string> extract_tag(std::string_view raw, std::string_view name) {
    return last_tag_body(raw, name, false);
}

std::optional<std::string> match_answer(std::string_view answer_text, const CandidateSet& candidates) {
    const auto answer = text::normalize_key(answer_text);
    if (answer.empty()) return std::nullopt;
    std::optional<std::size_t> best;
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto name = text::normalize_key(candidates[i].class_name);
        if (name.empty() || !text::contains(answer, name)) continue;
        if (!best || name.size() > best_len) {
            best = i;
            best_len = name.size();
        }
    }
    if (!best) return std::nullopt;
    return candidates[*best].class_name;
}

bool names_class(std::string_view message, std::string_view name) {
    const auto hay = text::normalize_key(message);
    const auto needle = text::normalize_key(name);
    if (needle.empty()) return false;
    for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) {
        const bool left_ok = pos == 0 || !is_word(hay[pos - 1]);
        const std::size_t end = pos + needle.size();
        const bool right_ok = end == hay.size() || !is_word(hay[end]);
        if (left_ok && right_ok) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Stub backend

std::vector<std::string> prior_concept_keys(const ClassPrior& prior) {
    std::vector<std::string> keys;
    if (!prior.concepts.empty()) {
        for (const auto& c : prior.concepts) keys.push_back(text::normalize_key(c));
        return keys;
    }
    const auto colon = prior.description.find(':');
    if (colon == std::string::npos) return keys;
    for (const auto& part : text::split(std::string_view(prior.description).substr(colon + 1), ',')) {
        auto k = text::normalize_key(part);
        if (!k.empty()) keys.push_back(std::move(k));
    }
    return keys;
}

std::vector<StubScore> stub_scores(const PromptBundle& bundle) {
    if (!bundle.priors) throw PreconditionError("stub backend needs priors for every candidate");
    std::set<std::string> query;
    for (const auto& t : bundle.query_semantics.texts()) query.insert(text::normalize_key(t));
    std::set<std::string> removed;
    for (const auto& t : bundle.query_semantics.removed()) removed.insert(text::normalize_key(t));

    std::vector<StubScore> scores;
    for (const auto& cand : bundle.candidates.candidates()) {
        const auto* prior = bundle.priors->find(cand.class_name);
        if (!prior) throw PreconditionError("stub backend: no prior for candidate '" + cand.class_name + "'");
        const auto keys = prior_concept_keys(*prior);
        const std::set<std::string> prior_keys(keys.begin(), keys.end());
        StubScore s;
        s.class_name = cand.class_name;
        for (const auto& k : prior_keys) {
            s.overlap += query.count(k);
            s.removed_overlap += removed.count(k);
        }
        for (const auto& m : bundle.history) {
            if (m.role == Role::user && names_class(m.content, cand.class_name)) ++s.guidance;
        }
        scores.push_back(std::move(s));
    }
    return scores;
}

std::string stub_classify(const PromptBundle& bundle) {
    const auto scores = stub_scores(bundle);
    if (scores.empty()) throw PreconditionError("stub backend: no candidates");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i].total() > scores[best].total()) best = i;
    }
    std::vector<std::string> parts;
    for (const auto& s : scores) parts.push_back(s.class_name + ":" + std::to_string(s.total()));
    return render_answer("overlap=" + text::join(parts, ","), scores[best].class_name);
}

std::string StubBackend::complete(const ChatRequest& request) {
    if (!request.bundle) throw BackendError("stub backend needs the structured prompt bundle");
    return stub_classify(*request.bundle);
}

// ---------------------------------------------------------------------------
// classify

std::string messages_digest(const std::vector<Message>& messages) {
    json arr = json::array();
    for (const auto& m : messages) arr.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    return sha256_hex(arr.dump());
}

void TranscriptLogger::log(const Classification& c) {
    json parsed{{"parse_ok", c.response.parse_ok}};
    parsed["analysis"] = c.response.analysis ? json(*c.response.analysis) : json(nullptr);
    parsed["answer"] = c.response.answer ? json(*c.response.answer) : json(nullptr);
    json line{{"bundle_digest", c.bundle_digest},
              {"raw", c.response.raw},
              {"parsed", parsed},
              {"predicted", c.predicted_class ? json(*c.predicted_class) : json(nullptr)},
              {"latency_ms", c.latency_ms}};
    std::lock_guard lock(mu_);
    out_ << line.dump() << '\n';
    out_.flush();
}

Classification classify(const PromptBundle& bundle, ChatBackend& backend, TranscriptLogger* logger) {
    Classification c;
    c.messages = render_messages(bundle);
    c.bundle_digest = messages_digest(c.messages);
    ChatRequest req{c.messages, bundle.generation, &bundle, nullptr};
    const auto start = std::chrono::steady_clock::now();
    const auto raw = backend.complete(req);
    c.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    c.response = parse_response(raw);
    if (c.response.parse_ok) c.predicted_class = match_answer(*c.response.answer, bundle.candidates);
    if (logger) logger->log(c);
    return c;
}

}  // namespace chatcbm
