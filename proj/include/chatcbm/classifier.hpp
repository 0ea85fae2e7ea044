#pragma once

#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chatcbm/core.hpp"
#include "chatcbm/knowledge.hpp"

namespace chatcbm {

inline constexpr std::size_t kDefaultMaxLength = 8192;
inline constexpr std::size_t kInterventionMaxLength = 10240;
inline constexpr std::size_t kDefaultCharCap = 32768;

inline constexpr const char* kFormatClause =
    "The answer format is <analysis: ...> <answer: class name>, and the answer must be one of the class candidates.";

struct GenerationParams {
    std::size_t max_length = kDefaultMaxLength;
    bool do_sample = true;
    std::size_t top_k = 10;
    std::optional<double> temperature;
    std::string model_name = "stub";

    void validate() const;
};

// Everything the language classifier conditions on for one prediction.
struct PromptBundle {
    DemonstrationSet demonstrations;
    // When present, covers exactly the candidate classes.
    std::optional<PriorTable> priors;
    SemanticSet query_semantics;
    CandidateSet candidates;
    std::vector<Message> history;
    GenerationParams generation;
    std::size_t char_cap = kDefaultCharCap;

    void validate() const;
};

// Text of one concept listing + candidate list, as sent for the query and for
// each demonstration.
std::string render_semantics_message(const SemanticSet& semantics, const CandidateSet& candidates,
                                     const std::optional<std::string>& probe_hint = std::nullopt);

std::string render_answer(const std::string& analysis, const std::string& class_name);

// System message, demonstration pairs, priors, history, then the query.
// Throws OversizeError naming the section in which the character cap is crossed.
std::vector<Message> render_messages(const PromptBundle& bundle);

struct ParsedResponse {
    std::optional<std::string> analysis;
    std::optional<std::string> answer;
    std::string raw;
    bool parse_ok = false;
};

// Extracts the last complete "<answer: ...>" and "<analysis: ...>" tags.
// Tag names are case-insensitive and may be padded with whitespace; the tag
// body runs to the '>' that balances its '<'.
ParsedResponse parse_response(std::string_view raw);

// Trimmed body of the last complete "<name: ...>" tag, by the same rules.
// `name` must be lowercase.
std::optional<std::string> extract_tag(std::string_view raw, std::string_view name);

// Candidate whose normalized name is contained in the normalized answer;
// the longest matching name wins, then the better-ranked candidate.
std::optional<std::string> match_answer(std::string_view answer_text, const CandidateSet& candidates);

// Whole-word, case-insensitive occurrence of `name` in `message`.
bool names_class(std::string_view message, std::string_view name);

struct AssistantBrief;

struct ChatRequest {
    std::vector<Message> messages;
    GenerationParams generation;
    // Structured context for deterministic backends; remote backends ignore it.
    const PromptBundle* bundle = nullptr;
    const AssistantBrief* brief = nullptr;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string complete(const ChatRequest& request) = 0;
    virtual std::string name() const = 0;
};

// Concept keys the stub compares against: the prior's concept list, or when
// only free text is available, the comma-separated list after its first ':'.
std::vector<std::string> prior_concept_keys(const ClassPrior& prior);

struct StubScore {
    std::string class_name;
    long overlap = 0;
    long removed_overlap = 0;
    long guidance = 0;

    long total() const { return overlap - removed_overlap + guidance; }
};

std::vector<StubScore> stub_scores(const PromptBundle& bundle);

// Deterministic overlap classifier: per candidate, |query ∩ prior| minus
// |removed ∩ prior| plus one per user history turn naming it. Ties go to the
// better-ranked candidate.
std::string stub_classify(const PromptBundle& bundle);

class StubBackend : public ChatBackend {
public:
    std::string complete(const ChatRequest& request) override;
    std::string name() const override { return "stub"; }
};

struct Classification {
    ParsedResponse response;
    std::optional<std::string> predicted_class;
    std::vector<Message> messages;
    std::string bundle_digest;
    double latency_ms = 0.0;
};

// Hex SHA-256 of the rendered message list.
std::string messages_digest(const std::vector<Message>& messages);

// JSON Lines transcript: {bundle_digest, raw, parsed, predicted, latency_ms}.
class TranscriptLogger {
public:
    explicit TranscriptLogger(std::ostream& out) : out_(out) {}
    void log(const Classification& c);

private:
    std::ostream& out_;
    std::mutex mu_;
};

Classification classify(const PromptBundle& bundle, ChatBackend& backend, TranscriptLogger* logger = nullptr);

}  // namespace chatcbm
