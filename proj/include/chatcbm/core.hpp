#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace chatcbm {

enum class Split { train, val, test };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

// Supervised activations are concept probabilities in [0,1]; unsupervised
// activations are raw cosine similarities in [-1,1].
enum class ActivationPath { supervised, unsupervised };

std::string_view to_string(ActivationPath p);
ActivationPath parse_path(std::string_view s);

struct ActivationRange {
    double lo;
    double hi;

    bool contains(double v) const { return v >= lo && v <= hi; }
};

ActivationRange activation_range(ActivationPath p);

struct Concept {
    std::size_t id = 0;
    std::string text;
    std::optional<std::string> group;
};

// Ordered concept vocabulary. Defines the index space of every activation
// vector in a dataset.
class ConceptBank {
public:
    ConceptBank(std::string name, std::vector<Concept> concepts);

    static ConceptBank from_texts(std::string name, const std::vector<std::string>& texts);

    const std::string& name() const noexcept { return name_; }
    std::size_t size() const noexcept { return concepts_.size(); }
    const Concept& operator[](std::size_t id) const { return concepts_.at(id); }
    const std::vector<Concept>& concepts() const noexcept { return concepts_; }

    // Lookup by whitespace/case-normalized text.
    std::optional<std::size_t> find(std::string_view text) const;

    bool fully_grouped() const;
    // Distinct group tags in order of first appearance.
    std::vector<std::string> groups() const;

    // The first `n` concepts, used for incomplete-concept experiments.
    ConceptBank prefix(std::size_t n) const;

private:
    std::string name_;
    std::vector<Concept> concepts_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Ordered class roster with a name -> index map. Labels are names end to end.
class ClassRoster {
public:
    ClassRoster() = default;
    explicit ClassRoster(std::vector<std::string> names);

    std::size_t size() const noexcept { return names_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::string& operator[](std::size_t i) const { return names_.at(i); }
    std::optional<std::size_t> index_of(std::string_view name) const;
    bool contains(std::string_view name) const { return index_of(name).has_value(); }

    friend bool operator==(const ClassRoster& a, const ClassRoster& b) { return a.names_ == b.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct ActivationRecord {
    std::string example_id;
    Split split = Split::test;
    std::vector<double> activations;
    std::string label;
    std::optional<std::vector<std::uint8_t>> gt_concepts;
};

enum class Provenance { decoded, user_added };

std::string_view to_string(Provenance p);

struct SemanticEntry {
    std::string text;
    Provenance provenance = Provenance::decoded;
    std::optional<double> weight;

    friend bool operator==(const SemanticEntry&, const SemanticEntry&) = default;
};

// Concept semantics fed to the language classifier, plus the texts the user
// asked to suppress. A removed text never appears among the entries.
class SemanticSet {
public:
    SemanticSet() = default;

    // Entries derived from a ConceptBank, whose texts are already unique.
    static SemanticSet from_bank_entries(std::vector<SemanticEntry> entries);

    const std::vector<SemanticEntry>& entries() const noexcept { return entries_; }
    const std::vector<std::string>& removed() const noexcept { return removed_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    std::vector<std::string> texts() const;
    bool contains(std::string_view text) const;
    bool is_removed(std::string_view text) const;

    // Throws DatasetError on a duplicate text. Adding a previously removed
    // text lifts the removal.
    void add(SemanticEntry entry);

    // Suppresses `text`. Returns false when it was not among the entries (the
    // removal is still recorded).
    bool remove(std::string_view text);

    // Drops `text` from the removal list so it may be decoded again.
    void unremove(std::string_view text);

    friend bool operator==(const SemanticSet&, const SemanticSet&) = default;

private:
    std::vector<SemanticEntry> entries_;
    std::vector<std::string> removed_;
};

struct Candidate {
    std::string class_name;
    double score = 0.0;

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

// Top-N classes from the probe, ordered by non-increasing score.
class CandidateSet {
public:
    CandidateSet() = default;
    explicit CandidateSet(std::vector<Candidate> candidates);

    const std::vector<Candidate>& candidates() const noexcept { return candidates_; }
    std::size_t size() const noexcept { return candidates_.size(); }
    bool empty() const noexcept { return candidates_.empty(); }
    const Candidate& operator[](std::size_t i) const { return candidates_.at(i); }
    std::vector<std::string> names() const;
    std::optional<std::size_t> rank_of(std::string_view class_name) const;

    friend bool operator==(const CandidateSet&, const CandidateSet&) = default;

private:
    std::vector<Candidate> candidates_;
};

enum class PriorSource { avg_concept, class_level, group_frequency, top_frequency, external_text };

std::string_view to_string(PriorSource s);
PriorSource parse_prior_source(std::string_view s);

struct ClassPrior {
    std::string class_name;
    std::string description;
    PriorSource source = PriorSource::avg_concept;
    // Concept texts the description was rendered from (empty for free text).
    std::vector<std::string> concepts;
};

enum class Role { system, user, assistant };

std::string_view to_string(Role r);
Role parse_role(std::string_view s);

struct Message {
    Role role = Role::user;
    std::string content;

    friend bool operator==(const Message&, const Message&) = default;
};

enum class InterventionKind {
    set_score,
    correct_text,
    add_concept,
    remove_concept,
    strategy_guidance,
    external_description,
};

std::string_view to_string(InterventionKind k);
InterventionKind parse_intervention_kind(std::string_view s);

struct InterventionAction {
    InterventionKind kind = InterventionKind::correct_text;
    // set_score payload.
    std::size_t concept_id = 0;
    double value = 0.0;
    // Free-text payload for every other kind.
    std::string text;

    static InterventionAction set_score(std::size_t concept_id, double value);
    static InterventionAction with_text(InterventionKind kind, std::string text);
};

struct Prediction {
    std::optional<std::string> class_name;
    std::string raw_response;
    bool parse_ok = false;
};

// One interactive prediction episode.
struct SessionState {
    std::string session_id;
    std::vector<double> activations;
    SemanticSet semantics;
    CandidateSet candidates;
    // Conversation turns after the fixed prompt preamble. Append-only.
    std::vector<Message> history;
    std::vector<InterventionAction> intervention_log;
    std::optional<Prediction> last_prediction;
    // Exact message list sent on the last classification, reply appended.
    std::vector<Message> last_transcript;
};

enum class ViolationKind { length_mismatch, range_violation, unknown_label, gt_length_mismatch, non_finite };

std::string_view to_string(ViolationKind k);

struct Violation {
    std::string example_id;
    ViolationKind kind;
    std::optional<std::size_t> concept_id;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const noexcept { return violations.empty(); }
};

ValidationReport validate_record(const ConceptBank& bank, const ActivationRecord& record,
                                 const ClassRoster& roster, ActivationPath path);

ValidationReport validate_dataset(const ConceptBank& bank, std::span<const ActivationRecord> records,
                                  const ClassRoster& roster, ActivationPath path);

// Roster of distinct labels in order of first appearance.
ClassRoster roster_from_records(std::span<const ActivationRecord> records);

std::vector<ActivationRecord> filter_split(std::span<const ActivationRecord> records, Split split);

}  // namespace chatcbm
