#include "chatcbm/core.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "chatcbm/error.hpp"
#include "chatcbm/text.hpp"

namespace chatcbm {

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "test";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val" || s == "valid" || s == "validation") return Split::val;
    if (s == "test") return Split::test;
    throw DatasetError("unknown split '" + std::string(s) + "'");
}

std::string_view to_string(ActivationPath p) {
    return p == ActivationPath::supervised ? "supervised" : "unsupervised";
}

ActivationPath parse_path(std::string_view s) {
    if (s == "supervised") return ActivationPath::supervised;
    if (s == "unsupervised") return ActivationPath::unsupervised;
    throw ConfigError("unknown activation path '" + std::string(s) + "'");
}

ActivationRange activation_range(ActivationPath p) {
    return p == ActivationPath::supervised ? ActivationRange{0.0, 1.0} : ActivationRange{-1.0, 1.0};
}

// ---------------------------------------------------------------------------
// ConceptBank

ConceptBank::ConceptBank(std::string name, std::vector<Concept> concepts)
    : name_(std::move(name)), concepts_(std::move(concepts)) {
    if (concepts_.empty()) throw DatasetError("concept bank '" + name_ + "' is empty");
    for (std::size_t i = 0; i < concepts_.size(); ++i) {
        auto& c = concepts_[i];
        if (c.id != i) {
            throw DatasetError("concept '" + c.text + "' has id " + std::to_string(c.id) +
                               " at position " + std::to_string(i));
        }
        if (text::trim(c.text).empty()) {
            throw DatasetError("concept " + std::to_string(i) + " has empty text");
        }
        auto [it, inserted] = index_.emplace(text::normalize_key(c.text), i);
        if (!inserted) {
            throw DatasetError("duplicate concept text '" + c.text + "' (ids " + std::to_string(it->second) +
                               " and " + std::to_string(i) + ")");
        }
    }
}

ConceptBank ConceptBank::from_texts(std::string name, const std::vector<std::string>& texts) {
    std::vector<Concept> concepts;
    concepts.reserve(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) concepts.push_back({i, texts[i], std::nullopt});
    return ConceptBank(std::move(name), std::move(concepts));
}

std::optional<std::size_t> ConceptBank::find(std::string_view text) const {
    auto it = index_.find(text::normalize_key(text));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

bool ConceptBank::fully_grouped() const {
    return std::all_of(concepts_.begin(), concepts_.end(),
                       [](const Concept& c) { return c.group.has_value() && !c.group->empty(); });
}

std::vector<std::string> ConceptBank::groups() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& c : concepts_) {
        if (c.group && seen.insert(*c.group).second) out.push_back(*c.group);
    }
    return out;
}

ConceptBank ConceptBank::prefix(std::size_t n) const {
    if (n == 0 || n > concepts_.size()) {
        throw ConfigError("concept prefix size " + std::to_string(n) + " outside 1.." +
                          std::to_string(concepts_.size()));
    }
    return ConceptBank(name_ + "[:" + std::to_string(n) + "]",
                       std::vector<Concept>(concepts_.begin(), concepts_.begin() + static_cast<std::ptrdiff_t>(n)));
}

// ---------------------------------------------------------------------------
// ClassRoster

ClassRoster::ClassRoster(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i].empty()) throw DatasetError("empty class name in roster");
        if (!index_.emplace(names_[i], i).second) {
            throw DatasetError("duplicate class name '" + names_[i] + "' in roster");
        }
    }
}

std::optional<std::size_t> ClassRoster::index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------------------
// SemanticSet

std::string_view to_string(Provenance p) { return p == Provenance::decoded ? "decoded" : "user_added"; }

SemanticSet SemanticSet::from_bank_entries(std::vector<SemanticEntry> entries) {
    SemanticSet out;
    out.entries_ = std::move(entries);
    return out;
}

std::vector<std::string> SemanticSet::texts() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.text);
    return out;
}

bool SemanticSet::contains(std::string_view t) const {
    const auto key = text::normalize_key(t);
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const SemanticEntry& e) { return text::normalize_key(e.text) == key; });
}

bool SemanticSet::is_removed(std::string_view t) const {
    const auto key = text::normalize_key(t);
    return std::any_of(removed_.begin(), removed_.end(),
                       [&](const std::string& r) { return text::normalize_key(r) == key; });
}

void SemanticSet::add(SemanticEntry entry) {
    if (text::trim(entry.text).empty()) throw DatasetError("semantic entry text is empty");
    if (contains(entry.text)) throw DatasetError("concept '" + entry.text + "' is already present");
    unremove(entry.text);
    entries_.push_back(std::move(entry));
}

bool SemanticSet::remove(std::string_view t) {
    const auto key = text::normalize_key(t);
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const SemanticEntry& e) { return text::normalize_key(e.text) == key; });
    const bool present = it != entries_.end();
    std::string stored = present ? it->text : std::string(t);
    if (present) entries_.erase(it);
    if (!is_removed(stored)) removed_.push_back(std::move(stored));
    return present;
}

void SemanticSet::unremove(std::string_view t) {
    const auto key = text::normalize_key(t);
    std::erase_if(removed_, [&](const std::string& r) { return text::normalize_key(r) == key; });
}

// ---------------------------------------------------------------------------
// CandidateSet

CandidateSet::CandidateSet(std::vector<Candidate> candidates) : candidates_(std::move(candidates)) {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
        if (!seen.insert(candidates_[i].class_name).second) {
            throw DatasetError("duplicate candidate class '" + candidates_[i].class_name + "'");
        }
        if (i > 0 && candidates_[i].score > candidates_[i - 1].score) {
            throw DatasetError("candidate scores must be non-increasing");
        }
    }
}

std::vector<std::string> CandidateSet::names() const {
    std::vector<std::string> out;
    out.reserve(candidates_.size());
    for (const auto& c : candidates_) out.push_back(c.class_name);
    return out;
}

std::optional<std::size_t> CandidateSet::rank_of(std::string_view class_name) const {
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
        if (candidates_[i].class_name == class_name) return i;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Enumerations

std::string_view to_string(PriorSource s) {
    switch (s) {
        case PriorSource::avg_concept: return "avg_concept";
        case PriorSource::class_level: return "class_level";
        case PriorSource::group_frequency: return "group_frequency";
        case PriorSource::top_frequency: return "top_frequency";
        case PriorSource::external_text: return "external_text";
    }
    return "external_text";
}

PriorSource parse_prior_source(std::string_view s) {
    for (auto v : {PriorSource::avg_concept, PriorSource::class_level, PriorSource::group_frequency,
                   PriorSource::top_frequency, PriorSource::external_text}) {
        if (to_string(v) == s) return v;
    }
    throw ConfigError("unknown prior source '" + std::string(s) + "'");
}

std::string_view to_string(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

Role parse_role(std::string_view s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw DatasetError("unknown message role '" + std::string(s) + "'");
}

std::string_view to_string(InterventionKind k) {
    switch (k) {
        case InterventionKind::set_score: return "set_score";
        case InterventionKind::correct_text: return "correct_text";
        case InterventionKind::add_concept: return "add_concept";
        case InterventionKind::remove_concept: return "remove_concept";
        case InterventionKind::strategy_guidance: return "strategy_guidance";
        case InterventionKind::external_description: return "external_description";
    }
    return "correct_text";
}

InterventionKind parse_intervention_kind(std::string_view s) {
    for (auto k : {InterventionKind::set_score, InterventionKind::correct_text, InterventionKind::add_concept,
                   InterventionKind::remove_concept, InterventionKind::strategy_guidance,
                   InterventionKind::external_description}) {
        if (to_string(k) == s) return k;
    }
    throw ConfigError("unknown intervention kind '" + std::string(s) + "'");
}

InterventionAction InterventionAction::set_score(std::size_t concept_id, double value) {
    InterventionAction a;
    a.kind = InterventionKind::set_score;
    a.concept_id = concept_id;
    a.value = value;
    return a;
}

InterventionAction InterventionAction::with_text(InterventionKind kind, std::string text) {
    if (kind == InterventionKind::set_score) throw ConfigError("set_score carries a concept id and value, not text");
    InterventionAction a;
    a.kind = kind;
    a.text = std::move(text);
    return a;
}

std::string_view to_string(ViolationKind k) {
    switch (k) {
        case ViolationKind::length_mismatch: return "length_mismatch";
        case ViolationKind::range_violation: return "range_violation";
        case ViolationKind::unknown_label: return "unknown_label";
        case ViolationKind::gt_length_mismatch: return "gt_length_mismatch";
        case ViolationKind::non_finite: return "non_finite";
    }
    return "length_mismatch";
}

// ---------------------------------------------------------------------------
// Validation

ValidationReport validate_record(const ConceptBank& bank, const ActivationRecord& r, const ClassRoster& roster,
                                 ActivationPath path) {
    ValidationReport report;
    auto& v = report.violations;
    if (r.activations.size() != bank.size()) {
        v.push_back({r.example_id, ViolationKind::length_mismatch, std::nullopt,
                     "activations has length " + std::to_string(r.activations.size()) + ", expected " +
                         std::to_string(bank.size())});
    }
    const auto range = activation_range(path);
    for (std::size_t i = 0; i < r.activations.size(); ++i) {
        const double a = r.activations[i];
        if (!std::isfinite(a)) {
            v.push_back({r.example_id, ViolationKind::non_finite, i, "activation " + std::to_string(i) + " is not finite"});
        } else if (!range.contains(a)) {
            v.push_back({r.example_id, ViolationKind::range_violation, i,
                         "activation " + std::to_string(i) + " = " + std::to_string(a) + " outside [" +
                             text::fixed(range.lo, 0) + ", " + text::fixed(range.hi, 0) + "]"});
        }
    }
    if (!roster.contains(r.label)) {
        v.push_back({r.example_id, ViolationKind::unknown_label, std::nullopt, "label '" + r.label + "' not in roster"});
    }
    if (r.gt_concepts && r.gt_concepts->size() != bank.size()) {
        v.push_back({r.example_id, ViolationKind::gt_length_mismatch, std::nullopt,
                     "gt_concepts has length " + std::to_string(r.gt_concepts->size()) + ", expected " +
                         std::to_string(bank.size())});
    }
    return report;
}

ValidationReport validate_dataset(const ConceptBank& bank, std::span<const ActivationRecord> records,
                                  const ClassRoster& roster, ActivationPath path) {
    ValidationReport report;
    for (const auto& r : records) {
        auto one = validate_record(bank, r, roster, path);
        report.violations.insert(report.violations.end(), one.violations.begin(), one.violations.end());
    }
    return report;
}

ClassRoster roster_from_records(std::span<const ActivationRecord> records) {
    std::vector<std::string> names;
    std::unordered_set<std::string> seen;
    for (const auto& r : records) {
        if (seen.insert(r.label).second) names.push_back(r.label);
    }
    return ClassRoster(std::move(names));
}

std::vector<ActivationRecord> filter_split(std::span<const ActivationRecord> records, Split split) {
    std::vector<ActivationRecord> out;
    for (const auto& r : records) {
        if (r.split == split) out.push_back(r);
    }
    return out;
}

}  // namespace chatcbm
