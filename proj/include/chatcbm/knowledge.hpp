#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chatcbm/concepts.hpp"
#include "chatcbm/core.hpp"
#include "chatcbm/dataset_io.hpp"
#include "chatcbm/probe.hpp"

namespace chatcbm {

inline constexpr const char* kDefaultInstruction = "Answer the image class based on the concepts.";

// ---------------------------------------------------------------------------
// In-context demonstrations

struct Shot {
    std::string example_id;
    SemanticSet semantics;
    std::string class_name;
    // Probe's top-1 class for this shot, present when probe hints are enabled.
    std::optional<std::string> probe_hint;
};

struct DemonstrationSet {
    std::string instruction = kDefaultInstruction;
    // Grouped by candidate, in candidate order.
    std::vector<Shot> shots;
    std::size_t n_candidates = 0;
    std::size_t k_per_class = 0;
    std::uint64_t seed = 0;
    bool include_probe_hint = false;
    std::vector<std::string> warnings;
};

struct DemonstrationOptions {
    std::size_t k = 2;
    std::uint64_t seed = 0;
    bool include_probe_hint = false;
    std::string instruction = kDefaultInstruction;
    SemanticsConfig semantics;
};

// For each candidate class, up to `k` seeded draws without replacement from
// that class's val-split records. Sampling for a class depends only on the
// seed and the class name, not on its position among the candidates.
DemonstrationSet select_demonstrations(const CandidateSet& candidates, std::span<const ActivationRecord> val_records,
                                       const ConceptBank& bank, const ClassRoster& roster,
                                       const DemonstrationOptions& options, const ProbeModel* probe = nullptr);

// ---------------------------------------------------------------------------
// Class concept-semantics priors

class PriorTable {
public:
    PriorTable() = default;
    PriorTable(PriorSource construction, double threshold = 0.5);

    PriorSource construction() const noexcept { return construction_; }
    double threshold() const noexcept { return threshold_; }
    const std::map<std::string, ClassPrior>& priors() const noexcept { return priors_; }
    std::size_t size() const noexcept { return priors_.size(); }

    void set(ClassPrior prior);
    const ClassPrior* find(const std::string& class_name) const;
    const ClassPrior& at(const std::string& class_name) const;

    // Entries for exactly the candidate classes. Throws if any is missing.
    PriorTable restricted_to(const CandidateSet& candidates) const;

    // Throws DatasetError naming the first roster class without an entry.
    void require_complete(const ClassRoster& roster) const;

    // JSON object class -> description. Entries with known concept lists are
    // written as {"description", "concepts", "source"} objects; both forms
    // are accepted on import.
    std::string to_json() const;
    static PriorTable from_json(const std::string& json_text);
    void save(const std::filesystem::path& path) const;
    static PriorTable load(const std::filesystem::path& path);

private:
    PriorSource construction_ = PriorSource::avg_concept;
    double threshold_ = 0.5;
    std::map<std::string, ClassPrior> priors_;
};

// "{classname} usually has: {concepts}"
std::string render_usually_has(const std::string& class_name, const std::vector<std::string>& concepts);
// "{classname} is usually associated with concepts including: {concepts}"
std::string render_associated_with(const std::string& class_name, const std::vector<std::string>& concepts);

struct GroupSummary {
    std::string group;
    std::string modal_concept;
    double frequency = 0.0;
};

// "for {classname}: {group} is mostly {value}, {group} is {value} (n%), ..."
std::string render_group_summary(const std::string& class_name, const std::vector<GroupSummary>& groups);

// Per class, concepts whose ground-truth frequency among the class's
// train records is strictly above `threshold`.
PriorTable build_prior_avg_concept(std::span<const ActivationRecord> train_records, const ConceptBank& bank,
                                   const ClassRoster& roster, double threshold = 0.5);

// Per class and concept group, the modal concept with "mostly" when its
// frequency exceeds 0.5, else its percentage.
PriorTable build_prior_group_frequency(std::span<const ActivationRecord> train_records, const ConceptBank& bank,
                                       const ClassRoster& roster);

struct TopFrequencyOptions {
    std::size_t top_k = 10;
    // Concepts counted per record: its top-`membership_n` activations, or
    // every concept above `activation_threshold` when that is set.
    std::size_t membership_n = kTopSemantics;
    std::optional<double> activation_threshold;
};

struct ConceptCount {
    std::size_t concept_id = 0;
    std::size_t count = 0;

    friend bool operator==(const ConceptCount&, const ConceptCount&) = default;
};

// Concept occurrence counts over the class's val records, ranked by count
// (descending) then concept_id; zero counts omitted.
std::vector<ConceptCount> rank_concept_frequency(std::span<const ActivationRecord> class_records,
                                                 const ConceptBank& bank, const TopFrequencyOptions& options);

PriorTable build_prior_top_frequency(std::span<const ActivationRecord> val_records, const ConceptBank& bank,
                                     const ClassRoster& roster, const TopFrequencyOptions& options = {});

PriorTable build_prior_class_level(const io::ClassConceptTable& table, const ConceptBank& bank,
                                   const ClassRoster& roster);

// Free-text class descriptions (e.g. encyclopedia entries).
PriorTable prior_from_external_text(const std::map<std::string, std::string>& descriptions,
                                    const ClassRoster& roster);

}  // namespace chatcbm
