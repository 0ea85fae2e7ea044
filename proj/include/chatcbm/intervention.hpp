#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chatcbm/classifier.hpp"
#include "chatcbm/concepts.hpp"
#include "chatcbm/core.hpp"
#include "chatcbm/knowledge.hpp"
#include "chatcbm/probe.hpp"

namespace chatcbm {

struct PipelineConfig {
    SemanticsConfig semantics;
    std::size_t n_candidates = 2;
    DemonstrationOptions demonstrations;
    GenerationParams generation;
    std::size_t char_cap = kDefaultCharCap;
};

// Immutable inference context: bank, probe, priors and the val pool used for
// demonstrations. Cheap to copy; shared state is reference counted.
class Pipeline {
public:
    Pipeline(ConceptBank bank, ProbeModel probe, std::optional<PriorTable> priors,
             std::vector<ActivationRecord> val_records, PipelineConfig config);

    const ConceptBank& bank() const noexcept { return *bank_; }
    const ProbeModel& probe() const noexcept { return *probe_; }
    const ClassRoster& roster() const noexcept { return probe_->roster(); }
    const std::optional<PriorTable>& priors() const noexcept { return *priors_; }
    std::span<const ActivationRecord> val_records() const noexcept { return *val_records_; }
    const PipelineConfig& config() const noexcept { return config_; }
    ActivationRange range() const { return activation_range(config_.semantics.path); }

    Pipeline with_demo_seed(std::uint64_t seed) const;
    Pipeline with_probe(ProbeModel probe) const;
    Pipeline with_n_candidates(std::size_t n) const;

    SemanticSet semantics_for(std::span<const double> activations) const;
    CandidateSet candidates_for(std::span<const double> activations) const;

    // Validates the activation vector against the bank and the path's range.
    void check_activations(std::span<const double> activations) const;

    SessionState start_session(std::string session_id, std::vector<double> activations) const;

    // Generation switches to intervention length once the session has been
    // intervened on.
    PromptBundle build_bundle(const SessionState& state) const;

private:
    std::shared_ptr<const ConceptBank> bank_;
    std::shared_ptr<const ProbeModel> probe_;
    std::shared_ptr<const std::optional<PriorTable>> priors_;
    std::shared_ptr<const std::vector<ActivationRecord>> val_records_;
    PipelineConfig config_;
};

// Classifies the session's current bottleneck, appends the assistant turn and
// records the prediction.
Classification predict(const Pipeline& pipeline, SessionState& state, ChatBackend& backend,
                       TranscriptLogger* logger = nullptr);

struct ScoreEdit {
    std::size_t concept_id = 0;
    double value = 0.0;
};

// Replaces activation values, then recomputes semantics and candidates.
// User-added concepts survive; an edited concept is lifted from the removal
// list. History is not touched. All edits are validated before any applies.
void apply_numerical(const Pipeline& pipeline, SessionState& state, std::span<const ScoreEdit> edits);

struct InterventionOutcome {
    Classification classification;
    std::vector<std::string> warnings;
};

// User turn text for a conversational action.
std::string render_intervention_text(const InterventionAction& action);

// Appends the action's user turn to the history, updates the semantic set for
// add/remove, and re-classifies. Requires a previous prediction.
InterventionOutcome apply_conversational(const Pipeline& pipeline, SessionState& state,
                                         const InterventionAction& action, ChatBackend& backend,
                                         TranscriptLogger* logger = nullptr);

// class name -> generic term ("the bird", "the animal").
using ClassMasking = std::map<std::string, std::string>;

std::string mask_class_names(const std::string& description, const ClassRoster& roster, const ClassMasking& masking);

// "In addition, we also know that <description>. Answer again by considering
// the previous message and the new information."
std::string external_description_prompt(const std::string& description);

InterventionOutcome apply_external_description(const Pipeline& pipeline, SessionState& state,
                                               const std::string& description, const ClassMasking& masking,
                                               ChatBackend& backend, TranscriptLogger* logger = nullptr);

// ---------------------------------------------------------------------------
// Assistant-guided intervention

enum class AssistantMove { emphasize, remove, augment };

std::string_view to_string(AssistantMove m);

struct AssistantDecision {
    AssistantMove move = AssistantMove::augment;
    std::string concept_text;
};

// What the assistant sees at each step.
struct AssistantBrief {
    std::vector<Message> history;
    std::vector<SemanticEntry> top_pool;
    std::string gt_label;
    std::vector<std::string> gt_prior_concepts;
    SemanticSet current_semantics;
    CandidateSet candidates;
    std::optional<std::string> last_prediction;
};

std::vector<Message> render_assistant_prompt(const AssistantBrief& brief);

// Parses "<action: emphasize|remove|augment> <concept: text>".
std::optional<AssistantDecision> parse_assistant_decision(std::string_view raw);

std::string render_assistant_decision(const AssistantDecision& d);

// Deterministic assistant: augments the first ground-truth prior concept
// missing from the semantics; otherwise removes the strongest pool concept
// outside the prior; otherwise emphasizes a pool concept.
class ScriptedAssistant : public ChatBackend {
public:
    std::string complete(const ChatRequest& request) override;
    std::string name() const override { return "scripted-assistant"; }

    static AssistantDecision decide(const AssistantBrief& brief);
};

struct AutoInterventionConfig {
    int budget = 5;
    std::size_t top_pool = 20;
    std::size_t candidate_n = 10;
};

struct AutoStep {
    int step = 0;
    std::optional<AssistantDecision> action;
    std::string assistant_raw;
    std::optional<std::string> predicted;
    bool correct = false;
    bool skipped = false;
    std::string note;
};

struct AutoResult {
    std::optional<std::string> initial_prediction;
    bool initial_correct = false;
    std::vector<AutoStep> steps;

    bool final_correct() const { return steps.empty() ? initial_correct : steps.back().correct; }
};

AutoResult run_auto_intervention(const Pipeline& pipeline, SessionState& state, ChatBackend& predictor,
                                 ChatBackend& assistant, const std::string& gt_label,
                                 const AutoInterventionConfig& config = {}, TranscriptLogger* logger = nullptr);

// ---------------------------------------------------------------------------
// Curves

struct CurvePoint {
    double x = 0.0;
    double accuracy = 0.0;

    friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

enum class CurveAxis { ratio, steps, concepts };

// CSV "ratio,accuracy" / "steps,accuracy" / "concepts,accuracy"; accuracy and
// ratio with 4 decimals, step and concept counts as integers.
std::string curve_to_csv(const std::vector<CurvePoint>& points, CurveAxis axis);

// Ground-truth correction of a growing share of concept units. Each record
// gets one seeded unit order, so the corrected units are nested across ratios.
struct RatioCurveConfig {
    std::vector<double> ratios{0.0, 0.25, 0.5, 0.75, 1.0};
    std::uint64_t seed = 0;
    // Intervene on concept groups instead of individual concepts.
    bool use_groups = false;
};

// Units (concept ids per unit) for ratio intervention.
std::vector<std::vector<std::size_t>> intervention_units(const ConceptBank& bank, bool use_groups);

// Number of units corrected at `ratio`: ceil(ratio * units).
std::size_t units_for_ratio(double ratio, std::size_t units);

std::vector<CurvePoint> ratio_intervention_curve(const Pipeline& pipeline, std::span<const ActivationRecord> records,
                                                 ChatBackend& backend, const RatioCurveConfig& config);

std::vector<CurvePoint> auto_intervention_curve(const Pipeline& pipeline, std::span<const ActivationRecord> records,
                                                ChatBackend& predictor, ChatBackend& assistant,
                                                const AutoInterventionConfig& config,
                                                std::vector<AutoResult>* results = nullptr);

// Probes trained on bank prefixes of the given sizes.
std::map<std::size_t, ProbeModel> train_probe_family(std::span<const ActivationRecord> train_records,
                                                     const ClassRoster& roster, const std::vector<std::size_t>& sizes,
                                                     const TrainConfig& config);

std::vector<ActivationRecord> truncate_records(std::span<const ActivationRecord> records, std::size_t n_concepts);

// Starting from a pipeline over the first `subset_pipeline.bank().size()`
// concepts of `full_bank`, adds each batch's ground-truth-present concepts to
// every record's semantics and re-classifies. Returns accuracy at 0..B
// batches, with x = number of concepts available.
std::vector<CurvePoint> incomplete_concept_intervention(const Pipeline& subset_pipeline, const ConceptBank& full_bank,
                                                        std::span<const ActivationRecord> records,
                                                        const std::vector<std::vector<std::size_t>>& batches,
                                                        ChatBackend& backend);

}  // namespace chatcbm
