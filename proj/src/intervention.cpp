#include "chatcbm/intervention.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "chatcbm/error.hpp"
#include "chatcbm/random.hpp"
#include "chatcbm/text.hpp"

namespace chatcbm {

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(ConceptBank bank, ProbeModel probe, std::optional<PriorTable> priors,
                   std::vector<ActivationRecord> val_records, PipelineConfig config)
    : config_(std::move(config)) {
    if (probe.n_concepts() != bank.size()) {
        throw ConfigError("probe expects " + std::to_string(probe.n_concepts()) + " concepts but the bank has " +
                          std::to_string(bank.size()));
    }
    if (config_.n_candidates == 0) throw ConfigError("n_candidates must be >= 1");
    config_.generation.validate();
    config_.demonstrations.semantics = config_.semantics;
    if (priors) priors->require_complete(probe.roster());
    bank_ = std::make_shared<const ConceptBank>(std::move(bank));
    probe_ = std::make_shared<const ProbeModel>(std::move(probe));
    priors_ = std::make_shared<const std::optional<PriorTable>>(std::move(priors));
    val_records_ = std::make_shared<const std::vector<ActivationRecord>>(filter_split(val_records, Split::val));
}

Pipeline Pipeline::with_demo_seed(std::uint64_t seed) const {
    Pipeline p = *this;
    p.config_.demonstrations.seed = seed;
    return p;
}

Pipeline Pipeline::with_probe(ProbeModel probe) const {
    if (probe.n_concepts() != bank_->size() || !(probe.roster() == probe_->roster())) {
        throw ConfigError("replacement probe does not match the pipeline's bank and roster");
    }
    Pipeline p = *this;
    p.probe_ = std::make_shared<const ProbeModel>(std::move(probe));
    return p;
}

Pipeline Pipeline::with_n_candidates(std::size_t n) const {
    if (n == 0) throw ConfigError("n_candidates must be >= 1");
    Pipeline p = *this;
    p.config_.n_candidates = n;
    return p;
}

void Pipeline::check_activations(std::span<const double> activations) const {
    if (activations.size() != bank_->size()) {
        throw FieldError("activations", "activation vector has " + std::to_string(activations.size()) +
                                            " entries, bank has " + std::to_string(bank_->size()));
    }
    const auto r = range();
    for (std::size_t i = 0; i < activations.size(); ++i) {
        if (!std::isfinite(activations[i]) || !r.contains(activations[i])) {
            throw FieldError("activations[" + std::to_string(i) + "]",
                             "activation " + std::to_string(i) + " = " + std::to_string(activations[i]) +
                                 " is outside [" + text::fixed(r.lo, 0) + ", " + text::fixed(r.hi, 0) + "]");
        }
    }
}

SemanticSet Pipeline::semantics_for(std::span<const double> activations) const {
    return extract_semantics(activations, *bank_, config_.semantics);
}

CandidateSet Pipeline::candidates_for(std::span<const double> activations) const {
    return top_n_candidates(*probe_, activations, config_.n_candidates);
}

SessionState Pipeline::start_session(std::string session_id, std::vector<double> activations) const {
    check_activations(activations);
    SessionState s;
    s.session_id = std::move(session_id);
    s.semantics = semantics_for(activations);
    s.candidates = candidates_for(activations);
    s.activations = std::move(activations);
    return s;
}

PromptBundle Pipeline::build_bundle(const SessionState& state) const {
    PromptBundle b;
    b.demonstrations = select_demonstrations(state.candidates, *val_records_, *bank_, probe_->roster(),
                                             config_.demonstrations,
                                             config_.demonstrations.include_probe_hint ? probe_.get() : nullptr);
    if (*priors_) b.priors = (*priors_)->restricted_to(state.candidates);
    b.query_semantics = state.semantics;
    b.candidates = state.candidates;
    b.history = state.history;
    b.generation = config_.generation;
    if (!state.intervention_log.empty()) {
        b.generation.max_length = std::max(b.generation.max_length, kInterventionMaxLength);
    }
    b.char_cap = config_.char_cap;
    return b;
}

Classification predict(const Pipeline& pipeline, SessionState& state, ChatBackend& backend, TranscriptLogger* logger) {
    auto c = classify(pipeline.build_bundle(state), backend, logger);
    state.history.push_back({Role::assistant, c.response.raw});
    state.last_prediction = Prediction{c.predicted_class, c.response.raw, c.response.parse_ok};
    state.last_transcript = c.messages;
    state.last_transcript.push_back({Role::assistant, c.response.raw});
    return c;
}

// ---------------------------------------------------------------------------
// Numerical edits

void apply_numerical(const Pipeline& pipeline, SessionState& state, std::span<const ScoreEdit> edits) {
    const auto& bank = pipeline.bank();
    const auto r = pipeline.range();
    for (const auto& e : edits) {
        if (e.concept_id >= bank.size()) throw DatasetError("unknown concept_id " + std::to_string(e.concept_id));
        if (!std::isfinite(e.value) || !r.contains(e.value)) {
            throw DatasetError("value " + std::to_string(e.value) + " for concept " + std::to_string(e.concept_id) +
                               " is outside the activation range");
        }
    }
    if (state.activations.size() != bank.size()) throw PreconditionError("session activations do not match the bank");

    SemanticSet old = state.semantics;
    for (const auto& e : edits) {
        state.activations[e.concept_id] = e.value;
        old.unremove(bank[e.concept_id].text);
        state.intervention_log.push_back(InterventionAction::set_score(e.concept_id, e.value));
    }

    // Rebuild: decoded entries from the edited vector, user-added entries kept,
    // removals kept.
    std::vector<SemanticEntry> entries;
    std::set<std::string> user_keys;
    for (const auto& e : old.entries()) {
        if (e.provenance == Provenance::user_added) user_keys.insert(text::normalize_key(e.text));
    }
    const SemanticSet decoded = pipeline.semantics_for(state.activations);
    for (const auto& e : decoded.entries()) {
        const auto key = text::normalize_key(e.text);
        if (user_keys.count(key) || old.is_removed(e.text)) continue;
        entries.push_back(e);
    }
    for (const auto& e : old.entries()) {
        if (e.provenance == Provenance::user_added) entries.push_back(e);
    }
    SemanticSet fresh = SemanticSet::from_bank_entries(std::move(entries));
    for (const auto& t : old.removed()) fresh.remove(t);
    state.semantics = std::move(fresh);
    state.candidates = pipeline.candidates_for(state.activations);
}

// ---------------------------------------------------------------------------
// Conversational interventions

std::string external_description_prompt(const std::string& description) {
    std::string d = text::collapse_whitespace(description);
    while (!d.empty() && (d.back() == '.' || d.back() == ' ')) d.pop_back();
    if (d.empty()) throw ConfigError("external description is empty");
    return "In addition, we also know that " + d +
           ". Answer again by considering the previous message and the new information.";
}

std::string render_intervention_text(const InterventionAction& action) {
    const auto payload = text::trim(action.text);
    if (action.kind == InterventionKind::set_score) {
        throw ConfigError("set_score is a numerical edit, not a conversational one");
    }
    if (payload.empty()) throw ConfigError(std::string(to_string(action.kind)) + " needs non-empty text");
    switch (action.kind) {
        case InterventionKind::correct_text:
        case InterventionKind::strategy_guidance:
            return payload;
        case InterventionKind::add_concept:
            return "In addition, the image also has: " + payload + ".";
        case InterventionKind::remove_concept:
            return "Ignore the concept: " + payload + ".";
        case InterventionKind::external_description:
            return external_description_prompt(payload);
        case InterventionKind::set_score:
            break;
    }
    throw ConfigError("unsupported intervention kind");
}

InterventionOutcome apply_conversational(const Pipeline& pipeline, SessionState& state,
                                         const InterventionAction& action, ChatBackend& backend,
                                         TranscriptLogger* logger) {
    if (!state.last_prediction) throw PreconditionError("conversational intervention needs a previous prediction");
    const auto message = render_intervention_text(action);
    const auto payload = text::collapse_whitespace(action.text);

    InterventionOutcome out;
    SemanticSet semantics = state.semantics;
    if (action.kind == InterventionKind::add_concept) {
        if (semantics.contains(payload)) throw DatasetError("concept '" + payload + "' is already present");
        semantics.add({payload, Provenance::user_added, std::nullopt});
    } else if (action.kind == InterventionKind::remove_concept) {
        if (!semantics.remove(payload)) {
            out.warnings.push_back("concept '" + payload + "' was not among the image concepts");
        }
    }

    state.semantics = std::move(semantics);
    state.history.push_back({Role::user, message});
    InterventionAction logged = action;
    logged.text = payload;
    state.intervention_log.push_back(std::move(logged));
    out.classification = predict(pipeline, state, backend, logger);
    return out;
}

std::string mask_class_names(const std::string& description, const ClassRoster& roster, const ClassMasking& masking) {
    std::vector<std::pair<std::string, std::string>> rules;
    for (const auto& [name, term] : masking) {
        if (!roster.contains(name)) throw ConfigError("masking entry for unknown class '" + name + "'");
        rules.emplace_back(name, term);
    }
    for (const auto& [_, term] : rules) {
        for (const auto& [name, __] : rules) {
            if (text::count_phrase_icase(term, name) > 0) {
                throw ConfigError("generic term '" + term + "' contains the class name '" + name + "'");
            }
        }
    }
    // Longest names first so "Black-footed Albatross" wins over "Albatross".
    std::stable_sort(rules.begin(), rules.end(),
                     [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });

    std::string out = description;
    for (int pass = 0; pass < 16; ++pass) {
        bool found = false;
        for (const auto& [name, term] : rules) {
            if (text::count_phrase_icase(out, name) == 0) continue;
            found = true;
            out = text::replace_phrase_icase(out, name, term);
        }
        if (!found) return out;
    }
    throw ConfigError("class-name masking did not converge");
}

InterventionOutcome apply_external_description(const Pipeline& pipeline, SessionState& state,
                                               const std::string& description, const ClassMasking& masking,
                                               ChatBackend& backend, TranscriptLogger* logger) {
    if (text::trim(description).empty()) throw ConfigError("external description is empty");
    const auto masked = mask_class_names(description, pipeline.roster(), masking);
    return apply_conversational(pipeline, state,
                                InterventionAction::with_text(InterventionKind::external_description, masked), backend,
                                logger);
}

// ---------------------------------------------------------------------------
// Assistant-guided intervention

std::string_view to_string(AssistantMove m) {
    switch (m) {
        case AssistantMove::emphasize: return "emphasize";
        case AssistantMove::remove: return "remove";
        case AssistantMove::augment: return "augment";
    }
    return "?";
}

std::vector<Message> render_assistant_prompt(const AssistantBrief& brief) {
    std::string system =
        "You help a concept-based image classifier reach the ground-truth class. Choose exactly one action on one "
        "concept. emphasize or remove must name a concept from the predicted concept pool; augment must name a "
        "concept from the ground-truth class prior that is not already listed. Reply as "
        "<action: emphasize|remove|augment> <concept: concept text>.";

    std::ostringstream user;
    user << "Ground-truth class: " << brief.gt_label << "\n";
    user << "Current prediction: " << brief.last_prediction.value_or("(none)") << "\n";
    user << "Class candidates: " << text::join(brief.candidates.names(), "; ") << "\n";
    std::vector<std::string> pool;
    for (const auto& e : brief.top_pool) pool.push_back(e.text + " (" + text::fixed(e.weight.value_or(0.0), 3) + ")");
    user << "Predicted concept pool: " << text::join(pool, "; ") << "\n";
    user << "Concepts currently listed: " << text::join(brief.current_semantics.texts(), "; ") << "\n";
    user << "Ground-truth class prior: " << text::join(brief.gt_prior_concepts, "; ") << "\n";
    user << "Conversation so far:";
    for (const auto& m : brief.history) user << "\n[" << to_string(m.role) << "] " << m.content;
    return {{Role::system, system}, {Role::user, user.str()}};
}

std::optional<AssistantDecision> parse_assistant_decision(std::string_view raw) {
    const auto action = extract_tag(raw, "action");
    const auto concept_text = extract_tag(raw, "concept");
    if (!action || !concept_text) return std::nullopt;
    const auto a = text::normalize_key(*action);
    AssistantDecision d;
    if (a == "emphasize") {
        d.move = AssistantMove::emphasize;
    } else if (a == "remove") {
        d.move = AssistantMove::remove;
    } else if (a == "augment") {
        d.move = AssistantMove::augment;
    } else {
        return std::nullopt;
    }
    d.concept_text = text::collapse_whitespace(*concept_text);
    if (d.concept_text.empty()) return std::nullopt;
    return d;
}

std::string render_assistant_decision(const AssistantDecision& d) {
    return "<action: " + std::string(to_string(d.move)) + "> <concept: " + d.concept_text + ">";
}

AssistantDecision ScriptedAssistant::decide(const AssistantBrief& brief) {
    std::set<std::string> prior;
    for (const auto& c : brief.gt_prior_concepts) {
        if (!brief.current_semantics.contains(c)) return {AssistantMove::augment, c};
        prior.insert(text::normalize_key(c));
    }
    // Pool is strongest first.
    for (const auto& e : brief.top_pool) {
        if (!prior.count(text::normalize_key(e.text)) && brief.current_semantics.contains(e.text)) {
            return {AssistantMove::remove, e.text};
        }
    }
    for (const auto& e : brief.top_pool) {
        if (prior.count(text::normalize_key(e.text))) return {AssistantMove::emphasize, e.text};
    }
    if (brief.top_pool.empty()) throw BackendError("scripted assistant: empty concept pool");
    return {AssistantMove::emphasize, brief.top_pool.front().text};
}

std::string ScriptedAssistant::complete(const ChatRequest& request) {
    if (!request.brief) throw BackendError("scripted assistant needs the structured brief");
    return render_assistant_decision(decide(*request.brief));
}

namespace {

std::vector<std::string> gt_prior_concepts(const Pipeline& pipeline, const std::string& gt_label) {
    if (!pipeline.priors()) return {};
    const auto* prior = pipeline.priors()->find(gt_label);
    if (!prior) return {};
    if (!prior->concepts.empty()) return prior->concepts;
    return prior_concept_keys(*prior);
}

std::vector<SemanticEntry> top_pool(const Pipeline& pipeline, std::span<const double> activations, std::size_t n) {
    std::vector<SemanticEntry> pool;
    for (auto i : top_indices(activations, n)) {
        pool.push_back({pipeline.bank()[i].text, Provenance::decoded, activations[i]});
    }
    return pool;
}

bool in_pool(const std::vector<SemanticEntry>& pool, const std::string& concept_text) {
    const auto key = text::normalize_key(concept_text);
    return std::any_of(pool.begin(), pool.end(), [&](const auto& e) { return text::normalize_key(e.text) == key; });
}

bool is_correct(const SessionState& state, const std::string& gt_label) {
    return state.last_prediction && state.last_prediction->class_name == gt_label;
}

}  // namespace

AutoResult run_auto_intervention(const Pipeline& pipeline, SessionState& state, ChatBackend& predictor,
                                 ChatBackend& assistant, const std::string& gt_label,
                                 const AutoInterventionConfig& config, TranscriptLogger* logger) {
    if (!pipeline.roster().contains(gt_label)) throw DatasetError("ground-truth label '" + gt_label + "' not in roster");
    if (config.budget < 0) throw ConfigError("budget must be >= 0");
    if (config.top_pool == 0) throw ConfigError("top_pool must be >= 1");

    const Pipeline auto_pipe = pipeline.with_n_candidates(config.candidate_n);
    const auto candidates = auto_pipe.candidates_for(state.activations);
    if (!state.last_prediction || !(state.candidates == candidates)) {
        state.candidates = candidates;
        predict(auto_pipe, state, predictor, logger);
    }

    AutoResult result;
    result.initial_prediction = state.last_prediction->class_name;
    result.initial_correct = is_correct(state, gt_label);
    if (result.initial_correct) return result;

    const auto prior_concepts = gt_prior_concepts(pipeline, gt_label);
    const auto pool = top_pool(pipeline, state.activations, config.top_pool);

    for (int step = 1; step <= config.budget; ++step) {
        AssistantBrief brief{state.history,  pool, gt_label, prior_concepts, state.semantics, state.candidates,
                             state.last_prediction->class_name};
        ChatRequest req{render_assistant_prompt(brief), auto_pipe.config().generation, nullptr, &brief};

        AutoStep rec;
        rec.step = step;
        rec.assistant_raw = assistant.complete(req);
        rec.action = parse_assistant_decision(rec.assistant_raw);
        rec.predicted = state.last_prediction->class_name;

        std::optional<InterventionAction> action;
        if (!rec.action) {
            rec.note = "malformed assistant action";
        } else if (rec.action->move == AssistantMove::augment) {
            const auto key = text::normalize_key(rec.action->concept_text);
            const bool from_prior = std::any_of(prior_concepts.begin(), prior_concepts.end(),
                                                [&](const auto& c) { return text::normalize_key(c) == key; });
            if (!from_prior) {
                rec.note = "augment concept is not in the ground-truth class prior";
            } else if (state.semantics.contains(rec.action->concept_text)) {
                rec.note = "augment concept is already present";
            } else {
                action = InterventionAction::with_text(InterventionKind::add_concept, rec.action->concept_text);
            }
        } else if (!in_pool(pool, rec.action->concept_text)) {
            rec.note = "concept is not in the predicted concept pool";
        } else if (rec.action->move == AssistantMove::remove) {
            action = InterventionAction::with_text(InterventionKind::remove_concept, rec.action->concept_text);
        } else {
            action = InterventionAction::with_text(
                InterventionKind::strategy_guidance,
                "Focus on the concept \"" + rec.action->concept_text + "\" when choosing the answer.");
        }

        if (action) {
            auto outcome = apply_conversational(auto_pipe, state, *action, predictor, logger);
            rec.predicted = outcome.classification.predicted_class;
            if (!outcome.warnings.empty()) rec.note = text::join(outcome.warnings, "; ");
        } else {
            rec.skipped = true;
        }
        rec.correct = is_correct(state, gt_label);
        result.steps.push_back(std::move(rec));
        if (result.steps.back().correct) break;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Curves

std::string curve_to_csv(const std::vector<CurvePoint>& points, CurveAxis axis) {
    std::string out;
    switch (axis) {
        case CurveAxis::ratio: out = "ratio,accuracy\n"; break;
        case CurveAxis::steps: out = "steps,accuracy\n"; break;
        case CurveAxis::concepts: out = "concepts,accuracy\n"; break;
    }
    for (const auto& p : points) {
        out += axis == CurveAxis::ratio ? text::fixed(p.x, 4) : text::fixed(p.x, 0);
        out += ",";
        out += text::fixed(p.accuracy, 4);
        out += "\n";
    }
    return out;
}

std::vector<std::vector<std::size_t>> intervention_units(const ConceptBank& bank, bool use_groups) {
    std::vector<std::vector<std::size_t>> units;
    if (!use_groups) {
        for (std::size_t i = 0; i < bank.size(); ++i) units.push_back({i});
        return units;
    }
    if (!bank.fully_grouped()) throw ConfigError("group-level intervention needs a group on every concept");
    const auto groups = bank.groups();
    units.resize(groups.size());
    for (const auto& c : bank.concepts()) {
        const auto g = std::find(groups.begin(), groups.end(), *c.group) - groups.begin();
        units[static_cast<std::size_t>(g)].push_back(c.id);
    }
    return units;
}

std::size_t units_for_ratio(double ratio, std::size_t units) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("intervention ratio must be in [0, 1]");
    // Tolerance keeps 0.3 * 10 from rounding up to 4.
    const double raw = ratio * static_cast<double>(units);
    return std::min(units, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

namespace {

void require_gt(const ActivationRecord& r, std::size_t n) {
    if (!r.gt_concepts) throw DatasetError("record '" + r.example_id + "' has no ground-truth concepts");
    if (r.gt_concepts->size() != n) throw DatasetError("record '" + r.example_id + "' has the wrong gt length");
}

}  // namespace

std::vector<CurvePoint> ratio_intervention_curve(const Pipeline& pipeline, std::span<const ActivationRecord> records,
                                                 ChatBackend& backend, const RatioCurveConfig& config) {
    if (records.empty()) throw DatasetError("ratio curve needs at least one record");
    if (config.ratios.empty()) throw ConfigError("ratio curve needs at least one ratio");
    const auto& bank = pipeline.bank();
    for (const auto& r : records) require_gt(r, bank.size());
    for (double r : config.ratios) units_for_ratio(r, 1);

    const auto units = intervention_units(bank, config.use_groups);
    const auto hi = pipeline.range().hi;
    const auto off = pipeline.range().lo;

    std::vector<std::size_t> hits(config.ratios.size(), 0);
    for (std::size_t ri = 0; ri < records.size(); ++ri) {
        const auto& rec = records[ri];
        // One permutation per record shared by every ratio, so corrected
        // units are nested as the ratio grows.
        std::vector<std::size_t> order(units.size());
        for (std::size_t u = 0; u < order.size(); ++u) order[u] = u;
        Rng(mix_seed(config.seed, ri)).shuffle(order);

        for (std::size_t k = 0; k < config.ratios.size(); ++k) {
            auto acts = rec.activations;
            const auto n_units = units_for_ratio(config.ratios[k], units.size());
            for (std::size_t u = 0; u < n_units; ++u) {
                for (auto cid : units[order[u]]) acts[cid] = (*rec.gt_concepts)[cid] ? hi : off;
            }
            auto state = pipeline.start_session(rec.example_id, std::move(acts));
            predict(pipeline, state, backend);
            if (state.last_prediction->class_name == rec.label) ++hits[k];
        }
    }
    std::vector<CurvePoint> out;
    for (std::size_t k = 0; k < config.ratios.size(); ++k) {
        out.push_back({config.ratios[k], static_cast<double>(hits[k]) / static_cast<double>(records.size())});
    }
    return out;
}

std::vector<CurvePoint> auto_intervention_curve(const Pipeline& pipeline, std::span<const ActivationRecord> records,
                                                ChatBackend& predictor, ChatBackend& assistant,
                                                const AutoInterventionConfig& config,
                                                std::vector<AutoResult>* results) {
    if (records.empty()) throw DatasetError("auto-intervention curve needs at least one record");
    if (config.budget < 0) throw ConfigError("budget must be >= 0");
    const auto budget = static_cast<std::size_t>(config.budget);
    std::vector<std::size_t> hits(budget + 1, 0);
    for (const auto& rec : records) {
        auto state = pipeline.start_session(rec.example_id, rec.activations);
        auto res = run_auto_intervention(pipeline, state, predictor, assistant, rec.label, config);
        // Correct from the first correct step onward; the loop stops there.
        std::size_t first = budget + 1;
        if (res.initial_correct) {
            first = 0;
        } else {
            for (const auto& s : res.steps) {
                if (s.correct) {
                    first = static_cast<std::size_t>(s.step);
                    break;
                }
            }
        }
        for (std::size_t s = first; s <= budget; ++s) ++hits[s];
        if (results) results->push_back(std::move(res));
    }
    std::vector<CurvePoint> out;
    for (std::size_t s = 0; s <= budget; ++s) {
        out.push_back({static_cast<double>(s), static_cast<double>(hits[s]) / static_cast<double>(records.size())});
    }
    return out;
}

std::vector<ActivationRecord> truncate_records(std::span<const ActivationRecord> records, std::size_t n_concepts) {
    std::vector<ActivationRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        if (r.activations.size() < n_concepts) {
            throw DatasetError("record '" + r.example_id + "' has fewer than " + std::to_string(n_concepts) +
                               " activations");
        }
        ActivationRecord t = r;
        t.activations.resize(n_concepts);
        if (t.gt_concepts) t.gt_concepts->resize(std::min(n_concepts, t.gt_concepts->size()));
        out.push_back(std::move(t));
    }
    return out;
}

std::map<std::size_t, ProbeModel> train_probe_family(std::span<const ActivationRecord> train_records,
                                                     const ClassRoster& roster, const std::vector<std::size_t>& sizes,
                                                     const TrainConfig& config) {
    std::map<std::size_t, ProbeModel> family;
    for (auto n : sizes) {
        if (n == 0) throw ConfigError("concept subset size must be >= 1");
        const auto subset = truncate_records(train_records, n);
        family.emplace(n, train_probe(subset, roster, config));
    }
    return family;
}

std::vector<CurvePoint> incomplete_concept_intervention(const Pipeline& subset_pipeline, const ConceptBank& full_bank,
                                                        std::span<const ActivationRecord> records,
                                                        const std::vector<std::vector<std::size_t>>& batches,
                                                        ChatBackend& backend) {
    if (records.empty()) throw DatasetError("incomplete-concept run needs at least one record");
    const auto m = subset_pipeline.bank().size();
    if (m > full_bank.size()) throw ConfigError("subset bank is larger than the full bank");
    for (std::size_t i = 0; i < m; ++i) {
        if (text::normalize_key(subset_pipeline.bank()[i].text) != text::normalize_key(full_bank[i].text)) {
            throw ConfigError("subset bank is not a prefix of the full bank");
        }
    }
    for (const auto& batch : batches) {
        for (auto id : batch) {
            if (id >= full_bank.size()) throw DatasetError("batch references unknown concept " + std::to_string(id));
            if (id < m) throw ConfigError("batch concept " + std::to_string(id) + " is already in the subset bank");
        }
    }
    for (const auto& r : records) require_gt(r, full_bank.size());

    std::vector<std::size_t> hits(batches.size() + 1, 0);
    for (const auto& rec : records) {
        std::vector<double> acts(rec.activations.begin(), rec.activations.begin() + static_cast<std::ptrdiff_t>(m));
        auto state = subset_pipeline.start_session(rec.example_id, std::move(acts));
        predict(subset_pipeline, state, backend);
        if (state.last_prediction->class_name == rec.label) ++hits[0];
        for (std::size_t b = 0; b < batches.size(); ++b) {
            for (auto id : batches[b]) {
                if (!(*rec.gt_concepts)[id]) continue;
                const auto& concept_text = full_bank[id].text;
                if (state.semantics.contains(concept_text)) continue;
                apply_conversational(subset_pipeline, state,
                                     InterventionAction::with_text(InterventionKind::add_concept, concept_text),
                                     backend);
            }
            if (state.last_prediction->class_name == rec.label) ++hits[b + 1];
        }
    }
    std::vector<CurvePoint> out;
    std::size_t available = m;
    for (std::size_t b = 0; b <= batches.size(); ++b) {
        if (b > 0) available += batches[b - 1].size();
        out.push_back({static_cast<double>(available), static_cast<double>(hits[b]) / static_cast<double>(records.size())});
    }
    return out;
}

}  // namespace chatcbm
