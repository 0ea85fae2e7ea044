#include "chatcbm/knowledge.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "chatcbm/error.hpp"
#include "chatcbm/random.hpp"
#include "chatcbm/text.hpp"

namespace chatcbm {
namespace {

using nlohmann::json;

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<const ActivationRecord*> records_of_class(std::span<const ActivationRecord> records, Split split,
                                                      const std::string& class_name) {
    std::vector<const ActivationRecord*> out;
    for (const auto& r : records) {
        if (r.split == split && r.label == class_name) out.push_back(&r);
    }
    return out;
}

// Per-concept count of set ground-truth bits among `records`.
std::vector<std::size_t> gt_counts(const std::vector<const ActivationRecord*>& records, const ConceptBank& bank) {
    std::vector<std::size_t> counts(bank.size(), 0);
    for (const auto* r : records) {
        if (!r->gt_concepts) throw DatasetError("record '" + r->example_id + "' has no gt_concepts");
        if (r->gt_concepts->size() != bank.size()) {
            throw DatasetError("record '" + r->example_id + "' gt_concepts length does not match the bank");
        }
        for (std::size_t i = 0; i < bank.size(); ++i) counts[i] += (*r->gt_concepts)[i] ? 1 : 0;
    }
    return counts;
}

// Concept text with a leading "<group>" label and separators removed.
std::string strip_group_prefix(const std::string& concept_text, const std::string& group) {
    const auto lowered = text::to_lower(concept_text);
    const auto g = text::to_lower(group);
    if (lowered.size() > g.size() && lowered.compare(0, g.size(), g) == 0) {
        std::size_t i = g.size();
        const auto is_sep = [](char c) { return c == ' ' || c == ':' || c == '_' || c == '-' || c == '='; };
        if (is_sep(concept_text[i])) {
            while (i < concept_text.size() && is_sep(concept_text[i])) ++i;
            if (i < concept_text.size()) return concept_text.substr(i);
        }
    }
    return concept_text;
}

std::string with_list(const std::string& preamble, const std::vector<std::string>& concepts) {
    if (concepts.empty()) return preamble;
    return preamble + " " + text::join(concepts, ", ");
}

}  // namespace

// ---------------------------------------------------------------------------
// Demonstrations

DemonstrationSet select_demonstrations(const CandidateSet& candidates, std::span<const ActivationRecord> val_records,
                                       const ConceptBank& bank, const ClassRoster& roster,
                                       const DemonstrationOptions& options, const ProbeModel* probe) {
    if (options.include_probe_hint && probe == nullptr) {
        throw ConfigError("probe hints requested without a probe");
    }
    DemonstrationSet out;
    out.instruction = options.instruction;
    out.n_candidates = candidates.size();
    out.k_per_class = options.k;
    out.seed = options.seed;
    out.include_probe_hint = options.include_probe_hint;
    if (options.k == 0) return out;

    for (const auto& cand : candidates.candidates()) {
        if (!roster.contains(cand.class_name)) {
            throw DatasetError("candidate class '" + cand.class_name + "' is not in the roster");
        }
        const auto pool = records_of_class(val_records, Split::val, cand.class_name);
        if (pool.size() < options.k) {
            out.warnings.push_back("class '" + cand.class_name + "' has " + std::to_string(pool.size()) +
                                   " val records, fewer than k=" + std::to_string(options.k));
        }
        Rng rng(mix_seed(options.seed, fnv1a(cand.class_name)));
        for (auto idx : rng.sample_without_replacement(pool.size(), options.k)) {
            const auto& rec = *pool[idx];
            if (rec.split != Split::val) throw DatasetError("demonstration drawn from a non-val record");
            Shot shot;
            shot.example_id = rec.example_id;
            shot.semantics = extract_semantics(rec.activations, bank, options.semantics);
            shot.class_name = rec.label;
            if (options.include_probe_hint) {
                shot.probe_hint = top_n_candidates(*probe, rec.activations, 1)[0].class_name;
            }
            out.shots.push_back(std::move(shot));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// PriorTable

PriorTable::PriorTable(PriorSource construction, double threshold)
    : construction_(construction), threshold_(threshold) {}

void PriorTable::set(ClassPrior prior) {
    if (text::trim(prior.description).empty()) {
        throw DatasetError("prior for class '" + prior.class_name + "' has an empty description");
    }
    auto name = prior.class_name;
    priors_[name] = std::move(prior);
}

const ClassPrior* PriorTable::find(const std::string& class_name) const {
    auto it = priors_.find(class_name);
    return it == priors_.end() ? nullptr : &it->second;
}

const ClassPrior& PriorTable::at(const std::string& class_name) const {
    const auto* p = find(class_name);
    if (!p) throw DatasetError("no prior for class '" + class_name + "'");
    return *p;
}

PriorTable PriorTable::restricted_to(const CandidateSet& candidates) const {
    PriorTable out(construction_, threshold_);
    for (const auto& c : candidates.candidates()) out.set(at(c.class_name));
    return out;
}

void PriorTable::require_complete(const ClassRoster& roster) const {
    for (const auto& name : roster.names()) {
        if (!find(name)) throw DatasetError("prior table has no entry for class '" + name + "'");
    }
}

std::string PriorTable::to_json() const {
    json doc = json::object();
    for (const auto& [name, prior] : priors_) {
        if (prior.concepts.empty() && prior.source == PriorSource::external_text) {
            doc[name] = prior.description;
        } else {
            doc[name] = json{{"description", prior.description},
                             {"concepts", prior.concepts},
                             {"source", std::string(to_string(prior.source))}};
        }
    }
    return doc.dump(2) + "\n";
}

PriorTable PriorTable::from_json(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw DatasetError(std::string("prior file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw DatasetError("prior file must be a JSON object");
    std::optional<PriorSource> construction;
    PriorTable table(PriorSource::external_text);
    try {
        for (const auto& [name, value] : doc.items()) {
            ClassPrior p;
            p.class_name = name;
            if (value.is_string()) {
                p.description = value.get<std::string>();
                p.source = PriorSource::external_text;
            } else {
                p.description = value.at("description").get<std::string>();
                p.concepts = value.value("concepts", std::vector<std::string>{});
                p.source = parse_prior_source(value.value("source", std::string("external_text")));
            }
            if (!construction) construction = p.source;
            table.set(std::move(p));
        }
    } catch (const json::exception& e) {
        throw DatasetError(std::string("malformed prior file: ") + e.what());
    }
    if (construction) table.construction_ = *construction;
    return table;
}

void PriorTable::save(const std::filesystem::path& path) const { io::write_file(path, to_json()); }

PriorTable PriorTable::load(const std::filesystem::path& path) { return from_json(io::read_file(path)); }

// ---------------------------------------------------------------------------
// Rendering

std::string render_usually_has(const std::string& class_name, const std::vector<std::string>& concepts) {
    return with_list(class_name + " usually has:", concepts);
}

std::string render_associated_with(const std::string& class_name, const std::vector<std::string>& concepts) {
    return with_list(class_name + " is usually associated with concepts including:", concepts);
}

std::string render_group_summary(const std::string& class_name, const std::vector<GroupSummary>& groups) {
    std::vector<std::string> parts;
    for (const auto& g : groups) {
        if (g.frequency > 0.5) {
            parts.push_back(g.group + " is mostly " + g.modal_concept);
        } else {
            parts.push_back(g.group + " is " + g.modal_concept + " (" +
                            std::to_string(std::lround(g.frequency * 100.0)) + "%)");
        }
    }
    return with_list("for " + class_name + ":", parts);
}

// ---------------------------------------------------------------------------
// Builders

PriorTable build_prior_avg_concept(std::span<const ActivationRecord> train_records, const ConceptBank& bank,
                                   const ClassRoster& roster, double threshold) {
    PriorTable table(PriorSource::avg_concept, threshold);
    for (const auto& name : roster.names()) {
        const auto recs = records_of_class(train_records, Split::train, name);
        if (recs.empty()) throw DatasetError("class '" + name + "' has no train records for its prior");
        const auto counts = gt_counts(recs, bank);
        std::vector<std::string> concepts;
        for (std::size_t i = 0; i < bank.size(); ++i) {
            const double freq = static_cast<double>(counts[i]) / static_cast<double>(recs.size());
            if (freq > threshold) concepts.push_back(bank[i].text);
        }
        table.set({name, render_usually_has(name, concepts), PriorSource::avg_concept, concepts});
    }
    return table;
}

PriorTable build_prior_group_frequency(std::span<const ActivationRecord> train_records, const ConceptBank& bank,
                                       const ClassRoster& roster) {
    for (const auto& c : bank.concepts()) {
        if (!c.group || c.group->empty()) throw DatasetError("concept '" + c.text + "' has no group");
    }
    const auto groups = bank.groups();
    PriorTable table(PriorSource::group_frequency);
    for (const auto& name : roster.names()) {
        const auto recs = records_of_class(train_records, Split::train, name);
        if (recs.empty()) throw DatasetError("class '" + name + "' has no train records for its prior");
        const auto counts = gt_counts(recs, bank);
        std::vector<GroupSummary> summary;
        std::vector<std::string> modal_texts;
        for (const auto& g : groups) {
            std::optional<std::size_t> best;
            for (const auto& c : bank.concepts()) {
                if (*c.group != g) continue;
                if (!best || counts[c.id] > counts[*best]) best = c.id;
            }
            const double freq = static_cast<double>(counts[*best]) / static_cast<double>(recs.size());
            summary.push_back({g, strip_group_prefix(bank[*best].text, g), freq});
            modal_texts.push_back(bank[*best].text);
        }
        table.set({name, render_group_summary(name, summary), PriorSource::group_frequency, modal_texts});
    }
    return table;
}

std::vector<ConceptCount> rank_concept_frequency(std::span<const ActivationRecord> class_records,
                                                 const ConceptBank& bank, const TopFrequencyOptions& options) {
    std::vector<std::size_t> counts(bank.size(), 0);
    for (const auto& r : class_records) {
        if (r.activations.size() != bank.size()) {
            throw DatasetError("record '" + r.example_id + "' activation length does not match the bank");
        }
        if (options.activation_threshold) {
            for (std::size_t i = 0; i < bank.size(); ++i) counts[i] += r.activations[i] > *options.activation_threshold;
        } else {
            for (auto i : top_indices(r.activations, options.membership_n)) ++counts[i];
        }
    }
    std::vector<ConceptCount> ranked;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] > 0) ranked.push_back({i, counts[i]});
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const ConceptCount& a, const ConceptCount& b) { return a.count > b.count; });
    return ranked;
}

PriorTable build_prior_top_frequency(std::span<const ActivationRecord> val_records, const ConceptBank& bank,
                                     const ClassRoster& roster, const TopFrequencyOptions& options) {
    if (options.top_k == 0) throw ConfigError("top_k must be >= 1");
    PriorTable table(PriorSource::top_frequency);
    for (const auto& name : roster.names()) {
        std::vector<ActivationRecord> recs;
        for (const auto* r : records_of_class(val_records, Split::val, name)) recs.push_back(*r);
        if (recs.empty()) throw DatasetError("class '" + name + "' has no val records for its prior");
        auto ranked = rank_concept_frequency(recs, bank, options);
        if (ranked.size() > options.top_k) ranked.resize(options.top_k);
        std::sort(ranked.begin(), ranked.end(),
                  [](const ConceptCount& a, const ConceptCount& b) { return a.concept_id < b.concept_id; });
        std::vector<std::string> concepts;
        for (const auto& c : ranked) concepts.push_back(bank[c.concept_id].text);
        table.set({name, render_associated_with(name, concepts), PriorSource::top_frequency, concepts});
    }
    return table;
}

PriorTable build_prior_class_level(const io::ClassConceptTable& class_table, const ConceptBank& bank,
                                   const ClassRoster& roster) {
    PriorTable table(PriorSource::class_level);
    for (const auto& name : roster.names()) {
        auto it = class_table.find(name);
        if (it == class_table.end()) throw DatasetError("class table has no row for class '" + name + "'");
        if (it->second.size() != bank.size()) {
            throw DatasetError("class table row for '" + name + "' does not match the bank size");
        }
        std::vector<std::string> concepts;
        for (std::size_t i = 0; i < bank.size(); ++i) {
            if (it->second[i]) concepts.push_back(bank[i].text);
        }
        table.set({name, render_associated_with(name, concepts), PriorSource::class_level, concepts});
    }
    return table;
}

PriorTable prior_from_external_text(const std::map<std::string, std::string>& descriptions,
                                    const ClassRoster& roster) {
    PriorTable table(PriorSource::external_text);
    for (const auto& [name, desc] : descriptions) {
        if (!roster.contains(name)) throw DatasetError("description for unknown class '" + name + "'");
        table.set({name, desc, PriorSource::external_text, {}});
    }
    return table;
}

}  // namespace chatcbm
