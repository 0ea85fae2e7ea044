#include "chatcbm/concepts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "chatcbm/error.hpp"
#include "chatcbm/text.hpp"

namespace chatcbm {
namespace {

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::size_t dim, EmbeddingKind kind) : dim_(dim), kind_(kind) {
    if (dim_ == 0) throw DatasetError("embedding dimension must be positive");
}

void EmbeddingTable::insert(std::string id, std::vector<double> vec) {
    if (vec.size() != dim_) {
        throw DatasetError("embedding '" + id + "' has dimension " + std::to_string(vec.size()) + ", expected " +
                           std::to_string(dim_));
    }
    for (double x : vec) {
        if (!std::isfinite(x)) throw DatasetError("embedding '" + id + "' has a non-finite component");
    }
    if (l2_norm(vec) == 0.0) throw DatasetError("embedding '" + id + "' has zero norm");
    if (!rows_.emplace(id, std::move(vec)).second) throw DatasetError("duplicate embedding id '" + id + "'");
}

const std::vector<double>& EmbeddingTable::at(const std::string& id) const {
    auto it = rows_.find(id);
    if (it == rows_.end()) throw DatasetError("no embedding for id '" + id + "'");
    return it->second;
}

AlignedConceptEmbeddings::AlignedConceptEmbeddings(const EmbeddingTable& table, const ConceptBank& bank)
    : dim_(table.dim()) {
    if (table.kind() != EmbeddingKind::concept_text) throw DatasetError("expected a concept embedding table");
    std::vector<const std::vector<double>*> slots(bank.size(), nullptr);
    for (const auto& [id, vec] : table.rows()) {
        auto idx = bank.find(id);
        if (!idx) throw DatasetError("concept embedding id '" + id + "' is not in the bank");
        if (slots[*idx]) throw DatasetError("concept '" + bank[*idx].text + "' has more than one embedding");
        slots[*idx] = &vec;
    }
    rows_.reserve(bank.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i]) throw DatasetError("concept '" + bank[i].text + "' has no embedding");
        rows_.push_back(*slots[i]);
    }
    compute_norms();
}

AlignedConceptEmbeddings::AlignedConceptEmbeddings(std::size_t dim, std::vector<std::vector<double>> rows)
    : dim_(dim), rows_(std::move(rows)) {
    for (const auto& r : rows_) {
        if (r.size() != dim_) throw DatasetError("concept embedding dimension mismatch");
    }
    compute_norms();
}

void AlignedConceptEmbeddings::compute_norms() {
    norms_.clear();
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        const double n = l2_norm(rows_[i]);
        if (n == 0.0) throw DatasetError("concept embedding " + std::to_string(i) + " has zero norm");
        norms_.push_back(n);
    }
}

SemanticSet decode_supervised(std::span<const double> activations, const ConceptBank& bank, double threshold) {
    if (activations.size() != bank.size()) {
        throw DatasetError("activation length " + std::to_string(activations.size()) + " does not match bank size " +
                           std::to_string(bank.size()));
    }
    std::vector<SemanticEntry> entries;
    for (std::size_t i = 0; i < activations.size(); ++i) {
        if (activations[i] > threshold) entries.push_back({bank[i].text, Provenance::decoded, activations[i]});
    }
    return SemanticSet::from_bank_entries(std::move(entries));
}

std::vector<double> cosine_activations(std::span<const double> image_vec, const AlignedConceptEmbeddings& concepts) {
    if (image_vec.size() != concepts.dim()) {
        throw DatasetError("image embedding dimension " + std::to_string(image_vec.size()) +
                           " does not match concept dimension " + std::to_string(concepts.dim()));
    }
    const double image_norm = l2_norm(image_vec);
    if (image_norm == 0.0) throw DatasetError("image embedding has zero norm");
    std::vector<double> out(concepts.size());
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        const auto& row = concepts.row(i);
        double dot = 0.0;
        for (std::size_t d = 0; d < row.size(); ++d) dot += image_vec[d] * row[d];
        out[i] = std::clamp(dot / (image_norm * concepts.norm(i)), -1.0, 1.0);
    }
    return out;
}

std::vector<std::size_t> top_indices(std::span<const double> activations, std::size_t n) {
    std::vector<std::size_t> order(activations.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t k = std::min(n, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (activations[a] != activations[b]) return activations[a] > activations[b];
                          return a < b;
                      });
    order.resize(k);
    return order;
}

SemanticSet top_semantics(std::span<const double> activations, const ConceptBank& bank, std::size_t n) {
    if (n == 0) throw ConfigError("top_semantics needs n >= 1");
    if (activations.size() != bank.size()) {
        throw DatasetError("activation length " + std::to_string(activations.size()) + " does not match bank size " +
                           std::to_string(bank.size()));
    }
    std::vector<SemanticEntry> entries;
    for (std::size_t i : top_indices(activations, n)) entries.push_back({bank[i].text, Provenance::decoded, activations[i]});
    return SemanticSet::from_bank_entries(std::move(entries));
}

SemanticSet extract_semantics(std::span<const double> activations, const ConceptBank& bank,
                              const SemanticsConfig& config) {
    return config.path == ActivationPath::supervised ? decode_supervised(activations, bank, config.threshold)
                                                     : top_semantics(activations, bank, config.top_n);
}

}  // namespace chatcbm
