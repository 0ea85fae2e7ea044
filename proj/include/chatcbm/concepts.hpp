#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "chatcbm/core.hpp"

namespace chatcbm {

enum class EmbeddingKind { image, concept_text };

// Ingested encoder outputs keyed by id. Zero-norm rows are rejected on insert.
class EmbeddingTable {
public:
    EmbeddingTable(std::size_t dim, EmbeddingKind kind);

    std::size_t dim() const noexcept { return dim_; }
    EmbeddingKind kind() const noexcept { return kind_; }
    std::size_t size() const noexcept { return rows_.size(); }

    void insert(std::string id, std::vector<double> vec);
    const std::vector<double>& at(const std::string& id) const;
    bool contains(const std::string& id) const { return rows_.count(id) != 0; }
    const std::map<std::string, std::vector<double>>& rows() const noexcept { return rows_; }

private:
    std::size_t dim_;
    EmbeddingKind kind_;
    std::map<std::string, std::vector<double>> rows_;
};

// Concept embeddings laid out in bank order, with precomputed norms.
class AlignedConceptEmbeddings {
public:
    // Each bank text must appear exactly once among the table ids after
    // whitespace/case normalization.
    AlignedConceptEmbeddings(const EmbeddingTable& table, const ConceptBank& bank);
    AlignedConceptEmbeddings(std::size_t dim, std::vector<std::vector<double>> rows);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return rows_.size(); }
    const std::vector<double>& row(std::size_t i) const { return rows_.at(i); }
    double norm(std::size_t i) const { return norms_.at(i); }

private:
    void compute_norms();

    std::size_t dim_;
    std::vector<std::vector<double>> rows_;
    std::vector<double> norms_;
};

constexpr double kDecodeThreshold = 0.5;
constexpr std::size_t kTopSemantics = 10;

// Concepts whose activation is strictly above `threshold`, in concept_id
// order, weighted by activation.
SemanticSet decode_supervised(std::span<const double> activations, const ConceptBank& bank,
                              double threshold = kDecodeThreshold);

// Cosine similarity between the image vector and each concept embedding,
// clamped to [-1, 1].
std::vector<double> cosine_activations(std::span<const double> image_vec, const AlignedConceptEmbeddings& concepts);

// The `n` highest-activation concepts, descending; ties go to the lower id.
SemanticSet top_semantics(std::span<const double> activations, const ConceptBank& bank,
                          std::size_t n = kTopSemantics);

// Indices of the `n` highest activations, descending, lower index first on ties.
std::vector<std::size_t> top_indices(std::span<const double> activations, std::size_t n);

struct SemanticsConfig {
    ActivationPath path = ActivationPath::supervised;
    double threshold = kDecodeThreshold;
    std::size_t top_n = kTopSemantics;
};

// Path dispatch: decode for supervised activations, top-n for unsupervised.
SemanticSet extract_semantics(std::span<const double> activations, const ConceptBank& bank,
                              const SemanticsConfig& config);

}  // namespace chatcbm
