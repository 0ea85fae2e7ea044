#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "chatcbm/concepts.hpp"
#include "chatcbm/core.hpp"

namespace chatcbm::io {

// Bank file: JSON {"name": str, "concepts": [str | {"text": str, "group": str}]}
// or plain text with one concept per non-empty line.
ConceptBank load_bank(const std::filesystem::path& path);
void save_bank(const ConceptBank& bank, const std::filesystem::path& path);

// Activation JSON Lines: {"example_id", "split", "activations": [...],
// "label", "gt_concepts": optional [0/1, ...]}.
std::vector<ActivationRecord> read_activation_records(std::istream& in, const std::string& source = "<stream>");
std::vector<ActivationRecord> load_activation_records(const std::filesystem::path& path);
void write_activation_records(std::ostream& out, const std::vector<ActivationRecord>& records);
void save_activation_records(const std::vector<ActivationRecord>& records, const std::filesystem::path& path);

// Embedding JSON Lines: {"id": str, "vector": [...]}. The dimension is taken
// from the first row.
EmbeddingTable read_embeddings(std::istream& in, EmbeddingKind kind, const std::string& source = "<stream>");
EmbeddingTable load_embeddings(const std::filesystem::path& path, EmbeddingKind kind);

// Replaces empty activation vectors with cosine scores of the record's image
// embedding (looked up by example_id) against the concept embeddings.
void fill_activations_from_embeddings(std::vector<ActivationRecord>& records, const EmbeddingTable& images,
                                      const AlignedConceptEmbeddings& concepts);

// Class-level concept table, CSV rows "class,bit,bit,...". An optional header
// row starting with "class" is skipped.
using ClassConceptTable = std::map<std::string, std::vector<std::uint8_t>>;

ClassConceptTable read_class_concept_table(std::istream& in, std::size_t n_concepts);
ClassConceptTable load_class_concept_table(const std::filesystem::path& path, std::size_t n_concepts);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace chatcbm::io
