#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "chatcbm/core.hpp"

namespace chatcbm {

struct AdamWConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Probe training hyperparameters. The learning rate follows a cosine
// annealing schedule from `optimizer.learning_rate` to 0 over `epochs`,
// stepped once per epoch.
struct TrainConfig {
    int epochs = 50;
    AdamWConfig optimizer;
    std::size_t batch_size = 256;
    std::uint64_t seed = 0;
    bool use_bias = true;

    void validate() const;
};

// Single linear layer + softmax over the concept activations. Used to pick
// class candidates and as the score-based reference classifier.
class ProbeModel {
public:
    ProbeModel(ClassRoster roster, std::size_t n_concepts, std::vector<double> weights, std::vector<double> biases,
               TrainConfig config, std::string trained_on);

    static ProbeModel zeros(ClassRoster roster, std::size_t n_concepts, bool use_bias = true);

    const ClassRoster& roster() const noexcept { return roster_; }
    std::size_t n_classes() const noexcept { return roster_.size(); }
    std::size_t n_concepts() const noexcept { return n_concepts_; }
    bool use_bias() const noexcept { return config_.use_bias; }
    std::uint64_t seed() const noexcept { return config_.seed; }
    const TrainConfig& config() const noexcept { return config_; }
    const std::string& trained_on() const noexcept { return trained_on_; }

    // Row-major M x N_c.
    const std::vector<double>& weights() const noexcept { return weights_; }
    const std::vector<double>& biases() const noexcept { return biases_; }
    std::vector<double>& mutable_weights() noexcept { return weights_; }
    std::vector<double>& mutable_biases() noexcept { return biases_; }
    double weight(std::size_t cls, std::size_t concept_id) const { return weights_.at(cls * n_concepts_ + concept_id); }

    std::vector<double> logits(std::span<const double> activations) const;

    // Canonical JSON serialization (without the fingerprint field).
    std::string canonical_json() const;
    // Hex SHA-256 of canonical_json().
    std::string fingerprint() const;

    void save(const std::filesystem::path& path) const;
    static ProbeModel load(const std::filesystem::path& path);
    static ProbeModel from_json(const std::string& json_text);

private:
    ClassRoster roster_;
    std::size_t n_concepts_;
    std::vector<double> weights_;
    std::vector<double> biases_;
    TrainConfig config_;
    std::string trained_on_;
};

std::vector<double> softmax(std::span<const double> logits);

// Hex digest identifying a record list (order-sensitive).
std::string dataset_fingerprint(std::span<const ActivationRecord> records);

ProbeModel train_probe(std::span<const ActivationRecord> train_records, const ClassRoster& roster,
                       const TrainConfig& config, std::vector<std::string>* warnings = nullptr);

std::vector<double> predict_scores(const ProbeModel& model, std::span<const double> activations);

CandidateSet top_n_candidates(const ProbeModel& model, std::span<const double> activations, std::size_t n);

double top_n_accuracy(const ProbeModel& model, std::span<const ActivationRecord> records, std::size_t n);

struct LossGradient {
    double loss = 0.0;
    std::vector<double> weights;  // same layout as ProbeModel::weights()
    std::vector<double> biases;
};

// Mean softmax cross-entropy over the batch and its analytic gradient.
LossGradient cross_entropy_gradient(const ProbeModel& model, std::span<const std::vector<double>> inputs,
                                    std::span<const std::size_t> labels);

double cross_entropy_loss(const ProbeModel& model, std::span<const std::vector<double>> inputs,
                          std::span<const std::size_t> labels);

// Seeded per-class sample of up to `shots` train records per roster class,
// in roster order.
std::vector<ActivationRecord> sample_few_shot(std::span<const ActivationRecord> records, const ClassRoster& roster,
                                              std::size_t shots, std::uint64_t seed);

}  // namespace chatcbm
