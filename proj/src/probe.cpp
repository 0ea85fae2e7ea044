#include "chatcbm/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "chatcbm/dataset_io.hpp"
#include "chatcbm/digest.hpp"
#include "chatcbm/error.hpp"
#include "chatcbm/random.hpp"

namespace chatcbm {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "chatcbm-probe-v1";

void check_length(const ProbeModel& model, std::span<const double> activations) {
    if (activations.size() != model.n_concepts()) {
        throw DatasetError("activation length " + std::to_string(activations.size()) + " does not match probe input " +
                           std::to_string(model.n_concepts()));
    }
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

json config_to_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"learning_rate", c.optimizer.learning_rate},
                {"weight_decay", c.optimizer.weight_decay},
                {"betas", {c.optimizer.beta1, c.optimizer.beta2}},
                {"epsilon", c.optimizer.epsilon},
                {"batch_size", c.batch_size},
                {"schedule", "cosine"},
                {"seed", c.seed},
                {"use_bias", c.use_bias}};
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs").get<int>();
    c.optimizer.learning_rate = j.at("learning_rate").get<double>();
    c.optimizer.weight_decay = j.at("weight_decay").get<double>();
    c.optimizer.beta1 = j.at("betas").at(0).get<double>();
    c.optimizer.beta2 = j.at("betas").at(1).get<double>();
    c.optimizer.epsilon = j.at("epsilon").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.use_bias = j.at("use_bias").get<bool>();
    return c;
}

struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;

    explicit AdamWState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grads, const AdamWConfig& cfg, double lr,
              long t) {
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            params[i] *= 1.0 - lr * cfg.weight_decay;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
    }
};

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (optimizer.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
        throw ConfigError("betas must lie in [0, 1)");
    }
}

// ---------------------------------------------------------------------------
// ProbeModel

ProbeModel::ProbeModel(ClassRoster roster, std::size_t n_concepts, std::vector<double> weights,
                       std::vector<double> biases, TrainConfig config, std::string trained_on)
    : roster_(std::move(roster)),
      n_concepts_(n_concepts),
      weights_(std::move(weights)),
      biases_(std::move(biases)),
      config_(config),
      trained_on_(std::move(trained_on)) {
    if (roster_.size() == 0) throw DatasetError("probe roster is empty");
    if (n_concepts_ == 0) throw DatasetError("probe needs at least one concept");
    if (weights_.size() != roster_.size() * n_concepts_) {
        throw DatasetError("probe weight matrix has " + std::to_string(weights_.size()) + " entries, expected " +
                           std::to_string(roster_.size()) + "x" + std::to_string(n_concepts_));
    }
    if (biases_.size() != roster_.size()) throw DatasetError("probe bias length does not match roster");
    if (!all_finite(weights_) || !all_finite(biases_)) throw DatasetError("probe parameters must be finite");
}

ProbeModel ProbeModel::zeros(ClassRoster roster, std::size_t n_concepts, bool use_bias) {
    const auto m = roster.size();
    TrainConfig cfg;
    cfg.use_bias = use_bias;
    return ProbeModel(std::move(roster), n_concepts, std::vector<double>(m * n_concepts, 0.0),
                      std::vector<double>(m, 0.0), cfg, "");
}

std::vector<double> ProbeModel::logits(std::span<const double> activations) const {
    check_length(*this, activations);
    std::vector<double> out(n_classes());
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double* row = weights_.data() + k * n_concepts_;
        double z = biases_[k];
        for (std::size_t i = 0; i < n_concepts_; ++i) z += row[i] * activations[i];
        out[k] = z;
    }
    return out;
}

std::string ProbeModel::canonical_json() const {
    json doc{{"format", kFormat},
             {"class_names", roster_.names()},
             {"n_concepts", n_concepts_},
             {"seed", config_.seed},
             {"config", config_to_json(config_)},
             {"trained_on", trained_on_},
             {"weights", weights_},
             {"biases", biases_}};
    return doc.dump();
}

std::string ProbeModel::fingerprint() const { return sha256_hex(canonical_json()); }

void ProbeModel::save(const std::filesystem::path& path) const {
    auto doc = json::parse(canonical_json());
    doc["fingerprint"] = fingerprint();
    io::write_file(path, doc.dump() + "\n");
}

ProbeModel ProbeModel::load(const std::filesystem::path& path) { return from_json(io::read_file(path)); }

ProbeModel ProbeModel::from_json(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw DatasetError(std::string("probe file is not valid JSON: ") + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != kFormat) throw DatasetError("unsupported probe format");
        ProbeModel model(ClassRoster(doc.at("class_names").get<std::vector<std::string>>()),
                         doc.at("n_concepts").get<std::size_t>(), doc.at("weights").get<std::vector<double>>(),
                         doc.at("biases").get<std::vector<double>>(), config_from_json(doc.at("config")),
                         doc.at("trained_on").get<std::string>());
        if (doc.contains("fingerprint") && doc["fingerprint"].get<std::string>() != model.fingerprint()) {
            throw DatasetError("probe fingerprint mismatch (file modified or corrupted)");
        }
        return model;
    } catch (const json::exception& e) {
        throw DatasetError(std::string("malformed probe file: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Inference

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.begin(), logits.end());
    if (out.empty()) return out;
    const double mx = *std::max_element(out.begin(), out.end());
    double sum = 0.0;
    for (auto& z : out) {
        z = std::exp(z - mx);
        sum += z;
    }
    for (auto& z : out) z /= sum;
    return out;
}

std::vector<double> predict_scores(const ProbeModel& model, std::span<const double> activations) {
    return softmax(model.logits(activations));
}

CandidateSet top_n_candidates(const ProbeModel& model, std::span<const double> activations, std::size_t n) {
    if (n == 0) throw ConfigError("candidate count must be >= 1");
    const auto probs = predict_scores(model, activations);
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    order.resize(std::min(n, order.size()));
    std::vector<Candidate> out;
    out.reserve(order.size());
    for (auto k : order) out.push_back({model.roster()[k], probs[k]});
    return CandidateSet(std::move(out));
}

double top_n_accuracy(const ProbeModel& model, std::span<const ActivationRecord> records, std::size_t n) {
    if (records.empty()) throw DatasetError("top-n accuracy needs at least one record");
    std::size_t hits = 0;
    for (const auto& r : records) {
        if (top_n_candidates(model, r.activations, n).rank_of(r.label)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

// ---------------------------------------------------------------------------
// Training

LossGradient cross_entropy_gradient(const ProbeModel& model, std::span<const std::vector<double>> inputs,
                                    std::span<const std::size_t> labels) {
    if (inputs.size() != labels.size() || inputs.empty()) throw DatasetError("batch inputs/labels mismatch");
    const std::size_t m = model.n_classes();
    const std::size_t nc = model.n_concepts();
    LossGradient g;
    g.weights.assign(m * nc, 0.0);
    g.biases.assign(m, 0.0);
    const double inv_b = 1.0 / static_cast<double>(inputs.size());
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        auto p = softmax(model.logits(inputs[s]));
        g.loss -= std::log(std::max(p[labels[s]], 1e-300)) * inv_b;
        p[labels[s]] -= 1.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double d = p[k] * inv_b;
            if (model.use_bias()) g.biases[k] += d;
            double* row = g.weights.data() + k * nc;
            for (std::size_t i = 0; i < nc; ++i) row[i] += d * inputs[s][i];
        }
    }
    return g;
}

double cross_entropy_loss(const ProbeModel& model, std::span<const std::vector<double>> inputs,
                          std::span<const std::size_t> labels) {
    double loss = 0.0;
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        const auto p = softmax(model.logits(inputs[s]));
        loss -= std::log(std::max(p[labels[s]], 1e-300));
    }
    return loss / static_cast<double>(inputs.size());
}

std::string dataset_fingerprint(std::span<const ActivationRecord> records) {
    std::ostringstream ss;
    io::write_activation_records(ss, std::vector<ActivationRecord>(records.begin(), records.end()));
    return sha256_hex(ss.str());
}

ProbeModel train_probe(std::span<const ActivationRecord> train_records, const ClassRoster& roster,
                       const TrainConfig& config, std::vector<std::string>* warnings) {
    config.validate();
    if (train_records.empty()) throw DatasetError("training set is empty");
    if (roster.size() == 0) throw DatasetError("roster is empty");
    const std::size_t nc = train_records.front().activations.size();
    if (nc == 0) throw DatasetError("training records have no activations");

    std::vector<std::vector<double>> inputs;
    std::vector<std::size_t> labels;
    std::vector<std::size_t> per_class(roster.size(), 0);
    for (const auto& r : train_records) {
        if (r.split != Split::train) throw DatasetError("record '" + r.example_id + "' is not in the train split");
        if (r.activations.size() != nc) throw DatasetError("record '" + r.example_id + "' has inconsistent length");
        auto idx = roster.index_of(r.label);
        if (!idx) throw DatasetError("record '" + r.example_id + "' label '" + r.label + "' not in roster");
        inputs.push_back(r.activations);
        labels.push_back(*idx);
        ++per_class[*idx];
    }
    if (warnings) {
        for (std::size_t k = 0; k < roster.size(); ++k) {
            if (per_class[k] == 0) warnings->push_back("class '" + roster[k] + "' has no training records");
        }
    }

    Rng rng(config.seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(nc));
    std::vector<double> w(roster.size() * nc);
    for (auto& x : w) x = rng.uniform(-bound, bound);
    std::vector<double> b(roster.size(), 0.0);
    if (config.use_bias) {
        for (auto& x : b) x = rng.uniform(-bound, bound);
    }
    ProbeModel model(roster, nc, std::move(w), std::move(b), config, dataset_fingerprint(train_records));

    AdamWState w_state(model.weights().size());
    AdamWState b_state(model.biases().size());
    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    long t = 0;
    std::vector<std::vector<double>> batch_x;
    std::vector<std::size_t> batch_y;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.optimizer.learning_rate * 0.5 *
                          (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / config.epochs));
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            batch_x.clear();
            batch_y.clear();
            for (std::size_t i = start; i < end; ++i) {
                batch_x.push_back(inputs[order[i]]);
                batch_y.push_back(labels[order[i]]);
            }
            const auto grad = cross_entropy_gradient(model, batch_x, batch_y);
            ++t;
            w_state.step(model.mutable_weights(), grad.weights, config.optimizer, lr, t);
            if (config.use_bias) b_state.step(model.mutable_biases(), grad.biases, config.optimizer, lr, t);
        }
    }
    if (!all_finite(model.weights()) || !all_finite(model.biases())) {
        throw DatasetError("probe training diverged (non-finite parameters)");
    }
    return model;
}

std::vector<ActivationRecord> sample_few_shot(std::span<const ActivationRecord> records, const ClassRoster& roster,
                                              std::size_t shots, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<ActivationRecord> out;
    for (std::size_t k = 0; k < roster.size(); ++k) {
        std::vector<const ActivationRecord*> pool;
        for (const auto& r : records) {
            if (r.split == Split::train && r.label == roster[k]) pool.push_back(&r);
        }
        for (auto i : rng.sample_without_replacement(pool.size(), shots)) out.push_back(*pool[i]);
    }
    return out;
}

}  // namespace chatcbm
