// Command-line front end: probe training, prior construction, prediction,
// evaluation, intervention curves, fixture checks and the session server.

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "chatcbm/classifier.hpp"
#include "chatcbm/concepts.hpp"
#include "chatcbm/dataset_io.hpp"
#include "chatcbm/error.hpp"
#include "chatcbm/eval.hpp"
#include "chatcbm/fixtures.hpp"
#include "chatcbm/http_service.hpp"
#include "chatcbm/intervention.hpp"
#include "chatcbm/knowledge.hpp"
#include "chatcbm/probe.hpp"
#include "chatcbm/remote_backend.hpp"
#include "chatcbm/session_service.hpp"
#include "chatcbm/text.hpp"

namespace {

using namespace chatcbm;
using nlohmann::json;

struct DataOptions {
    std::string bank;
    std::string activations;
    std::string embeddings;
    std::string image_embeddings;
    std::string path = "supervised";
};

struct ModelOptions {
    std::string probe;
    std::string priors;
    std::string backend = "stub";
    std::string base_url = "http://127.0.0.1:8000/v1";
    std::string model = "stub";
    std::size_t n_candidates = 2;
    std::size_t k_shots = 2;
    std::uint64_t demo_seed = 0;
    bool probe_hint = false;
    std::string transcript;
};

void add_data_options(CLI::App* cmd, DataOptions& d) {
    cmd->add_option("--bank", d.bank, "Concept bank (JSON or one concept per line)")->required();
    cmd->add_option("--activations", d.activations, "Activation records (JSON Lines)")->required();
    cmd->add_option("--embeddings", d.embeddings, "Concept embeddings (JSON Lines), unsupervised path");
    cmd->add_option("--image-embeddings", d.image_embeddings, "Image embeddings (JSON Lines), unsupervised path");
    cmd->add_option("--path", d.path, "Activation path")->check(CLI::IsMember({"supervised", "unsupervised"}));
}

void add_model_options(CLI::App* cmd, ModelOptions& m) {
    cmd->add_option("--probe", m.probe, "Trained probe file")->required();
    cmd->add_option("--priors", m.priors, "Class prior table (JSON)");
    cmd->add_option("--backend", m.backend, "Language backend")->check(CLI::IsMember({"stub", "remote"}));
    cmd->add_option("--base-url", m.base_url, "Chat-completions base URL");
    cmd->add_option("--model", m.model, "Remote model name");
    cmd->add_option("--n-candidates", m.n_candidates, "Class candidates per prediction");
    cmd->add_option("--k-shots", m.k_shots, "Demonstrations per candidate class");
    cmd->add_option("--demo-seed", m.demo_seed, "Demonstration sampling seed");
    cmd->add_flag("--probe-hint", m.probe_hint, "Show the probe's top class in demonstrations");
    cmd->add_option("--transcript", m.transcript, "Append classification transcripts (JSON Lines)");
}

struct Data {
    ConceptBank bank;
    std::vector<ActivationRecord> records;
    ClassRoster roster;
    ActivationPath path;
};

Data load_data(const DataOptions& d) {
    auto bank = io::load_bank(d.bank);
    auto records = io::load_activation_records(d.activations);
    const auto path = parse_path(d.path);
    if (!d.image_embeddings.empty() || !d.embeddings.empty()) {
        if (d.image_embeddings.empty() || d.embeddings.empty()) {
            throw ConfigError("--embeddings and --image-embeddings must be given together");
        }
        const auto concepts = io::load_embeddings(d.embeddings, EmbeddingKind::concept_text);
        const auto images = io::load_embeddings(d.image_embeddings, EmbeddingKind::image);
        io::fill_activations_from_embeddings(records, images, AlignedConceptEmbeddings(concepts, bank));
    }
    auto roster = roster_from_records(records);
    const auto report = validate_dataset(bank, records, roster, path);
    if (!report.ok()) {
        const auto& v = report.violations.front();
        throw DatasetError(std::to_string(report.violations.size()) + " invalid record(s); first: '" + v.example_id +
                           "': " + v.message);
    }
    return {std::move(bank), std::move(records), std::move(roster), path};
}

std::unique_ptr<ChatBackend> make_backend(const ModelOptions& m) {
    if (m.backend == "stub") return std::make_unique<StubBackend>();
    RemoteConfig rc;
    rc.base_url = m.base_url;
    rc.model = m.model;
    return std::make_unique<RemoteBackend>(rc);
}

Pipeline make_pipeline(const Data& data, const ModelOptions& m) {
    auto probe = ProbeModel::load(m.probe);
    if (!(probe.roster() == data.roster)) {
        // Records may list classes in another order; the probe's roster wins
        // as long as every record label is known to it.
        for (const auto& r : data.records) {
            if (!probe.roster().contains(r.label)) throw DatasetError("label '" + r.label + "' unknown to the probe");
        }
    }
    std::optional<PriorTable> priors;
    if (!m.priors.empty()) priors = PriorTable::load(m.priors);
    PipelineConfig pc;
    pc.semantics.path = data.path;
    pc.n_candidates = m.n_candidates;
    pc.demonstrations.k = m.k_shots;
    pc.demonstrations.seed = m.demo_seed;
    pc.demonstrations.include_probe_hint = m.probe_hint;
    pc.generation.model_name = m.backend == "stub" ? "stub" : m.model;
    return Pipeline(data.bank, std::move(probe), std::move(priors), data.records, pc);
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    for (const auto& part : text::split(s, ',')) {
        const auto t = text::trim(part);
        if (t.empty()) continue;
        try {
            out.push_back(std::stoull(t));
        } catch (const std::exception&) {
            throw ConfigError("invalid seed '" + t + "'");
        }
    }
    if (out.empty()) throw ConfigError("at least one seed is required");
    return out;
}

std::vector<double> parse_ratios(const std::string& s) {
    std::vector<double> out;
    for (const auto& part : text::split(s, ',')) {
        const auto t = text::trim(part);
        if (t.empty()) continue;
        try {
            out.push_back(std::stod(t));
        } catch (const std::exception&) {
            throw ConfigError("invalid ratio '" + t + "'");
        }
    }
    return out;
}

void emit(const std::string& out_path, const std::string& contents) {
    if (out_path.empty() || out_path == "-") {
        std::cout << contents;
    } else {
        io::write_file(out_path, contents);
    }
}

struct TranscriptSink {
    std::ofstream file;
    std::unique_ptr<TranscriptLogger> logger;

    explicit TranscriptSink(const std::string& path) {
        if (path.empty()) return;
        file.open(path, std::ios::app);
        if (!file) throw ConfigError("cannot open transcript file '" + path + "'");
        logger = std::make_unique<TranscriptLogger>(file);
    }
};

std::atomic<httplib::Server*> g_server{nullptr};

void on_signal(int) {
    if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concept-bottleneck classification with a language-model label predictor"};
    app.set_config("--config", "", "TOML/INI configuration file; command-line flags take precedence");
    app.require_subcommand(1);

    // train-probe
    DataOptions tp_data;
    std::string tp_out;
    TrainConfig tp_cfg;
    bool tp_no_bias = false;
    auto* tp = app.add_subcommand("train-probe", "Train the linear probe on the train split");
    add_data_options(tp, tp_data);
    tp->add_option("--out", tp_out, "Output probe file")->required();
    tp->add_option("--epochs", tp_cfg.epochs);
    tp->add_option("--lr", tp_cfg.optimizer.learning_rate);
    tp->add_option("--weight-decay", tp_cfg.optimizer.weight_decay);
    tp->add_option("--batch-size", tp_cfg.batch_size);
    tp->add_option("--seed", tp_cfg.seed);
    tp->add_flag("--no-bias", tp_no_bias);

    // build-priors
    DataOptions bp_data;
    std::string bp_source = "avg_concept", bp_table, bp_out;
    double bp_threshold = 0.5;
    std::size_t bp_top_k = 10;
    auto* bp = app.add_subcommand("build-priors", "Build class concept priors");
    add_data_options(bp, bp_data);
    bp->add_option("--source", bp_source)
        ->check(CLI::IsMember({"avg_concept", "group_frequency", "top_frequency", "class_level"}));
    bp->add_option("--class-table", bp_table, "Class-level concept CSV (class_level source)");
    bp->add_option("--threshold", bp_threshold);
    bp->add_option("--top-k", bp_top_k, "Concepts per class (top_frequency source)");
    bp->add_option("--out", bp_out, "Output prior file")->required();

    // predict
    DataOptions pr_data;
    ModelOptions pr_model;
    std::string pr_example, pr_split = "test", pr_out;
    auto* pr = app.add_subcommand("predict", "Classify records");
    add_data_options(pr, pr_data);
    add_model_options(pr, pr_model);
    pr->add_option("--example-id", pr_example, "Classify only this record");
    pr->add_option("--split", pr_split);
    pr->add_option("--out", pr_out, "Output JSON Lines (default stdout)");

    // evaluate
    DataOptions ev_data;
    ModelOptions ev_model;
    std::string ev_seeds = "0,1,2,3,4", ev_out, ev_records_out;
    bool ev_fixed_probe = false;
    std::size_t ev_workers = 1;
    double ev_max_fail = 0.1;
    auto* ev = app.add_subcommand("evaluate", "Accuracy over seeds on the test split");
    add_data_options(ev, ev_data);
    add_model_options(ev, ev_model);
    ev->add_option("--seeds", ev_seeds, "Comma-separated seeds");
    ev->add_flag("--fixed-probe", ev_fixed_probe, "Keep the loaded probe for every seed instead of retraining it");
    ev->add_option("--workers", ev_workers);
    ev->add_option("--max-failure-rate", ev_max_fail);
    ev->add_option("--out", ev_out, "Summary table CSV");
    ev->add_option("--records-out", ev_records_out, "Per-record outcomes (JSON Lines)");

    // intervene-curve
    DataOptions ic_data;
    ModelOptions ic_model;
    std::string ic_ratios = "0,0.25,0.5,0.75,1", ic_out;
    std::uint64_t ic_seed = 0;
    bool ic_groups = false;
    auto* ic = app.add_subcommand("intervene-curve", "Accuracy under ground-truth concept correction");
    add_data_options(ic, ic_data);
    add_model_options(ic, ic_model);
    ic->add_option("--ratios", ic_ratios);
    ic->add_option("--seed", ic_seed);
    ic->add_flag("--groups", ic_groups, "Correct whole concept groups");
    ic->add_option("--out", ic_out);

    // auto-intervene
    DataOptions ai_data;
    ModelOptions ai_model;
    AutoInterventionConfig ai_cfg;
    std::string ai_assistant = "scripted", ai_assistant_model, ai_out, ai_traj;
    auto* ai = app.add_subcommand("auto-intervene", "Assistant-guided intervention on the test split");
    add_data_options(ai, ai_data);
    add_model_options(ai, ai_model);
    ai->add_option("--budget", ai_cfg.budget);
    ai->add_option("--top-pool", ai_cfg.top_pool);
    ai->add_option("--candidate-n", ai_cfg.candidate_n);
    ai->add_option("--assistant", ai_assistant)->check(CLI::IsMember({"scripted", "remote"}));
    ai->add_option("--assistant-model", ai_assistant_model);
    ai->add_option("--out", ai_out, "Curve CSV");
    ai->add_option("--trajectory", ai_traj, "Per-step trajectory (JSON Lines)");

    // check-fixtures
    std::string cf_dir = "fixtures/a7";
    auto* cf = app.add_subcommand("check-fixtures", "Validate the shipped reference curves");
    cf->add_option("--fixtures", cf_dir);

    // serve
    DataOptions sv_data;
    ModelOptions sv_model;
    std::string sv_host = "127.0.0.1", sv_export, sv_cors = "*", sv_masking;
    int sv_port = 8080;
    long sv_ttl = 3600;
    auto* sv = app.add_subcommand("serve", "Interactive session HTTP service");
    add_data_options(sv, sv_data);
    add_model_options(sv, sv_model);
    sv->add_option("--host", sv_host);
    sv->add_option("--port", sv_port);
    sv->add_option("--ttl", sv_ttl, "Idle session lifetime in seconds");
    sv->add_option("--export", sv_export, "Write sessions here (JSON Lines) on shutdown");
    sv->add_option("--cors-origin", sv_cors);
    sv->add_option("--masking", sv_masking, "JSON object class -> generic term for external descriptions");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*tp) {
            tp_cfg.use_bias = !tp_no_bias;
            const auto data = load_data(tp_data);
            const auto train = filter_split(data.records, Split::train);
            std::vector<std::string> warnings;
            const auto probe = train_probe(train, data.roster, tp_cfg, &warnings);
            for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
            probe.save(tp_out);
            std::cout << "train top-1: " << text::fixed(top_n_accuracy(probe, train, 1), 4) << '\n';
            const auto val = filter_split(data.records, Split::val);
            if (!val.empty()) std::cout << "val top-1: " << text::fixed(top_n_accuracy(probe, val, 1), 4) << '\n';
            std::cout << "fingerprint: " << probe.fingerprint() << '\n';
        } else if (*bp) {
            const auto data = load_data(bp_data);
            PriorTable table;
            if (bp_source == "avg_concept") {
                table = build_prior_avg_concept(filter_split(data.records, Split::train), data.bank, data.roster,
                                                bp_threshold);
            } else if (bp_source == "group_frequency") {
                table = build_prior_group_frequency(filter_split(data.records, Split::train), data.bank, data.roster);
            } else if (bp_source == "top_frequency") {
                TopFrequencyOptions o;
                o.top_k = bp_top_k;
                table = build_prior_top_frequency(filter_split(data.records, Split::val), data.bank, data.roster, o);
            } else {
                if (bp_table.empty()) throw ConfigError("--class-table is required for class_level priors");
                table = build_prior_class_level(io::load_class_concept_table(bp_table, data.bank.size()), data.bank,
                                                data.roster);
            }
            table.save(bp_out);
            std::cout << "wrote " << table.size() << " class priors to " << bp_out << '\n';
        } else if (*pr) {
            const auto data = load_data(pr_data);
            const auto pipeline = make_pipeline(data, pr_model);
            auto backend = make_backend(pr_model);
            TranscriptSink sink(pr_model.transcript);
            std::string out;
            const auto split = parse_split(pr_split);
            for (const auto& r : data.records) {
                if (!pr_example.empty() ? r.example_id != pr_example : r.split != split) continue;
                auto state = pipeline.start_session(r.example_id, r.activations);
                const auto c = predict(pipeline, state, *backend, sink.logger.get());
                auto j = prediction_json(c);
                j["example_id"] = r.example_id;
                j["label"] = r.label;
                j["candidates"] = to_json(state.candidates);
                out += j.dump() + "\n";
            }
            if (out.empty()) throw DatasetError("no matching records");
            emit(pr_out, out);
        } else if (*ev) {
            const auto data = load_data(ev_data);
            const auto pipeline = make_pipeline(data, ev_model);
            auto backend = make_backend(ev_model);
            TranscriptSink sink(ev_model.transcript);
            const auto test = filter_split(data.records, Split::test);
            const auto train = filter_split(data.records, Split::train);
            EvalConfig cfg;
            cfg.seeds = parse_seeds(ev_seeds);
            cfg.workers = ev_workers;
            cfg.max_failure_rate = ev_max_fail;
            if (!ev_fixed_probe) cfg.probe_reseed = ProbeReseed{train, pipeline.probe().config()};
            const auto report = evaluate_split(pipeline, test, *backend, cfg, sink.logger.get());
            for (const auto& s : report.per_seed) {
                std::cout << "seed " << s.seed << ": " << text::fixed(s.accuracy(), 4) << " (" << s.correct << "/"
                          << s.total << ", unparsed " << s.parse_failures << ")\n";
            }
            if (!report.per_seed.empty()) {
                std::cout << "accuracy: " << format_cell(report.summary.mean, report.summary.std) << '\n';
                const auto table = emit_table({{data.bank.name(), "accuracy", report.summary.mean, report.summary.std}},
                                              {"dataset", {data.bank.name()}, {"accuracy"}});
                if (!ev_out.empty()) io::write_file(ev_out, table.csv);
            }
            if (!ev_records_out.empty()) io::write_file(ev_records_out, records_to_jsonl(report.records));
            if (report.aborted) throw BackendError("evaluation aborted: " + report.abort_reason);
        } else if (*ic) {
            const auto data = load_data(ic_data);
            const auto pipeline = make_pipeline(data, ic_model);
            auto backend = make_backend(ic_model);
            RatioCurveConfig cfg;
            cfg.ratios = parse_ratios(ic_ratios);
            cfg.seed = ic_seed;
            cfg.use_groups = ic_groups;
            const auto curve =
                ratio_intervention_curve(pipeline, filter_split(data.records, Split::test), *backend, cfg);
            emit(ic_out, curve_to_csv(curve, CurveAxis::ratio));
        } else if (*ai) {
            const auto data = load_data(ai_data);
            const auto pipeline = make_pipeline(data, ai_model);
            auto predictor = make_backend(ai_model);
            std::unique_ptr<ChatBackend> assistant;
            if (ai_assistant == "scripted") {
                assistant = std::make_unique<ScriptedAssistant>();
            } else {
                ModelOptions am = ai_model;
                am.backend = "remote";
                if (!ai_assistant_model.empty()) am.model = ai_assistant_model;
                assistant = make_backend(am);
            }
            const auto test = filter_split(data.records, Split::test);
            std::vector<AutoResult> results;
            const auto curve = auto_intervention_curve(pipeline, test, *predictor, *assistant, ai_cfg, &results);
            emit(ai_out, curve_to_csv(curve, CurveAxis::steps));
            if (!ai_traj.empty()) {
                std::string lines;
                for (std::size_t i = 0; i < results.size(); ++i) {
                    for (const auto& s : results[i].steps) {
                        json j{{"example_id", test[i].example_id}, {"step", s.step},   {"skipped", s.skipped},
                               {"correct", s.correct},             {"note", s.note}, {"assistant_raw", s.assistant_raw}};
                        j["action"] = s.action ? json{{"move", std::string(to_string(s.action->move))},
                                                      {"concept", s.action->concept_text}}
                                               : json(nullptr);
                        j["predicted"] = s.predicted ? json(*s.predicted) : json(nullptr);
                        lines += j.dump() + "\n";
                    }
                }
                io::write_file(ai_traj, lines);
            }
        } else if (*cf) {
            const auto report = check_golden_fixtures(cf_dir);
            for (const auto& r : report.results) {
                std::cout << (r.ok ? "ok   " : "FAIL ") << r.file << " (" << r.rows << " rows)";
                if (!r.ok) std::cout << ": " << r.message;
                std::cout << '\n';
            }
            if (!report.ok()) throw FixtureError("fixture check failed");
        } else if (*sv) {
            const auto data = load_data(sv_data);
            ServiceConfig cfg;
            cfg.ttl = std::chrono::seconds(sv_ttl);
            if (!sv_export.empty()) cfg.export_path = sv_export;
            if (!sv_masking.empty()) cfg.masking = json::parse(io::read_file(sv_masking)).get<ClassMasking>();
            SessionService service(make_pipeline(data, sv_model), make_backend(sv_model),
                                   filter_split(data.records, Split::test), cfg);
            service.start_sweeper();
            httplib::Server server;
            register_routes(server, service, {sv_cors, &std::cerr});
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on " << sv_host << ":" << sv_port << '\n';
            if (!server.listen(sv_host, sv_port)) throw ConfigError("cannot bind " + sv_host + ":" + std::to_string(sv_port));
            g_server = nullptr;
            service.shutdown();
        }
    } catch (const FixtureError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
