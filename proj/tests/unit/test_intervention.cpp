#include <doctest.h>

#include <algorithm>

#include "chatcbm/error.hpp"
#include "chatcbm/intervention.hpp"
#include "chatcbm/random.hpp"
#include "chatcbm/text.hpp"
#include "support/synthetic.hpp"

using namespace chatcbm;

namespace {

// Two classes, Alpha ranked first by bias. Alpha's prior is {a, b, c}, Beta's
// is {c, d, e}. No demonstrations.
Pipeline small_pipeline() {
    const auto bank = ConceptBank::from_texts("small", {"a", "b", "c", "d", "e"});
    ProbeModel probe(ClassRoster({"Alpha", "Beta"}), 5, std::vector<double>(10, 0.0), {1.0, 0.0}, TrainConfig{},
                     "hand");
    PriorTable priors(PriorSource::avg_concept);
    priors.set({"Alpha", render_usually_has("Alpha", {"a", "b", "c"}), PriorSource::avg_concept, {"a", "b", "c"}});
    priors.set({"Beta", render_usually_has("Beta", {"c", "d", "e"}), PriorSource::avg_concept, {"c", "d", "e"}});
    PipelineConfig cfg;
    cfg.demonstrations.k = 0;
    return Pipeline(bank, probe, priors, {}, cfg);
}

// Activations with the given concepts on.
std::vector<double> on(const std::vector<std::size_t>& ids) {
    std::vector<double> v(5, 0.1);
    for (auto i : ids) v[i] = 0.9;
    return v;
}

class FixedBackend : public ChatBackend {
public:
    explicit FixedBackend(std::string reply) : reply_(std::move(reply)) {}
    std::string complete(const ChatRequest&) override { return reply_; }
    std::string name() const override { return "fixed"; }

private:
    std::string reply_;
};

struct WorldPipeline {
    testing::World world;
    Pipeline pipeline;
};

WorldPipeline world_pipeline(testing::WorldSpec spec = {}, std::size_t n_candidates = 3) {
    auto world = testing::make_world(spec);
    PipelineConfig cfg;
    cfg.n_candidates = n_candidates;
    auto probe = train_probe(world.split(Split::train), world.roster, testing::test_train_config(0));
    Pipeline p(world.bank, std::move(probe), world.priors, world.split(Split::val), cfg);
    return {std::move(world), std::move(p)};
}

}  // namespace

TEST_CASE("pipelines validate their parts") {
    const auto p = small_pipeline();
    CHECK(p.val_records().empty());
    CHECK_THROWS_AS(p.with_n_candidates(0), ConfigError);
    CHECK_THROWS_AS(p.start_session("s", {0.1, 0.2}), FieldError);
    try {
        p.start_session("s", {0.1, 0.2, 1.5, 0.1, 0.1});
        FAIL("expected FieldError");
    } catch (const FieldError& e) {
        CHECK(e.field() == "activations[2]");
    }
    const auto bank = ConceptBank::from_texts("x", {"a", "b"});
    CHECK_THROWS_AS(Pipeline(bank, p.probe(), std::nullopt, {}, PipelineConfig{}), ConfigError);
    PriorTable partial(PriorSource::avg_concept);
    partial.set({"Alpha", "Alpha usually has: a", PriorSource::avg_concept, {"a"}});
    CHECK_THROWS_AS(Pipeline(p.bank(), p.probe(), partial, {}, PipelineConfig{}), DatasetError);
}

TEST_CASE("predict appends the assistant turn and records the transcript") {
    const auto p = small_pipeline();
    StubBackend stub;
    auto s = p.start_session("s", on({3, 4}));
    CHECK(s.history.empty());
    const auto c = predict(p, s, stub);
    CHECK(c.predicted_class == std::optional<std::string>("Beta"));
    REQUIRE(s.history.size() == 1);
    CHECK(s.history[0].role == Role::assistant);
    CHECK(s.last_prediction->class_name == std::optional<std::string>("Beta"));
    CHECK(s.last_transcript.size() == c.messages.size() + 1);
    CHECK(s.last_transcript.back().content == c.response.raw);
    CHECK(p.build_bundle(s).generation.max_length == kDefaultMaxLength);
}

TEST_CASE("numerical edits recompute semantics and candidates") {
    const auto p = small_pipeline();
    auto s = p.start_session("s", on({0}));
    CHECK(s.semantics.texts() == std::vector<std::string>{"a"});

    const ScoreEdit raise{3, 1.0};
    apply_numerical(p, s, std::span(&raise, 1));
    CHECK(s.semantics.texts() == std::vector<std::string>{"a", "d"});
    CHECK(s.intervention_log.size() == 1);
    CHECK(s.history.empty());

    const auto before = s.semantics;
    const auto cands = s.candidates;
    const ScoreEdit same{3, 1.0};
    apply_numerical(p, s, std::span(&same, 1));
    CHECK(s.semantics == before);
    CHECK(s.candidates == cands);
    CHECK(s.intervention_log.size() == 2);

    // Invalid edits leave the session untouched, even when listed after valid ones.
    const std::vector<ScoreEdit> mixed{{1, 0.9}, {9, 0.5}};
    CHECK_THROWS_AS(apply_numerical(p, s, mixed), DatasetError);
    const std::vector<ScoreEdit> out_of_range{{1, 0.9}, {2, 1.5}};
    CHECK_THROWS_AS(apply_numerical(p, s, out_of_range), DatasetError);
    CHECK(s.semantics == before);
    CHECK(s.intervention_log.size() == 2);
}

TEST_CASE("numerical edits keep user additions and removals") {
    const auto p = small_pipeline();
    StubBackend stub;
    auto s = p.start_session("s", on({0, 1}));
    predict(p, s, stub);
    apply_conversational(p, s, InterventionAction::with_text(InterventionKind::add_concept, "shiny beak"), stub);
    apply_conversational(p, s, InterventionAction::with_text(InterventionKind::remove_concept, "b"), stub);
    CHECK(s.semantics.texts() == std::vector<std::string>{"a", "shiny beak"});

    const ScoreEdit e{2, 0.8};
    apply_numerical(p, s, std::span(&e, 1));
    CHECK(s.semantics.texts() == std::vector<std::string>{"a", "c", "shiny beak"});
    CHECK(s.semantics.is_removed("b"));

    // Editing a removed concept lifts the removal.
    const ScoreEdit lift{1, 0.95};
    apply_numerical(p, s, std::span(&lift, 1));
    CHECK(s.semantics.contains("b"));
    CHECK_FALSE(s.semantics.is_removed("b"));
}

TEST_CASE("numerical edits match a fresh decode of the edited vector") {
    const auto wp = world_pipeline();
    Rng rng(8);
    for (const auto& rec : wp.world.split(Split::test)) {
        auto s = wp.pipeline.start_session(rec.example_id, rec.activations);
        std::vector<ScoreEdit> edits;
        for (int k = 0; k < 4; ++k) edits.push_back({rng.below(wp.world.bank.size()), rng.uniform()});
        apply_numerical(wp.pipeline, s, edits);
        auto edited = rec.activations;
        for (const auto& e : edits) edited[e.concept_id] = e.value;
        const auto fresh = wp.pipeline.start_session("fresh", edited);
        CHECK(s.semantics == fresh.semantics);
        CHECK(s.candidates == fresh.candidates);
    }
}

TEST_CASE("setting every score to the ground truth decodes the ground-truth set") {
    const auto wp = world_pipeline();
    const auto rec = wp.world.split(Split::test).front();
    auto s = wp.pipeline.start_session(rec.example_id, rec.activations);
    std::vector<ScoreEdit> edits;
    for (std::size_t i = 0; i < rec.gt_concepts->size(); ++i) edits.push_back({i, (*rec.gt_concepts)[i] ? 1.0 : 0.0});
    apply_numerical(wp.pipeline, s, edits);
    std::vector<std::string> want;
    for (std::size_t i = 0; i < rec.gt_concepts->size(); ++i) {
        if ((*rec.gt_concepts)[i]) want.push_back(wp.world.bank[i].text);
    }
    CHECK(s.semantics.texts() == want);
}

TEST_CASE("conversational actions render fixed user turns") {
    using K = InterventionKind;
    CHECK(render_intervention_text(InterventionAction::with_text(K::add_concept, "red wing")) ==
          "In addition, the image also has: red wing.");
    CHECK(render_intervention_text(InterventionAction::with_text(K::remove_concept, "red wing")) ==
          "Ignore the concept: red wing.");
    CHECK(render_intervention_text(InterventionAction::with_text(K::correct_text, "It has a red wing.")) ==
          "It has a red wing.");
    CHECK(render_intervention_text(InterventionAction::with_text(K::strategy_guidance, "Look at the beak.")) ==
          "Look at the beak.");
    CHECK(render_intervention_text(InterventionAction::with_text(K::external_description, "the bird is small.")) ==
          "In addition, we also know that the bird is small. Answer again by considering the previous message and "
          "the new information.");
    CHECK_THROWS_AS(render_intervention_text(InterventionAction::with_text(K::correct_text, "  ")), ConfigError);
}

TEST_CASE("conversational interventions move the stub prediction") {
    const auto p = small_pipeline();
    StubBackend stub;

    SUBCASE("adding a concept only Beta has flips the answer") {
        auto s = p.start_session("s", on({2}));
        CHECK(predict(p, s, stub).predicted_class == std::optional<std::string>("Alpha"));
        const auto out = apply_conversational(
            p, s, InterventionAction::with_text(InterventionKind::add_concept, "d"), stub);
        CHECK(out.classification.predicted_class == std::optional<std::string>("Beta"));
        CHECK(s.history.size() == 3);
        CHECK(s.history[1].content == "In addition, the image also has: d.");
        CHECK(s.semantics.entries().back().provenance == Provenance::user_added);
        CHECK(p.build_bundle(s).generation.max_length == kInterventionMaxLength);
        CHECK_THROWS_AS(
            apply_conversational(p, s, InterventionAction::with_text(InterventionKind::add_concept, " D "), stub),
            DatasetError);
        CHECK(s.history.size() == 3);
    }
    SUBCASE("removing Alpha's only concept hands the tie to Beta") {
        auto s = p.start_session("s", on({0, 3}));
        CHECK(predict(p, s, stub).predicted_class == std::optional<std::string>("Alpha"));
        const auto out = apply_conversational(
            p, s, InterventionAction::with_text(InterventionKind::remove_concept, "a"), stub);
        CHECK(out.classification.predicted_class == std::optional<std::string>("Beta"));
        CHECK_FALSE(s.semantics.contains("a"));
        CHECK(out.warnings.empty());
        const auto again = apply_conversational(
            p, s, InterventionAction::with_text(InterventionKind::remove_concept, "zzz"), stub);
        CHECK(again.warnings.size() == 1);
    }
    SUBCASE("guidance naming Beta wins an overlap tie") {
        auto s = p.start_session("s", on({2}));
        predict(p, s, stub);
        const auto out = apply_conversational(
            p, s, InterventionAction::with_text(InterventionKind::strategy_guidance, "The answer is Beta."), stub);
        CHECK(out.classification.predicted_class == std::optional<std::string>("Beta"));
    }
    SUBCASE("an intervention needs a previous prediction") {
        auto s = p.start_session("s", on({2}));
        CHECK_THROWS_AS(
            apply_conversational(p, s, InterventionAction::with_text(InterventionKind::correct_text, "x"), stub),
            PreconditionError);
    }
}

TEST_CASE("history only grows and removed texts never reappear") {
    const auto wp = world_pipeline();
    StubBackend stub;
    Rng rng(10);
    for (const auto& rec : wp.world.split(Split::test)) {
        auto s = wp.pipeline.start_session(rec.example_id, rec.activations);
        predict(wp.pipeline, s, stub);
        for (int step = 0; step < 6; ++step) {
            const auto before = s.history.size();
            const auto& text = wp.world.bank[rng.below(wp.world.bank.size())].text;
            const auto choice = rng.below(3);
            if (choice == 0) {
                const ScoreEdit e{rng.below(wp.world.bank.size()), rng.uniform()};
                apply_numerical(wp.pipeline, s, std::span(&e, 1));
                CHECK(s.history.size() == before);
            } else {
                const auto kind = choice == 1 ? InterventionKind::remove_concept : InterventionKind::add_concept;
                if (kind == InterventionKind::add_concept && s.semantics.contains(text)) continue;
                apply_conversational(wp.pipeline, s, InterventionAction::with_text(kind, text), stub);
                CHECK(s.history.size() == before + 2);
            }
            for (const auto& t : s.semantics.texts()) CHECK_FALSE(s.semantics.is_removed(t));
            for (std::size_t i = 1; i < s.candidates.size(); ++i) CHECK(s.candidates[i].score <= s.candidates[i - 1].score);
        }
    }
}

TEST_CASE("class names are masked out of external descriptions") {
    const ClassRoster roster({"Black-footed Albatross", "Albatross", "Tern"});
    const ClassMasking mask{{"Black-footed Albatross", "the bird"}, {"Albatross", "the seabird"}};
    CHECK(mask_class_names("The BLACK-FOOTED albatross nests on islands.", roster, mask) ==
          "The the bird nests on islands.");
    CHECK(mask_class_names("An Albatross glides.", roster, mask) == "An the seabird glides.");
    CHECK(mask_class_names("No names here.", roster, mask) == "No names here.");
    CHECK_THROWS_AS(mask_class_names("x", roster, {{"Owl", "the bird"}}), ConfigError);
    CHECK_THROWS_AS(mask_class_names("x", roster, {{"Tern", "a tern-like bird"}}), ConfigError);

    Rng rng(12);
    const std::vector<std::string> pieces{"black-footed", "Albatross", "ALBATROSS", "tern", "Tern", " ", "the", "sea"};
    const ClassMasking all{{"Black-footed Albatross", "the bird"}, {"Albatross", "the seabird"}, {"Tern", "it"}};
    for (int t = 0; t < 500; ++t) {
        std::string d;
        for (int k = 0; k < 8; ++k) d += pieces[rng.below(pieces.size())] + (rng.bernoulli(0.5) ? " " : "");
        const auto masked = mask_class_names(d, roster, all);
        for (const auto& name : roster.names()) CHECK(text::count_phrase_icase(masked, name) == 0);
    }
}

TEST_CASE("external descriptions are injected through the template") {
    const auto p = small_pipeline();
    StubBackend stub;
    auto s = p.start_session("s", on({2}));
    predict(p, s, stub);
    apply_external_description(p, s, "Beta has wide d stripes.", {{"Beta", "the class"}}, stub);
    CHECK(s.history[1].content ==
          "In addition, we also know that the class has wide d stripes. Answer again by considering the previous "
          "message and the new information.");
    CHECK(s.intervention_log.back().kind == InterventionKind::external_description);
    apply_external_description(p, s, "small and quick", {}, stub);
    CHECK(s.history[3].content ==
          "In addition, we also know that small and quick. Answer again by considering the previous message and "
          "the new information.");
}

TEST_CASE("assistant decisions parse and render") {
    const auto d = parse_assistant_decision("Sure. <action: Augment> <concept:  red   wing >");
    REQUIRE(d);
    CHECK(d->move == AssistantMove::augment);
    CHECK(d->concept_text == "red wing");
    CHECK(render_assistant_decision(*d) == "<action: augment> <concept: red wing>");
    CHECK_FALSE(parse_assistant_decision("<action: paint> <concept: red wing>"));
    CHECK_FALSE(parse_assistant_decision("<action: remove>"));
    CHECK_FALSE(parse_assistant_decision("<action: remove> <concept: >"));
}

TEST_CASE("the scripted assistant augments, then removes, then emphasizes") {
    AssistantBrief b;
    b.gt_prior_concepts = {"a", "b"};
    b.top_pool = {{"x", Provenance::decoded, 0.9}, {"a", Provenance::decoded, 0.8}, {"b", Provenance::decoded, 0.7}};
    b.current_semantics.add({"a", Provenance::decoded, 0.8});
    b.current_semantics.add({"x", Provenance::decoded, 0.9});
    auto d = ScriptedAssistant::decide(b);
    CHECK(d.move == AssistantMove::augment);
    CHECK(d.concept_text == "b");

    b.current_semantics.add({"b", Provenance::user_added, std::nullopt});
    d = ScriptedAssistant::decide(b);
    CHECK(d.move == AssistantMove::remove);
    CHECK(d.concept_text == "x");

    b.current_semantics.remove("x");
    d = ScriptedAssistant::decide(b);
    CHECK(d.move == AssistantMove::emphasize);
    CHECK(d.concept_text == "a");
}

TEST_CASE("auto-intervention edge cases") {
    const auto p = small_pipeline();
    StubBackend stub;
    ScriptedAssistant assistant;

    SUBCASE("budget 0 leaves the prediction alone") {
        auto s = p.start_session("s", on({2}));
        AutoInterventionConfig cfg;
        cfg.budget = 0;
        const auto r = run_auto_intervention(p, s, stub, assistant, "Beta", cfg);
        CHECK(r.steps.empty());
        CHECK(r.initial_prediction == std::optional<std::string>("Alpha"));
        CHECK_FALSE(r.final_correct());
    }
    SUBCASE("an initially correct prediction exits at step 0") {
        auto s = p.start_session("s", on({2}));
        const auto r = run_auto_intervention(p, s, stub, assistant, "Alpha");
        CHECK(r.initial_correct);
        CHECK(r.steps.empty());
        CHECK(r.final_correct());
    }
    SUBCASE("the scripted assistant reaches the ground truth") {
        auto s = p.start_session("s", on({0, 2}));
        const auto r = run_auto_intervention(p, s, stub, assistant, "Beta");
        CHECK_FALSE(r.initial_correct);
        CHECK(r.final_correct());
        CHECK(r.steps.size() <= 5);
        REQUIRE_FALSE(r.steps.empty());
        CHECK(r.steps[0].action->move == AssistantMove::augment);
        CHECK(r.steps[0].action->concept_text == "d");
    }
    SUBCASE("malformed or invalid actions are skipped but use up the budget") {
        auto s = p.start_session("s", on({2}));
        FixedBackend junk("I would rather not.");
        AutoInterventionConfig cfg;
        cfg.budget = 3;
        auto r = run_auto_intervention(p, s, stub, junk, "Beta", cfg);
        REQUIRE(r.steps.size() == 3);
        for (const auto& st : r.steps) {
            CHECK(st.skipped);
            CHECK_FALSE(st.correct);
            CHECK(st.note == "malformed assistant action");
        }
        CHECK(s.history.size() == 1);

        FixedBackend outsider("<action: augment> <concept: b>");
        r = run_auto_intervention(p, s, stub, outsider, "Beta", cfg);
        CHECK(r.steps.size() == 3);
        CHECK(r.steps[0].note == "augment concept is not in the ground-truth class prior");

        FixedBackend off_pool("<action: remove> <concept: shiny beak>");
        r = run_auto_intervention(p, s, stub, off_pool, "Beta", cfg);
        CHECK(r.steps[0].note == "concept is not in the predicted concept pool");
    }
    SUBCASE("emphasize becomes a guidance turn") {
        auto s = p.start_session("s", on({2}));
        FixedBackend emph("<action: emphasize> <concept: c>");
        AutoInterventionConfig cfg;
        cfg.budget = 1;
        const auto r = run_auto_intervention(p, s, stub, emph, "Beta", cfg);
        REQUIRE(r.steps.size() == 1);
        CHECK_FALSE(r.steps[0].skipped);
        CHECK(s.history[1].content == "Focus on the concept \"c\" when choosing the answer.");
    }
    CHECK_THROWS_AS(
        [&] {
            auto s = p.start_session("s", on({2}));
            run_auto_intervention(p, s, stub, assistant, "Gamma");
        }(),
        DatasetError);
}

TEST_CASE("auto-intervention trajectories never exceed the budget and touch one concept per step") {
    const auto wp = world_pipeline();
    StubBackend stub;
    ScriptedAssistant assistant;
    for (int budget : {1, 2, 5}) {
        AutoInterventionConfig cfg;
        cfg.budget = budget;
        for (const auto& rec : wp.world.split(Split::test)) {
            auto s = wp.pipeline.start_session(rec.example_id, rec.activations);
            const auto r = run_auto_intervention(wp.pipeline, s, stub, assistant, rec.label, cfg);
            CHECK(r.steps.size() <= static_cast<std::size_t>(budget));
            std::size_t edits = 0;
            for (const auto& st : r.steps) edits += st.skipped ? 0 : 1;
            CHECK(s.intervention_log.size() == edits);
        }
    }
    std::vector<AutoResult> results;
    const auto curve = auto_intervention_curve(wp.pipeline, wp.world.split(Split::test), stub, assistant,
                                               AutoInterventionConfig{}, &results);
    REQUIRE(curve.size() == 6);
    for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].accuracy >= curve[i - 1].accuracy);
    CHECK(curve.back().accuracy == 1.0);
}

TEST_CASE("ratio units and counts") {
    CHECK(units_for_ratio(0.0, 10) == 0);
    CHECK(units_for_ratio(0.3, 10) == 3);
    CHECK(units_for_ratio(0.25, 5) == 2);
    CHECK(units_for_ratio(1.0, 7) == 7);
    CHECK_THROWS_AS(units_for_ratio(1.5, 7), ConfigError);
    const ConceptBank grouped("g", {{0, "wing: red", "wing"}, {1, "tail: long", "tail"}, {2, "wing: blue", "wing"}});
    CHECK(intervention_units(grouped, true) == std::vector<std::vector<std::size_t>>{{0, 2}, {1}});
    CHECK(intervention_units(grouped, false).size() == 3);
    CHECK_THROWS_AS(intervention_units(ConceptBank::from_texts("u", {"a"}), true), ConfigError);
}

TEST_CASE("ratio curves start at the baseline and are non-decreasing") {
    const auto wp = world_pipeline();
    StubBackend stub;
    const auto test = wp.world.split(Split::test);
    std::size_t baseline = 0;
    for (const auto& r : test) {
        auto s = wp.pipeline.start_session(r.example_id, r.activations);
        baseline += predict(wp.pipeline, s, stub).predicted_class == r.label;
    }
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        RatioCurveConfig cfg;
        cfg.seed = seed;
        const auto curve = ratio_intervention_curve(wp.pipeline, test, stub, cfg);
        REQUIRE(curve.size() == 5);
        CHECK(curve[0].accuracy == static_cast<double>(baseline) / static_cast<double>(test.size()));
        for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].accuracy >= curve[i - 1].accuracy);
        CHECK(curve.back().accuracy == 1.0);
    }
    auto no_gt = test;
    no_gt[0].gt_concepts.reset();
    CHECK_THROWS_AS(ratio_intervention_curve(wp.pipeline, no_gt, stub, RatioCurveConfig{}), DatasetError);
}

TEST_CASE("curve CSVs use four decimals for ratios and integers for counts") {
    CHECK(curve_to_csv({{0.0, 0.7978}, {0.25, 0.85}}, CurveAxis::ratio) == "ratio,accuracy\n0.0000,0.7978\n0.2500,0.8500\n");
    CHECK(curve_to_csv({{0, 0.5}, {1, 0.75}}, CurveAxis::steps) == "steps,accuracy\n0,0.5000\n1,0.7500\n");
    CHECK(curve_to_csv({{12, 0.5}}, CurveAxis::concepts) == "concepts,accuracy\n12,0.5000\n");
}

TEST_CASE("incomplete-concept intervention") {
    testing::WorldSpec spec;
    spec.flip_p = 0.0;
    const auto world = testing::make_world(spec);
    const std::size_t m = 12;
    const auto family = train_probe_family(world.split(Split::train), world.roster, {m, world.bank.size()},
                                           testing::test_train_config(0));
    REQUIRE(family.size() == 2);
    CHECK(family.at(m).n_concepts() == m);
    PipelineConfig cfg;
    cfg.n_candidates = world.roster.size();
    const Pipeline subset(world.bank.prefix(m), family.at(m), world.priors,
                          truncate_records(world.split(Split::val), m), cfg);
    const Pipeline full(world.bank, family.at(world.bank.size()), world.priors, world.split(Split::val), cfg);
    StubBackend stub;
    const auto test = world.split(Split::test);

    std::vector<std::size_t> rest;
    for (std::size_t i = m; i < world.bank.size(); ++i) rest.push_back(i);
    const std::vector<std::vector<std::size_t>> halves{{rest.begin(), rest.begin() + 6}, {rest.begin() + 6, rest.end()}};

    const auto zero = incomplete_concept_intervention(subset, world.bank, test, {}, stub);
    REQUIRE(zero.size() == 1);
    CHECK(zero[0].x == static_cast<double>(m));
    std::size_t base = 0;
    for (const auto& r : test) {
        std::vector<double> acts(r.activations.begin(), r.activations.begin() + m);
        auto s = subset.start_session(r.example_id, acts);
        base += predict(subset, s, stub).predicted_class == r.label;
    }
    CHECK(zero[0].accuracy == static_cast<double>(base) / static_cast<double>(test.size()));

    const auto curve = incomplete_concept_intervention(subset, world.bank, test, halves, stub);
    REQUIRE(curve.size() == 3);
    CHECK(curve[1].x == static_cast<double>(m + 6));
    CHECK(curve[2].x == static_cast<double>(world.bank.size()));
    std::size_t full_hits = 0;
    for (const auto& r : test) {
        auto s = full.start_session(r.example_id, r.activations);
        full_hits += predict(full, s, stub).predicted_class == r.label;
    }
    CHECK(curve[2].accuracy == static_cast<double>(full_hits) / static_cast<double>(test.size()));

    // A batch none of the records has leaves accuracy unchanged: use records of
    // class 0, whose concepts all sit inside the first six ids.
    std::vector<ActivationRecord> class0;
    for (const auto& r : test) {
        if (r.label == world.roster[0]) class0.push_back(r);
    }
    const auto flat = incomplete_concept_intervention(subset, world.bank, class0, {{20, 21, 22}}, stub);
    CHECK(flat[1].accuracy == flat[0].accuracy);

    CHECK_THROWS_AS(incomplete_concept_intervention(subset, world.bank, test, {{3}}, stub), ConfigError);
    CHECK_THROWS_AS(incomplete_concept_intervention(subset, world.bank, test, {{99}}, stub), DatasetError);
    std::vector<std::string> other_texts;
    for (std::size_t i = 0; i < world.bank.size(); ++i) other_texts.push_back("other " + std::to_string(i));
    const auto other = ConceptBank::from_texts("o", other_texts);
    CHECK_THROWS_AS(incomplete_concept_intervention(subset, other, test, {}, stub), ConfigError);
}
