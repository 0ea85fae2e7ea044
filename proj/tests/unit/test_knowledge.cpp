#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "chatcbm/error.hpp"
#include "chatcbm/knowledge.hpp"
#include "chatcbm/random.hpp"
#include "support/synthetic.hpp"

using namespace chatcbm;

namespace {

ActivationRecord train_rec(const std::string& id, const std::string& label, std::vector<std::uint8_t> gt) {
    ActivationRecord r{id, Split::train, {}, label, gt};
    for (auto b : gt) r.activations.push_back(b ? 0.9 : 0.1);
    return r;
}

ActivationRecord val_rec(const std::string& id, const std::string& label, std::vector<double> acts) {
    return {id, Split::val, std::move(acts), label, std::nullopt};
}

}  // namespace

TEST_CASE("avg_concept includes strictly more-than-half frequencies") {
    const auto bank = ConceptBank::from_texts("b", {"all", "half", "three quarters", "never"});
    const ClassRoster roster({"Tern"});
    std::vector<ActivationRecord> rs{train_rec("1", "Tern", {1, 1, 1, 0}), train_rec("2", "Tern", {1, 1, 1, 0}),
                                     train_rec("3", "Tern", {1, 0, 1, 0}), train_rec("4", "Tern", {1, 0, 0, 0})};
    const auto t = build_prior_avg_concept(rs, bank, roster);
    CHECK(t.at("Tern").concepts == std::vector<std::string>{"all", "three quarters"});
    CHECK(t.at("Tern").description == "Tern usually has: all, three quarters");
    CHECK(t.at("Tern").source == PriorSource::avg_concept);

    CHECK_THROWS_AS(build_prior_avg_concept(rs, bank, ClassRoster({"Tern", "Wren"})), DatasetError);
}

TEST_CASE("priors do not depend on record order") {
    const auto world = testing::make_world();
    auto rs = world.records;
    const auto a = build_prior_avg_concept(rs, world.bank, world.roster);
    const auto g = build_prior_top_frequency(rs, world.bank, world.roster);
    Rng rng(3);
    rng.shuffle(rs);
    CHECK(build_prior_avg_concept(rs, world.bank, world.roster).to_json() == a.to_json());
    CHECK(build_prior_top_frequency(rs, world.bank, world.roster).to_json() == g.to_json());
}

TEST_CASE("group_frequency reports the modal concept with its qualifier") {
    const ConceptBank bank("g", {{0, "wing: red", "wing"},
                                 {1, "wing: blue", "wing"},
                                 {2, "tail: long", "tail"},
                                 {3, "tail: short", "tail"},
                                 {4, "tail: forked", "tail"}});
    const ClassRoster roster({"Tern"});
    std::vector<ActivationRecord> rs;
    // wing: red 6/10, blue 4/10. tail: long 4/10, short 3/10, forked 3/10.
    for (int i = 0; i < 10; ++i) {
        std::vector<std::uint8_t> gt(5, 0);
        gt[i < 6 ? 0 : 1] = 1;
        gt[i < 4 ? 2 : (i < 7 ? 3 : 4)] = 1;
        rs.push_back(train_rec(std::to_string(i), "Tern", gt));
    }
    const auto t = build_prior_group_frequency(rs, bank, roster);
    CHECK(t.at("Tern").description == "for Tern: wing is mostly red, tail is long (40%)");
    CHECK(t.at("Tern").concepts == std::vector<std::string>{"wing: red", "tail: long"});

    const auto ungrouped = ConceptBank::from_texts("u", {"a"});
    CHECK_THROWS_AS(build_prior_group_frequency(rs, ungrouped, roster), DatasetError);
}

TEST_CASE("group summaries render both qualifiers") {
    CHECK(render_group_summary("Owl", {{"wing", "red", 1.0}, {"tail", "long", 0.4}}) ==
          "for Owl: wing is mostly red, tail is long (40%)");
    CHECK(render_group_summary("Owl", {{"wing", "red", 0.5}}) == "for Owl: wing is red (50%)");
}

TEST_CASE("top_frequency ranks by count then concept id") {
    const auto bank = ConceptBank::from_texts("b", {"c0", "c1", "c2", "c3"});
    const ClassRoster roster({"Tern"});
    TopFrequencyOptions opts;
    opts.membership_n = 1;
    opts.top_k = 2;
    // Top-1 concept per record: c2 x3, c1 x1, c3 x1 -> c2 first, then c1 (tie with c3, lower id).
    std::vector<ActivationRecord> rs{val_rec("1", "Tern", {0.1, 0.2, 0.9, 0.3}), val_rec("2", "Tern", {0.1, 0.2, 0.9, 0.3}),
                                     val_rec("3", "Tern", {0.1, 0.2, 0.9, 0.3}), val_rec("4", "Tern", {0.1, 0.2, 0.3, 0.9}),
                                     val_rec("5", "Tern", {0.1, 0.9, 0.3, 0.2})};
    const auto ranked = rank_concept_frequency(rs, bank, opts);
    REQUIRE(ranked.size() == 3);
    CHECK(ranked[0] == ConceptCount{2, 3});
    CHECK(ranked[1] == ConceptCount{1, 1});
    CHECK(ranked[2] == ConceptCount{3, 1});
    const auto t = build_prior_top_frequency(rs, bank, roster, opts);
    // Rendered in concept order.
    CHECK(t.at("Tern").concepts == std::vector<std::string>{"c1", "c2"});
    CHECK(t.at("Tern").description == "Tern is usually associated with concepts including: c1, c2");
}

TEST_CASE("top_frequency with one record per class is that record's top set") {
    const auto bank = ConceptBank::from_texts("b", {"c0", "c1", "c2", "c3", "c4"});
    TopFrequencyOptions opts;
    opts.membership_n = 3;
    opts.top_k = 10;
    std::vector<ActivationRecord> rs{val_rec("1", "Tern", {0.5, 0.1, 0.9, 0.7, 0.2})};
    const auto t = build_prior_top_frequency(rs, bank, ClassRoster({"Tern"}), opts);
    CHECK(t.at("Tern").concepts == std::vector<std::string>{"c0", "c2", "c3"});

    opts.activation_threshold = 0.6;
    CHECK(build_prior_top_frequency(rs, bank, ClassRoster({"Tern"}), opts).at("Tern").concepts ==
          std::vector<std::string>{"c2", "c3"});
}

TEST_CASE("class-level priors pass the table through") {
    const auto bank = ConceptBank::from_texts("b", {"furry", "big", "striped"});
    const io::ClassConceptTable table{{"Bear", {1, 1, 0}}, {"Ghost", {0, 0, 0}}};
    const auto t = build_prior_class_level(table, bank, ClassRoster({"Bear", "Ghost"}));
    CHECK(t.at("Bear").description == "Bear is usually associated with concepts including: furry, big");
    CHECK(t.at("Ghost").description == "Ghost is usually associated with concepts including:");
    CHECK(t.at("Ghost").concepts.empty());
    CHECK_THROWS_AS(build_prior_class_level(table, bank, ClassRoster({"Bear", "Ghost", "Cat"})), DatasetError);
}

TEST_CASE("prior tables round-trip through JSON and restrict to candidates") {
    const auto world = testing::make_world();
    const auto& t = world.priors;
    const auto back = PriorTable::from_json(t.to_json());
    CHECK(back.to_json() == t.to_json());
    CHECK(back.at(world.roster[0]).concepts == t.at(world.roster[0]).concepts);

    const auto plain = PriorTable::from_json(R"({"Tern": "Tern usually has: white wing"})");
    CHECK(plain.at("Tern").description == "Tern usually has: white wing");
    CHECK(plain.at("Tern").concepts.empty());

    const CandidateSet cands({{world.roster[1], 0.6}, {world.roster[0], 0.4}});
    const auto r = t.restricted_to(cands);
    CHECK(r.size() == 2);
    CHECK_THROWS_AS(plain.restricted_to(cands), DatasetError);
    CHECK_THROWS_AS(plain.require_complete(world.roster), DatasetError);
    CHECK_THROWS_AS(PriorTable::from_json("[1, 2]"), DatasetError);
}

TEST_CASE("demonstrations: k = 0 is instruction only") {
    const auto world = testing::make_world();
    DemonstrationOptions o;
    o.k = 0;
    const CandidateSet cands({{world.roster[0], 0.6}, {world.roster[1], 0.4}});
    const auto d = select_demonstrations(cands, world.records, world.bank, world.roster, o);
    CHECK(d.shots.empty());
    CHECK(d.instruction == kDefaultInstruction);
}

TEST_CASE("demonstrations: N = 2, K = 2 gives four shots grouped by candidate") {
    const auto world = testing::make_world();
    DemonstrationOptions o;
    o.k = 2;
    o.seed = 4;
    const CandidateSet cands({{world.roster[3], 0.6}, {world.roster[1], 0.4}});
    const auto d = select_demonstrations(cands, world.records, world.bank, world.roster, o);
    REQUIRE(d.shots.size() == 4);
    CHECK(d.shots[0].class_name == world.roster[3]);
    CHECK(d.shots[1].class_name == world.roster[3]);
    CHECK(d.shots[2].class_name == world.roster[1]);
    CHECK(d.shots[3].class_name == world.roster[1]);

    const auto again = select_demonstrations(cands, world.records, world.bank, world.roster, o);
    for (std::size_t i = 0; i < 4; ++i) CHECK(again.shots[i].example_id == d.shots[i].example_id);

    // Only val records are ever used.
    std::set<std::string> val_ids;
    for (const auto& r : world.split(Split::val)) val_ids.insert(r.example_id);
    for (const auto& s : d.shots) CHECK(val_ids.count(s.example_id) == 1);

    // A class's draws do not depend on where it sits among the candidates.
    const CandidateSet swapped({{world.roster[1], 0.6}, {world.roster[3], 0.4}});
    const auto s = select_demonstrations(swapped, world.records, world.bank, world.roster, o);
    CHECK(s.shots[0].example_id == d.shots[2].example_id);
    CHECK(s.shots[2].example_id == d.shots[0].example_id);
}

TEST_CASE("demonstrations: different seeds usually differ, short pools warn") {
    const auto world = testing::make_world();
    const CandidateSet cands({{world.roster[0], 0.6}, {world.roster[1], 0.4}});
    DemonstrationOptions o;
    o.k = 3;
    std::set<std::vector<std::string>> seen;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        o.seed = seed;
        std::vector<std::string> ids;
        for (const auto& s : select_demonstrations(cands, world.records, world.bank, world.roster, o).shots) {
            ids.push_back(s.example_id);
        }
        seen.insert(ids);
    }
    CHECK(seen.size() > 1);

    o.k = 50;
    const auto d = select_demonstrations(cands, world.records, world.bank, world.roster, o);
    CHECK(d.shots.size() == 2 * world.spec.val_per_class);
    CHECK(d.warnings.size() == 2);

    o.include_probe_hint = true;
    CHECK_THROWS_AS(select_demonstrations(cands, world.records, world.bank, world.roster, o), ConfigError);
}
