#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "chatcbm/error.hpp"
#include "chatcbm/eval.hpp"
#include "chatcbm/random.hpp"
#include "support/synthetic.hpp"

using namespace chatcbm;

namespace {

// Fails every `period`-th call.
class FlakyBackend : public ChatBackend {
public:
    explicit FlakyBackend(std::size_t period) : period_(period) {}
    std::string complete(const ChatRequest& r) override {
        if (period_ && ++calls_ % period_ == 0) throw BackendError("upstream down", 4, 503);
        return stub_.complete(r);
    }
    std::string name() const override { return "flaky"; }

private:
    std::size_t period_;
    std::atomic<std::size_t> calls_{0};
    StubBackend stub_;
};

Pipeline clean_pipeline(const testing::World& w) {
    PipelineConfig cfg;
    cfg.n_candidates = 3;
    return Pipeline(w.bank, train_probe(w.split(Split::train), w.roster, testing::test_train_config(0)), w.priors,
                    w.split(Split::val), cfg);
}

}  // namespace

TEST_CASE("aggregate uses the sample standard deviation") {
    const std::vector<double> v{0.80, 0.82, 0.84};
    const auto a = aggregate(v);
    CHECK(a.mean == doctest::Approx(0.82));
    CHECK(a.std == doctest::Approx(0.02));
    const std::vector<double> one{0.5};
    CHECK(aggregate(one).std == 0.0);
    const std::vector<double> same(5, 0.731);
    CHECK(aggregate(same).mean == doctest::Approx(0.731));
    CHECK(aggregate(same).std == doctest::Approx(0.0));
    CHECK_THROWS_AS(aggregate(std::vector<double>{}), ConfigError);
}

TEST_CASE("aggregate matches a two-pass reference and ignores order") {
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> v(2 + rng.below(8));
        for (auto& x : v) x = rng.uniform();
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double ss = 0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const auto a = aggregate(v);
        CHECK(a.mean == doctest::Approx(mean).epsilon(1e-12));
        CHECK(a.std == doctest::Approx(std::sqrt(ss / static_cast<double>(v.size() - 1))).epsilon(1e-12));
        auto shuffled = v;
        std::reverse(shuffled.begin(), shuffled.end());
        std::rotate(shuffled.begin(), shuffled.begin() + 1, shuffled.end());
        const auto b = aggregate(shuffled);
        CHECK(b.mean == doctest::Approx(a.mean).epsilon(1e-12));
        CHECK(b.std == doctest::Approx(a.std).epsilon(1e-12));
    }
}

TEST_CASE("cells render as mean ± std") {
    CHECK(format_cell(0.815, 0.005) == "0.815 ± 0.005");
    CHECK(format_cell(0.8, 0.0) == "0.800 ± 0.000");
    CHECK(format_cell(0.71234, 0.01, 2) == "0.71 ± 0.01");
}

TEST_CASE("a clean synthetic split scores perfectly on every seed") {
    testing::WorldSpec spec;
    spec.flip_p = 0.0;
    const auto w = testing::make_world(spec);
    const auto p = clean_pipeline(w);
    StubBackend stub;
    EvalConfig cfg;
    cfg.seeds = {0, 1, 2};
    const auto test = w.split(Split::test);
    const auto r = evaluate_split(p, test, stub, cfg);
    CHECK_FALSE(r.aborted);
    REQUIRE(r.per_seed.size() == 3);
    CHECK(r.summary.mean == 1.0);
    CHECK(r.summary.std == 0.0);
    CHECK(r.records.size() == 3 * test.size());
    for (const auto& o : r.records) {
        CHECK(o.parse_ok);
        CHECK(o.correct);
    }
}

TEST_CASE("evaluation is reproducible and independent of the worker count") {
    const auto w = testing::make_world();
    const auto p = clean_pipeline(w);
    StubBackend stub;
    EvalConfig cfg;
    cfg.seeds = {3, 5};
    const auto train = w.split(Split::train);
    cfg.probe_reseed = ProbeReseed{train, testing::test_train_config()};
    const auto test = w.split(Split::test);
    const auto a = evaluate_split(p, test, stub, cfg);
    cfg.workers = 4;
    const auto b = evaluate_split(p, test, stub, cfg);
    CHECK(records_to_jsonl(a.records) == records_to_jsonl(b.records));
    CHECK(a.summary.mean == b.summary.mean);
    CHECK(a.summary.std == b.summary.std);
}

TEST_CASE("backend failures count as wrong and abort past the threshold") {
    const auto w = testing::make_world();
    const auto p = clean_pipeline(w);
    const auto test = w.split(Split::test);
    EvalConfig cfg;
    cfg.seeds = {0, 1};

    FlakyBackend always(1);
    const auto dead = evaluate_split(p, test, always, cfg);
    CHECK(dead.aborted);
    CHECK(dead.per_seed.empty());
    CHECK(dead.abort_reason.find("seed 0") != std::string::npos);

    FlakyBackend sometimes(20);
    const auto ok = evaluate_split(p, test, sometimes, cfg);
    CHECK_FALSE(ok.aborted);
    REQUIRE(ok.per_seed.size() == 2);
    CHECK(ok.per_seed[0].backend_failures == test.size() / 20);
    for (const auto& o : ok.records) {
        if (o.error) CHECK_FALSE(o.correct);
    }

    CHECK_THROWS_AS(evaluate_split(p, test, sometimes, EvalConfig{}), ConfigError);
    CHECK_THROWS_AS(evaluate_split(p, {}, sometimes, cfg), DatasetError);
    auto bad = test;
    bad[0].label = "Dodo";
    CHECK_THROWS_AS(evaluate_split(p, bad, sometimes, cfg), DatasetError);
}

TEST_CASE("record logs are JSON lines") {
    std::vector<RecordOutcome> recs{{1, "e1", "Tern", std::string("Tern"), true, true, std::nullopt},
                                    {1, "e2", "Tern", std::nullopt, false, false, std::string("timeout")}};
    const auto text = records_to_jsonl(recs);
    const auto nl = text.find('\n');
    const auto first = nlohmann::json::parse(text.substr(0, nl));
    const auto second = nlohmann::json::parse(text.substr(nl + 1));
    CHECK(first["predicted"] == "Tern");
    CHECK(first["error"].is_null());
    CHECK(second["predicted"].is_null());
    CHECK(second["error"] == "timeout");
    CHECK(second["seed"] == 1);
}

TEST_CASE("parallel_for visits every index once and forwards errors") {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) CHECK(h.load() == 1);
    parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); });
    CHECK_THROWS_AS(parallel_for(50, 3,
                                 [](std::size_t i) {
                                     if (i == 17) throw DatasetError("boom");
                                 }),
                    DatasetError);
}

TEST_CASE("tables render every layout cell and round-trip through CSV") {
    const TableLayout layout{"accuracy", {"CUB", "AwA2"}, {"CBM", "Chat-CBM"}};
    const std::vector<TableCell> cells{{"CUB", "CBM", 0.7312, 0.0041},
                                       {"CUB", "Chat-CBM", 0.8150, 0.005},
                                       {"AwA2", "CBM", 0.9, 0.0},
                                       {"AwA2", "Chat-CBM", 1.0 / 3.0, 0.1 / 7.0},
                                       {"PBC", "CBM", 0.5, 0.5}};
    const auto t = emit_table(cells, layout);
    CHECK(t.text.find("0.815 ± 0.005") != std::string::npos);
    CHECK(t.text.find("0.900 ± 0.000") != std::string::npos);
    CHECK(t.text.find("PBC") == std::string::npos);
    CHECK(t.text.rfind("accuracy", 0) == 0);

    const auto parsed = parse_table_csv(t.csv);
    REQUIRE(parsed.size() == 4);
    CHECK(parsed[0] == cells[0]);
    CHECK(parsed[3] == cells[3]);

    auto missing = cells;
    missing.erase(missing.begin() + 2);
    CHECK_THROWS_AS(emit_table(missing, layout), DatasetError);

    const TableLayout quoted{"t", {"a,b"}, {"say \"hi\""}};
    const auto q = emit_table({{"a,b", "say \"hi\"", 0.25, 0.5}}, quoted);
    CHECK(parse_table_csv(q.csv) == std::vector<TableCell>{{"a,b", "say \"hi\"", 0.25, 0.5}});

    CHECK_THROWS_AS(parse_table_csv("r,c,m,s\n"), DatasetError);
    CHECK_THROWS_AS(parse_table_csv("row,column,mean,std\nx,y,abc,0\n"), DatasetError);
    CHECK_THROWS_AS(parse_table_csv("row,column,mean,std\nx,y,0.5\n"), DatasetError);
}
