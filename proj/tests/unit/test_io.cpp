#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "chatcbm/dataset_io.hpp"
#include "chatcbm/error.hpp"

using namespace chatcbm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("chatcbm-io-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("bank files load from JSON and plain text") {
    TempDir dir;
    io::write_file(dir.path / "bank.json",
                   R"({"name": "birds", "concepts": ["red wing", {"text": "black crown", "group": "crown"}]})");
    const auto bank = io::load_bank(dir.path / "bank.json");
    CHECK(bank.name() == "birds");
    CHECK(bank.size() == 2);
    CHECK(bank[1].group == std::optional<std::string>("crown"));

    io::write_file(dir.path / "bank.txt", "red wing\n\n  black crown  \n");
    CHECK(io::load_bank(dir.path / "bank.txt").size() == 2);

    io::save_bank(bank, dir.path / "out.json");
    const auto again = io::load_bank(dir.path / "out.json");
    CHECK(again.size() == 2);
    CHECK(again[1].text == "black crown");
    CHECK(again[1].group == bank[1].group);

    CHECK_THROWS_AS(io::load_bank(dir.path / "missing.json"), DatasetError);
}

TEST_CASE("activation records round-trip through JSON Lines") {
    std::vector<ActivationRecord> rs{
        {"e1", Split::val, {0.25, 0.75}, "Tern", std::vector<std::uint8_t>{0, 1}},
        {"e2", Split::test, {0.1, 0.2}, "Wren", std::nullopt},
    };
    std::stringstream buf;
    io::write_activation_records(buf, rs);
    const auto back = io::read_activation_records(buf);
    REQUIRE(back.size() == 2);
    CHECK(back[0].example_id == "e1");
    CHECK(back[0].split == Split::val);
    CHECK(back[0].activations == rs[0].activations);
    CHECK(back[0].gt_concepts == rs[0].gt_concepts);
    CHECK_FALSE(back[1].gt_concepts);
}

TEST_CASE("malformed activation lines name the line") {
    std::stringstream bad(R"({"example_id": "e1", "split": "test", "activations": [0.1], "label": "X"}
{"example_id": "e2", "split": "test", "activations": "oops", "label": "X"}
)");
    try {
        io::read_activation_records(bad, "acts.jsonl");
        FAIL("expected a DatasetError");
    } catch (const DatasetError& e) {
        CHECK(std::string(e.what()).find("acts.jsonl:2") != std::string::npos);
    }
    std::stringstream not_json("{nope\n");
    CHECK_THROWS_AS(io::read_activation_records(not_json), DatasetError);
}

TEST_CASE("embeddings and activation filling") {
    std::stringstream emb(R"({"id": "red wing", "vector": [1, 0]}
{"id": "black crown", "vector": [0, 2]}
)");
    const auto concepts_table = io::read_embeddings(emb, EmbeddingKind::concept_text);
    CHECK(concepts_table.dim() == 2);
    const auto bank = ConceptBank::from_texts("b", {"red wing", "black crown"});
    const AlignedConceptEmbeddings aligned(concepts_table, bank);

    std::stringstream img(R"({"id": "e1", "vector": [1, 1]})");
    const auto images = io::read_embeddings(img, EmbeddingKind::image);
    std::vector<ActivationRecord> rs{{"e1", Split::test, {}, "X", std::nullopt}};
    io::fill_activations_from_embeddings(rs, images, aligned);
    REQUIRE(rs[0].activations.size() == 2);
    CHECK(rs[0].activations[0] == doctest::Approx(1.0 / std::sqrt(2.0)));

    std::vector<ActivationRecord> orphan{{"e9", Split::test, {}, "X", std::nullopt}};
    CHECK_THROWS_AS(io::fill_activations_from_embeddings(orphan, images, aligned), DatasetError);

    std::stringstream ragged(R"({"id": "a", "vector": [1, 0]}
{"id": "b", "vector": [1, 0, 0]}
)");
    CHECK_THROWS_AS(io::read_embeddings(ragged, EmbeddingKind::image), DatasetError);
}

TEST_CASE("class concept tables parse CSV with an optional header") {
    std::stringstream csv("class,c0,c1,c2\nTern,1,0,1\nWren,0,0,0\n");
    const auto t = io::read_class_concept_table(csv, 3);
    CHECK(t.at("Tern") == std::vector<std::uint8_t>{1, 0, 1});
    CHECK(t.at("Wren") == std::vector<std::uint8_t>{0, 0, 0});
    std::stringstream short_row("Tern,1,0\n");
    CHECK_THROWS_AS(io::read_class_concept_table(short_row, 3), DatasetError);
    std::stringstream bad_bit("Tern,1,2,0\n");
    CHECK_THROWS_AS(io::read_class_concept_table(bad_bit, 3), DatasetError);
}
