#include "chatcbm/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "chatcbm/error.hpp"
#include "chatcbm/text.hpp"

namespace chatcbm::io {
namespace {

using nlohmann::json;

std::string where(const std::string& source, std::size_t line) { return source + ":" + std::to_string(line); }

template <class F>
void for_each_json_line(std::istream& in, const std::string& source, F&& f) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DatasetError(where(source, line_no) + ": invalid JSON: " + e.what());
        }
        if (!obj.is_object()) throw DatasetError(where(source, line_no) + ": expected a JSON object");
        try {
            f(obj, line_no);
        } catch (const json::exception& e) {
            throw DatasetError(where(source, line_no) + ": " + e.what());
        }
    }
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open '" + path.string() + "'");
    return in;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot write '" + path.string() + "'");
    out << contents;
}

ConceptBank load_bank(const std::filesystem::path& path) {
    const auto contents = read_file(path);
    const auto first = contents.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && contents[first] == '{') {
        json doc;
        try {
            doc = json::parse(contents);
        } catch (const json::parse_error& e) {
            throw DatasetError(path.string() + ": invalid JSON: " + e.what());
        }
        std::vector<Concept> concepts;
        try {
            for (const auto& item : doc.at("concepts")) {
                Concept c;
                c.id = concepts.size();
                if (item.is_string()) {
                    c.text = item.get<std::string>();
                } else {
                    c.text = item.at("text").get<std::string>();
                    if (item.contains("group") && !item["group"].is_null()) c.group = item["group"].get<std::string>();
                }
                concepts.push_back(std::move(c));
            }
        } catch (const json::exception& e) {
            throw DatasetError(path.string() + ": " + e.what());
        }
        return ConceptBank(doc.value("name", path.stem().string()), std::move(concepts));
    }
    std::vector<std::string> texts;
    std::istringstream in(contents);
    std::string line;
    while (std::getline(in, line)) {
        auto t = text::trim(line);
        if (!t.empty()) texts.push_back(std::move(t));
    }
    return ConceptBank::from_texts(path.stem().string(), texts);
}

void save_bank(const ConceptBank& bank, const std::filesystem::path& path) {
    json concepts = json::array();
    for (const auto& c : bank.concepts()) {
        if (c.group) {
            concepts.push_back({{"text", c.text}, {"group", *c.group}});
        } else {
            concepts.push_back(c.text);
        }
    }
    write_file(path, json{{"name", bank.name()}, {"concepts", concepts}}.dump(2) + "\n");
}

std::vector<ActivationRecord> read_activation_records(std::istream& in, const std::string& source) {
    std::vector<ActivationRecord> out;
    for_each_json_line(in, source, [&](const json& obj, std::size_t) {
        ActivationRecord r;
        r.example_id = obj.at("example_id").get<std::string>();
        r.split = parse_split(obj.at("split").get<std::string>());
        r.activations = obj.at("activations").get<std::vector<double>>();
        r.label = obj.at("label").get<std::string>();
        if (obj.contains("gt_concepts") && !obj["gt_concepts"].is_null()) {
            std::vector<std::uint8_t> bits;
            for (const auto& b : obj["gt_concepts"]) {
                const int v = b.is_boolean() ? static_cast<int>(b.get<bool>()) : b.get<int>();
                if (v != 0 && v != 1) throw DatasetError("gt_concepts entries must be 0 or 1");
                bits.push_back(static_cast<std::uint8_t>(v));
            }
            r.gt_concepts = std::move(bits);
        }
        out.push_back(std::move(r));
    });
    return out;
}

std::vector<ActivationRecord> load_activation_records(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_activation_records(in, path.string());
}

void write_activation_records(std::ostream& out, const std::vector<ActivationRecord>& records) {
    for (const auto& r : records) {
        json obj{{"example_id", r.example_id},
                 {"split", std::string(to_string(r.split))},
                 {"activations", r.activations},
                 {"label", r.label}};
        if (r.gt_concepts) {
            std::vector<int> bits(r.gt_concepts->begin(), r.gt_concepts->end());
            obj["gt_concepts"] = bits;
        }
        out << obj.dump() << '\n';
    }
}

void save_activation_records(const std::vector<ActivationRecord>& records, const std::filesystem::path& path) {
    std::ostringstream ss;
    write_activation_records(ss, records);
    write_file(path, ss.str());
}

EmbeddingTable read_embeddings(std::istream& in, EmbeddingKind kind, const std::string& source) {
    std::optional<EmbeddingTable> table;
    for_each_json_line(in, source, [&](const json& obj, std::size_t line_no) {
        auto vec = obj.at("vector").get<std::vector<double>>();
        if (!table) table.emplace(vec.size(), kind);
        try {
            table->insert(obj.at("id").get<std::string>(), std::move(vec));
        } catch (const DatasetError& e) {
            throw DatasetError(where(source, line_no) + ": " + e.what());
        }
    });
    if (!table) throw DatasetError(source + ": no embeddings");
    return std::move(*table);
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, EmbeddingKind kind) {
    auto in = open_in(path);
    return read_embeddings(in, kind, path.string());
}

void fill_activations_from_embeddings(std::vector<ActivationRecord>& records, const EmbeddingTable& images,
                                      const AlignedConceptEmbeddings& concepts) {
    for (auto& r : records) {
        if (!r.activations.empty()) continue;
        r.activations = cosine_activations(images.at(r.example_id), concepts);
    }
}

ClassConceptTable read_class_concept_table(std::istream& in, std::size_t n_concepts) {
    ClassConceptTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty()) continue;
        auto fields = text::split(line, ',');
        if (line_no == 1 && text::to_lower(text::trim(fields[0])) == "class") continue;
        if (fields.size() != n_concepts + 1) {
            throw DatasetError("class table line " + std::to_string(line_no) + ": expected " +
                               std::to_string(n_concepts + 1) + " fields, got " + std::to_string(fields.size()));
        }
        std::vector<std::uint8_t> bits;
        for (std::size_t i = 1; i < fields.size(); ++i) {
            const auto f = text::trim(fields[i]);
            if (f != "0" && f != "1") {
                throw DatasetError("class table line " + std::to_string(line_no) + ": field " + std::to_string(i) +
                                   " is not 0/1");
            }
            bits.push_back(f == "1" ? 1 : 0);
        }
        auto name = text::trim(fields[0]);
        if (!table.emplace(name, std::move(bits)).second) {
            throw DatasetError("class table: duplicate class '" + name + "'");
        }
    }
    return table;
}

ClassConceptTable load_class_concept_table(const std::filesystem::path& path, std::size_t n_concepts) {
    auto in = open_in(path);
    return read_class_concept_table(in, n_concepts);
}

}  // namespace chatcbm::io
