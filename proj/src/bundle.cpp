#include "ncd/bundle.hpp"
#include "ncd/error.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace ncd {

using nlohmann::json;

std::string modality_name(Modality m) {
    return m == Modality::image ? "image" : "text";
}

Modality modality_from_name(const std::string& s) {
    if (s == "image") return Modality::image;
    if (s == "text") return Modality::text;
    throw InputError("unknown modality '" + s + "'");
}

std::vector<std::size_t> row_to_record(const EmbeddingBundle& b) {
    std::vector<std::size_t> idx(b.count, b.count);
    for (std::size_t r = 0; r < b.records.size(); ++r) {
        std::size_t row = b.records[r].row;
        if (row >= b.count)
            throw InputError("record '" + b.records[r].id + "' row " +
                             std::to_string(row) + " out of range (count " +
                             std::to_string(b.count) + ")");
        if (idx[row] != b.count)
            throw InputError("duplicate record row " + std::to_string(row));
        idx[row] = r;
    }
    for (std::size_t row = 0; row < b.count; ++row)
        if (idx[row] == b.count)
            throw InputError("no record for row " + std::to_string(row));
    return idx;
}

double l2_norm(std::span<const float> v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(s);
}

std::vector<float> l2_normalize(std::span<const float> v) {
    double n = l2_norm(v);
    if (n == 0.0) throw InputError("cannot normalize zero vector");
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = static_cast<float>(static_cast<double>(v[i]) / n);
    return out;
}

namespace {

json read_json_file(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw InputError("cannot open " + p.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw InputError("failed to parse " + p.string() + ": " + e.what());
    }
    return j;
}

std::optional<std::string> opt_string(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
}

} // namespace

EmbeddingBundle load_bundle(const std::filesystem::path& dir) {
    json manifest = read_json_file(dir / "manifest.json");
    EmbeddingBundle b;
    try {
        if (manifest.at("schema_version").get<int>() != 1)
            throw InputError("unsupported schema_version in " + dir.string());
        if (manifest.at("dtype").get<std::string>() != "f32le")
            throw InputError("unsupported dtype in " + dir.string());
        long dim = manifest.at("dim").get<long>();
        long count = manifest.at("count").get<long>();
        if (dim <= 0) throw InputError("manifest dim must be positive");
        if (count < 0) throw InputError("manifest count must be non-negative");
        b.dim = static_cast<std::size_t>(dim);
        b.count = static_cast<std::size_t>(count);
        b.normalized = manifest.at("normalized").get<bool>();
    } catch (const json::exception& e) {
        throw InputError("bad manifest " + (dir / "manifest.json").string() +
                         ": " + e.what());
    }

    auto bin_path = dir / "embeddings.bin";
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw InputError("cannot open " + bin_path.string());
    bin.seekg(0, std::ios::end);
    auto bytes = static_cast<std::size_t>(bin.tellg());
    bin.seekg(0);
    std::size_t expected = b.count * b.dim * sizeof(float);
    if (bytes != expected)
        throw InputError("matrix size mismatch in " + bin_path.string() +
                         ": expected " + std::to_string(expected) +
                         " bytes, found " + std::to_string(bytes));
    b.data.resize(b.count * b.dim);
    bin.read(reinterpret_cast<char*>(b.data.data()),
             static_cast<std::streamsize>(bytes));
    if (!bin && bytes > 0) throw InputError("short read from " + bin_path.string());

    auto rec_path = dir / "records.jsonl";
    std::ifstream recs(rec_path);
    if (!recs) throw InputError("cannot open " + rec_path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(recs, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
            SampleRecord r;
            r.id = j.at("id").get<std::string>();
            long row = j.at("row").get<long>();
            if (row < 0) throw InputError("negative row");
            r.row = static_cast<std::size_t>(row);
            r.modality = modality_from_name(j.at("modality").get<std::string>());
            r.label = opt_string(j, "label");
            r.class_truth = opt_string(j, "class_truth");
            b.records.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw InputError("bad record at " + rec_path.string() + ":" +
                             std::to_string(lineno) + ": " + e.what());
        }
    }

    auto violations = validate_bundle(b);
    if (!violations.empty())
        throw InputError("invalid bundle " + dir.string() + ": " + violations.front());
    return b;
}

void write_bundle(const EmbeddingBundle& b, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw InputError("cannot create directory " + dir.string() + ": " + ec.message());

    json manifest = {{"schema_version", 1},
                     {"dim", b.dim},
                     {"count", b.count},
                     {"dtype", "f32le"},
                     {"normalized", b.normalized}};
    {
        std::ofstream f(dir / "manifest.json");
        if (!f) throw InputError("cannot write " + (dir / "manifest.json").string());
        f << manifest.dump(2) << "\n";
    }
    {
        std::ofstream f(dir / "embeddings.bin", std::ios::binary);
        if (!f) throw InputError("cannot write " + (dir / "embeddings.bin").string());
        f.write(reinterpret_cast<const char*>(b.data.data()),
                static_cast<std::streamsize>(b.data.size() * sizeof(float)));
        if (!f) throw InputError("write failed for " + (dir / "embeddings.bin").string());
    }
    {
        std::ofstream f(dir / "records.jsonl");
        if (!f) throw InputError("cannot write " + (dir / "records.jsonl").string());
        for (const auto& r : b.records) {
            json j = {{"id", r.id},
                      {"row", r.row},
                      {"modality", modality_name(r.modality)},
                      {"label", r.label ? json(*r.label) : json(nullptr)},
                      {"class_truth", r.class_truth ? json(*r.class_truth) : json(nullptr)}};
            f << j.dump() << "\n";
        }
        if (!f) throw InputError("write failed for " + (dir / "records.jsonl").string());
    }
}

std::vector<std::string> validate_bundle(const EmbeddingBundle& b) {
    std::vector<std::string> out;
    if (b.dim == 0) out.push_back("dim must be positive");
    if (b.data.size() != b.count * b.dim)
        out.push_back("data size " + std::to_string(b.data.size()) +
                      " does not match count*dim");

    for (std::size_t i = 0; i < b.count && b.data.size() == b.count * b.dim; ++i) {
        for (std::size_t j = 0; j < b.dim; ++j) {
            if (!std::isfinite(b.data[i * b.dim + j])) {
                out.push_back("non-finite value at row " + std::to_string(i));
                break;
            }
        }
    }

    if (b.records.size() != b.count)
        out.push_back("records length " + std::to_string(b.records.size()) +
                      " does not equal count " + std::to_string(b.count));

    std::unordered_set<std::string> ids;
    std::unordered_set<std::size_t> rows;
    for (const auto& r : b.records) {
        if (!ids.insert(r.id).second)
            out.push_back("duplicate record id '" + r.id + "'");
        if (r.row >= b.count)
            out.push_back("record '" + r.id + "' row out of range");
        else if (!rows.insert(r.row).second)
            out.push_back("duplicate record row " + std::to_string(r.row));
        if (r.label) {
            if (!r.class_truth)
                out.push_back("record '" + r.id + "' has label but no class_truth");
            else if (*r.class_truth != *r.label)
                out.push_back("record '" + r.id + "' class_truth differs from label");
        }
    }

    if (b.normalized && b.data.size() == b.count * b.dim) {
        for (std::size_t i = 0; i < b.count; ++i) {
            double n = l2_norm(b.row(i));
            if (std::abs(n - 1.0) > 1e-4)
                out.push_back("row " + std::to_string(i) + " norm " +
                              std::to_string(n) + " violates normalized flag");
        }
    }
    return out;
}

} // namespace ncd
