#include "ncd/retrieval.hpp"
#include "ncd/error.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace ncd {

using nlohmann::json;

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size())
        throw InputError("cosine_similarity: dimension mismatch (" +
                         std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0)
        throw InputError("cosine_similarity: zero vector");
    return dot / (na * nb);
}

RetrievalResult retrieve_topk(std::span<const float> query,
                              const EmbeddingBundle& corpus, std::size_t k,
                              const std::string& query_id) {
    if (corpus.count == 0) throw InputError("retrieve_topk: empty corpus");
    if (query.size() != corpus.dim)
        throw InputError("retrieve_topk: query dimension " +
                         std::to_string(query.size()) + " does not match corpus dim " +
                         std::to_string(corpus.dim));
    if (k == 0) throw InputError("retrieve_topk: k must be positive");

    double qn = l2_norm(query);
    if (qn == 0.0) throw InputError("retrieve_topk: zero query vector");

    // score = cosine; corpus rows are scanned in index order so ties are
    // resolved by ascending row index.
    std::vector<std::pair<double, std::size_t>> scored(corpus.count);
    for (std::size_t r = 0; r < corpus.count; ++r) {
        auto row = corpus.row(r);
        double dot = 0.0;
        for (std::size_t j = 0; j < corpus.dim; ++j)
            dot += static_cast<double>(query[j]) * static_cast<double>(row[j]);
        double rn = corpus.normalized ? 1.0 : l2_norm(row);
        if (rn == 0.0)
            throw InputError("retrieve_topk: zero corpus vector at row " +
                             std::to_string(r));
        scored[r] = {dot / (qn * rn), r};
    }

    std::size_t take = std::min(k, corpus.count);
    auto better = [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                      scored.end(), better);

    auto idx = row_to_record(corpus);
    RetrievalResult res;
    res.query_id = query_id;
    res.k = k;
    res.hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
        res.hits.push_back({corpus.records[idx[scored[i].second]].id, scored[i].first});
    return res;
}

std::vector<RetrievalResult> batch_retrieve(const EmbeddingBundle& queries,
                                            const EmbeddingBundle& corpus,
                                            std::size_t k) {
    auto qidx = row_to_record(queries);
    std::vector<RetrievalResult> out;
    out.reserve(queries.count);
    for (std::size_t r = 0; r < queries.count; ++r)
        out.push_back(retrieve_topk(queries.row(r), corpus, k,
                                    queries.records[qidx[r]].id));
    return out;
}

void write_retrievals(const std::vector<RetrievalResult>& results,
                      const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write " + path.string());
    for (const auto& r : results) {
        json hits = json::array();
        for (const auto& h : r.hits) hits.push_back({h.caption_id, h.score});
        json j = {{"query_id", r.query_id}, {"k", r.k}, {"hits", hits}};
        f << j.dump() << "\n";
    }
    if (!f) throw InputError("write failed for " + path.string());
}

std::vector<RetrievalResult> read_retrievals(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open " + path.string());
    std::vector<RetrievalResult> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            RetrievalResult r;
            r.query_id = j.at("query_id").get<std::string>();
            r.k = j.at("k").get<std::size_t>();
            for (const auto& h : j.at("hits"))
                r.hits.push_back({h.at(0).get<std::string>(), h.at(1).get<double>()});
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw InputError("bad retrieval record at " + path.string() + ":" +
                             std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

} // namespace ncd
