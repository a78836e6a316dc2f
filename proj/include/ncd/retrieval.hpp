#pragma once

#include "ncd/bundle.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ncd {

struct Hit {
    std::string caption_id;
    double score = 0.0; // cosine similarity in [-1, 1]
};

// Ranked top-k caption hits for one image query. Scores are non-increasing;
// ties broken by ascending corpus row index.
struct RetrievalResult {
    std::string query_id;
    std::vector<Hit> hits;
    std::size_t k = 0;
};

double cosine_similarity(std::span<const float> a, std::span<const float> b);

// Exhaustive scan over the corpus; hits are the k highest-cosine rows.
RetrievalResult retrieve_topk(std::span<const float> query,
                              const EmbeddingBundle& corpus, std::size_t k,
                              const std::string& query_id = "");

// One result per query row, in query row order.
std::vector<RetrievalResult> batch_retrieve(const EmbeddingBundle& queries,
                                            const EmbeddingBundle& corpus,
                                            std::size_t k);

// JSON Lines dump: {"query_id":..., "hits":[[caption_id, score], ...]}
void write_retrievals(const std::vector<RetrievalResult>& results,
                      const std::filesystem::path& path);
std::vector<RetrievalResult> read_retrievals(const std::filesystem::path& path);

} // namespace ncd
