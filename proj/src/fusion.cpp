#include "ncd/fusion.hpp"
#include "ncd/error.hpp"

#include <unordered_map>

namespace ncd {

std::vector<float> mean_pool(const std::vector<std::vector<float>>& vectors) {
    if (vectors.empty()) throw InputError("mean_pool: empty text view");
    std::size_t dim = vectors.front().size();
    std::vector<double> acc(dim, 0.0);
    for (const auto& v : vectors) {
        if (v.size() != dim)
            throw InputError("mean_pool: dimension mismatch");
        for (std::size_t j = 0; j < dim; ++j) acc[j] += v[j];
    }
    std::vector<float> out(dim);
    for (std::size_t j = 0; j < dim; ++j)
        out[j] = static_cast<float>(acc[j] / static_cast<double>(vectors.size()));
    return out;
}

FusedView fuse(std::span<const float> image_vec,
               const std::vector<std::vector<float>>& retrieved,
               const std::string& sample_id, bool renormalize_joint) {
    auto img = l2_normalize(image_vec);
    auto txt = l2_normalize(mean_pool(retrieved));

    FusedView v;
    v.sample_id = sample_id;
    v.d_img = img.size();
    v.d_txt = txt.size();
    v.vec.reserve(v.d_img + v.d_txt);
    v.vec.insert(v.vec.end(), img.begin(), img.end());
    v.vec.insert(v.vec.end(), txt.begin(), txt.end());
    if (renormalize_joint) v.vec = l2_normalize(v.vec);
    return v;
}

EmbeddingBundle fuse_dataset(const EmbeddingBundle& images,
                             const std::vector<RetrievalResult>& retrievals,
                             const EmbeddingBundle& corpus,
                             bool renormalize_joint) {
    std::unordered_map<std::string, const RetrievalResult*> by_id;
    for (const auto& r : retrievals) by_id[r.query_id] = &r;

    std::unordered_map<std::string, std::size_t> corpus_rows;
    for (const auto& rec : corpus.records) corpus_rows[rec.id] = rec.row;

    auto img_idx = row_to_record(images);

    EmbeddingBundle out;
    out.dim = images.dim + corpus.dim;
    out.count = images.count;
    out.normalized = false;
    out.data.reserve(out.count * out.dim);
    out.records.reserve(images.records.size());

    for (std::size_t r = 0; r < images.count; ++r) {
        const auto& rec = images.records[img_idx[r]];
        auto it = by_id.find(rec.id);
        if (it == by_id.end())
            throw InputError("fuse_dataset: no retrieval for image id '" + rec.id + "'");

        std::vector<std::vector<float>> captions;
        captions.reserve(it->second->hits.size());
        for (const auto& hit : it->second->hits) {
            auto cit = corpus_rows.find(hit.caption_id);
            if (cit == corpus_rows.end())
                throw InputError("fuse_dataset: caption id '" + hit.caption_id +
                                 "' not in corpus (sample '" + rec.id + "')");
            auto row = corpus.row(cit->second);
            captions.emplace_back(row.begin(), row.end());
        }

        FusedView fv;
        try {
            fv = fuse(images.row(r), captions, rec.id, renormalize_joint);
        } catch (const Error& e) {
            throw InputError("fuse_dataset: sample '" + rec.id + "': " + e.what());
        }
        out.data.insert(out.data.end(), fv.vec.begin(), fv.vec.end());
        SampleRecord copy = rec;
        copy.row = r;
        out.records.push_back(std::move(copy));
    }
    return out;
}

EmbeddingBundle normalized_image_bundle(const EmbeddingBundle& images) {
    auto img_idx = row_to_record(images);
    EmbeddingBundle out;
    out.dim = images.dim;
    out.count = images.count;
    out.normalized = true;
    out.data.reserve(out.count * out.dim);
    for (std::size_t r = 0; r < images.count; ++r) {
        auto n = l2_normalize(images.row(r));
        out.data.insert(out.data.end(), n.begin(), n.end());
    }
    for (std::size_t r = 0; r < images.count; ++r) {
        SampleRecord copy = images.records[img_idx[r]];
        copy.row = r;
        out.records.push_back(std::move(copy));
    }
    return out;
}

} // namespace ncd
