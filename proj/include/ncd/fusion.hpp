#pragma once

#include "ncd/bundle.hpp"
#include "ncd/retrieval.hpp"

#include <vector>

namespace ncd {

// Concatenation of a normalized image view (first d_img entries) and a
// normalized mean-pooled text view.
struct FusedView {
    std::string sample_id;
    std::vector<float> vec; // d_img + d_txt
    std::size_t d_img = 0;
    std::size_t d_txt = 0;
};

// Componentwise arithmetic mean. Throws on an empty list or mixed dimensions.
std::vector<float> mean_pool(const std::vector<std::vector<float>>& vectors);

FusedView fuse(std::span<const float> image_vec,
               const std::vector<std::vector<float>>& retrieved,
               const std::string& sample_id = "",
               bool renormalize_joint = false);

// Fuses every image row with its retrieval's caption vectors. Records (ids,
// labels, class_truth) are copied from the image bundle; output dim is
// d_img + d_txt, normalized=false.
EmbeddingBundle fuse_dataset(const EmbeddingBundle& images,
                             const std::vector<RetrievalResult>& retrievals,
                             const EmbeddingBundle& corpus,
                             bool renormalize_joint = false);

// Image-only fallback for the --no-text ablation: every row l2-normalized,
// records preserved.
EmbeddingBundle normalized_image_bundle(const EmbeddingBundle& images);

} // namespace ncd
