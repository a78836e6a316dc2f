#pragma once

#include "ncd/bundle.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>

namespace ncd {

// Gaussian-mixture stand-in for encoder outputs. Class means sit on a scaled
// simplex (orthogonal unit directions) so pairwise separation is uniform;
// image and caption anchors of a class share the same direction, mimicking an
// aligned cross-modal embedding space.
struct MixtureSpec {
    std::size_t num_classes = 0;
    std::size_t d_img = 0;
    std::size_t d_txt = 0;
    std::size_t samples_per_class = 0;
    std::size_t captions_per_class = 0;
    double class_separation = 0.0; // mean spacing in within-class std units
    double text_noise = 0.0;       // caption perturbation around the class anchor
    std::uint64_t seed = 0;
    // Optional junk captions per class for retrieval-robustness experiments.
    std::size_t distractors_per_class = 0;
    double distractor_noise = 0.0;
};

struct SynthOutput {
    EmbeddingBundle images;   // class_truth set, labels absent
    EmbeddingBundle captions; // modality=text, class_truth set
    std::map<std::string, std::string> truth; // id -> generating class
};

std::string class_name(std::size_t c);

SynthOutput generate_mixture(const MixtureSpec& spec);

struct SplitSpec {
    std::set<std::string> known_classes;
    double labeled_fraction = 0.5; // fraction of known-class rows labelled
    std::uint64_t seed = 0;
};

// Partially labelled split: a seeded uniform draw of each known class's rows becomes
// the labelled set D_L (labels set); everything else is D_U (labels stripped,
// class_truth kept). Returns (D_L, D_U).
std::pair<EmbeddingBundle, EmbeddingBundle> build_split(const EmbeddingBundle& bundle,
                                                        const SplitSpec& spec);

// Same partition, applied in place: one bundle with D_L rows labelled and
// D_U rows unlabelled. This is what the clustering stage consumes.
EmbeddingBundle apply_split_labels(const EmbeddingBundle& bundle,
                                   const SplitSpec& spec);

} // namespace ncd
