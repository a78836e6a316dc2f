#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ncd {

enum class Modality { image, text };

std::string modality_name(Modality m);
Modality modality_from_name(const std::string& s);

struct SampleRecord {
    std::string id;
    std::size_t row = 0;
    Modality modality = Modality::image;
    std::optional<std::string> label;       // present only for labelled samples
    std::optional<std::string> class_truth; // ground truth, evaluation only
};

// Immutable matrix of precomputed embedding vectors plus per-row metadata.
// Row-major 32-bit floats; stands in for encoder output.
struct EmbeddingBundle {
    std::size_t dim = 0;
    std::size_t count = 0;
    std::vector<float> data; // count * dim, row-major
    std::vector<SampleRecord> records;
    bool normalized = false;

    std::span<const float> row(std::size_t i) const {
        return std::span<const float>(data.data() + i * dim, dim);
    }
};

// Builds row -> record-index lookup. Throws InputError on duplicate or
// out-of-range rows.
std::vector<std::size_t> row_to_record(const EmbeddingBundle& b);

// Reads manifest.json + embeddings.bin + records.jsonl from a bundle
// directory and validates every invariant. Throws InputError with context
// (file, row, record id) on any violation.
EmbeddingBundle load_bundle(const std::filesystem::path& dir);

// Writes the on-disk bundle format; load_bundle round-trips bit-exactly.
void write_bundle(const EmbeddingBundle& b, const std::filesystem::path& dir);

// Lists every invariant violation with row/record context; empty == valid.
std::vector<std::string> validate_bundle(const EmbeddingBundle& b);

// Unit-length copy of v. Throws InputError on a zero vector.
std::vector<float> l2_normalize(std::span<const float> v);

double l2_norm(std::span<const float> v);

} // namespace ncd
