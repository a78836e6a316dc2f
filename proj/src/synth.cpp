#include "ncd/synth.hpp"
#include "ncd/error.hpp"
#include "ncd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ncd {

std::string class_name(std::size_t c) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "c%03zu", c);
    return buf;
}

namespace {

void validate(const MixtureSpec& s) {
    if (s.num_classes == 0 || s.d_img == 0 || s.d_txt == 0 ||
        s.samples_per_class == 0 || s.captions_per_class == 0)
        throw InputError("mixture spec: all counts must be positive");
    if (!(s.class_separation > 0.0))
        throw InputError("mixture spec: class_separation must be positive");
    if (s.text_noise < 0.0 || s.distractor_noise < 0.0)
        throw InputError("mixture spec: noise must be non-negative");
    if (s.d_img < s.num_classes || s.d_txt < s.num_classes)
        throw InputError("mixture spec: dim must be >= num_classes for the "
                         "simplex mean construction");
}

void push_row(EmbeddingBundle& b, const std::vector<float>& v,
              const std::string& id, Modality mod, const std::string& cls) {
    b.data.insert(b.data.end(), v.begin(), v.end());
    SampleRecord r;
    r.id = id;
    r.row = b.count++;
    r.modality = mod;
    r.class_truth = cls;
    b.records.push_back(std::move(r));
}

std::vector<float> noisy_unit(std::size_t dim, std::size_t axis, double scale,
                              double noise, SplitMix64& rng) {
    std::vector<double> v(dim, 0.0);
    v[axis] = scale;
    for (std::size_t j = 0; j < dim; ++j) v[j] += noise * rng.next_gaussian();
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n == 0.0) n = 1.0; // measure-zero; keep the zero row finite
    std::vector<float> out(dim);
    for (std::size_t j = 0; j < dim; ++j)
        out[j] = static_cast<float>(v[j] / n);
    return out;
}

} // namespace

SynthOutput generate_mixture(const MixtureSpec& spec) {
    validate(spec);
    SplitMix64 rng(spec.seed);

    SynthOutput out;
    out.images.dim = spec.d_img;
    out.images.normalized = true;
    out.captions.dim = spec.d_txt;
    out.captions.normalized = true;

    // Class c's image mean is (separation/sqrt(2)) * e_c, so any two class
    // means are exactly `separation` apart; within-class noise is unit std.
    double mean_scale = spec.class_separation / std::sqrt(2.0);

    char idbuf[48];
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        std::string cls = class_name(c);
        for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
            auto v = noisy_unit(spec.d_img, c, mean_scale, 1.0, rng);
            std::snprintf(idbuf, sizeof idbuf, "img_%s_%05zu", cls.c_str(), s);
            push_row(out.images, v, idbuf, Modality::image, cls);
            out.truth[idbuf] = cls;
        }
    }
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        std::string cls = class_name(c);
        for (std::size_t s = 0; s < spec.captions_per_class; ++s) {
            auto v = noisy_unit(spec.d_txt, c, 1.0, spec.text_noise, rng);
            std::snprintf(idbuf, sizeof idbuf, "cap_%s_%05zu", cls.c_str(), s);
            push_row(out.captions, v, idbuf, Modality::text, cls);
            out.truth[idbuf] = cls;
        }
    }
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        std::string cls = class_name(c);
        for (std::size_t s = 0; s < spec.distractors_per_class; ++s) {
            auto v = noisy_unit(spec.d_txt, c, 1.0, spec.distractor_noise, rng);
            std::snprintf(idbuf, sizeof idbuf, "dis_%s_%05zu", cls.c_str(), s);
            push_row(out.captions, v, idbuf, Modality::text, cls);
            out.truth[idbuf] = cls;
        }
    }
    return out;
}

namespace {

// Ids of the rows a seeded draw marks as labelled; shared by build_split and
// apply_split_labels so both views of the partition agree.
std::set<std::string> pick_labelled(const EmbeddingBundle& bundle,
                                    const SplitSpec& spec) {
    if (spec.known_classes.empty())
        throw InputError("split spec: known_classes must be nonempty");
    if (!(spec.labeled_fraction > 0.0) || spec.labeled_fraction > 1.0)
        throw InputError("split spec: labeled_fraction must be in (0, 1]");

    auto idx = row_to_record(bundle);
    std::map<std::string, std::vector<std::size_t>> class_rows; // class -> rows
    std::set<std::string> present;
    for (std::size_t r = 0; r < bundle.count; ++r) {
        const auto& rec = bundle.records[idx[r]];
        if (!rec.class_truth)
            throw InputError("split: record '" + rec.id + "' has no class_truth");
        present.insert(*rec.class_truth);
        if (spec.known_classes.count(*rec.class_truth))
            class_rows[*rec.class_truth].push_back(r);
    }
    for (const auto& c : spec.known_classes) {
        if (!present.count(c))
            throw InputError("split: known class '" + c + "' absent from bundle");
        if (class_rows[c].size() < 2)
            throw InputError("split: known class '" + c + "' has fewer than 2 samples");
    }
    if (present.size() <= spec.known_classes.size())
        throw InputError("split: known_classes must be a strict subset of all classes");

    // Per-class partial Fisher-Yates over rows in ascending order, classes
    // consumed from one stream in sorted order.
    SplitMix64 rng(spec.seed);
    std::set<std::string> labelled;
    for (auto& [cls, rows] : class_rows) {
        std::size_t n = rows.size();
        auto take = static_cast<std::size_t>(
            std::llround(spec.labeled_fraction * static_cast<double>(n)));
        take = std::clamp<std::size_t>(take, 1, n);
        for (std::size_t i = 0; i < take; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
            std::swap(rows[i], rows[j]);
        }
        for (std::size_t i = 0; i < take; ++i)
            labelled.insert(bundle.records[idx[rows[i]]].id);
    }
    return labelled;
}

EmbeddingBundle select_rows(const EmbeddingBundle& src,
                            const std::vector<std::size_t>& rows, bool labelled) {
    auto idx = row_to_record(src);
    EmbeddingBundle out;
    out.dim = src.dim;
    out.normalized = src.normalized;
    for (std::size_t r : rows) {
        SampleRecord rec = src.records[idx[r]];
        rec.row = out.count;
        rec.label = labelled ? rec.class_truth : std::nullopt;
        auto row = src.row(r);
        out.data.insert(out.data.end(), row.begin(), row.end());
        out.records.push_back(std::move(rec));
        ++out.count;
    }
    return out;
}

} // namespace

std::pair<EmbeddingBundle, EmbeddingBundle> build_split(const EmbeddingBundle& bundle,
                                                        const SplitSpec& spec) {
    auto labelled = pick_labelled(bundle, spec);
    auto idx = row_to_record(bundle);
    std::vector<std::size_t> l_rows, u_rows;
    for (std::size_t r = 0; r < bundle.count; ++r) {
        if (labelled.count(bundle.records[idx[r]].id))
            l_rows.push_back(r);
        else
            u_rows.push_back(r);
    }
    return {select_rows(bundle, l_rows, true), select_rows(bundle, u_rows, false)};
}

EmbeddingBundle apply_split_labels(const EmbeddingBundle& bundle,
                                   const SplitSpec& spec) {
    auto labelled = pick_labelled(bundle, spec);
    EmbeddingBundle out = bundle;
    for (auto& rec : out.records)
        rec.label = labelled.count(rec.id) ? rec.class_truth : std::nullopt;
    return out;
}

} // namespace ncd
