#include "ncd/sskmeans.hpp"
#include "ncd/error.hpp"
#include "ncd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

namespace ncd {

using nlohmann::json;

std::vector<std::optional<std::string>> row_labels(const EmbeddingBundle& b) {
    auto idx = row_to_record(b);
    std::vector<std::optional<std::string>> labels(b.count);
    for (std::size_t r = 0; r < b.count; ++r)
        labels[r] = b.records[idx[r]].label;
    return labels;
}

namespace {

double sq_dist(std::span<const float> row, const double* center, std::size_t dim) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        double d = static_cast<double>(row[j]) - center[j];
        s += d * d;
    }
    return s;
}

} // namespace

std::pair<std::vector<double>, std::map<std::string, std::size_t>>
init_centers(const EmbeddingBundle& fused, const ClusterConfig& cfg) {
    if (cfg.total_clusters == 0)
        throw InputError("init_centers: K must be positive");

    auto idx = row_to_record(fused);
    auto labels = row_labels(fused);

    std::set<std::string> known;
    for (const auto& l : labels)
        if (l) known.insert(*l);

    if (cfg.total_clusters < known.size())
        throw InputError("init_centers: K=" + std::to_string(cfg.total_clusters) +
                         " is less than the number of known classes " +
                         std::to_string(known.size()));

    std::size_t k = cfg.total_clusters;
    std::size_t dim = fused.dim;
    std::vector<double> centers(k * dim, 0.0);
    std::map<std::string, std::size_t> pinned;

    // Known-class centers: per-class means in sorted label order.
    std::size_t c = 0;
    for (const auto& cls : known) pinned[cls] = c++;
    std::vector<std::size_t> counts(known.size(), 0);
    for (std::size_t r = 0; r < fused.count; ++r) {
        if (!labels[r]) continue;
        std::size_t ci = pinned.at(*labels[r]);
        auto row = fused.row(r);
        for (std::size_t j = 0; j < dim; ++j)
            centers[ci * dim + j] += row[j];
        ++counts[ci];
    }
    for (const auto& [cls, ci] : pinned) {
        if (counts[ci] == 0)
            throw InputError("init_centers: known class '" + cls +
                             "' has zero labelled samples");
        for (std::size_t j = 0; j < dim; ++j)
            centers[ci * dim + j] /= static_cast<double>(counts[ci]);
    }

    // k-means++ for novel centers over unlabelled rows, scanned in ascending
    // record-id order so the seeding chain is independent of row permutation.
    std::size_t novel = k - known.size();
    std::vector<std::pair<std::string, std::size_t>> candidates; // (id, row)
    for (std::size_t r = 0; r < fused.count; ++r)
        if (!labels[r]) candidates.emplace_back(fused.records[idx[r]].id, r);
    std::sort(candidates.begin(), candidates.end());

    if (candidates.size() < novel)
        throw InputError("init_centers: " + std::to_string(candidates.size()) +
                         " unlabelled rows cannot seed " + std::to_string(novel) +
                         " novel centers");

    SplitMix64 rng(cfg.seed);
    std::size_t chosen = known.size();
    if (novel > 0) {
        std::size_t first = static_cast<std::size_t>(rng.next_below(candidates.size()));
        auto row = fused.row(candidates[first].second);
        for (std::size_t j = 0; j < dim; ++j)
            centers[chosen * dim + j] = row[j];
        ++chosen;
    }
    while (chosen < k) {
        // weight = squared distance to the nearest already-chosen center
        std::vector<double> weights(candidates.size());
        double total = 0.0;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            auto row = fused.row(candidates[i].second);
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t ci = 0; ci < chosen; ++ci)
                best = std::min(best, sq_dist(row, centers.data() + ci * dim, dim));
            weights[i] = best;
            total += best;
        }
        if (total == 0.0)
            throw InputError("init_centers: too few distinct unlabelled rows to "
                             "seed novel centers");
        double target = rng.next_double() * total;
        double acc = 0.0;
        std::size_t pick = candidates.size() - 1;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            acc += weights[i];
            if (acc > target) {
                pick = i;
                break;
            }
        }
        auto row = fused.row(candidates[pick].second);
        for (std::size_t j = 0; j < dim; ++j)
            centers[chosen * dim + j] = row[j];
        ++chosen;
    }
    return {std::move(centers), std::move(pinned)};
}

std::vector<std::size_t> assign(const EmbeddingBundle& fused,
                                const std::vector<double>& centers,
                                std::size_t k,
                                const std::map<std::string, std::size_t>& pinned) {
    if (k == 0 || centers.size() != k * fused.dim)
        throw InputError("assign: centers shape does not match bundle dim");
    auto labels = row_labels(fused);
    std::vector<std::size_t> out(fused.count);
    for (std::size_t r = 0; r < fused.count; ++r) {
        if (labels[r]) {
            auto it = pinned.find(*labels[r]);
            if (it == pinned.end())
                throw InputError("assign: label '" + *labels[r] + "' not pinned");
            out[r] = it->second;
            continue;
        }
        auto row = fused.row(r);
        std::size_t best = 0;
        double best_d = sq_dist(row, centers.data(), fused.dim);
        for (std::size_t ci = 1; ci < k; ++ci) {
            double d = sq_dist(row, centers.data() + ci * fused.dim, fused.dim);
            if (d < best_d) {
                best_d = d;
                best = ci;
            }
        }
        out[r] = best;
    }
    return out;
}

std::vector<double> update_centers(const EmbeddingBundle& fused,
                                   const std::vector<std::size_t>& assignments,
                                   std::size_t k,
                                   const std::vector<double>& prev_centers,
                                   std::size_t frozen_prefix,
                                   bool reseed_empty,
                                   std::vector<std::string>& warnings) {
    if (assignments.size() != fused.count)
        throw InputError("update_centers: assignment length mismatch");
    std::size_t dim = fused.dim;
    std::vector<double> centers(k * dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t r = 0; r < fused.count; ++r) {
        std::size_t ci = assignments[r];
        if (ci >= k) throw InputError("update_centers: assignment out of range");
        auto row = fused.row(r);
        for (std::size_t j = 0; j < dim; ++j)
            centers[ci * dim + j] += row[j];
        ++counts[ci];
    }
    for (std::size_t ci = 0; ci < k; ++ci) {
        if (ci < frozen_prefix) {
            std::copy_n(prev_centers.data() + ci * dim, dim, centers.data() + ci * dim);
            continue;
        }
        if (counts[ci] == 0) {
            if (reseed_empty) {
                // farthest point from its own assigned center, lowest row on ties
                std::size_t far_row = 0;
                double far_d = -1.0;
                for (std::size_t r = 0; r < fused.count; ++r) {
                    double d = sq_dist(fused.row(r),
                                       prev_centers.data() + assignments[r] * dim, dim);
                    if (d > far_d) {
                        far_d = d;
                        far_row = r;
                    }
                }
                auto row = fused.row(far_row);
                for (std::size_t j = 0; j < dim; ++j)
                    centers[ci * dim + j] = row[j];
                warnings.push_back("empty cluster " + std::to_string(ci) +
                                   " re-seeded from row " + std::to_string(far_row));
            } else {
                std::copy_n(prev_centers.data() + ci * dim, dim,
                            centers.data() + ci * dim);
                warnings.push_back("empty cluster " + std::to_string(ci) +
                                   " kept its previous center");
            }
            continue;
        }
        for (std::size_t j = 0; j < dim; ++j)
            centers[ci * dim + j] /= static_cast<double>(counts[ci]);
    }
    return centers;
}

double inertia(const EmbeddingBundle& fused,
               const std::vector<std::size_t>& assignments,
               const std::vector<double>& centers) {
    double s = 0.0;
    for (std::size_t r = 0; r < fused.count; ++r)
        s += sq_dist(fused.row(r), centers.data() + assignments[r] * fused.dim,
                     fused.dim);
    return s;
}

ClusterModel fit(const EmbeddingBundle& fused, const ClusterConfig& cfg) {
    if (cfg.max_iters == 0) throw InputError("fit: max_iters must be positive");
    auto [centers, pinned] = init_centers(fused, cfg);
    std::size_t k = cfg.total_clusters;
    std::size_t frozen = cfg.freeze_known_centers ? pinned.size() : 0;

    ClusterModel m;
    m.k = k;
    m.dim = fused.dim;
    m.pinned = pinned;

    auto assignments = assign(fused, centers, k, pinned);
    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
        auto next = update_centers(fused, assignments, k, centers, frozen,
                                   cfg.reseed_empty, m.warnings);
        double shift = 0.0;
        for (std::size_t ci = 0; ci < k; ++ci) {
            double s = 0.0;
            for (std::size_t j = 0; j < fused.dim; ++j) {
                double d = next[ci * fused.dim + j] - centers[ci * fused.dim + j];
                s += d * d;
            }
            shift = std::max(shift, std::sqrt(s));
        }
        centers = std::move(next);
        assignments = assign(fused, centers, k, pinned);
        m.inertia_trace.push_back(inertia(fused, assignments, centers));
        m.assignment_trace.push_back(assignments);
        m.iterations_run = it;
        if (shift <= cfg.tol) {
            m.converged = true;
            break;
        }
    }
    m.centers = std::move(centers);
    m.assignments = std::move(assignments);
    return m;
}

void write_model(const ClusterModel& m, const ClusterConfig& cfg,
                 const std::filesystem::path& path) {
    json centers = json::array();
    for (std::size_t ci = 0; ci < m.k; ++ci) {
        json row = json::array();
        for (std::size_t j = 0; j < m.dim; ++j)
            row.push_back(m.centers[ci * m.dim + j]);
        centers.push_back(std::move(row));
    }
    json j = {{"k", m.k},
              {"dim", m.dim},
              {"centers", centers},
              {"assignments", m.assignments},
              {"pinned", m.pinned},
              {"inertia_trace", m.inertia_trace},
              {"iterations_run", m.iterations_run},
              {"converged", m.converged},
              {"warnings", m.warnings},
              {"config",
               {{"total_clusters", cfg.total_clusters},
                {"max_iters", cfg.max_iters},
                {"tol", cfg.tol},
                {"seed", cfg.seed},
                {"freeze_known_centers", cfg.freeze_known_centers},
                {"reseed_empty", cfg.reseed_empty}}}};
    std::ofstream f(path);
    if (!f) throw InputError("cannot write " + path.string());
    f << j.dump(2) << "\n";
    if (!f) throw InputError("write failed for " + path.string());
}

ClusterModel read_model(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open " + path.string());
    json j;
    try {
        f >> j;
        ClusterModel m;
        m.k = j.at("k").get<std::size_t>();
        m.dim = j.at("dim").get<std::size_t>();
        for (const auto& row : j.at("centers"))
            for (const auto& v : row) m.centers.push_back(v.get<double>());
        m.assignments = j.at("assignments").get<std::vector<std::size_t>>();
        m.pinned = j.at("pinned").get<std::map<std::string, std::size_t>>();
        m.inertia_trace = j.at("inertia_trace").get<std::vector<double>>();
        m.iterations_run = j.at("iterations_run").get<std::size_t>();
        m.converged = j.at("converged").get<bool>();
        m.warnings = j.at("warnings").get<std::vector<std::string>>();
        return m;
    } catch (const json::exception& e) {
        throw InputError("bad model file " + path.string() + ": " + e.what());
    }
}

} // namespace ncd
