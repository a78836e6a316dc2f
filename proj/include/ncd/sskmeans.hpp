#pragma once

#include "ncd/bundle.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ncd {

struct ClusterConfig {
    std::size_t total_clusters = 0; // K, >= number of known classes
    std::size_t max_iters = 300;
    double tol = 1e-6; // max center shift convergence threshold
    std::uint64_t seed = 0;
    bool freeze_known_centers = false; // keep labelled-class centers fixed
    bool reseed_empty = false;         // re-seed empty clusters from the farthest point
};

struct ClusterModel {
    std::size_t k = 0;
    std::size_t dim = 0;
    std::vector<double> centers; // k * dim, row-major
    std::vector<std::size_t> assignments;
    std::map<std::string, std::size_t> pinned; // known-class label -> center index
    std::vector<double> inertia_trace;         // per iteration, non-increasing
    // per-iteration assignments, aligned with inertia_trace (in-memory only,
    // not serialized)
    std::vector<std::vector<std::size_t>> assignment_trace;
    std::size_t iterations_run = 0;
    bool converged = false;
    std::vector<std::string> warnings;
};

// Per-row label lookup (nullopt for unlabelled rows), in row order.
std::vector<std::optional<std::string>> row_labels(const EmbeddingBundle& b);

// Known-class centers are per-class means of labelled rows, in sorted label
// order; remaining centers are seeded from unlabelled rows by k-means++
// (candidates scanned in ascending record-id order, distances measured to all
// already-chosen centers including the labelled means).
std::pair<std::vector<double>, std::map<std::string, std::size_t>>
init_centers(const EmbeddingBundle& fused, const ClusterConfig& cfg);

// Labelled rows go to their pinned center regardless of distance; unlabelled
// rows to the nearest center by squared Euclidean distance, ties to the
// lowest center index.
std::vector<std::size_t> assign(const EmbeddingBundle& fused,
                                const std::vector<double>& centers,
                                std::size_t k,
                                const std::map<std::string, std::size_t>& pinned);

// Each center becomes the mean of its members, summed in ascending row order.
// Empty clusters keep their previous center (warning recorded) unless
// reseed_empty picks the globally farthest point instead.
std::vector<double> update_centers(const EmbeddingBundle& fused,
                                   const std::vector<std::size_t>& assignments,
                                   std::size_t k,
                                   const std::vector<double>& prev_centers,
                                   std::size_t frozen_prefix,
                                   bool reseed_empty,
                                   std::vector<std::string>& warnings);

double inertia(const EmbeddingBundle& fused,
               const std::vector<std::size_t>& assignments,
               const std::vector<double>& centers);

// Lloyd iterations with pinned labelled assignments; deterministic given seed.
ClusterModel fit(const EmbeddingBundle& fused, const ClusterConfig& cfg);

void write_model(const ClusterModel& m, const ClusterConfig& cfg,
                 const std::filesystem::path& path);
ClusterModel read_model(const std::filesystem::path& path);

} // namespace ncd
