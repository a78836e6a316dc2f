#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ncd {

struct HungarianResult {
    std::vector<int> match; // match[row] = column, -1 if unmatched
    double total = 0.0;
};

// Minimum-cost injective assignment on a rectangular matrix (padded to square
// internally with zero-cost entries). O(n^3).
HungarianResult hungarian_min(const std::vector<std::vector<double>>& cost);

// Maximum-benefit counterpart (handled by negation).
HungarianResult hungarian_max(const std::vector<std::vector<double>>& benefit);

struct AccuracyResult {
    long correct = 0;
    long total = 0;
    std::vector<int> matching;                // cluster index -> class column, -1 unmatched
    std::vector<std::string> classes;         // column -> class id, sorted
    std::vector<std::vector<long>> contingency; // K x C counts
    double acc() const { return static_cast<double>(correct) / static_cast<double>(total); }
};

// Clustering accuracy under the benefit-maximizing injective cluster-to-class
// matching of the contingency table.
AccuracyResult cluster_accuracy(const std::vector<std::size_t>& pred,
                                const std::vector<std::string>& truth);

struct EvalReport {
    long n_all = 0, n_old = 0, n_new = 0;
    long correct_all = 0, correct_old = 0, correct_new = 0;
    std::vector<int> matching;
    std::vector<std::string> classes;
    std::vector<std::vector<long>> contingency;

    double acc_all() const { return static_cast<double>(correct_all) / static_cast<double>(n_all); }
    std::optional<double> acc_old() const;
    std::optional<double> acc_new() const;
};

// One Hungarian matching on the full set, then correctness rates restricted
// to samples whose truth is in / not in old_classes.
EvalReport subset_report(const std::vector<std::size_t>& pred,
                         const std::vector<std::string>& truth,
                         const std::set<std::string>& old_classes);

void write_report_json(const EvalReport& r, const std::filesystem::path& path);
void write_report_tsv(const EvalReport& r, const std::filesystem::path& path);

// Exact count ratio rendered to 4 decimal places; "n/a" when absent.
std::string format_acc(long correct, long total);

} // namespace ncd
