#include "ncd/evaluation.hpp"
#include "ncd/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace ncd {

using nlohmann::json;

HungarianResult hungarian_min(const std::vector<std::vector<double>>& cost) {
    if (cost.empty() || cost.front().empty())
        throw InputError("hungarian_min: empty matrix");
    std::size_t rows = cost.size(), cols = cost.front().size();
    for (const auto& r : cost) {
        if (r.size() != cols) throw InputError("hungarian_min: ragged matrix");
        for (double v : r)
            if (!std::isfinite(v))
                throw InputError("hungarian_min: non-finite entry");
    }

    // Pad to square with zero cost; solved with the potentials formulation.
    std::size_t n = std::max(rows, cols);
    auto at = [&](std::size_t i, std::size_t j) -> double {
        return (i < rows && j < cols) ? cost[i][j] : 0.0;
    };

    // Column n is a virtual slot used to start each augmenting path.
    const double INF = std::numeric_limits<double>::infinity();
    std::vector<double> u(n, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, n), way(n + 1, n); // p[j] = row on column j, n = none
    for (std::size_t i = 0; i < n; ++i) {
        p[n] = i;
        std::size_t j0 = n;
        std::vector<double> minv(n + 1, INF);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            std::size_t i0 = p[j0], j1 = n;
            double delta = INF;
            for (std::size_t j = 0; j < n; ++j) {
                if (used[j]) continue;
                double cur = at(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != n);
        do {
            std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != n);
    }

    HungarianResult res;
    res.match.assign(rows, -1);
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t i = p[j];
        if (i < rows && j < cols) {
            res.match[i] = static_cast<int>(j);
            res.total += cost[i][j];
        }
    }
    return res;
}

HungarianResult hungarian_max(const std::vector<std::vector<double>>& benefit) {
    std::vector<std::vector<double>> cost(benefit.size());
    for (std::size_t i = 0; i < benefit.size(); ++i) {
        cost[i].resize(benefit[i].size());
        for (std::size_t j = 0; j < benefit[i].size(); ++j)
            cost[i][j] = -benefit[i][j];
    }
    auto res = hungarian_min(cost);
    res.total = -res.total;
    return res;
}

namespace {

AccuracyResult match_contingency(const std::vector<std::size_t>& pred,
                                 const std::vector<std::string>& truth) {
    if (pred.size() != truth.size())
        throw InputError("cluster_accuracy: pred/truth length mismatch");
    if (pred.empty()) throw InputError("cluster_accuracy: empty input");

    AccuracyResult r;
    std::set<std::string> classes(truth.begin(), truth.end());
    r.classes.assign(classes.begin(), classes.end());
    std::map<std::string, std::size_t> col;
    for (std::size_t j = 0; j < r.classes.size(); ++j) col[r.classes[j]] = j;

    std::size_t k = *std::max_element(pred.begin(), pred.end()) + 1;
    r.contingency.assign(k, std::vector<long>(r.classes.size(), 0));
    for (std::size_t i = 0; i < pred.size(); ++i)
        ++r.contingency[pred[i]][col.at(truth[i])];

    std::vector<std::vector<double>> benefit(k, std::vector<double>(r.classes.size()));
    for (std::size_t ci = 0; ci < k; ++ci)
        for (std::size_t cj = 0; cj < r.classes.size(); ++cj)
            benefit[ci][cj] = static_cast<double>(r.contingency[ci][cj]);
    auto hung = hungarian_max(benefit);
    r.matching = hung.match;

    r.total = static_cast<long>(pred.size());
    for (std::size_t ci = 0; ci < k; ++ci)
        if (r.matching[ci] >= 0)
            r.correct += r.contingency[ci][static_cast<std::size_t>(r.matching[ci])];
    return r;
}

} // namespace

AccuracyResult cluster_accuracy(const std::vector<std::size_t>& pred,
                                const std::vector<std::string>& truth) {
    return match_contingency(pred, truth);
}

std::optional<double> EvalReport::acc_old() const {
    if (n_old == 0) return std::nullopt;
    return static_cast<double>(correct_old) / static_cast<double>(n_old);
}

std::optional<double> EvalReport::acc_new() const {
    if (n_new == 0) return std::nullopt;
    return static_cast<double>(correct_new) / static_cast<double>(n_new);
}

EvalReport subset_report(const std::vector<std::size_t>& pred,
                         const std::vector<std::string>& truth,
                         const std::set<std::string>& old_classes) {
    auto acc = match_contingency(pred, truth);
    std::set<std::string> present(truth.begin(), truth.end());
    for (const auto& c : old_classes)
        if (!present.count(c))
            throw InputError("subset_report: old class '" + c +
                             "' absent from truth");

    std::map<std::string, std::size_t> col;
    for (std::size_t j = 0; j < acc.classes.size(); ++j) col[acc.classes[j]] = j;

    EvalReport r;
    r.matching = acc.matching;
    r.classes = acc.classes;
    r.contingency = acc.contingency;
    r.n_all = acc.total;

    for (std::size_t i = 0; i < pred.size(); ++i) {
        bool is_old = old_classes.count(truth[i]) > 0;
        bool correct = acc.matching[pred[i]] >= 0 &&
                       static_cast<std::size_t>(acc.matching[pred[i]]) == col.at(truth[i]);
        if (is_old) {
            ++r.n_old;
            if (correct) ++r.correct_old;
        } else {
            ++r.n_new;
            if (correct) ++r.correct_new;
        }
        if (correct) ++r.correct_all;
    }
    return r;
}

std::string format_acc(long correct, long total) {
    if (total == 0) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f",
                  static_cast<double>(correct) / static_cast<double>(total));
    return buf;
}

void write_report_json(const EvalReport& r, const std::filesystem::path& path) {
    json matching = json::object();
    for (std::size_t ci = 0; ci < r.matching.size(); ++ci)
        if (r.matching[ci] >= 0)
            matching[std::to_string(ci)] = r.classes[static_cast<std::size_t>(r.matching[ci])];
    json j = {{"acc_all", format_acc(r.correct_all, r.n_all)},
              {"acc_old", r.n_old ? json(format_acc(r.correct_old, r.n_old)) : json(nullptr)},
              {"acc_new", r.n_new ? json(format_acc(r.correct_new, r.n_new)) : json(nullptr)},
              {"counts", {{"n_all", r.n_all}, {"n_old", r.n_old}, {"n_new", r.n_new}}},
              {"correct", {{"all", r.correct_all}, {"old", r.correct_old}, {"new", r.correct_new}}},
              {"matching", matching},
              {"classes", r.classes},
              {"contingency", r.contingency}};
    std::ofstream f(path);
    if (!f) throw InputError("cannot write " + path.string());
    f << j.dump(2) << "\n";
    if (!f) throw InputError("write failed for " + path.string());
}

void write_report_tsv(const EvalReport& r, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write " + path.string());
    f << "acc_all\tacc_old\tacc_new\tn_all\tn_old\tn_new\n";
    f << format_acc(r.correct_all, r.n_all) << "\t"
      << format_acc(r.correct_old, r.n_old) << "\t"
      << format_acc(r.correct_new, r.n_new) << "\t" << r.n_all << "\t" << r.n_old
      << "\t" << r.n_new << "\n";
    if (!f) throw InputError("write failed for " + path.string());
}

} // namespace ncd
