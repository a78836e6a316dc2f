#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ncd/error.hpp"
#include "ncd/rng.hpp"
#include "ncd/sskmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

using namespace ncd;

namespace {

EmbeddingBundle make_bundle(const std::vector<std::vector<float>>& rows,
                            const std::vector<std::optional<std::string>>& labels) {
    EmbeddingBundle b;
    b.dim = rows.front().size();
    b.count = rows.size();
    for (const auto& r : rows) b.data.insert(b.data.end(), r.begin(), r.end());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        SampleRecord rec{"s" + std::to_string(i), i, Modality::image,
                         labels[i], labels[i]};
        b.records.push_back(std::move(rec));
    }
    return b;
}

double sqd(std::span<const float> a, const double* c, std::size_t dim) {
    double s = 0;
    for (std::size_t j = 0; j < dim; ++j) {
        double d = a[j] - c[j];
        s += d * d;
    }
    return s;
}

// Two Gaussian blobs; class "a" labelled around (0,0), novel blob around
// (10,10).
EmbeddingBundle two_blobs(std::size_t per_blob, uint64_t seed,
                          std::vector<double>* blob2_mean = nullptr) {
    SplitMix64 rng(seed);
    std::vector<std::vector<float>> rows;
    std::vector<std::optional<std::string>> labels;
    for (std::size_t i = 0; i < per_blob; ++i) {
        rows.push_back({static_cast<float>(rng.next_gaussian()),
                        static_cast<float>(rng.next_gaussian())});
        labels.push_back(std::string("a"));
    }
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < per_blob; ++i) {
        float x = static_cast<float>(10.0 + rng.next_gaussian());
        float y = static_cast<float>(10.0 + rng.next_gaussian());
        rows.push_back({x, y});
        labels.push_back(std::nullopt);
        sx += x;
        sy += y;
    }
    if (blob2_mean) blob2_mean->assign({sx / per_blob, sy / per_blob});
    return make_bundle(rows, labels);
}

} // namespace

TEST_CASE("init_centers: per-class means, no novel seeding") {
    auto b = make_bundle({{0.f, 0.f}, {0.f, 2.f}, {4.f, 0.f}},
                         {std::string("a"), std::string("a"), std::string("b")});
    ClusterConfig cfg;
    cfg.total_clusters = 2;
    auto [centers, pinned] = init_centers(b, cfg);
    REQUIRE(pinned.size() == 2);
    CHECK(pinned.at("a") == 0);
    CHECK(pinned.at("b") == 1);
    CHECK(centers[0] == doctest::Approx(0.0));
    CHECK(centers[1] == doctest::Approx(1.0));
    CHECK(centers[2] == doctest::Approx(4.0));
    CHECK(centers[3] == doctest::Approx(0.0));
}

TEST_CASE("init_centers: k-means++ chain matches a stream replay") {
    // 3 known classes, 2 novel seeds, 100 unlabelled rows.
    SplitMix64 gen(555);
    std::vector<std::vector<float>> rows;
    std::vector<std::optional<std::string>> labels;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 5; ++i) {
            rows.push_back({static_cast<float>(c * 4 + gen.next_gaussian()),
                            static_cast<float>(gen.next_gaussian())});
            labels.push_back(std::string(1, static_cast<char>('a' + c)));
        }
    for (int i = 0; i < 100; ++i) {
        rows.push_back({static_cast<float>(20 * gen.next_double()),
                        static_cast<float>(20 * gen.next_double())});
        labels.push_back(std::nullopt);
    }
    auto b = make_bundle(rows, labels);
    ClusterConfig cfg;
    cfg.total_clusters = 5;
    cfg.seed = 777;
    auto [centers, pinned] = init_centers(b, cfg);

    // Independent replay: candidates in ascending record-id order, same
    // generator stream, first seed uniform, then distance-weighted draws
    // against all already-chosen centers.
    std::vector<std::size_t> cand_rows;
    std::vector<std::pair<std::string, std::size_t>> cands;
    for (std::size_t r = 0; r < b.count; ++r)
        if (!b.records[r].label) cands.emplace_back(b.records[r].id, r);
    std::sort(cands.begin(), cands.end());

    std::vector<std::vector<double>> chosen;
    for (int c = 0; c < 3; ++c)
        chosen.push_back({centers[c * 2], centers[c * 2 + 1]});

    SplitMix64 rng(cfg.seed);
    std::size_t first = static_cast<std::size_t>(rng.next_below(cands.size()));
    chosen.push_back({b.row(cands[first].second)[0], b.row(cands[first].second)[1]});
    {
        std::vector<double> w(cands.size());
        double total = 0;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : chosen)
                best = std::min(best, sqd(b.row(cands[i].second), c.data(), 2));
            w[i] = best;
            total += best;
        }
        double target = rng.next_double() * total;
        double acc = 0;
        std::size_t pick = cands.size() - 1;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            acc += w[i];
            if (acc > target) {
                pick = i;
                break;
            }
        }
        chosen.push_back({b.row(cands[pick].second)[0], b.row(cands[pick].second)[1]});
    }
    for (std::size_t c = 3; c < 5; ++c) {
        CHECK(centers[c * 2] == doctest::Approx(chosen[c][0]));
        CHECK(centers[c * 2 + 1] == doctest::Approx(chosen[c][1]));
    }
}

TEST_CASE("init_centers errors") {
    auto b = make_bundle({{0.f, 0.f}, {1.f, 1.f}},
                         {std::string("a"), std::string("b")});
    ClusterConfig cfg;
    cfg.total_clusters = 1; // K < |Y_L|
    CHECK_THROWS_AS(init_centers(b, cfg), InputError);
    cfg.total_clusters = 3; // no unlabelled rows to seed the novel center
    CHECK_THROWS_AS(init_centers(b, cfg), InputError);
}

TEST_CASE("assign pins labelled samples regardless of distance") {
    auto b = make_bundle({{10.f, 10.f}}, {std::string("c")});
    std::vector<double> centers = {0.0, 0.0, 10.0, 10.0};
    std::map<std::string, std::size_t> pinned{{"c", 0}};
    auto a = assign(b, centers, 2, pinned);
    CHECK(a[0] == 0);
}

TEST_CASE("assign breaks distance ties toward the lower center index") {
    auto b = make_bundle({{5.f, 0.f}}, {std::nullopt});
    // centers 1 and 3 equidistant from the sample
    std::vector<double> centers = {100.0, 0.0, 4.0, 0.0, -50.0, 0.0, 6.0, 0.0};
    auto a = assign(b, centers, 4, {});
    CHECK(a[0] == 1);
}

TEST_CASE("assign matches a brute-force distance scan") {
    SplitMix64 rng(31);
    std::vector<std::vector<float>> rows;
    std::vector<std::optional<std::string>> labels;
    for (int i = 0; i < 200; ++i) {
        rows.push_back({static_cast<float>(rng.next_gaussian()),
                        static_cast<float>(rng.next_gaussian()),
                        static_cast<float>(rng.next_gaussian())});
        labels.push_back(std::nullopt);
    }
    auto b = make_bundle(rows, labels);
    std::vector<double> centers(5 * 3);
    for (auto& c : centers) c = rng.next_gaussian();
    auto a = assign(b, centers, 5, {});
    for (std::size_t r = 0; r < b.count; ++r) {
        std::size_t best = 0;
        double bd = sqd(b.row(r), centers.data(), 3);
        for (std::size_t c = 1; c < 5; ++c) {
            double d = sqd(b.row(r), centers.data() + c * 3, 3);
            if (d < bd) {
                bd = d;
                best = c;
            }
        }
        CHECK(a[r] == best);
    }
}

TEST_CASE("update_centers means and empty-cluster policy") {
    auto b = make_bundle({{0.f, 0.f}, {2.f, 0.f}}, {std::nullopt, std::nullopt});
    std::vector<double> prev = {9.0, 9.0, 7.0, 7.0};
    std::vector<std::string> warnings;
    auto c = update_centers(b, {0, 0}, 2, prev, 0, false, warnings);
    CHECK(c[0] == doctest::Approx(1.0));
    CHECK(c[1] == doctest::Approx(0.0));
    // cluster 1 is empty: previous center retained, warning emitted
    CHECK(c[2] == doctest::Approx(7.0));
    CHECK(c[3] == doctest::Approx(7.0));
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("empty cluster 1") != std::string::npos);
}

TEST_CASE("update_centers matches independent per-cluster means") {
    SplitMix64 rng(77);
    std::vector<std::vector<float>> rows;
    std::vector<std::optional<std::string>> labels;
    std::vector<std::size_t> asg;
    for (int i = 0; i < 50; ++i) {
        rows.push_back({static_cast<float>(rng.next_gaussian()),
                        static_cast<float>(rng.next_gaussian())});
        labels.push_back(std::nullopt);
        asg.push_back(static_cast<std::size_t>(rng.next_below(4)));
    }
    auto b = make_bundle(rows, labels);
    std::vector<double> prev(4 * 2, 0.0);
    std::vector<std::string> warnings;
    auto c = update_centers(b, asg, 4, prev, 0, false, warnings);
    for (std::size_t k = 0; k < 4; ++k) {
        double sx = 0, sy = 0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < b.count; ++i)
            if (asg[i] == k) {
                sx += b.row(i)[0];
                sy += b.row(i)[1];
                ++n;
            }
        if (n == 0) continue;
        CHECK(c[k * 2] == doctest::Approx(sx / n).epsilon(1e-12));
        CHECK(c[k * 2 + 1] == doctest::Approx(sy / n).epsilon(1e-12));
    }
}

TEST_CASE("fit finds the novel blob") {
    std::vector<double> blob_mean;
    auto b = two_blobs(50, 123, &blob_mean);
    ClusterConfig cfg;
    cfg.total_clusters = 2;
    cfg.seed = 9;
    auto m = fit(b, cfg);
    CHECK(m.converged);
    std::size_t novel = 1 - m.pinned.at("a");
    CHECK(std::abs(m.centers[novel * 2] - blob_mean[0]) < 1e-3);
    CHECK(std::abs(m.centers[novel * 2 + 1] - blob_mean[1]) < 1e-3);
}

TEST_CASE("infinite tolerance converges after one iteration") {
    auto b = two_blobs(10, 5);
    ClusterConfig cfg;
    cfg.total_clusters = 2;
    cfg.tol = std::numeric_limits<double>::infinity();
    auto m = fit(b, cfg);
    CHECK(m.converged);
    CHECK(m.iterations_run == 1);
}

TEST_CASE("fit is deterministic under a fixed seed") {
    auto b = two_blobs(30, 17);
    ClusterConfig cfg;
    cfg.total_clusters = 3;
    cfg.seed = 1234;
    auto m1 = fit(b, cfg);
    auto m2 = fit(b, cfg);
    CHECK(m1.centers == m2.centers);
    CHECK(m1.assignments == m2.assignments);
    CHECK(m1.inertia_trace == m2.inertia_trace);
}

TEST_CASE("pinning holds at every recorded iteration") {
    auto b = two_blobs(40, 99);
    ClusterConfig cfg;
    cfg.total_clusters = 3;
    cfg.seed = 4;
    auto m = fit(b, cfg);
    auto labels = row_labels(b);
    for (const auto& asg : m.assignment_trace)
        for (std::size_t r = 0; r < b.count; ++r)
            if (labels[r]) CHECK(asg[r] == m.pinned.at(*labels[r]));
}

TEST_CASE("inertia trace is non-increasing") {
    for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        auto b = two_blobs(40, seed);
        ClusterConfig cfg;
        cfg.total_clusters = 4;
        cfg.seed = seed;
        auto m = fit(b, cfg);
        for (std::size_t t = 1; t < m.inertia_trace.size(); ++t)
            CHECK(m.inertia_trace[t] <= m.inertia_trace[t - 1] + 1e-9);
    }
}

TEST_CASE("unlabelled fit reaches the global optimum on a tiny instance") {
    // 8 points, K=2: brute force over all 2^8 assignments gives the optimum.
    SplitMix64 rng(2024);
    std::vector<std::vector<float>> rows;
    std::vector<std::optional<std::string>> labels;
    for (int i = 0; i < 8; ++i) {
        rows.push_back({static_cast<float>(rng.next_gaussian()),
                        static_cast<float>(rng.next_gaussian())});
        labels.push_back(std::nullopt);
    }
    auto b = make_bundle(rows, labels);

    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask < 255; ++mask) { // both clusters nonempty
        double cx[2] = {0, 0}, cy[2] = {0, 0};
        int n[2] = {0, 0};
        for (int i = 0; i < 8; ++i) {
            int c = (mask >> i) & 1;
            cx[c] += rows[i][0];
            cy[c] += rows[i][1];
            ++n[c];
        }
        for (int c = 0; c < 2; ++c) {
            cx[c] /= n[c];
            cy[c] /= n[c];
        }
        double inert = 0;
        for (int i = 0; i < 8; ++i) {
            int c = (mask >> i) & 1;
            inert += (rows[i][0] - cx[c]) * (rows[i][0] - cx[c]) +
                     (rows[i][1] - cy[c]) * (rows[i][1] - cy[c]);
        }
        best = std::min(best, inert);
    }

    double found = std::numeric_limits<double>::infinity();
    for (uint64_t seed = 0; seed < 50; ++seed) {
        ClusterConfig cfg;
        cfg.total_clusters = 2;
        cfg.seed = seed;
        auto m = fit(b, cfg);
        found = std::min(found, m.inertia_trace.back());
    }
    CHECK(found <= best + 1e-9);
    CHECK(found >= best - 1e-9);
}

TEST_CASE("converged inertia is invariant to unlabelled row permutation") {
    auto b = two_blobs(30, 314);
    ClusterConfig cfg;
    cfg.total_clusters = 3;
    cfg.seed = 27;
    auto m1 = fit(b, cfg);

    // reverse row order, ids kept; the seeding chain is id-indexed
    EmbeddingBundle shuffled;
    shuffled.dim = b.dim;
    shuffled.count = b.count;
    for (std::size_t r = 0; r < b.count; ++r) {
        auto row = b.row(b.count - 1 - r);
        shuffled.data.insert(shuffled.data.end(), row.begin(), row.end());
        SampleRecord rec = b.records[b.count - 1 - r];
        rec.row = r;
        shuffled.records.push_back(std::move(rec));
    }
    auto m2 = fit(shuffled, cfg);
    CHECK(std::abs(m1.inertia_trace.back() - m2.inertia_trace.back()) < 1e-9);
}

TEST_CASE("freeze_known_centers keeps labelled means fixed") {
    auto b = two_blobs(20, 55);
    ClusterConfig cfg;
    cfg.total_clusters = 2;
    cfg.seed = 3;
    cfg.freeze_known_centers = true;
    auto [init, pinned] = init_centers(b, cfg);
    auto m = fit(b, cfg);
    std::size_t pc = m.pinned.at("a");
    CHECK(m.centers[pc * 2] == doctest::Approx(init[pc * 2]));
    CHECK(m.centers[pc * 2 + 1] == doctest::Approx(init[pc * 2 + 1]));
}

TEST_CASE("model dump round-trips") {
    auto b = two_blobs(15, 66);
    ClusterConfig cfg;
    cfg.total_clusters = 2;
    cfg.seed = 8;
    auto m = fit(b, cfg);
    auto path = std::filesystem::temp_directory_path() / "ncd_test_model.json";
    write_model(m, cfg, path);
    auto back = read_model(path);
    CHECK(back.k == m.k);
    CHECK(back.assignments == m.assignments);
    CHECK(back.pinned == m.pinned);
    CHECK(back.inertia_trace.size() == m.inertia_trace.size());
}
