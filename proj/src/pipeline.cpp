#include "ncd/pipeline.hpp"
#include "ncd/error.hpp"
#include "ncd/fusion.hpp"
#include "ncd/retrieval.hpp"
#include "ncd/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

namespace ncd {

using nlohmann::json;

namespace fs = std::filesystem;

std::string file_hash(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path.string() + " for hashing");
    std::uint64_t h = 1469598103934665603ULL;
    char buf[65536];
    while (f.read(buf, sizeof buf) || f.gcount() > 0) {
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
        if (!f) break;
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

std::string tree_hash(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& p : files) {
        mix(fs::relative(p, dir).string());
        mix(file_hash(p));
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

namespace {

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        auto x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw InputError("config: bad integer for '" + key + "': " + v);
    }
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw InputError("config: bad number for '" + key + "': " + v);
    }
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw InputError("config: bad boolean for '" + key + "': " + v);
}

std::string trim(const std::string& s) {
    auto a = s.find_first_not_of(" \t\r");
    auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

} // namespace

void apply_config_line(PipelineConfig& cfg, const std::string& key,
                       const std::string& value) {
    if (key == "classes") cfg.classes = parse_u64(value, key);
    else if (key == "known") cfg.known = parse_u64(value, key);
    else if (key == "dim_img") cfg.dim_img = parse_u64(value, key);
    else if (key == "dim_txt") cfg.dim_txt = parse_u64(value, key);
    else if (key == "per_class") cfg.per_class = parse_u64(value, key);
    else if (key == "captions_per_class") cfg.captions_per_class = parse_u64(value, key);
    else if (key == "distractors_per_class") cfg.distractors_per_class = parse_u64(value, key);
    else if (key == "separation") cfg.separation = parse_double(value, key);
    else if (key == "text_noise") cfg.text_noise = parse_double(value, key);
    else if (key == "distractor_noise") cfg.distractor_noise = parse_double(value, key);
    else if (key == "labeled_fraction") cfg.labeled_fraction = parse_double(value, key);
    else if (key == "k") cfg.retrieval_k = parse_u64(value, key);
    else if (key == "clusters") cfg.clusters = parse_u64(value, key);
    else if (key == "max_iters") cfg.max_iters = parse_u64(value, key);
    else if (key == "tol") cfg.tol = parse_double(value, key);
    else if (key == "seed") cfg.seed = parse_u64(value, key);
    else if (key == "tau") cfg.tau = parse_double(value, key);
    else if (key == "lambda") cfg.lambda = parse_double(value, key);
    else if (key == "no_text") cfg.no_text = parse_bool(value, key);
    else if (key == "renormalize_joint") cfg.renormalize_joint = parse_bool(value, key);
    else if (key == "freeze_known_centers") cfg.freeze_known_centers = parse_bool(value, key);
    else if (key == "include_positive") cfg.include_positive = parse_bool(value, key);
    else if (key == "reseed_empty") cfg.reseed_empty = parse_bool(value, key);
    else if (key == "out") cfg.out = value;
    else if (key == "input") cfg.input = value;
    else throw InputError("config: unknown key '" + key + "'");
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open config " + path.string());
    PipelineConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("config " + path.string() + ":" +
                             std::to_string(lineno) + ": expected key = value");
        apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

json config_json(const PipelineConfig& c) {
    return {{"classes", c.classes},
            {"known", c.known},
            {"dim_img", c.dim_img},
            {"dim_txt", c.dim_txt},
            {"per_class", c.per_class},
            {"captions_per_class", c.captions_per_class},
            {"distractors_per_class", c.distractors_per_class},
            {"separation", c.separation},
            {"text_noise", c.text_noise},
            {"distractor_noise", c.distractor_noise},
            {"labeled_fraction", c.labeled_fraction},
            {"k", c.retrieval_k},
            {"clusters", c.clusters},
            {"max_iters", c.max_iters},
            {"tol", c.tol},
            {"seed", c.seed},
            {"tau", c.tau},
            {"lambda", c.lambda},
            {"no_text", c.no_text},
            {"renormalize_joint", c.renormalize_joint},
            {"freeze_known_centers", c.freeze_known_centers},
            {"include_positive", c.include_positive},
            {"reseed_empty", c.reseed_empty},
            {"out", c.out},
            {"input", c.input}};
}

namespace {

// Two pipeline processes must not share an output directory.
class OutputLock {
public:
    explicit OutputLock(const fs::path& dir) : path_(dir / ".lock") {
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0)
            throw InputError("output directory " + dir.string() +
                             " is locked by another run (" + path_.string() + ")");
    }
    ~OutputLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

std::string string_hash(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

// Content-addressed stage guard: skip the stage when the fingerprint of its
// config + inputs matches the previous run and outputs exist.
struct Stage {
    Stage(const fs::path& out, std::string name) : name_(std::move(name)) {
        fp_file_ = out / (name_ + ".fp");
        partial_ = out / (name_ + ".partial");
    }

    bool cached(const std::string& fingerprint,
                const std::vector<fs::path>& outputs) const {
        std::ifstream f(fp_file_);
        std::string prev;
        if (!(f >> prev) || prev != string_hash(fingerprint)) return false;
        if (fs::exists(partial_)) return false;
        for (const auto& o : outputs)
            if (!fs::exists(o)) return false;
        return true;
    }

    void begin() const { std::ofstream(partial_) << name_ << "\n"; }

    void finish(const std::string& fingerprint) const {
        std::ofstream(fp_file_) << string_hash(fingerprint) << "\n";
        fs::remove(partial_);
    }

    std::string name_;
    fs::path fp_file_;
    fs::path partial_;
};

std::set<std::string> read_old_classes(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open " + path.string());
    json j;
    try {
        f >> j;
        auto v = j.at("old_classes").get<std::vector<std::string>>();
        return {v.begin(), v.end()};
    } catch (const json::exception& e) {
        throw InputError("bad old_classes file " + path.string() + ": " + e.what());
    }
}

} // namespace

RunResult run_pipeline(const PipelineConfig& cfg) {
    fs::create_directories(cfg.out);
    OutputLock lock(cfg.out);

    fs::path out = cfg.out;
    json manifest;
    manifest["config"] = config_json(cfg);
    manifest["stages"] = json::array();

    auto run_stage = [&](const std::string& name, const std::string& fingerprint,
                         const std::vector<fs::path>& outputs, auto&& body) {
        Stage st(out, name);
        json entry;
        entry["name"] = name;
        if (st.cached(fingerprint, outputs)) {
            entry["cached"] = true;
        } else {
            entry["cached"] = false;
            st.begin();
            try {
                body();
            } catch (const std::exception& e) {
                throw InputError("stage '" + name + "' failed: " + e.what());
            }
            st.finish(fingerprint);
        }
        json oh = json::object();
        for (const auto& o : outputs)
            oh[o.filename().string()] = fs::is_directory(o) ? tree_hash(o) : file_hash(o);
        entry["outputs"] = oh;
        manifest["stages"].push_back(entry);
    };

    // --- synth stage (or external input) ---
    fs::path dataset = cfg.input.empty() ? out / "dataset" : fs::path(cfg.input);
    if (cfg.input.empty()) {
        std::ostringstream fp;
        fp << "synth|" << cfg.classes << "|" << cfg.known << "|" << cfg.dim_img
           << "|" << cfg.dim_txt << "|" << cfg.per_class << "|"
           << cfg.captions_per_class << "|" << cfg.distractors_per_class << "|"
           << cfg.separation << "|" << cfg.text_noise << "|" << cfg.distractor_noise
           << "|" << cfg.labeled_fraction << "|" << cfg.seed;
        run_stage("synth", fp.str(),
                  {dataset / "images", dataset / "captions",
                   dataset / "truth.json", dataset / "old_classes.json"},
                  [&] {
                      if (cfg.known == 0 || cfg.known >= cfg.classes)
                          throw InputError("known must be in [1, classes)");
                      MixtureSpec ms;
                      ms.num_classes = cfg.classes;
                      ms.d_img = cfg.dim_img;
                      ms.d_txt = cfg.dim_txt;
                      ms.samples_per_class = cfg.per_class;
                      ms.captions_per_class = cfg.captions_per_class;
                      ms.distractors_per_class = cfg.distractors_per_class;
                      ms.class_separation = cfg.separation;
                      ms.text_noise = cfg.text_noise;
                      ms.distractor_noise = cfg.distractor_noise;
                      ms.seed = cfg.seed;
                      auto synth = generate_mixture(ms);

                      SplitSpec sp;
                      for (std::size_t c = 0; c < cfg.known; ++c)
                          sp.known_classes.insert(class_name(c));
                      sp.labeled_fraction = cfg.labeled_fraction;
                      sp.seed = cfg.seed + 1; // separate stream from generation
                      auto labelled_images = apply_split_labels(synth.images, sp);

                      write_bundle(labelled_images, dataset / "images");
                      write_bundle(synth.captions, dataset / "captions");
                      {
                          std::ofstream f(dataset / "truth.json");
                          f << json(synth.truth).dump(2) << "\n";
                      }
                      {
                          json oc = {{"old_classes",
                                      std::vector<std::string>(sp.known_classes.begin(),
                                                               sp.known_classes.end())}};
                          std::ofstream f(dataset / "old_classes.json");
                          f << oc.dump(2) << "\n";
                      }
                  });
    } else if (!fs::exists(dataset / "images" / "manifest.json")) {
        throw InputError("stage 'input': missing input bundle " +
                         (dataset / "images").string());
    }

    std::string images_hash = tree_hash(dataset / "images");

    // --- retrieve + fuse (skipped under --no-text) ---
    fs::path fused_dir = out / "fused";
    if (cfg.no_text) {
        std::string fp = "fuse-notext|" + images_hash;
        run_stage("fuse", fp, {fused_dir}, [&] {
            auto images = load_bundle(dataset / "images");
            write_bundle(normalized_image_bundle(images), fused_dir);
        });
    } else {
        if (!fs::exists(dataset / "captions" / "manifest.json"))
            throw InputError("stage 'retrieve': missing caption bundle " +
                             (dataset / "captions").string());
        std::string captions_hash = tree_hash(dataset / "captions");
        fs::path retr_file = out / "retrieval.jsonl";
        {
            std::ostringstream fp;
            fp << "retrieve|" << images_hash << "|" << captions_hash << "|"
               << cfg.retrieval_k;
            run_stage("retrieve", fp.str(), {retr_file}, [&] {
                auto images = load_bundle(dataset / "images");
                auto corpus = load_bundle(dataset / "captions");
                write_retrievals(batch_retrieve(images, corpus, cfg.retrieval_k),
                                 retr_file);
            });
        }
        {
            std::ostringstream fp;
            fp << "fuse|" << images_hash << "|" << captions_hash << "|"
               << file_hash(retr_file) << "|" << cfg.renormalize_joint;
            run_stage("fuse", fp.str(), {fused_dir}, [&] {
                auto images = load_bundle(dataset / "images");
                auto corpus = load_bundle(dataset / "captions");
                auto retrievals = read_retrievals(retr_file);
                write_bundle(fuse_dataset(images, retrievals, corpus,
                                          cfg.renormalize_joint),
                             fused_dir);
            });
        }
    }

    // --- cluster ---
    fs::path model_file = out / "model.json";
    {
        std::ostringstream fp;
        fp << "cluster|" << tree_hash(fused_dir) << "|" << cfg.clusters << "|"
           << cfg.max_iters << "|" << cfg.tol << "|" << cfg.seed << "|"
           << cfg.freeze_known_centers << "|" << cfg.reseed_empty;
        run_stage("cluster", fp.str(), {model_file}, [&] {
            auto fused = load_bundle(fused_dir);
            ClusterConfig cc;
            cc.total_clusters = cfg.clusters;
            cc.max_iters = cfg.max_iters;
            cc.tol = cfg.tol;
            cc.seed = cfg.seed;
            cc.freeze_known_centers = cfg.freeze_known_centers;
            cc.reseed_empty = cfg.reseed_empty;
            write_model(fit(fused, cc), cc, model_file);
        });
    }

    // --- eval ---
    fs::path report_json = out / "report.json";
    fs::path report_tsv = out / "report.tsv";
    {
        std::ostringstream fp;
        fp << "eval|" << file_hash(model_file) << "|" << tree_hash(fused_dir) << "|"
           << tree_hash(dataset);
        run_stage("eval", fp.str(), {report_json, report_tsv}, [&] {
            auto fused = load_bundle(fused_dir);
            auto model = read_model(model_file);
            if (model.assignments.size() != fused.count)
                throw InputError("model/bundle size mismatch");
            auto old_classes = read_old_classes(dataset / "old_classes.json");
            auto idx = row_to_record(fused);
            std::vector<std::size_t> pred;
            std::vector<std::string> truth;
            for (std::size_t r = 0; r < fused.count; ++r) {
                const auto& rec = fused.records[idx[r]];
                if (rec.label) continue; // evaluation runs on D_U only
                if (!rec.class_truth)
                    throw InputError("unlabelled record '" + rec.id +
                                     "' has no class_truth");
                pred.push_back(model.assignments[r]);
                truth.push_back(*rec.class_truth);
            }
            auto report = subset_report(pred, truth, old_classes);
            write_report_json(report, report_json);
            write_report_tsv(report, report_tsv);
        });
    }

    RunResult res;
    {
        // reload so the returned report matches the (possibly cached) artifact
        auto fused = load_bundle(fused_dir);
        auto model = read_model(model_file);
        auto old_classes = read_old_classes(dataset / "old_classes.json");
        auto idx = row_to_record(fused);
        std::vector<std::size_t> pred;
        std::vector<std::string> truth;
        for (std::size_t r = 0; r < fused.count; ++r) {
            const auto& rec = fused.records[idx[r]];
            if (rec.label) continue;
            pred.push_back(model.assignments[r]);
            truth.push_back(*rec.class_truth);
        }
        res.report = subset_report(pred, truth, old_classes);
    }
    res.manifest = manifest;
    {
        std::ofstream f(out / "manifest.json");
        if (!f) throw InputError("cannot write " + (out / "manifest.json").string());
        f << manifest.dump(2) << "\n";
    }
    return res;
}

std::vector<SweepRow> topk_sweep(const PipelineConfig& cfg,
                                 std::vector<std::size_t> k_values) {
    if (k_values.empty()) throw InputError("sweep: k_values must be nonempty");
    std::vector<std::size_t> ks;
    for (std::size_t k : k_values) {
        if (std::find(ks.begin(), ks.end(), k) != ks.end()) {
            std::cerr << "warning: duplicate k=" << k << " ignored\n";
            continue;
        }
        ks.push_back(k);
    }

    fs::create_directories(cfg.out);
    std::vector<SweepRow> rows;
    for (std::size_t k : ks) {
        PipelineConfig sub = cfg;
        sub.retrieval_k = k;
        sub.out = (fs::path(cfg.out) / "sweep" / ("k" + std::to_string(k))).string();
        SweepRow row;
        row.k = k;
        try {
            row.report = run_pipeline(sub).report;
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }

    {
        std::ofstream f(fs::path(cfg.out) / "sweep.csv");
        if (!f) throw InputError("cannot write sweep.csv");
        f << "k,acc_all,acc_old,acc_new,status\n";
        for (const auto& r : rows) {
            if (r.ok)
                f << r.k << "," << format_acc(r.report.correct_all, r.report.n_all)
                  << "," << format_acc(r.report.correct_old, r.report.n_old) << ","
                  << format_acc(r.report.correct_new, r.report.n_new) << ",ok\n";
            else
                f << r.k << ",,,,failed\n";
        }
    }
    {
        json plot = {{"k", json::array()},
                     {"acc_all", json::array()},
                     {"acc_old", json::array()},
                     {"acc_new", json::array()}};
        for (const auto& r : rows) {
            if (!r.ok) continue;
            plot["k"].push_back(r.k);
            plot["acc_all"].push_back(r.report.acc_all());
            plot["acc_old"].push_back(r.report.acc_old() ? json(*r.report.acc_old())
                                                         : json(nullptr));
            plot["acc_new"].push_back(r.report.acc_new() ? json(*r.report.acc_new())
                                                         : json(nullptr));
        }
        std::ofstream f(fs::path(cfg.out) / "sweep_plot.json");
        if (!f) throw InputError("cannot write sweep_plot.json");
        f << plot.dump(2) << "\n";
    }
    return rows;
}

} // namespace ncd
