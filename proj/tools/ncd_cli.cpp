// Command-line front end: synthetic benchmark generation, stage-wise
// execution, full pipeline runs, top-k sweeps, loss gradient checks, and
// bundle validation.
//
// Exit codes: 0 success, 1 internal error, 2 bad input/config, 3 validation
// failure.

#include "ncd/bundle.hpp"
#include "ncd/error.hpp"
#include "ncd/evaluation.hpp"
#include "ncd/fusion.hpp"
#include "ncd/losses.hpp"
#include "ncd/pipeline.hpp"
#include "ncd/retrieval.hpp"
#include "ncd/rng.hpp"
#include "ncd/sskmeans.hpp"
#include "ncd/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ExitCode {
    int code;
};

void print_report(const ncd::EvalReport& r) {
    std::cout << "acc_all=" << ncd::format_acc(r.correct_all, r.n_all)
              << " acc_old=" << ncd::format_acc(r.correct_old, r.n_old)
              << " acc_new=" << ncd::format_acc(r.correct_new, r.n_new)
              << " n_all=" << r.n_all << " n_old=" << r.n_old
              << " n_new=" << r.n_new << "\n";
}

ncd::LossBatch random_batch(std::size_t b, std::size_t d, double tau,
                            double lambda, bool labelled, ncd::SplitMix64& rng) {
    ncd::LossBatch batch;
    batch.b = b;
    batch.d = d;
    batch.tau = tau;
    batch.lambda = lambda;
    auto fill = [&](std::vector<double>& m) {
        m.resize(b * d);
        for (std::size_t i = 0; i < b; ++i) {
            double norm = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                m[i * d + j] = rng.next_gaussian();
                norm += m[i * d + j] * m[i * d + j];
            }
            norm = std::sqrt(norm);
            for (std::size_t j = 0; j < d; ++j) m[i * d + j] /= norm;
        }
    };
    fill(batch.z);
    fill(batch.zp);
    batch.labels.assign(b, -1);
    if (labelled) {
        // two labelled classes, pairs guaranteed
        for (std::size_t i = 0; i < b; ++i)
            if (i < 4 || rng.next_double() < 0.5)
                batch.labels[i] = static_cast<int>(i % 2);
    }
    return batch;
}

double fd_max_rel_err(const ncd::LossBatch& batch) {
    auto grad = ncd::total_loss_grad(batch);
    const double h = 1e-4;
    double worst = 0.0;
    auto run = [&](bool anchor) {
        ncd::LossBatch tmp = batch;
        auto& param = anchor ? tmp.z : tmp.zp;
        const auto& analytic = anchor ? grad.dz : grad.dzp;
        for (std::size_t e = 0; e < param.size(); ++e) {
            double orig = param[e];
            param[e] = orig + h;
            double fp = ncd::total_loss(tmp);
            param[e] = orig - h;
            double fm = ncd::total_loss(tmp);
            param[e] = orig;
            double fd = (fp - fm) / (2.0 * h);
            double err = std::abs(fd - analytic[e]) /
                         std::max(1.0, std::abs(analytic[e]));
            worst = std::max(worst, err);
        }
    };
    run(true);
    run(false);
    return worst;
}

int cmd_loss_check(std::size_t batches, std::uint64_t seed) {
    ncd::SplitMix64 rng(seed);
    const double lambdas[] = {0.0, 0.25, 1.0};
    const double taus[] = {0.07, 1.0};
    bool all_ok = true;
    std::cout << "batch\tB\td\tlambda\ttau\tmax_rel_err\tstatus\n";
    for (std::size_t t = 0; t < batches; ++t) {
        std::size_t b = 2 + static_cast<std::size_t>(rng.next_below(15));
        std::size_t d = (rng.next_below(2) == 0) ? 3 : 8;
        double lambda = lambdas[t % 3];
        double tau = taus[t % 2];
        if (b < 4 && lambda > 0.0) b = 4; // labelled pairs need room
        auto batch = random_batch(b, d, tau, lambda, lambda > 0.0, rng);
        double err = fd_max_rel_err(batch);
        bool ok = err < 1e-4;
        all_ok = all_ok && ok;
        std::cout << t << "\t" << b << "\t" << d << "\t" << lambda << "\t" << tau
                  << "\t" << err << "\t" << (ok ? "pass" : "FAIL") << "\n";
    }
    std::cout << (all_ok ? "loss-check: all batches passed\n"
                         : "loss-check: FAILURES\n");
    return all_ok ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Retrieval-augmented novel-class-discovery pipeline"};
    app.require_subcommand(1);

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "Generate a synthetic benchmark dataset");
    ncd::PipelineConfig scfg;
    std::string synth_out = "dataset";
    synth->add_option("--out", synth_out, "Output dataset directory");
    synth->add_option("--classes", scfg.classes);
    synth->add_option("--known", scfg.known);
    synth->add_option("--dim-img", scfg.dim_img);
    synth->add_option("--dim-txt", scfg.dim_txt);
    synth->add_option("--per-class", scfg.per_class);
    synth->add_option("--captions-per-class", scfg.captions_per_class);
    synth->add_option("--distractors-per-class", scfg.distractors_per_class);
    synth->add_option("--separation", scfg.separation);
    synth->add_option("--text-noise", scfg.text_noise);
    synth->add_option("--distractor-noise", scfg.distractor_noise);
    synth->add_option("--labeled-fraction", scfg.labeled_fraction);
    synth->add_option("--seed", scfg.seed);

    // ---- retrieve ----
    auto* retrieve = app.add_subcommand("retrieve", "Top-k cross-modal retrieval");
    std::string r_images, r_corpus, r_out = "retrieval.jsonl";
    std::size_t r_k = 3;
    retrieve->add_option("--images", r_images)->required();
    retrieve->add_option("--corpus", r_corpus)->required();
    retrieve->add_option("--k", r_k);
    retrieve->add_option("--out", r_out);

    // ---- fuse ----
    auto* fuse = app.add_subcommand("fuse", "Fuse image and text views");
    std::string f_images, f_corpus, f_retr, f_out = "fused";
    bool f_renorm = false;
    fuse->add_option("--images", f_images)->required();
    fuse->add_option("--corpus", f_corpus)->required();
    fuse->add_option("--retrievals", f_retr)->required();
    fuse->add_option("--out", f_out);
    fuse->add_flag("--renormalize-joint", f_renorm);

    // ---- cluster ----
    auto* cluster = app.add_subcommand("cluster", "Semi-supervised k-means");
    std::string c_bundle, c_out = "model.json";
    ncd::ClusterConfig ccfg;
    cluster->add_option("--bundle", c_bundle)->required();
    cluster->add_option("--clusters", ccfg.total_clusters)->required();
    cluster->add_option("--max-iters", ccfg.max_iters);
    cluster->add_option("--tol", ccfg.tol);
    cluster->add_option("--seed", ccfg.seed);
    cluster->add_flag("--freeze-known-centers", ccfg.freeze_known_centers);
    cluster->add_flag("--reseed-empty", ccfg.reseed_empty);
    cluster->add_option("--out", c_out);

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "Hungarian-matching clustering accuracy");
    std::string e_model, e_bundle, e_old, e_out = "report";
    eval->add_option("--model", e_model)->required();
    eval->add_option("--bundle", e_bundle)->required();
    eval->add_option("--old-classes", e_old)->required();
    eval->add_option("--out", e_out, "Report path prefix (.json/.tsv appended)");

    // ---- run / sweep ----
    auto add_pipeline_flags = [](CLI::App* cmd, std::string& config_path,
                                 std::vector<std::string>& sets) {
        cmd->add_option("--config", config_path, "key = value config file");
        cmd->add_option("--set", sets,
                        "Override a config key, e.g. --set separation=4.5");
    };
    auto* run = app.add_subcommand("run", "Run the full pipeline");
    std::string run_config;
    std::vector<std::string> run_sets;
    add_pipeline_flags(run, run_config, run_sets);
    std::string run_out, run_input;
    std::uint64_t run_seed = 0;
    std::size_t run_k = 0, run_clusters = 0;
    bool run_notext = false;
    run->add_option("--out", run_out);
    run->add_option("--input", run_input);
    auto* o_seed = run->add_option("--seed", run_seed);
    auto* o_k = run->add_option("--k", run_k);
    auto* o_clusters = run->add_option("--clusters", run_clusters);
    run->add_flag("--no-text", run_notext);

    auto* sweep = app.add_subcommand("sweep", "Pipeline sweep over retrieval k");
    std::string sweep_config;
    std::vector<std::string> sweep_sets;
    add_pipeline_flags(sweep, sweep_config, sweep_sets);
    std::string sweep_out;
    std::vector<std::size_t> sweep_ks;
    std::uint64_t sweep_seed = 0;
    sweep->add_option("--out", sweep_out);
    auto* so_seed = sweep->add_option("--seed", sweep_seed);
    sweep->add_option("--k-values", sweep_ks, "Retrieval k values")
        ->required()
        ->delimiter(',');

    // ---- loss-check ----
    auto* loss = app.add_subcommand("loss-check",
                                    "Finite-difference check of loss gradients");
    std::size_t loss_batches = 24;
    std::uint64_t loss_seed = 0;
    loss->add_option("--batches", loss_batches);
    loss->add_option("--seed", loss_seed);

    // ---- validate ----
    auto* validate = app.add_subcommand("validate", "Validate a bundle directory");
    std::string v_bundle;
    validate->add_option("bundle", v_bundle, "Bundle directory")->required();

    try {
        app.parse(argc, argv);

        if (*synth) {
            if (scfg.known == 0 || scfg.known >= scfg.classes)
                throw ncd::InputError("known must be in [1, classes)");
            ncd::MixtureSpec ms;
            ms.num_classes = scfg.classes;
            ms.d_img = scfg.dim_img;
            ms.d_txt = scfg.dim_txt;
            ms.samples_per_class = scfg.per_class;
            ms.captions_per_class = scfg.captions_per_class;
            ms.distractors_per_class = scfg.distractors_per_class;
            ms.class_separation = scfg.separation;
            ms.text_noise = scfg.text_noise;
            ms.distractor_noise = scfg.distractor_noise;
            ms.seed = scfg.seed;
            auto data = ncd::generate_mixture(ms);
            ncd::SplitSpec sp;
            for (std::size_t c = 0; c < scfg.known; ++c)
                sp.known_classes.insert(ncd::class_name(c));
            sp.labeled_fraction = scfg.labeled_fraction;
            sp.seed = scfg.seed + 1;
            auto labelled = ncd::apply_split_labels(data.images, sp);
            fs::create_directories(synth_out);
            ncd::write_bundle(labelled, fs::path(synth_out) / "images");
            ncd::write_bundle(data.captions, fs::path(synth_out) / "captions");
            std::ofstream(fs::path(synth_out) / "truth.json")
                << json(data.truth).dump(2) << "\n";
            json oc = {{"old_classes", std::vector<std::string>(
                                           sp.known_classes.begin(),
                                           sp.known_classes.end())}};
            std::ofstream(fs::path(synth_out) / "old_classes.json")
                << oc.dump(2) << "\n";
            std::cout << "wrote " << synth_out << " (" << data.images.count
                      << " images, " << data.captions.count << " captions)\n";
        } else if (*retrieve) {
            auto images = ncd::load_bundle(r_images);
            auto corpus = ncd::load_bundle(r_corpus);
            ncd::write_retrievals(ncd::batch_retrieve(images, corpus, r_k), r_out);
            std::cout << "wrote " << r_out << " (" << images.count << " queries)\n";
        } else if (*fuse) {
            auto images = ncd::load_bundle(f_images);
            auto corpus = ncd::load_bundle(f_corpus);
            auto retr = ncd::read_retrievals(f_retr);
            ncd::write_bundle(ncd::fuse_dataset(images, retr, corpus, f_renorm), f_out);
            std::cout << "wrote " << f_out << "\n";
        } else if (*cluster) {
            auto bundle = ncd::load_bundle(c_bundle);
            auto model = ncd::fit(bundle, ccfg);
            ncd::write_model(model, ccfg, c_out);
            std::cout << "wrote " << c_out << " (iterations=" << model.iterations_run
                      << " converged=" << (model.converged ? "yes" : "no")
                      << " inertia="
                      << (model.inertia_trace.empty() ? 0.0
                                                      : model.inertia_trace.back())
                      << ")\n";
            for (const auto& w : model.warnings) std::cerr << "warning: " << w << "\n";
        } else if (*eval) {
            auto bundle = ncd::load_bundle(e_bundle);
            auto model = ncd::read_model(e_model);
            if (model.assignments.size() != bundle.count)
                throw ncd::InputError("model/bundle size mismatch");
            std::ifstream f(e_old);
            if (!f) throw ncd::InputError("cannot open " + e_old);
            json j;
            f >> j;
            auto oc = j.at("old_classes").get<std::vector<std::string>>();
            std::set<std::string> old_classes(oc.begin(), oc.end());
            auto idx = ncd::row_to_record(bundle);
            std::vector<std::size_t> pred;
            std::vector<std::string> truth;
            for (std::size_t r = 0; r < bundle.count; ++r) {
                const auto& rec = bundle.records[idx[r]];
                if (rec.label) continue;
                if (!rec.class_truth)
                    throw ncd::InputError("unlabelled record '" + rec.id +
                                          "' has no class_truth");
                pred.push_back(model.assignments[r]);
                truth.push_back(*rec.class_truth);
            }
            auto report = ncd::subset_report(pred, truth, old_classes);
            ncd::write_report_json(report, e_out + ".json");
            ncd::write_report_tsv(report, e_out + ".tsv");
            print_report(report);
        } else if (*run) {
            ncd::PipelineConfig cfg;
            if (!run_config.empty()) cfg = ncd::load_config(run_config);
            for (const auto& s : run_sets) {
                auto eq = s.find('=');
                if (eq == std::string::npos)
                    throw ncd::InputError("--set expects key=value, got '" + s + "'");
                ncd::apply_config_line(cfg, s.substr(0, eq), s.substr(eq + 1));
            }
            if (!run_out.empty()) cfg.out = run_out;
            if (!run_input.empty()) cfg.input = run_input;
            if (o_seed->count()) cfg.seed = run_seed;
            if (o_k->count()) cfg.retrieval_k = run_k;
            if (o_clusters->count()) cfg.clusters = run_clusters;
            if (run_notext) cfg.no_text = true;
            auto res = ncd::run_pipeline(cfg);
            print_report(res.report);
        } else if (*sweep) {
            ncd::PipelineConfig cfg;
            if (!sweep_config.empty()) cfg = ncd::load_config(sweep_config);
            for (const auto& s : sweep_sets) {
                auto eq = s.find('=');
                if (eq == std::string::npos)
                    throw ncd::InputError("--set expects key=value, got '" + s + "'");
                ncd::apply_config_line(cfg, s.substr(0, eq), s.substr(eq + 1));
            }
            if (!sweep_out.empty()) cfg.out = sweep_out;
            if (so_seed->count()) cfg.seed = sweep_seed;
            auto rows = ncd::topk_sweep(cfg, sweep_ks);
            for (const auto& r : rows) {
                std::cout << "k=" << r.k << " ";
                if (r.ok)
                    print_report(r.report);
                else
                    std::cout << "FAILED: " << r.error << "\n";
            }
        } else if (*loss) {
            throw ExitCode{cmd_loss_check(loss_batches, loss_seed)};
        } else if (*validate) {
            auto bundle = ncd::load_bundle(v_bundle);
            auto violations = ncd::validate_bundle(bundle);
            if (violations.empty()) {
                std::cout << "ok: " << bundle.count << " rows, dim " << bundle.dim
                          << "\n";
            } else {
                for (const auto& v : violations) std::cout << v << "\n";
                return 3;
            }
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const ExitCode& e) {
        return e.code;
    } catch (const ncd::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ncd::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
