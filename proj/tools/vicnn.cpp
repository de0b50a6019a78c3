// vicnn: stimuli, data preparation, training, evaluation and sweeps.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "vicnn/vicnn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vicnn;

namespace {

// JSON config files: top-level keys are global options, nested objects are
// subcommand sections, e.g. {"threads": 2, "train": {"seed": 3}}.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        return dump(app, default_also).dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw CLI::ConversionError("config is not valid JSON: " + std::string(e.what()));
        }
        std::vector<CLI::ConfigItem> items;
        walk(j, {}, items);
        return items;
    }

private:
    static void walk(const json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
        for (const auto& [key, value] : j.items()) {
            if (value.is_object()) {
                auto p = parents;
                p.push_back(key);
                CLI::ConfigItem open{p, "++", {}};
                items.push_back(open);
                walk(value, p, items);
                items.push_back({p, "--", {}});
                continue;
            }
            CLI::ConfigItem item{parents, key, {}};
            auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
            if (value.is_array())
                for (const auto& v : value) item.inputs.push_back(text(v));
            else
                item.inputs.push_back(text(value));
            items.push_back(item);
        }
    }

    static json dump(const CLI::App* app, bool default_also) {
        json j = json::object();
        for (const auto* opt : app->get_options()) {
            if (opt->get_lnames().empty() || opt->get_lnames()[0] == "help" || opt->get_lnames()[0] == "config")
                continue;
            const auto results = opt->results();
            if (results.empty() && !default_also) continue;
            const std::string value = results.empty() ? opt->get_default_str() : results.back();
            j[opt->get_lnames()[0]] = value;
        }
        for (const auto* sub : app->get_subcommands({}))
            if (sub->parsed() || default_also) j[sub->get_name()] = dump(sub, default_also);
        return j;
    }
};

struct RunLog {
    std::string command;
    json config = json::object();
    json seeds = json::object();
    json inputs = json::object();
    json outputs = json::array();
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void input_file(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        inputs[p.string()] = Fnv1a{}.text(bytes).hex();
    }
    void output(const fs::path& p) { outputs.push_back(p.string()); }

    void write(const fs::path& path) const {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        json m{{"subcommand", command}, {"config", config},   {"seeds", seeds},
               {"inputs", inputs},      {"outputs", outputs}, {"timings", {{"wall_seconds", secs}}}};
        write_text(path, m.dump(2) + "\n");
    }
};

std::vector<std::size_t> parse_list(const std::string& text, const char* what) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const auto v = std::stoul(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::logic_error&) {
            throw UsageError(std::string("bad ") + what + " list '" + text + "'");
        }
    }
    if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
    return out;
}

std::vector<IllusionKind> parse_illusions(const std::string& text) {
    if (text == "all") return {all_illusions.begin(), all_illusions.end()};
    std::vector<IllusionKind> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(illusion_from_string(item));
    return out;
}

void write_mask(const fs::path& path, const Mask& m) {
    Tensor t(1, m.height(), m.width());
    for (std::size_t i = 0; i < m.size(); ++i) t[i] = m[i] ? 1.0f : 0.0f;
    write_png(path, t);
}

void print_verdicts(const std::vector<EffectReport>& reports) {
    std::cout << std::left << std::setw(28) << "stimulus" << std::setw(22) << "model";
    for (const char* c : channel_names) std::cout << std::setw(24) << c;
    std::cout << '\n';
    for (const auto& r : reports) {
        std::cout << std::setw(28) << stimulus_id(r.stimulus) << std::setw(22) << r.model;
        if (r.rejection) {
            std::cout << "rejected: " << *r.rejection << '\n';
            continue;
        }
        for (const auto& ch : r.channels) {
            std::ostringstream cell;
            cell << std::showpos << std::setprecision(3) << ch.effect << std::noshowpos << ' ' << to_string(ch.verdict);
            std::cout << std::setw(24) << cell.str();
        }
        std::cout << '\n';
    }
}

struct Globals {
    std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
};

struct TrainFlags {
    TrainJob job;
    std::string task = "denoise";

    void add(CLI::App* app, bool with_arch) {
        if (with_arch) {
            app->add_option("--arch", job.arch, "architecture name (see `zoo list`)")->capture_default_str();
            app->add_option("--kernel", job.kernel, "override every conv kernel size (odd; 0 keeps default)")
                ->capture_default_str();
        }
        app->add_option("--depth", job.depth, "deep-residual depth")->capture_default_str();
        app->add_option("--task", task, "denoise | deblur | cc")->capture_default_str();
        app->add_option("--corpus", job.corpus, "image directory")->required();
        app->add_option("--seed", job.train.seed, "initialization and shuffling seed")->capture_default_str();
        app->add_option("--data-seed", job.split.seed, "split and corruption seed")->capture_default_str();
        app->add_option("--epochs", job.train.max_epochs, "maximum epochs")->capture_default_str();
        app->add_option("--batch", job.train.batch_size, "mini-batch size")->capture_default_str();
        app->add_option("--lr", job.train.learning_rate, "Adam learning rate")->capture_default_str();
        app->add_option("--patience", job.train.patience, "evaluations without improvement before stopping")
            ->capture_default_str();
        app->add_option("--eval-every", job.train.eval_every, "epochs between validation passes")->capture_default_str();
        app->add_option("--canvas", job.load.canvas, "training image side in px")->capture_default_str();
        app->add_flag("--quad", job.load.quad, "split each corpus image into four quadrants");
        app->add_option("--train-frac", job.split.train, "training fraction")->capture_default_str();
        app->add_option("--val-frac", job.split.val, "validation fraction")->capture_default_str();
        app->add_option("--test-frac", job.split.test, "test fraction")->capture_default_str();
        app->add_option("--noise-sigma", job.corruption.noise_sigma, "denoise noise std (0-1 range)")
            ->capture_default_str();
        app->add_option("--blur-sigma", job.corruption.blur_sigma, "deblur Gaussian std in px")->capture_default_str();
        app->add_option("--max-train", job.max_train, "use at most n training images");
        app->add_option("--max-val", job.max_val, "use at most n validation images");
    }

    TrainJob resolve(const Globals& g) {
        job.train.task = task_from_string(task);
        job.train.threads = g.threads;
        return job;
    }
};

TrainOutcome train_verbose(const TrainJob& job) {
    std::cerr << "training " << job_spec(job).name << " on " << job.corpus.string() << " (" << to_string(job.train.task)
              << ", seed " << job.train.seed << ")\n";
    return run_train_job(job, [](const EpochRecord& r) {
        std::cerr << "  epoch " << r.epoch << " train " << r.train_loss;
        if (r.val_loss) std::cerr << " val " << *r.val_loss;
        std::cerr << '\n';
    });
}

fs::path manifest_path(const fs::path& out) {
    if (fs::is_directory(out)) return out / "run_manifest.json";
    return fs::path(out.string() + ".run_manifest.json");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Visual illusions in denoising/deblurring/color-constancy CNNs"};
    app.require_subcommand(1);
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config file; command-line flags win");
    Globals g;
    app.add_option("--threads", g.threads, "worker threads (default: logical cores)")->capture_default_str();

    RunLog log;
    std::function<void()> action;

    // stimuli
    auto* stimuli = app.add_subcommand("stimuli", "generate or validate illusion stimuli");
    stimuli->require_subcommand(1);
    StimulusSpec sspec;
    std::string skind;
    std::string sscales;
    fs::path sout;
    bool baselines = false;
    auto add_stim_flags = [&](CLI::App* a) {
        a->add_option("--kind", skind, "dungeon | hong-shevell | white | luminance-gradient | chevreul | all");
        a->add_option("--scale", sscales, "scale in px, or a comma list (default: baseline scale)");
        a->add_flag("--colored", sspec.colored, "color version");
        a->add_option("--height", sspec.height, "canvas height")->capture_default_str();
        a->add_option("--width", sspec.width, "canvas width")->capture_default_str();
        a->add_flag("--baselines", baselines, "all five illusions at baseline scale, gray and color");
    };
    auto stim_specs = [&] {
        std::vector<StimulusSpec> specs;
        if (baselines) {
            for (const auto k : all_illusions)
                for (const bool c : {false, true}) specs.push_back({k, baseline_scale(k), c, sspec.height, sspec.width});
            return specs;
        }
        if (skind.empty()) throw UsageError("--kind or --baselines is required");
        for (const auto k : parse_illusions(skind)) {
            const auto scales = sscales.empty() ? std::vector<std::size_t>{baseline_scale(k)} : parse_list(sscales, "scale");
            for (const auto s : scales) specs.push_back({k, s, sspec.colored, sspec.height, sspec.width});
        }
        return specs;
    };
    auto* sgen = stimuli->add_subcommand("gen", "write stimulus PNG, mask PNGs and metadata JSON");
    add_stim_flags(sgen);
    sgen->add_option("--out", sout, "output directory")->required();
    sgen->callback([&] {
        action = [&] {
            log.command = "stimuli gen";
            json all = json::array();
            for (const auto& spec : stim_specs()) {
                const auto st = generate(spec);
                const auto diag = validate_stimulus(st);
                if (!diag.ok) throw ValidationError(stimulus_id(spec) + " failed validation: " + diag.problems.front());
                const std::string id = stimulus_id(spec);
                write_png(sout / (id + ".png"), st.image);
                log.output(sout / (id + ".png"));
                for (std::size_t m = 0; m < st.masks.size(); ++m) {
                    const auto p = sout / (id + "_mask" + std::to_string(m) + ".png");
                    write_mask(p, st.masks[m]);
                    log.output(p);
                }
                write_text(sout / (id + ".json"), metadata(st).dump(2) + "\n");
                log.output(sout / (id + ".json"));
                all.push_back(to_json(spec));
                std::cout << id << " ok\n";
            }
            log.config = {{"stimuli", all}};
            log.write(sout / "run_manifest.json");
        };
    });
    auto* sval = stimuli->add_subcommand("validate", "check stimulus invariants and print diagnostics");
    add_stim_flags(sval);
    sval->callback([&] {
        action = [&] {
            bool ok = true;
            for (const auto& spec : stim_specs()) {
                const auto diag = validate_stimulus(generate(spec));
                std::cout << stimulus_id(spec) << (diag.ok ? " ok" : " FAILED") << '\n';
                for (const auto& p : diag.problems) std::cout << "  " << p << '\n';
                ok &= diag.ok;
            }
            if (!ok) throw ValidationError("stimulus validation failed");
        };
    });

    // data
    auto* data = app.add_subcommand("data", "corpus preparation");
    data->require_subcommand(1);
    fs::path dcorpus, dout;
    std::string dtask = "denoise";
    SplitConfig dsplit;
    LoadOptions dload;
    CorruptionConfig dcorr;
    std::size_t preview = 4;
    auto* dprep = data->add_subcommand("prepare", "split a corpus, write its manifest and a corruption preview");
    dprep->add_option("--corpus", dcorpus, "image directory")->required();
    dprep->add_option("--task", dtask, "denoise | deblur | cc")->capture_default_str();
    dprep->add_option("--data-seed", dsplit.seed, "split and corruption seed")->capture_default_str();
    dprep->add_option("--train-frac", dsplit.train, "training fraction")->capture_default_str();
    dprep->add_option("--val-frac", dsplit.val, "validation fraction")->capture_default_str();
    dprep->add_option("--test-frac", dsplit.test, "test fraction")->capture_default_str();
    dprep->add_option("--canvas", dload.canvas, "image side in px")->capture_default_str();
    dprep->add_flag("--quad", dload.quad, "split each image into four quadrants");
    dprep->add_option("--noise-sigma", dcorr.noise_sigma, "denoise noise std")->capture_default_str();
    dprep->add_option("--blur-sigma", dcorr.blur_sigma, "deblur Gaussian std")->capture_default_str();
    dprep->add_option("--preview", preview, "number of training pairs written as PNG")->capture_default_str();
    dprep->add_option("--out", dout, "output directory")->required();
    dprep->callback([&] {
        action = [&] {
            log.command = "data prepare";
            const auto task = task_from_string(dtask);
            const auto prepared = prepare(dcorpus, task, dsplit, dload, dcorr);
            write_text(dout / "manifest.json", prepared.manifest.dump(2) + "\n");
            log.output(dout / "manifest.json");
            const auto& train = prepared.split.train;
            for (std::size_t i = 0; i < std::min(preview, train.size()); ++i) {
                const auto pair = make_pair(train[i], task, sample_seed(dsplit.seed, train[i].key), dcorr);
                const auto stem = dout / "preview" / (sanitize(train[i].key) + "_");
                write_png(stem.string() + "input.png", pair.input);
                write_png(stem.string() + "target.png", pair.target);
                log.output(stem.string() + "input.png");
                log.output(stem.string() + "target.png");
            }
            log.config = {{"corpus", dcorpus.string()}, {"task", dtask}, {"canvas", dload.canvas}, {"quad", dload.quad}};
            log.seeds = {{"data_seed", dsplit.seed}};
            log.inputs["corpus_digest"] = prepared.manifest["corpus_digest"];
            log.write(dout / "run_manifest.json");
            std::cout << "train " << prepared.split.train.size() << ", val " << prepared.split.val.size() << ", test "
                      << prepared.split.test.size() << "; digest " << prepared.manifest["digest"].get<std::string>()
                      << '\n';
        };
    });
    std::size_t scount = 200, ssize = 128;
    std::uint64_t sseed = 0;
    bool sillum = false;
    auto* dsynth = data->add_subcommand("synth", "write a synthetic dead-leaves corpus");
    dsynth->add_option("--count", scount, "number of images")->capture_default_str();
    dsynth->add_option("--size", ssize, "image side in px")->capture_default_str();
    dsynth->add_option("--seed", sseed, "generator seed")->capture_default_str();
    dsynth->add_flag("--illuminants", sillum, "cast each image and write .illum sidecars");
    dsynth->add_option("--out", dout, "output directory")->required();
    dsynth->callback([&] {
        action = [&] {
            log.command = "data synth";
            for (const auto& p : synthesize_corpus(dout, scount, sseed, ssize, sillum)) log.output(p);
            log.config = {{"count", scount}, {"size", ssize}, {"illuminants", sillum}};
            log.seeds = {{"seed", sseed}};
            log.write(dout / "run_manifest.json");
            std::cout << "wrote " << scount << " images to " << dout.string() << '\n';
        };
    });

    // train
    auto* trn = app.add_subcommand("train", "train a model and write a checkpoint");
    TrainFlags tflags;
    tflags.add(trn, true);
    fs::path tout;
    trn->add_option("--out", tout, "checkpoint path")->required();
    trn->callback([&] {
        action = [&] {
            log.command = "train";
            const auto job = tflags.resolve(g);
            TrainOutcome outcome;
            try {
                outcome = train_verbose(job);
            } catch (const TrainingDiverged& e) {
                const fs::path diag = tout.string() + ".diverged";
                save_checkpoint(diag, e.diagnostic());
                std::cerr << "diagnostic checkpoint written to " << diag.string() << '\n';
                throw;
            }
            save_checkpoint(tout, outcome.checkpoint);
            log.output(tout);
            log.config = to_json(job);
            log.seeds = {{"seed", job.train.seed}, {"data_seed", job.split.seed}};
            log.inputs["corpus_digest"] = outcome.data_manifest["corpus_digest"];
            log.inputs["data_manifest_digest"] = outcome.data_manifest["digest"];
            log.write(manifest_path(tout));
            std::cout << "status " << outcome.checkpoint.meta["status"].get<std::string>() << ", best epoch "
                      << outcome.checkpoint.meta["best_epoch"] << ", val " << outcome.best_val << " (identity baseline "
                      << outcome.baseline_val << ")\n";
        };
    });

    // eval
    auto* ev = app.add_subcommand("eval", "run checkpoints on stimuli and write effects.csv plus profile plots");
    std::vector<fs::path> eckpts;
    std::string eillusion = "all", escales;
    double etau = default_tau;
    bool ecolored = false, eboth = false;
    fs::path eout;
    ev->add_option("--ckpt", eckpts, "checkpoint file(s)")->required()->check(CLI::ExistingFile);
    ev->add_option("--illusion", eillusion, "illusion name, comma list or all")->capture_default_str();
    ev->add_option("--scales", escales, "comma list of scales (default: each illusion's baseline)");
    ev->add_option("--tau", etau, "verdict threshold")->capture_default_str();
    ev->add_flag("--colored", ecolored, "color stimuli instead of grayscale");
    ev->add_flag("--both", eboth, "grayscale and color stimuli");
    ev->add_option("--out", eout, "output directory")->required();
    ev->callback([&] {
        action = [&] {
            log.command = "eval";
            struct Cell {
                std::size_t ck;
                StimulusSpec spec;
            };
            std::vector<Checkpoint> cks;
            for (const auto& p : eckpts) {
                cks.push_back(load_checkpoint(p));
                log.input_file(p);
            }
            std::vector<Cell> cells;
            for (std::size_t c = 0; c < cks.size(); ++c)
                for (const auto k : parse_illusions(eillusion)) {
                    const auto scales =
                        escales.empty() ? std::vector<std::size_t>{baseline_scale(k)} : parse_list(escales, "scale");
                    for (const auto s : scales)
                        for (const bool col : eboth ? std::vector<bool>{false, true} : std::vector<bool>{ecolored})
                            cells.push_back({c, {k, s, col, cks[c].spec.input.height, cks[c].spec.input.width}});
                }
            std::vector<EffectReport> reports(cells.size());
            detail::parallel_for(cells.size(), g.threads, [&](std::size_t i) {
                const auto& ck = cks[cells[i].ck];
                reports[i] = evaluate(ck, cells[i].spec, etau, eckpts[cells[i].ck].stem().string());
            });
            for (const auto& p : render_report(reports, eout)) log.output(p);
            print_verdicts(reports);
            log.config = {{"illusion", eillusion}, {"scales", escales}, {"tau", etau},
                          {"colored", ecolored},   {"both", eboth}};
            log.write(eout / "run_manifest.json");
        };
    });

    // sweep
    auto* sw = app.add_subcommand("sweep", "scale, kernel or architecture sweep for one illusion");
    std::string axis = "scale", wscales = "3,4,8,12", wkernels = "3,5,7,11,15", willusion = "dungeon";
    std::vector<fs::path> wckpts;
    double wtau = default_tau;
    bool wcolored = false;
    fs::path wout;
    TrainFlags wflags;
    sw->add_option("--axis", axis, "scale | kernel | architecture")->capture_default_str();
    sw->add_option("--ckpt", wckpts, "checkpoint (scale axis) or checkpoints (architecture axis)")
        ->check(CLI::ExistingFile);
    sw->add_option("--illusion", willusion, "illusion name")->capture_default_str();
    sw->add_option("--scales", wscales, "scale grid")->capture_default_str();
    sw->add_option("--kernels", wkernels, "kernel grid (kernel axis trains one base net per size)")
        ->capture_default_str();
    sw->add_option("--tau", wtau, "verdict threshold")->capture_default_str();
    sw->add_flag("--colored", wcolored, "color stimuli");
    sw->add_option("--out", wout, "output directory")->required();
    auto* wtrain = sw->add_option_group("kernel-axis training");
    wflags.add(wtrain, false);
    wtrain->get_option("--corpus")->required(false);
    sw->callback([&] {
        action = [&] {
            log.command = "sweep";
            const auto kind = illusion_from_string(willusion);
            SweepReport rep;
            if (axis == "scale") {
                if (wckpts.size() != 1) throw UsageError("scale sweep needs exactly one --ckpt");
                log.input_file(wckpts[0]);
                rep = sweep_scales(load_checkpoint(wckpts[0]), kind, parse_list(wscales, "scale"), wcolored, wtau,
                                   wckpts[0].stem().string());
            } else if (axis == "kernel") {
                if (wflags.job.corpus.empty()) throw UsageError("kernel sweep needs --corpus");
                auto job = wflags.resolve(g);
                job.arch = "base";
                log.config["training"] = to_json(job);
                auto provide = [&](std::size_t k) {
                    job.kernel = k;
                    const auto path = wout / "checkpoints" / ("base-k" + std::to_string(k) + ".ckpt");
                    if (fs::exists(path)) {
                        auto ck = load_checkpoint(path);
                        if (ck.meta.value("job", json()) == to_json(job)) {
                            std::cerr << "using cached " << path.string() << '\n';
                            return ck;
                        }
                    }
                    auto ck = train_verbose(job).checkpoint;
                    save_checkpoint(path, ck);
                    log.output(path);
                    return ck;
                };
                rep = sweep_kernels(provide, kind, parse_list(wkernels, "kernel"), wcolored, wtau);
            } else if (axis == "architecture") {
                if (wckpts.empty()) throw UsageError("architecture sweep needs --ckpt files");
                rep = SweepReport{"architecture", kind, {}, {}};
                for (std::size_t i = 0; i < wckpts.size(); ++i) {
                    log.input_file(wckpts[i]);
                    const auto ck = load_checkpoint(wckpts[i]);
                    rep.values.push_back(i + 1);
                    rep.cells.push_back(evaluate(ck,
                                                 {kind, baseline_scale(kind), wcolored, ck.spec.input.height,
                                                  ck.spec.input.width},
                                                 wtau, wckpts[i].stem().string()));
                }
            } else {
                throw UsageError("unknown sweep axis '" + axis + "'");
            }
            for (const auto& p : render_sweep(rep, wout)) log.output(p);
            print_verdicts(rep.cells);
            std::cout << "|E_Y| by " << rep.axis << ":";
            const auto series = abs_series(rep);
            for (std::size_t i = 0; i < series.size(); ++i)
                std::cout << ' ' << rep.values[i] << '=' << (series[i] ? format_double(*series[i]) : "rejected");
            std::cout << '\n';
            log.config.update({{"axis", axis}, {"illusion", willusion}, {"scales", wscales}, {"kernels", wkernels},
                               {"tau", wtau}, {"colored", wcolored}});
            log.seeds = {{"seed", wflags.job.train.seed}, {"data_seed", wflags.job.split.seed}};
            log.write(wout / "run_manifest.json");
        };
    });

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every engine op and model");
    std::uint64_t gseed = 0;
    std::size_t gseeds = 10;
    fs::path gout;
    gc->add_option("--seed", gseed, "first seed")->capture_default_str();
    gc->add_option("--seeds", gseeds, "number of consecutive seeds")->capture_default_str();
    gc->add_option("--out", gout, "directory for run_manifest.json and gradcheck.json");
    gc->callback([&] {
        action = [&] {
            log.command = "gradcheck";
            const auto rows = gradcheck::run_all(gseed, gseeds);
            bool ok = true;
            json table = json::array();
            std::cout << std::left << std::setw(26) << "check" << std::setw(16) << "max rel err" << std::setw(10)
                      << "checked" << std::setw(10) << "skipped" << "result\n";
            for (const auto& r : rows) {
                std::cout << std::setw(26) << r.name << std::setw(16) << std::setprecision(3) << r.max_rel_error
                          << std::setw(10) << r.checked << std::setw(10) << r.skipped << (r.passed() ? "ok" : "FAIL")
                          << '\n';
                ok &= r.passed();
                table.push_back({{"name", r.name},
                                 {"max_rel_error", r.max_rel_error},
                                 {"checked", r.checked},
                                 {"skipped", r.skipped},
                                 {"passed", r.passed()}});
            }
            if (!gout.empty()) {
                write_text(gout / "gradcheck.json", table.dump(2) + "\n");
                log.output(gout / "gradcheck.json");
                log.seeds = {{"seed", gseed}, {"seeds", gseeds}};
                log.write(gout / "run_manifest.json");
            }
            if (!ok) throw NumericError("gradient check failed (tolerance " + format_double(gradcheck::tolerance) + ")");
        };
    });

    // zoo
    auto* zoo_cmd = app.add_subcommand("zoo", "architecture catalog");
    zoo_cmd->require_subcommand(1);
    std::string zarch = "base";
    std::size_t zkernel = 0, zdepth = 8, zcanvas = 128;
    fs::path zout;
    auto add_zoo_flags = [&](CLI::App* a) {
        a->add_option("--arch", zarch, "architecture name")->capture_default_str();
        a->add_option("--kernel", zkernel, "override kernel size (0 keeps default)")->capture_default_str();
        a->add_option("--depth", zdepth, "deep-residual depth")->capture_default_str();
        a->add_option("--canvas", zcanvas, "input side in px")->capture_default_str();
    };
    auto zoo_spec = [&] {
        auto s = zoo::build(zarch, zkernel, zdepth);
        s.input.height = s.input.width = zcanvas;
        validate(s);
        return s;
    };
    zoo_cmd->add_subcommand("list", "list builders")->callback([&] {
        action = [&] {
            for (const auto& b : zoo::builders()) std::cout << std::left << std::setw(20) << b.name << b.description << '\n';
        };
    });
    auto* zshow = zoo_cmd->add_subcommand("show", "print the layer table and shape trace");
    add_zoo_flags(zshow);
    zshow->callback([&] {
        action = [&] {
            const auto s = zoo_spec();
            const auto trace = validate(s);
            std::size_t nparams = 0;
            for (const auto& p : init_params<float>(s, 0)) nparams += p.weights.size() + p.bias.size();
            std::cout << s.name << "  (" << nparams << " parameters)\n";
            if (!s.notes.empty()) std::cout << s.notes << '\n';
            std::cout << "  input  " << trace[0].str() << '\n';
            for (std::size_t i = 0; i < s.layers.size(); ++i)
                std::cout << "  " << std::setw(2) << i + 1 << ' ' << std::setw(60) << to_json(s.layers[i]).dump() << " -> "
                          << trace[i + 1].str() << '\n';
        };
    });
    auto* zinit = zoo_cmd->add_subcommand("init", "write an untrained checkpoint (identity weights for `identity`)");
    add_zoo_flags(zinit);
    std::uint64_t zseed = 0;
    zinit->add_option("--seed", zseed, "initialization seed")->capture_default_str();
    zinit->add_option("--out", zout, "checkpoint path")->required();
    zinit->callback([&] {
        action = [&] {
            log.command = "zoo init";
            const auto s = zoo_spec();
            auto params = zarch == "identity" ? zoo::identity_params() : init_params<float>(s, zseed);
            save_checkpoint(zout, Checkpoint{s, std::move(params), std::nullopt, {{"status", "untrained"}}});
            log.output(zout);
            log.config = {{"arch", zarch}, {"kernel", zkernel}, {"depth", zdepth}, {"canvas", zcanvas}};
            log.seeds = {{"seed", zseed}};
            log.write(manifest_path(zout));
            std::cout << zout.string() << '\n';
        };
    });
    auto* zexport = zoo_cmd->add_subcommand("export", "write the spec as JSON");
    add_zoo_flags(zexport);
    zexport->add_option("--out", zout, "JSON file")->required();
    zexport->callback([&] {
        action = [&] {
            write_text(zout, to_json(zoo_spec()).dump(2) + "\n");
            std::cout << zout.string() << '\n';
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(ErrorKind::usage);
    } catch (const vicnn::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    }
    try {
        if (action) action();
        return 0;
    } catch (const vicnn::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ErrorKind::data);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
