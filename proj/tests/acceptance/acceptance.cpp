// Acceptance run: prints one PASS/FAIL line per criterion (1-8).
//
//   acceptance [criterion ...]
//
// VICNN_CORPUS     image directory (default: synthesized dead-leaves corpus)
// VICNN_ARTIFACTS  output directory (default: ./acceptance_artifacts)

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "oracles.hpp"
#include "vicnn/vicnn.hpp"

namespace fs = std::filesystem;
using namespace vicnn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Context {
    fs::path corpus;
    fs::path out;
    std::size_t threads = 1;
    std::map<std::uint64_t, Checkpoint> denoisers;  // by seed, shared by criteria 4-6
    std::set<std::uint64_t> majority;               // seeds replicating both illusions
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

TrainJob recipe(const Context& ctx, Task task, std::uint64_t seed) {
    TrainJob job;
    job.corpus = ctx.corpus;
    job.train.task = task;
    job.train.seed = seed;
    job.train.batch_size = 4;
    job.train.learning_rate = 3e-3;
    job.train.max_epochs = 100;
    job.train.patience = 2;
    job.train.threads = ctx.threads;
    return job;
}

TrainOutcome train_logged(const TrainJob& job, const std::string& label) {
    const auto t0 = Clock::now();
    auto outcome = run_train_job(job, {}, std::cerr);
    std::cerr << "  " << label << ": " << outcome.checkpoint.meta["status"].get<std::string>() << " at epoch "
              << outcome.checkpoint.meta["history"].size() << ", val " << outcome.best_val << " vs baseline "
              << outcome.baseline_val << " (" << fmt(seconds_since(t0), 3) << " s)\n";
    return outcome;
}

const Checkpoint& denoiser(Context& ctx, std::uint64_t seed) {
    if (!ctx.denoisers.count(seed)) {
        auto outcome = train_logged(recipe(ctx, Task::denoise, seed), "denoise seed " + std::to_string(seed));
        save_checkpoint(ctx.out / "checkpoints" / ("denoise-seed" + std::to_string(seed) + ".ckpt"), outcome.checkpoint);
        ctx.denoisers.emplace(seed, std::move(outcome.checkpoint));
    }
    return ctx.denoisers.at(seed);
}

Outcome engine_correctness(Context&) {
    const auto t0 = Clock::now();
    const auto rows = gradcheck::run_all(0, 10);
    double worst_grad = 0.0;
    std::string failed;
    for (const auto& r : rows) {
        worst_grad = std::max(worst_grad, r.max_rel_error);
        if (!r.passed()) failed += " " + r.name;
    }
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst_conv = 0.0, worst_float_rel = 0.0;
    for (const std::size_t k : {1, 3, 5, 7, 11, 15})
        for (const std::size_t d : {1, 2, 4, 8})
            for (const std::size_t s : {1, 2}) {
                BasicTensor<double> x(2, 17, 19);
                for (auto& v : x.values()) v = u(rng);
                ConvParams<double> p(3, 2, k, s, d);
                for (auto& w : p.weights) w = u(rng);
                for (auto& b : p.bias) b = u(rng);
                const auto y = conv2d_forward(x, p);
                const auto ref = oracle::naive_conv(x, p);
                if (y.shape() != ref.shape()) return {false, "conv shape mismatch at k=" + std::to_string(k)};
                for (std::size_t n = 0; n < y.size(); ++n) worst_conv = std::max(worst_conv, std::abs(y[n] - ref[n]));
                // float instantiation, reported relative to the output magnitude
                ConvParams<float> pf(3, 2, k, s, d);
                pf.weights.assign(p.weights.begin(), p.weights.end());
                pf.bias.assign(p.bias.begin(), p.bias.end());
                const auto yf = conv2d_forward(x.cast<float>(), pf);
                const auto reff = oracle::naive_conv(x.cast<float>().cast<double>(), [&] {
                    ConvParams<double> q(3, 2, k, s, d);
                    q.weights.assign(pf.weights.begin(), pf.weights.end());
                    q.bias.assign(pf.bias.begin(), pf.bias.end());
                    return q;
                }());
                for (std::size_t n = 0; n < yf.size(); ++n)
                    worst_float_rel = std::max(worst_float_rel, std::abs(static_cast<double>(yf[n]) - reff[n]) /
                                                                    std::max(1.0, std::abs(reff[n])));
            }
    const double secs = seconds_since(t0);
    const bool pass = failed.empty() && worst_conv < 1e-5 && secs < 60.0;
    std::string detail = "max gradient rel err " + fmt(worst_grad, 3) + " over " + std::to_string(rows.size()) +
                         " checks x 10 seeds, conv vs oracle " + fmt(worst_conv, 3) + " (float path rel " +
                         fmt(worst_float_rel, 3) + "), " + fmt(secs, 3) + " s";
    if (!failed.empty()) detail += "; failing:" + failed;
    return {pass, detail};
}

Outcome stimulus_suite(Context& ctx) {
    const auto t0 = Clock::now();
    std::string problems;
    std::size_t checked = 0;
    for (const auto kind : all_illusions)
        for (const bool colored : {false, true}) {
            const auto spec = baseline_spec(kind, colored);
            const auto a = generate(spec), b = generate(spec);
            const auto diag = validate_stimulus(a);
            if (!diag.ok) problems += " " + stimulus_id(spec) + ": " + diag.problems.front();
            if (a.image.values() != b.image.values() || a.masks.size() != b.masks.size())
                problems += " " + stimulus_id(spec) + ": not deterministic";
            for (std::size_t m = 0; m < a.masks.size() && m < b.masks.size(); ++m)
                if (a.masks[m].values() != b.masks[m].values()) problems += " " + stimulus_id(spec) + ": masks differ";
            if (kind != IllusionKind::chevreul)
                for (const auto& mask : a.masks)
                    for (const double mean : masked_means(a.image, mask))
                        if (mean != 0.5) problems += " " + stimulus_id(spec) + ": target mean " + fmt(mean, 17);
            write_png(ctx.out / "stimuli" / (stimulus_id(spec) + ".png"), a.image);
            ++checked;
        }
    const double secs = seconds_since(t0);
    const bool pass = problems.empty() && secs < 10.0;
    return {pass, std::to_string(checked) + " baseline stimuli valid and byte-deterministic, " + fmt(secs, 3) + " s" +
                      (problems.empty() ? "" : ";" + problems)};
}

Outcome oracle_self_test(Context& ctx) {
    std::string problems;
    double min_abs = 1e9;
    std::vector<EffectReport> reports;
    auto check = [&](const EffectReport& r) {
        for (std::size_t c = 0; c < 4; ++c) {
            const auto& ch = r.channels[c];
            if (ch.expected == 0) continue;
            min_abs = std::min(min_abs, std::abs(ch.effect));
            if (ch.verdict != Verdict::replicated)
                problems += " " + r.model + "/" + stimulus_id(r.stimulus) + "/" + channel_names[c] + " " +
                            to_string(ch.verdict) + " (E " + fmt(ch.effect) + ")";
        }
        reports.push_back(r);
    };
    for (const bool colored : {false, true}) {
        for (const auto kind : {IllusionKind::dungeon, IllusionKind::hong_shevell, IllusionKind::white}) {
            const auto st = generate(baseline_spec(kind, colored));
            check(score(oracle::box_blur3(st.image), st, "box-blur", 3));
        }
        for (const auto kind : {IllusionKind::luminance_gradient, IllusionKind::chevreul}) {
            const auto st = generate(baseline_spec(kind, colored));
            check(score(oracle::difference_of_boxes(st.image), st, "dob", 9));
        }
    }
    render_report(reports, ctx.out / "criterion3");
    return {problems.empty(), "box blur assimilation and DoB contrast/overshoot replicated on all expected channels, "
                              "min |E| " + fmt(min_abs, 3) + (problems.empty() ? "" : ";" + problems)};
}

Outcome training_sanity(Context& ctx) {
    const auto t0 = Clock::now();
    denoiser(ctx, 0);
    const auto& ck = ctx.denoisers.at(0);
    const double dn_base = ck.meta["baseline_val_loss"];
    const auto& h = ck.meta["history"];
    const double dn_val = h[ck.meta["best_epoch"].get<std::size_t>() - 1]["val_loss"];
    const auto deblur = train_logged(recipe(ctx, Task::deblur, 0), "deblur seed 0");
    save_checkpoint(ctx.out / "checkpoints" / "deblur-seed0.ckpt", deblur.checkpoint);
    const double secs = seconds_since(t0);
    const double dn_red = 1.0 - dn_val / dn_base, db_red = 1.0 - deblur.best_val / deblur.baseline_val;
    const bool pass = dn_red >= 0.4 && db_red >= 0.4 && secs < 1800.0;
    return {pass, "denoise val " + fmt(dn_val) + " vs identity " + fmt(dn_base) + " (" + fmt(100 * dn_red, 3) +
                      "% lower), deblur val " + fmt(deblur.best_val) + " vs blurred input " +
                      fmt(deblur.baseline_val) + " (" + fmt(100 * db_red, 3) + "% lower), need >= 40%, " +
                      fmt(secs, 4) + " s"};
}

Outcome replication(Context& ctx) {
    std::string detail;
    std::size_t count = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto& ck = denoiser(ctx, seed);
        std::vector<EffectReport> reports;
        bool both = true;
        for (const auto kind : {IllusionKind::dungeon, IllusionKind::hong_shevell}) {
            reports.push_back(evaluate(ck, baseline_spec(kind), default_tau, "denoise-seed" + std::to_string(seed)));
            both &= reports.back().channels[3].verdict == Verdict::replicated;
        }
        for (const auto kind : {IllusionKind::white, IllusionKind::luminance_gradient, IllusionKind::chevreul})
            for (const bool colored : {false, true})
                reports.push_back(evaluate(ck, baseline_spec(kind, colored), default_tau,
                                           "denoise-seed" + std::to_string(seed)));
        for (const auto kind : {IllusionKind::dungeon, IllusionKind::hong_shevell})
            reports.push_back(evaluate(ck, baseline_spec(kind, true), default_tau, "denoise-seed" + std::to_string(seed)));
        render_report(reports, ctx.out / "criterion5" / ("seed" + std::to_string(seed)));
        detail += " s" + std::to_string(seed) + "(" + fmt(reports[0].channels[3].effect, 3) + "," +
                  fmt(reports[1].channels[3].effect, 3) + ")";
        if (both) {
            ++count;
            ctx.majority.insert(seed);
        }
    }
    return {count >= 3, std::to_string(count) + "/5 seeds replicate gray Dungeon and Hong-Shevell; E_Y" + detail};
}

Outcome scale_sweep(Context& ctx) {
    if (ctx.majority.empty()) replication(ctx);
    if (ctx.majority.empty()) return {false, "no majority-seed models from criterion 5"};
    std::string detail;
    bool pass = true;
    for (const auto seed : ctx.majority) {
        const auto dir = ctx.out / "criterion6" / ("seed" + std::to_string(seed));
        const auto sweep = sweep_scales(denoiser(ctx, seed), IllusionKind::dungeon, {3, 4, 8, 12}, false, default_tau,
                                        "denoise-seed" + std::to_string(seed));
        render_sweep(sweep, dir);
        const auto series = abs_series(sweep);
        const bool complete = sweep.cells.size() == 4 && fs::exists(dir / "sweep_scale_dungeon.csv") &&
                              fs::exists(dir / "sweep_scale_dungeon.svg");
        const bool ok = complete && series[1] && series[2] && *series[2] < *series[1];
        pass &= ok;
        detail += " s" + std::to_string(seed) + "[";
        for (std::size_t i = 0; i < series.size(); ++i)
            detail += (i ? " " : "") + std::to_string(sweep.values[i]) + ":" + (series[i] ? fmt(*series[i], 3) : "rej");
        detail += "]";
    }
    return {pass, "|E_Y| at scale 8 < scale 4 for every majority seed;" + detail};
}

Outcome zoo_validation(Context& ctx) {
    std::vector<std::pair<std::string, std::size_t>> cases;
    for (const auto& b : zoo::builders()) cases.emplace_back(b.name, 0);
    for (const std::size_t k : {3, 5, 7, 11, 15}) cases.emplace_back("base", k);
    std::string problems;
    for (const auto& [arch, kernel] : cases) {
        TrainJob job = recipe(ctx, Task::denoise, 1);
        job.arch = arch;
        job.kernel = kernel;
        const std::string label = kernel ? arch + "-k" + std::to_string(kernel) : arch;
        try {
            validate(zoo::build(arch, kernel));  // full 128 px canvas
            job.load.canvas = 64;
            job.max_train = 4;
            job.max_val = 2;
            job.train.max_epochs = 2;
            job.train.patience = 2;
            job.train.batch_size = 2;
            job.train.learning_rate = 1e-3;
            const auto outcome = run_train_job(job, {}, std::cerr);
            const auto& ck = outcome.checkpoint;
            if (ck.meta["history"].size() < 2) problems += " " + label + ": fewer than 2 epochs";
            const auto path = ctx.out / "criterion7" / (label + ".ckpt");
            save_checkpoint(path, ck);
            const auto loaded = load_checkpoint(path);
            if (!(loaded == ck) || serialize_checkpoint(loaded) != serialize_checkpoint(ck))
                problems += " " + label + ": checkpoint round trip differs";
            std::cerr << "  " << label << ": ok, val " << outcome.best_val << '\n';
        } catch (const std::exception& e) {
            problems += " " + label + ": " + e.what();
        }
    }
    return {problems.empty(), std::to_string(cases.size()) +
                                  " specs validated at 128 px, trained 2 epochs at 64 px, round-tripped bit-exactly" +
                                  (problems.empty() ? "" : ";" + problems)};
}

Outcome reproducibility(Context& ctx) {
    auto once = [&](const std::string& tag) {
        TrainJob job = recipe(ctx, Task::denoise, 7);
        job.train.max_epochs = 3;
        const auto outcome = run_train_job(job, {}, std::cerr);
        const auto dir = ctx.out / "criterion8" / tag;
        save_checkpoint(dir / "model.ckpt", outcome.checkpoint);
        std::vector<EffectReport> reports;
        for (const auto kind : all_illusions)
            for (const bool colored : {false, true})
                reports.push_back(evaluate(outcome.checkpoint, baseline_spec(kind, colored), default_tau, "repro"));
        render_report(reports, dir);
        std::ifstream ck(dir / "model.ckpt", std::ios::binary), csv(dir / "effects.csv", std::ios::binary);
        return std::make_tuple(std::string(std::istreambuf_iterator<char>(ck), {}),
                               std::string(std::istreambuf_iterator<char>(csv), {}),
                               outcome.data_manifest["digest"].get<std::string>());
    };
    const auto [ck1, csv1, m1] = once("run1");
    const auto [ck2, csv2, m2] = once("run2");
    const bool pass = ck1 == ck2 && csv1 == csv2 && m1 == m2;
    return {pass, std::string("checkpoints ") + (ck1 == ck2 ? "identical" : "DIFFER") + " (" +
                      std::to_string(ck1.size()) + " bytes), CSV " + (csv1 == csv2 ? "identical" : "DIFFERS") +
                      ", data manifest " + m1};
}

}  // namespace

int main(int argc, char** argv) {
    Context ctx;
    ctx.threads = std::max(1u, std::thread::hardware_concurrency());
    const char* art = std::getenv("VICNN_ARTIFACTS");
    ctx.out = art ? fs::path(art) : fs::current_path() / "acceptance_artifacts";
    fs::create_directories(ctx.out);
    if (const char* c = std::getenv("VICNN_CORPUS")) {
        ctx.corpus = c;
    } else {
        ctx.corpus = ctx.out / "corpus";
        if (!fs::exists(ctx.corpus / "leaves_0199.png")) {
            std::cerr << "synthesizing 200-image corpus in " << ctx.corpus.string() << '\n';
            synthesize_corpus(ctx.corpus, 200, 0);
        }
    }

    const std::vector<std::pair<std::string, Outcome (*)(Context&)>> criteria{
        {"engine correctness", engine_correctness}, {"stimulus suite", stimulus_suite},
        {"oracle-filter self-test", oracle_self_test}, {"training sanity", training_sanity},
        {"qualitative replication", replication},     {"scale-sweep harness", scale_sweep},
        {"architecture zoo", zoo_validation},          {"reproducibility", reproducibility}};
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i) selected.insert(static_cast<std::size_t>(std::atoi(argv[i])));

    nlohmann::json summary = nlohmann::json::object();
    bool all = true;
    for (std::size_t n = 1; n <= criteria.size(); ++n) {
        if (!selected.empty() && !selected.count(n)) continue;
        std::cerr << "criterion " << n << ": " << criteria[n - 1].first << '\n';
        Outcome o;
        try {
            o = criteria[n - 1].second(ctx);
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        all &= o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << criteria[n - 1].first
                  << "): " << o.detail << std::endl;
        summary[std::to_string(n)] = {{"name", criteria[n - 1].first}, {"pass", o.pass}, {"detail", o.detail}};
    }
    write_text(ctx.out / "acceptance.json", summary.dump(2) + "\n");
    return all ? 0 : 1;
}
