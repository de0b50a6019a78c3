#pragma once

// Corpus -> split -> corrupted pairs -> trained checkpoint, as one job.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "vicnn/data.hpp"
#include "vicnn/trainer.hpp"
#include "vicnn/zoo.hpp"

namespace vicnn {

struct TrainJob {
    std::string arch = "base";
    std::size_t kernel = 0;  // 0 keeps the builder's default
    std::size_t depth = 8;
    std::filesystem::path corpus;
    LoadOptions load;
    SplitConfig split;
    CorruptionConfig corruption;
    TrainConfig train;
    std::optional<std::size_t> max_train;  // keep only the first n training/validation samples
    std::optional<std::size_t> max_val;
};

inline nlohmann::json to_json(const TrainJob& j) {
    nlohmann::json out{{"arch", j.arch},
                       {"kernel", j.kernel},
                       {"depth", j.depth},
                       {"corpus", j.corpus.lexically_normal().string()},
                       {"canvas", j.load.canvas},
                       {"quad", j.load.quad},
                       {"split", {{"train", j.split.train}, {"val", j.split.val}, {"test", j.split.test}}},
                       {"data_seed", j.split.seed},
                       {"noise_sigma", j.corruption.noise_sigma},
                       {"blur_sigma", j.corruption.blur_sigma},
                       {"train", to_json(j.train)}};
    if (j.max_train) out["max_train"] = *j.max_train;
    if (j.max_val) out["max_val"] = *j.max_val;
    return out;
}

inline ModelSpec job_spec(const TrainJob& j) {
    auto spec = zoo::build(j.arch, j.kernel, j.depth);
    spec.input.height = spec.input.width = j.load.canvas;
    validate(spec);
    return spec;
}

struct TrainOutcome {
    Checkpoint checkpoint;
    nlohmann::json data_manifest;
    double baseline_val = 0.0;  // identity model (corrupted input as output) on the validation set
    double best_val = 0.0;
};

/// Loads and splits the corpus, builds pairs with per-sample seeds derived
/// from the split seed, and trains. The checkpoint carries the data
/// manifest digest.
inline TrainOutcome run_train_job(const TrainJob& job, const EpochCallback& on_epoch = {},
                                  std::ostream& warn = std::cerr) {
    const auto spec = job_spec(job);
    auto prepared = prepare(job.corpus, job.train.task, job.split, job.load, job.corruption, warn);
    auto& split = prepared.split;
    if (job.max_train && split.train.size() > *job.max_train) split.train.resize(*job.max_train);
    if (job.max_val && split.val.size() > *job.max_val) split.val.resize(*job.max_val);
    if (split.train.empty() || split.val.empty())
        throw DataError("corpus yields " + std::to_string(split.train.size()) + " training and " +
                        std::to_string(split.val.size()) + " validation images; both must be nonempty");
    const auto train_set = make_pairs(split.train, job.train.task, job.split.seed, job.corruption);
    const auto val_set = make_pairs(split.val, job.train.task, job.split.seed, job.corruption);

    auto id = zoo::build_identity();
    id.input = spec.input;
    const double baseline = evaluate_loss(id, zoo::identity_params(), val_set, job.train.threads);

    auto ck = train(spec, train_set, val_set, job.train, prepared.manifest["digest"].get<std::string>(), on_epoch);
    ck.meta["job"] = to_json(job);
    ck.meta["baseline_val_loss"] = baseline;
    const double best = evaluate_loss(spec, ck.params, val_set, job.train.threads);
    return {std::move(ck), std::move(prepared.manifest), baseline, best};
}

}  // namespace vicnn
