#pragma once

// Mini-batch Adam training with validation-based early stopping.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "vicnn/adam.hpp"
#include "vicnn/checkpoint.hpp"
#include "vicnn/data.hpp"
#include "vicnn/hash.hpp"
#include "vicnn/model.hpp"

namespace vicnn {

struct TrainConfig {
    std::size_t max_epochs = 100;
    std::size_t batch_size = 32;
    std::size_t patience = 2;
    std::size_t eval_every = 1;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    Task task = Task::denoise;
    std::size_t threads = 1;

    void validate() const {
        if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
        if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
        if (patience < 1) throw ValidationError("patience must be >= 1");
        if (eval_every < 1) throw ValidationError("eval_every must be >= 1");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw ValidationError("learning rate must be finite and >= 0");
    }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"max_epochs", c.max_epochs}, {"batch_size", c.batch_size},       {"patience", c.patience},
            {"eval_every", c.eval_every}, {"learning_rate", c.learning_rate}, {"seed", c.seed},
            {"task", to_string(c.task)}};
}

/// Patience counter over a stream of validation losses. Improvement means
/// strictly lower than the best so far; an improvement resets the counter.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    /// Returns true when `loss` is a new best.
    bool update(double loss) {
        ++seen_;
        if (loss < best_) {
            best_ = loss;
            best_index_ = seen_;
            stale_ = 0;
            return true;
        }
        ++stale_;
        return false;
    }
    bool should_stop() const { return stale_ >= patience_; }
    double best() const { return best_; }
    std::size_t best_index() const { return best_index_; }  // 1-based, 0 before any update

private:
    std::size_t patience_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t best_index_ = 0;
    std::size_t seen_ = 0;
    std::size_t stale_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    std::optional<double> val_loss;
};

/// Thrown when a loss becomes non-finite; carries the parameters at that
/// point for post-mortem inspection.
class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(const std::string& what, Checkpoint diagnostic)
        : NumericError(what), diagnostic_(std::move(diagnostic)) {}
    const Checkpoint& diagnostic() const noexcept { return diagnostic_; }

private:
    Checkpoint diagnostic_;
};

namespace detail {

/// Runs fn(i) for i in [0, n) on up to `threads` workers, contiguous chunks.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t * n / threads; i < (t + 1) * n / threads; ++i) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline void check_samples(const ModelSpec& spec, const std::vector<SamplePair>& set, const char* what) {
    for (const auto& s : set)
        if (s.input.shape() != spec.input || s.target.shape() != Shape{3, spec.input.height, spec.input.width})
            throw ShapeError(std::string(what) + " sample " + s.input.shape().str() + " does not fit model input " +
                             spec.input.str());
}

inline nlohmann::json history_json(const std::vector<EpochRecord>& h) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : h) {
        nlohmann::json e{{"epoch", r.epoch}, {"train_loss", r.train_loss}};
        if (r.val_loss) e["val_loss"] = *r.val_loss;
        a.push_back(e);
    }
    return a;
}

}  // namespace detail

/// Mean per-sample MSE over a set, accumulated in double in sample order.
inline double evaluate_loss(const ModelSpec& spec, const Params<float>& params, const std::vector<SamplePair>& set,
                            std::size_t threads = 1) {
    if (set.empty()) throw ValidationError("evaluate_loss: empty sample set");
    detail::check_samples(spec, set, "evaluation");
    std::vector<double> losses(set.size());
    detail::parallel_for(set.size(), threads,
                         [&](std::size_t i) { losses[i] = mse_value(predict(spec, params, set[i].input), set[i].target); });
    double sum = 0.0;
    for (const double l : losses) sum += l;
    return sum / static_cast<double>(set.size());
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains from a seeded initialization and returns the best-validation
/// parameters with the full history and final optimizer state.
inline Checkpoint train(const ModelSpec& spec, const std::vector<SamplePair>& train_set,
                        const std::vector<SamplePair>& val_set, const TrainConfig& cfg,
                        const std::string& manifest_digest = {}, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    validate(spec);
    if (train_set.empty() || val_set.empty()) throw ValidationError("training needs nonempty train and val sets");
    detail::check_samples(spec, train_set, "training");
    detail::check_samples(spec, val_set, "validation");

    Params<float> params = init_params<float>(spec, cfg.seed);
    Params<float> best = params;
    AdamState<float> opt(AdamConfig{cfg.learning_rate});
    EarlyStopping stopper(cfg.patience);
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    std::string status = "max-epochs";

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x747261696eull));

    auto meta = [&](const std::string& st) {
        return nlohmann::json{{"history", detail::history_json(history)},
                              {"config", to_json(cfg)},
                              {"manifest_digest", manifest_digest},
                              {"best_epoch", best_epoch},
                              {"status", st}};
    };
    auto diverge = [&](const std::string& what) {
        throw TrainingDiverged(what, Checkpoint{spec, params, opt, meta("diverged")});
    };

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - start);
            std::vector<ModelGrads<float>> per_sample(count);
            std::vector<double> losses(count);
            detail::parallel_for(count, cfg.threads, [&](std::size_t i) {
                const auto& s = train_set[order[start + i]];
                auto fr = forward(spec, params, s.input);
                auto lr = mse_loss(fr.output, s.target);
                losses[i] = lr.value;
                per_sample[i] = backward(spec, params, fr.tape, lr.grad);
            });
            // ordered reduction keeps the sum independent of thread count
            ModelGrads<float> total = std::move(per_sample[0]);
            for (std::size_t i = 1; i < count; ++i)
                for (std::size_t k = 0; k < total.weights.size(); ++k) {
                    auto& tw = total.weights[k];
                    const auto& sw = per_sample[i].weights[k];
                    for (std::size_t n = 0; n < tw.size(); ++n) tw[n] += sw[n];
                    auto& tb = total.bias[k];
                    const auto& sb = per_sample[i].bias[k];
                    for (std::size_t n = 0; n < tb.size(); ++n) tb[n] += sb[n];
                }
            const float inv = 1.0f / static_cast<float>(count);
            for (auto& w : total.weights)
                for (auto& v : w) v *= inv;
            for (auto& b : total.bias)
                for (auto& v : b) v *= inv;
            for (const double l : losses) loss_sum += l;
            const auto views = param_views(params);
            const auto gviews = total.views();
            adam_step<float>(views, gviews, opt);
        }
        EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), std::nullopt};
        if (!std::isfinite(rec.train_loss)) {
            history.push_back(rec);
            diverge("training loss became non-finite in epoch " + std::to_string(epoch));
        }
        bool stop = false;
        if (epoch % cfg.eval_every == 0) {
            rec.val_loss = evaluate_loss(spec, params, val_set, cfg.threads);
            history.push_back(rec);
            if (!std::isfinite(*rec.val_loss))
                diverge("validation loss became non-finite in epoch " + std::to_string(epoch));
            if (stopper.update(*rec.val_loss)) {
                best = params;
                best_epoch = epoch;
            }
            stop = stopper.should_stop();
        } else {
            history.push_back(rec);
        }
        if (on_epoch) on_epoch(rec);
        if (stop) {
            status = "early-stopped";
            break;
        }
    }
    if (best_epoch == 0) {
        // no evaluation happened: keep the final parameters
        best = params;
        best_epoch = history.size();
    }
    return Checkpoint{spec, std::move(best), std::move(opt), meta(status)};
}

}  // namespace vicnn
