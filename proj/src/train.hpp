#pragma once

#include "data.hpp"
#include "model.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace actseg {

struct TrainConfig {
    double tau = 0.5;
    double lr = 0.0003;
    int batch_size = 16;
    int max_train_len = 0;      // 0 = family default (60 / 200 / 150)
    long validate_every = 8000; // training instances between validations
    int patience = 3;           // non-improving validations before halving
    int max_halvings = 10;      // consecutive halvings before stopping
    double clip_norm = 5.0;     // 0 disables clipping
    uint64_t seed = 1;
    long max_epochs = 0;  // 0 = run until the schedule stops
    std::string val_metric = "accuracy"; // accuracy | bleu (bleu is always logged)
    int val_max_len = 210;
};

// Adam constants; the per-parameter moment buffers live on the parameters.
struct OptimState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;
};

struct ScheduleState {
    double best = 0.0;
    bool has_best = false;
    int bad_validations = 0; // consecutive non-improving
    int halvings = 0;        // consecutive halvings in the current run
    bool stop = false;
    double lr_multiplier = 1.0;
};

// Improvement resets both counters; `patience` consecutive non-improving
// validations halve the rate; `max_halvings` consecutive halvings stop.
void schedule_update(ScheduleState& s, double score, int patience, int max_halvings);

// L = xent + tau * mean(remainders). tau = 0 returns xent unchanged.
Value total_loss(Tape& tape, Value xent, std::span<const Value> remainders, double tau);

// Bias-corrected Adam over all parameters. If any gradient is non-finite the
// whole update is skipped and the offending parameter name is returned.
std::optional<std::string> adam_step(OptimState& opt, std::span<Parameter* const> params,
                                     double lr);

// Scales gradients so their global L2 norm is at most max_norm; returns the
// pre-clip norm.
double clip_global_norm(std::span<Parameter* const> params, double max_norm);

// Serializable training position: together with the run seed it pins the
// batch order, so a resumed run replays the exact same stream.
struct TrainState {
    OptimState opt;
    ScheduleState schedule;
    long batch_index = 0;
    long instances_seen = 0;
    long validations = 0;
    double last_val_score = std::numeric_limits<double>::quiet_NaN();
};

struct BatchStats {
    long batch_index = 0;
    double loss = 0.0;
    double xent = 0.0;
    double remainder = 0.0;
    double lr = 0.0;
    double val_score = std::numeric_limits<double>::quiet_NaN();
};

struct ValidationResult {
    double accuracy = 0.0; // exact-sequence
    double bleu = 0.0;
    double score = 0.0;    // the configured metric
};

class Trainer {
public:
    Trainer(Model& model, const TrainConfig& cfg, std::vector<IdPair> train_pairs,
            ParallelCorpus dev);
    // Restores optimizer/schedule/stream position from a loaded checkpoint.
    void restore(const TrainState& state);
    const TrainState& state() const { return state_; }

    using BatchCallback = std::function<void(const BatchStats&)>;
    using LogSink = std::function<void(const std::string&)>;
    void set_batch_callback(BatchCallback cb) { on_batch_ = std::move(cb); }
    void set_log_sink(LogSink sink) { log_ = std::move(sink); }
    void set_checkpoint_path(std::string path) { best_path_ = std::move(path); }

    // One optimization step; returns false once the schedule stopped.
    bool step();
    // Runs until the schedule stops, max_epochs is reached, or max_batches
    // steps were taken (when max_batches >= 0).
    void run(long max_batches = -1);
    ValidationResult validate();

    double current_lr() const { return cfg_.lr * state_.schedule.lr_multiplier; }
    long epoch() const;

private:
    void log_line(const BatchStats& s);

    Model& model_;
    TrainConfig cfg_;
    BatchStream stream_;
    ParallelCorpus dev_;
    std::vector<IdPair> dev_pairs_;
    TrainState state_;
    BatchCallback on_batch_;
    LogSink log_;
    std::string best_path_;
    int nonfinite_run_ = 0;
};

} // namespace actseg
