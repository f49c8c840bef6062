#include "train.hpp"

#include "checkpoint.hpp"
#include "infer.hpp"
#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace actseg {

void schedule_update(ScheduleState& s, double score, int patience, int max_halvings) {
    if (!std::isfinite(score)) throw NumericError("schedule_update: non-finite score");
    if (!s.has_best || score > s.best) {
        s.best = score;
        s.has_best = true;
        s.bad_validations = 0;
        s.halvings = 0;
        return;
    }
    ++s.bad_validations;
    if (s.bad_validations >= patience) {
        s.bad_validations = 0;
        s.lr_multiplier *= 0.5;
        ++s.halvings;
        if (s.halvings >= max_halvings) s.stop = true;
    }
}

Value total_loss(Tape& tape, Value xent, std::span<const Value> remainders, double tau) {
    if (!std::isfinite(tape.scalar(xent))) throw NumericError("total_loss: non-finite xent");
    if (tau == 0.0 || remainders.empty()) return xent;
    Value acc = remainders[0];
    for (size_t i = 1; i < remainders.size(); ++i) acc = tape.add(acc, remainders[i]);
    Value mean = tape.scale(acc, 1.0 / static_cast<double>(remainders.size()));
    return tape.add(xent, tape.scale(mean, tau));
}

std::optional<std::string> adam_step(OptimState& opt, std::span<Parameter* const> params,
                                     double lr) {
    for (Parameter* p : params) {
        if (!p->grad.same_shape(p->value)) p->grad = Tensor(p->value.rows, p->value.cols);
        if (!p->grad.all_finite()) return p->name;
    }
    opt.t += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.t));
    for (Parameter* p : params) {
        if (!p->m.same_shape(p->value)) {
            p->m = Tensor(p->value.rows, p->value.cols);
            p->v = Tensor(p->value.rows, p->value.cols);
        }
        for (size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad.v[i];
            p->m.v[i] = opt.beta1 * p->m.v[i] + (1.0 - opt.beta1) * g;
            p->v.v[i] = opt.beta2 * p->v.v[i] + (1.0 - opt.beta2) * g * g;
            const double mhat = p->m.v[i] / bc1;
            const double vhat = p->v.v[i] / bc2;
            p->value.v[i] -= lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
    }
    return std::nullopt;
}

double clip_global_norm(std::span<Parameter* const> params, double max_norm) {
    double sq = 0.0;
    for (const Parameter* p : params) {
        for (double g : p->grad.v) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (Parameter* p : params) {
            for (double& g : p->grad.v) g *= scale;
        }
    }
    return norm;
}

namespace {

std::vector<IdPair> tokenize_corpus(const Model& m, const ParallelCorpus& c) {
    std::vector<IdPair> pairs;
    pairs.reserve(c.size());
    for (size_t i = 0; i < c.size(); ++i) {
        IdPair p;
        p.src = tokenize_source(m, c.src[i]);
        p.trg = tokenize_target(m, c.trg[i]);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

} // namespace

Trainer::Trainer(Model& model, const TrainConfig& cfg, std::vector<IdPair> train_pairs,
                 ParallelCorpus dev)
    : model_(model),
      cfg_(cfg),
      stream_(std::move(train_pairs), cfg.batch_size,
              cfg.max_train_len > 0 ? cfg.max_train_len : family_max_train_len(model.family),
              cfg.seed),
      dev_(std::move(dev)) {
    dev_pairs_ = tokenize_corpus(model_, dev_);
}

void Trainer::restore(const TrainState& state) {
    state_ = state;
    stream_.seek(state.batch_index);
}

long Trainer::epoch() const { return state_.batch_index / stream_.batches_per_epoch(); }

ValidationResult Trainer::validate() {
    ValidationResult r;
    std::vector<std::string> hyp, ref;
    long exact = 0;
    for (size_t i = 0; i < dev_pairs_.size(); ++i) {
        Tape tape;
        std::vector<int> out =
            translate_ids(tape, model_, dev_pairs_[i].src, 1, {}, cfg_.val_max_len);
        std::vector<int> expect = dev_pairs_[i].trg;
        expect.pop_back(); // eos
        if (out == expect) ++exact;
        hyp.push_back(detokenize_target(model_, out));
        ref.push_back(dev_.trg[i]);
    }
    r.accuracy = dev_pairs_.empty()
                     ? 0.0
                     : static_cast<double>(exact) / static_cast<double>(dev_pairs_.size());
    r.bleu = bleu(hyp, ref);
    r.score = cfg_.val_metric == "bleu" ? r.bleu : r.accuracy;
    return r;
}

void Trainer::log_line(const BatchStats& s) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%ld\t%.8f\t%.8f\t%.8f\t%.6g\t%.6f", s.batch_index, s.loss,
                  s.xent, s.remainder, s.lr, s.val_score);
    if (log_) log_(buf);
}

bool Trainer::step() {
    if (state_.schedule.stop) return false;
    Batch batch = stream_.next();
    state_.batch_index = stream_.batch_index();

    BatchStats stats;
    stats.batch_index = state_.batch_index;
    stats.lr = current_lr();
    stats.val_score = state_.last_val_score;

    bool updated = false;
    try {
        Tape tape;
        Value xent_sum = tape.zeros(1, 1);
        std::vector<Value> remainders;
        for (int j = 0; j < batch.size(); ++j) {
            std::span<const int> src(batch.src[static_cast<size_t>(j)].data(),
                                     static_cast<size_t>(batch.src_len[static_cast<size_t>(j)]));
            std::span<const int> trg(batch.trg[static_cast<size_t>(j)].data(),
                                     static_cast<size_t>(batch.trg_len[static_cast<size_t>(j)]));
            PairLoss pl = pair_loss(tape, model_, src, trg);
            xent_sum = tape.add(xent_sum, pl.xent);
            remainders.push_back(pl.remainder);
        }
        Value xent_mean = tape.scale(xent_sum, 1.0 / static_cast<double>(batch.size()));
        Value loss = total_loss(tape, xent_mean, remainders, cfg_.tau);
        stats.loss = tape.scalar(loss);
        stats.xent = tape.scalar(xent_mean);
        double rsum = 0.0;
        for (Value r : remainders) rsum += tape.scalar(r);
        stats.remainder = rsum / static_cast<double>(batch.size());
        if (!std::isfinite(stats.loss)) throw NumericError("non-finite loss");

        model_.zero_grad();
        tape.backward(loss);
        tape.write_param_grads();
        clip_global_norm(model_.params, cfg_.clip_norm);
        auto skipped = adam_step(state_.opt, model_.params, current_lr());
        if (skipped) {
            if (log_) log_("# skipped update, non-finite gradient in " + *skipped);
        } else {
            updated = true;
        }
        nonfinite_run_ = 0;
    } catch (const NumericError& e) {
        ++nonfinite_run_;
        if (log_) log_(std::string("# skipped batch: ") + e.what());
        if (nonfinite_run_ >= 3) {
            throw NumericError("three consecutive non-finite losses, aborting: " +
                               std::string(e.what()));
        }
        return true;
    }
    (void)updated;

    state_.instances_seen += batch.size();
    if (on_batch_) on_batch_(stats);
    log_line(stats);

    if (state_.instances_seen >= (state_.validations + 1) * cfg_.validate_every) {
        ValidationResult v = validate();
        ++state_.validations;
        state_.last_val_score = v.score;
        const bool improved = !state_.schedule.has_best || v.score > state_.schedule.best;
        schedule_update(state_.schedule, v.score, cfg_.patience, cfg_.max_halvings);
        char buf[160];
        std::snprintf(buf, sizeof buf, "# validation %ld: score=%.6f acc=%.4f bleu=%.2f lr=%.6g",
                      state_.validations, v.score, v.accuracy, v.bleu, current_lr());
        if (log_) log_(buf);
        if (improved && !best_path_.empty()) {
            save_checkpoint(model_, best_path_, &state_);
        }
        stats.val_score = v.score;
        log_line(stats);
    }
    return !state_.schedule.stop;
}

void Trainer::run(long max_batches) {
    long done = 0;
    while (!state_.schedule.stop) {
        if (max_batches >= 0 && done >= max_batches) break;
        if (cfg_.max_epochs > 0 && epoch() >= cfg_.max_epochs) break;
        if (!step()) break;
        ++done;
    }
}

} // namespace actseg
