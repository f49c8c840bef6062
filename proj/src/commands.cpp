#include "commands.hpp"

#include "checkpoint.hpp"
#include "stats.hpp"
#include "train.hpp"
#include "utf8.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace actseg {

std::vector<double> flatten_params(const Model& m) {
    std::vector<double> theta;
    for (const Parameter* p : m.params) {
        theta.insert(theta.end(), p->value.v.begin(), p->value.v.end());
    }
    return theta;
}

void unflatten_params(Model& m, std::span<const double> theta) {
    size_t off = 0;
    for (Parameter* p : m.params) {
        if (off + p->value.size() > theta.size()) {
            throw NumericError("unflatten_params: parameter vector too short");
        }
        std::copy(theta.begin() + static_cast<long>(off),
                  theta.begin() + static_cast<long>(off + p->value.size()), p->value.v.begin());
        off += p->value.size();
    }
    if (off != theta.size()) throw NumericError("unflatten_params: parameter vector too long");
}

namespace {

ModelDims dims_from_config(const KeyValueConfig& cfg) {
    ModelDims d;
    d.embed = static_cast<int>(cfg.get_long("embed", 32));
    d.enc_hidden = static_cast<int>(cfg.get_long("enc_hidden", 32));
    d.dec_hidden = static_cast<int>(cfg.get_long("dec_hidden", 64));
    d.act_hidden = static_cast<int>(cfg.get_long("act_hidden", 16));
    d.att_hidden = static_cast<int>(cfg.get_long("att_hidden", 64));
    d.enc_layers = static_cast<int>(cfg.get_long("enc_layers", 1));
    return d;
}

TrainConfig train_config_from(const KeyValueConfig& cfg) {
    TrainConfig t;
    t.tau = cfg.get_double("tau", 0.5);
    t.lr = cfg.get_double("lr", 0.0003);
    t.batch_size = static_cast<int>(cfg.get_long("batch_size", 16));
    t.max_train_len = static_cast<int>(cfg.get_long("max_train_len", 0));
    t.validate_every = cfg.get_long("validate_every", 8000);
    t.patience = static_cast<int>(cfg.get_long("patience", 3));
    t.max_halvings = static_cast<int>(cfg.get_long("max_halvings", 10));
    t.clip_norm = cfg.get_double("clip_norm", 5.0);
    t.seed = cfg.get_u64("seed", 1);
    t.max_epochs = cfg.get_long("max_epochs", 0);
    t.val_metric = cfg.get_string("val_metric", "accuracy");
    t.val_max_len = static_cast<int>(cfg.get_long("val_max_len", 210));
    if (t.val_metric != "accuracy" && t.val_metric != "bleu") {
        throw UsageError("val_metric must be accuracy or bleu");
    }
    return t;
}

std::vector<IdPair> tokenize_pairs(const Model& m, const ParallelCorpus& c) {
    std::vector<IdPair> out;
    out.reserve(c.size());
    for (size_t i = 0; i < c.size(); ++i) {
        out.push_back({tokenize_source(m, c.src[i]), tokenize_target(m, c.trg[i])});
    }
    return out;
}

} // namespace

std::string cmd_train(const KeyValueConfig& cfg) {
    const std::string family_str = cfg.require_string("family");
    const Family family = family_from_string(family_str);
    ParallelCorpus train =
        load_parallel(cfg.require_string("train_src"), cfg.require_string("train_trg"));
    ParallelCorpus dev =
        load_parallel(cfg.require_string("dev_src"), cfg.require_string("dev_trg"));
    const TrainConfig tc = train_config_from(cfg);
    const std::string ckpt_dir = cfg.get_string("ckpt_dir");
    const std::string resume = cfg.get_string("resume");

    std::unique_ptr<Model> model;
    TrainState resumed;
    bool has_resumed = false;
    if (!resume.empty()) {
        model = load_checkpoint(resume, &resumed, family);
        has_resumed = true;
    } else {
        Vocabulary src_vocab, trg_vocab;
        MergeTable merges;
        if (family == Family::word) {
            src_vocab = Vocabulary::from_whitespace_tokens(train.src);
            trg_vocab = Vocabulary::from_whitespace_tokens(train.trg);
        } else if (family == Family::bpe) {
            const std::string merges_path = cfg.get_string("merges");
            if (!merges_path.empty()) {
                merges = MergeTable::load(merges_path);
            } else {
                std::map<std::string, long> freq;
                for (const auto& line : train.src) {
                    for (const auto& w : split_whitespace(line)) freq[w] += 1;
                }
                for (const auto& line : train.trg) {
                    for (const auto& w : split_whitespace(line)) freq[w] += 1;
                }
                merges = bpe_learn(freq, static_cast<int>(cfg.get_long("n_merges", 200)));
            }
            std::vector<std::string> src_tok, trg_tok;
            for (const auto& line : train.src) {
                std::string joined;
                for (const auto& t : bpe_tokenize_line(line, merges)) joined += t + " ";
                src_tok.push_back(joined);
            }
            for (const auto& line : train.trg) {
                std::string joined;
                for (const auto& t : bpe_tokenize_line(line, merges)) joined += t + " ";
                trg_tok.push_back(joined);
            }
            src_vocab = Vocabulary::from_whitespace_tokens(src_tok);
            trg_vocab = Vocabulary::from_whitespace_tokens(trg_tok);
        } else {
            src_vocab = Vocabulary::from_chars(train.src);
            trg_vocab = Vocabulary::from_chars(train.trg);
        }
        model = build_model(family, dims_from_config(cfg), std::move(src_vocab),
                            std::move(trg_vocab), tc.tau, cfg.get_double("epsilon", 0.01),
                            tc.seed, cfg.get_bool("act_dec_feed_attention", false));
        model->merges = std::move(merges);
        model->t_max = static_cast<int>(cfg.get_long("t_max", 200));
        model->char_budget = static_cast<int>(cfg.get_long("char_budget", 600));
        if (family_uses_act_enc(family)) {
            model->act_enc.halting.b_h.value.v[0] = cfg.get_double("halting_bias_init", 1.0);
        }
        if (family_uses_act_dec(family)) {
            model->act_dec.halting.b_h.value.v[0] =
                cfg.get_double("dec_halting_bias_init", cfg.get_double("halting_bias_init", 1.0));
        }
    }

    Trainer trainer(*model, tc, tokenize_pairs(*model, train), dev);
    if (has_resumed) trainer.restore(resumed);

    std::ofstream log_file;
    const std::string log_path = cfg.get_string("log");
    if (!log_path.empty()) {
        log_file.open(log_path, std::ios::binary | std::ios::app);
        if (!log_file) throw DataError("cannot open training log: " + log_path);
        trainer.set_log_sink([&log_file](const std::string& line) { log_file << line << '\n'; });
    }
    if (!ckpt_dir.empty()) {
        std::filesystem::create_directories(ckpt_dir);
        trainer.set_checkpoint_path(ckpt_dir + "/best.ckpt");
    }

    trainer.run(cfg.get_long("max_batches", -1));

    if (!ckpt_dir.empty()) {
        save_checkpoint(*model, ckpt_dir + "/last.ckpt", &trainer.state());
    }
    ValidationResult final_val = trainer.validate();
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "trained %s: batches=%ld instances=%ld acc=%.4f bleu=%.2f best=%.4f",
                  family_str.c_str(), trainer.state().batch_index,
                  trainer.state().instances_seen, final_val.accuracy, final_val.bleu,
                  trainer.state().schedule.has_best ? trainer.state().schedule.best : 0.0);
    return buf;
}

double cmd_gradcheck(const std::string& family_str, int dims, uint64_t seed, double step,
                     double tau) {
    if (dims < 2 || dims > 64) throw UsageError("gradcheck dims must be in [2, 64]");
    const Family family = family_from_string(family_str);
    Rng rng = Rng(seed).stream("gradcheck");

    Vocabulary src_vocab, trg_vocab;
    for (char c = 'a'; c < 'a' + 8; ++c) { // 8 symbols + 4 reserved = vocab 12
        src_vocab.add(std::string(1, c));
        trg_vocab.add(std::string(1, c));
    }
    ModelDims d;
    d.embed = dims;
    d.enc_hidden = dims;
    d.dec_hidden = dims;
    d.act_hidden = std::max(2, dims - 1);
    d.att_hidden = dims;
    d.enc_layers = 1;
    auto model = build_model(family, d, std::move(src_vocab), std::move(trg_vocab), tau, 0.01,
                             seed ^ 0x5eedULL);
    // Wider weights than the training init: every path must carry a gradient
    // above the central-difference noise floor to be checkable at all.
    Rng winit = Rng(seed).stream("gradcheck-init");
    for (Parameter* p : model->params) init_uniform(*p, winit, 0.4);

    const int src_len = rng.uniform_int(3, 7);
    const int trg_len = rng.uniform_int(3, 7);
    std::vector<int> src, trg;
    for (int i = 0; i < src_len; ++i) src.push_back(rng.uniform_int(4, 11));
    for (int i = 0; i < trg_len; ++i) trg.push_back(rng.uniform_int(4, 11));
    trg.push_back(Vocabulary::eos_id);

    auto f = [&](std::span<const double> theta, std::span<double> grad_out) -> double {
        unflatten_params(*model, theta);
        Tape tape;
        PairLoss pl = pair_loss(tape, *model, src, trg);
        Value remainders[1] = {pl.remainder};
        Value loss = total_loss(tape, pl.xent, remainders, tau);
        if (!grad_out.empty()) {
            model->zero_grad();
            tape.backward(loss);
            tape.write_param_grads();
            size_t off = 0;
            for (const Parameter* p : model->params) {
                std::copy(p->grad.v.begin(), p->grad.v.end(),
                          grad_out.begin() + static_cast<long>(off));
                off += p->grad.size();
            }
        }
        return tape.scalar(loss);
    };
    std::vector<double> theta = flatten_params(*model);
    return grad_check(f, theta, step, 1e-4).max_rel_err;
}

void cmd_gen_corpus(const std::string& task, int size, int len_min, int len_max, int vocab_size,
                    uint64_t seed, const std::string& src_path, const std::string& trg_path) {
    ParallelCorpus c = gen_toy_corpus(task, size, len_min, len_max, vocab_size, seed);
    write_lines(src_path, c.src);
    write_lines(trg_path, c.trg);
}

void cmd_bpe_learn(const std::string& corpus_path, int n_merges, const std::string& merges_out) {
    std::map<std::string, long> freq;
    for (const auto& line : read_lines(corpus_path)) {
        for (const auto& w : split_whitespace(line)) freq[w] += 1;
    }
    if (freq.empty()) throw DataError("bpe-learn: no tokens in " + corpus_path);
    bpe_learn(freq, n_merges).save(merges_out);
}

MetricReport cmd_eval(const std::string& hyp_path, const std::string& ref_path) {
    return evaluate_corpus(read_lines(hyp_path), read_lines(ref_path));
}

std::vector<std::string> segment_line_pieces(Model& m, const std::string& line) {
    if (family_uses_act_enc(m.family)) {
        Tape tape;
        const std::vector<int> ids = tokenize_source(m, line);
        if (ids.empty()) return {};
        auto enc = act_encode(tape, m.act_enc, m.E_src, ids);
        return extract_segments(enc.trace, line);
    }
    if (m.family == Family::chars) return utf8_split(line);
    if (m.family == Family::bpe) return bpe_tokenize_line(line, m.merges);
    throw UsageError("segmentation display is not defined for word models");
}

std::string segment_line(Model& m, const std::string& line) {
    std::string out;
    for (const auto& piece : segment_line_pieces(m, line)) {
        out += piece;
        out += '|';
    }
    return out;
}

StatsOutput cmd_stats(Model& m, const std::string& input_path, int top_k) {
    std::vector<std::vector<std::string>> corpus;
    for (const auto& line : read_lines(input_path)) {
        if (line.empty()) continue;
        corpus.push_back(segment_line_pieces(m, line));
    }
    if (corpus.empty()) throw DataError("stats: no non-empty lines in " + input_path);
    SegmentStats stats = segment_stats(corpus, top_k);
    return {stats.render_table(), stats.render_csv(), stats.mean_length};
}

} // namespace actseg
