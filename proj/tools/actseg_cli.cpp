// actseg command-line tool. Links the shared library through its C API only.

#include "actseg.h"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

namespace {

int fail(actseg_status st) {
    std::cerr << "error: " << actseg_last_error() << "\n";
    return static_cast<int>(st);
}

struct ModelHandle {
    actseg_model* m = nullptr;
    ~ModelHandle() {
        if (m) actseg_model_close(m);
    }
};

struct OwnedString {
    char* s = nullptr;
    ~OwnedString() {
        if (s) actseg_string_free(s);
    }
    std::string str() const { return s ? s : ""; }
};

std::vector<std::string> read_lines_or_die(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::cerr << "error: cannot read " << path << "\n";
        std::exit(2);
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
    if (path.empty()) return std::cout;
    file.open(path, std::ios::binary);
    if (!file) {
        std::cerr << "error: cannot write " << path << "\n";
        std::exit(2);
    }
    return file;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive segmentation sequence-to-sequence toolkit"};
    app.require_subcommand(1);

    // ---- train ----
    auto* train = app.add_subcommand("train", "train a model");
    std::string config_path;
    std::vector<std::string> sets;
    std::map<std::string, std::string> opts;
    train->add_option("--config", config_path, "key=value configuration file");
    train->add_option("--set", sets, "extra key=value overrides")->take_all();
    const std::vector<std::pair<std::string, std::string>> train_flags = {
        {"--family", "family"},         {"--train-src", "train_src"},
        {"--train-trg", "train_trg"},   {"--dev-src", "dev_src"},
        {"--dev-trg", "dev_trg"},       {"--ckpt-dir", "ckpt_dir"},
        {"--log", "log"},               {"--resume", "resume"},
        {"--tau", "tau"},               {"--lr", "lr"},
        {"--epsilon", "epsilon"},       {"--seed", "seed"},
        {"--batch-size", "batch_size"}, {"--max-epochs", "max_epochs"},
        {"--max-batches", "max_batches"}, {"--validate-every", "validate_every"},
        {"--embed", "embed"},           {"--enc-hidden", "enc_hidden"},
        {"--dec-hidden", "dec_hidden"}, {"--act-hidden", "act_hidden"},
        {"--att-hidden", "att_hidden"}, {"--enc-layers", "enc_layers"},
        {"--val-metric", "val_metric"}, {"--n-merges", "n_merges"},
        {"--merges", "merges"},         {"--max-train-len", "max_train_len"},
        {"--clip-norm", "clip_norm"},
    };
    for (const auto& [flag, key] : train_flags) {
        train->add_option_function<std::string>(
            flag, [&opts, key = key](const std::string& v) { opts[key] = v; });
    }

    // ---- translate ----
    auto* translate = app.add_subcommand("translate", "decode a source file");
    std::string model_path, input_path, output_path;
    int beam = 5, max_len = 200;
    double alpha = 1.0, beta = 0.0;
    translate->add_option("--model", model_path, "checkpoint")->required();
    translate->add_option("--input", input_path, "source file, one sentence per line")
        ->required();
    translate->add_option("--output", output_path, "output file (default stdout)");
    translate->add_option("--beam", beam, "beam size (1 = greedy)");
    translate->add_option("--alpha", alpha, "length-normalization alpha");
    translate->add_option("--beta", beta, "length-normalization beta");
    translate->add_option("--max-len", max_len, "maximum output length");

    // ---- segment ----
    auto* segment = app.add_subcommand("segment", "show learned segmentations");
    std::string seg_model, seg_input, seg_output;
    segment->add_option("--model", seg_model, "checkpoint")->required();
    segment->add_option("--input", seg_input, "source file")->required();
    segment->add_option("--output", seg_output, "output file (default stdout)");

    // ---- stats ----
    auto* stats = app.add_subcommand("stats", "segment-length statistics");
    std::string stats_model, stats_input, stats_csv_dir;
    stats->add_option("--model", stats_model, "checkpoint")->required();
    stats->add_option("--input", stats_input, "source file")->required();
    stats->add_option("--emit-csv", stats_csv_dir, "directory for stats.csv");

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "BLEU and chrF scores");
    std::string hyp_path, ref_path;
    eval->add_option("--hyp", hyp_path, "hypothesis file")->required();
    eval->add_option("--ref", ref_path, "reference file")->required();

    // ---- probe ----
    auto* probe = app.add_subcommand("probe", "gate and attention probes");
    std::string probe_model, probe_input, probe_target, probe_csv_dir;
    int probe_line = 0;
    probe->add_option("--model", probe_model, "checkpoint")->required();
    probe->add_option("--input", probe_input, "source file")->required();
    probe->add_option("--target", probe_target, "reference file for attention export");
    probe->add_option("--line", probe_line, "0-based line to probe");
    probe->add_option("--emit-csv", probe_csv_dir, "directory for gates.csv / attention.csv");

    // ---- bpe-learn ----
    auto* bpe = app.add_subcommand("bpe-learn", "learn a BPE merge table");
    std::string bpe_input, bpe_output;
    int n_merges = 200;
    bpe->add_option("--input", bpe_input, "training text")->required();
    bpe->add_option("--merges", n_merges, "number of merges");
    bpe->add_option("--output", bpe_output, "merge table file")->required();

    // ---- gradcheck ----
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    std::string gc_family = "act-enc";
    int gc_dims = 4;
    uint64_t gc_seed = 7;
    gradcheck->add_option("--family", gc_family, "model family");
    gradcheck->add_option("--dims", gc_dims, "model dimensions");
    gradcheck->add_option("--seed", gc_seed, "random seed");

    // ---- gen-corpus ----
    auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic parallel corpus");
    std::string gen_task = "copy", gen_prefix;
    int gen_size = 1000, gen_len_min = 3, gen_len_max = 12, gen_vocab = 10;
    uint64_t gen_seed = 1;
    gen->add_option("--task", gen_task, "copy | reverse | digit-to-word");
    gen->add_option("--size", gen_size, "number of sentence pairs");
    gen->add_option("--len-min", gen_len_min, "minimum source length");
    gen->add_option("--len-max", gen_len_max, "maximum source length");
    gen->add_option("--vocab-size", gen_vocab, "source alphabet size");
    gen->add_option("--seed", gen_seed, "random seed");
    gen->add_option("--output-prefix", gen_prefix, "writes <prefix>.src and <prefix>.trg")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 1;
    }

    if (train->parsed()) {
        std::vector<std::pair<std::string, std::string>> entries;
        if (!config_path.empty()) entries.emplace_back("config", config_path);
        for (const auto& [k, v] : opts) entries.emplace_back(k, v);
        for (const auto& s : sets) {
            const size_t eq = s.find('=');
            if (eq == std::string::npos || eq == 0) {
                std::cerr << "error: --set expects key=value, got '" << s << "'\n";
                return 1;
            }
            entries.emplace_back(s.substr(0, eq), s.substr(eq + 1));
        }
        std::vector<const char*> keys, values;
        for (const auto& [k, v] : entries) {
            keys.push_back(k.c_str());
            values.push_back(v.c_str());
        }
        OwnedString summary;
        const auto st = actseg_train(keys.data(), values.data(),
                                     static_cast<int>(entries.size()), &summary.s);
        if (st != ACTSEG_OK) return fail(st);
        std::cout << summary.str() << "\n";
        return 0;
    }

    if (translate->parsed()) {
        ModelHandle model;
        if (auto st = actseg_model_open(model_path.c_str(), &model.m); st != ACTSEG_OK) {
            return fail(st);
        }
        std::ofstream file;
        std::ostream& out = open_output(file, output_path);
        for (const auto& line : read_lines_or_die(input_path)) {
            OwnedString translated;
            const auto st = actseg_translate_line(model.m, line.c_str(), beam, alpha, beta,
                                                  max_len, &translated.s);
            if (st != ACTSEG_OK) return fail(st);
            out << translated.str() << "\n";
        }
        return 0;
    }

    if (segment->parsed()) {
        ModelHandle model;
        if (auto st = actseg_model_open(seg_model.c_str(), &model.m); st != ACTSEG_OK) {
            return fail(st);
        }
        std::ofstream file;
        std::ostream& out = open_output(file, seg_output);
        for (const auto& line : read_lines_or_die(seg_input)) {
            OwnedString segmented;
            const auto st = actseg_segment_line(model.m, line.c_str(), &segmented.s);
            if (st != ACTSEG_OK) return fail(st);
            out << segmented.str() << "\n";
        }
        return 0;
    }

    if (stats->parsed()) {
        ModelHandle model;
        if (auto st = actseg_model_open(stats_model.c_str(), &model.m); st != ACTSEG_OK) {
            return fail(st);
        }
        OwnedString table, csv;
        const auto st = actseg_stats_file(model.m, stats_input.c_str(), &table.s, &csv.s);
        if (st != ACTSEG_OK) return fail(st);
        std::cout << table.str();
        if (!stats_csv_dir.empty()) {
            std::filesystem::create_directories(stats_csv_dir);
            std::ofstream f(stats_csv_dir + "/stats.csv", std::ios::binary);
            f << csv.str();
        }
        return 0;
    }

    if (eval->parsed()) {
        double b = 0.0, c = 0.0;
        int n = 0;
        const auto st = actseg_eval_files(hyp_path.c_str(), ref_path.c_str(), &b, &c, &n);
        if (st != ACTSEG_OK) return fail(st);
        std::printf("BLEU=%.2f chrF=%.4f n=%d\n", b, c, n);
        return 0;
    }

    if (probe->parsed()) {
        ModelHandle model;
        if (auto st = actseg_model_open(probe_model.c_str(), &model.m); st != ACTSEG_OK) {
            return fail(st);
        }
        const auto lines = read_lines_or_die(probe_input);
        if (probe_line < 0 || probe_line >= static_cast<int>(lines.size())) {
            std::cerr << "error: --line " << probe_line << " out of range\n";
            return 2;
        }
        OwnedString gates;
        if (auto st = actseg_gate_probe_csv(model.m, lines[probe_line].c_str(), &gates.s);
            st != ACTSEG_OK) {
            return fail(st);
        }
        OwnedString attention;
        if (!probe_target.empty()) {
            const auto refs = read_lines_or_die(probe_target);
            if (probe_line >= static_cast<int>(refs.size())) {
                std::cerr << "error: --line " << probe_line << " out of range in target\n";
                return 2;
            }
            if (auto st = actseg_attention_csv(model.m, lines[probe_line].c_str(),
                                               refs[probe_line].c_str(), &attention.s);
                st != ACTSEG_OK) {
                return fail(st);
            }
        }
        if (!probe_csv_dir.empty()) {
            std::filesystem::create_directories(probe_csv_dir);
            std::ofstream g(probe_csv_dir + "/gates.csv", std::ios::binary);
            g << gates.str();
            if (attention.s) {
                std::ofstream a(probe_csv_dir + "/attention.csv", std::ios::binary);
                a << attention.str();
            }
        } else {
            std::cout << gates.str();
            if (attention.s) std::cout << attention.str();
        }
        return 0;
    }

    if (bpe->parsed()) {
        const auto st = actseg_bpe_learn(bpe_input.c_str(), n_merges, bpe_output.c_str());
        if (st != ACTSEG_OK) return fail(st);
        return 0;
    }

    if (gradcheck->parsed()) {
        double err = 0.0;
        const auto st = actseg_grad_check(gc_family.c_str(), gc_dims, gc_seed, &err);
        if (st != ACTSEG_OK) return fail(st);
        const bool pass = err <= 1e-4;
        std::printf("max_rel_err=%.3e %s\n", err, pass ? "PASS" : "FAIL");
        return pass ? 0 : 3;
    }

    if (gen->parsed()) {
        const std::string src = gen_prefix + ".src";
        const std::string trg = gen_prefix + ".trg";
        const auto st = actseg_gen_corpus(gen_task.c_str(), gen_size, gen_len_min, gen_len_max,
                                          gen_vocab, gen_seed, src.c_str(), trg.c_str());
        if (st != ACTSEG_OK) return fail(st);
        std::cout << "wrote " << src << " and " << trg << "\n";
        return 0;
    }

    return 1;
}
