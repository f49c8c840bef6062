#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "checkpoint.hpp"
#include "commands.hpp"
#include "train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace actseg;

namespace {

std::unique_ptr<Model> tiny_model(Family family, uint64_t seed) {
    Vocabulary src, trg;
    for (char c = 'a'; c <= 'f'; ++c) {
        src.add(std::string(1, c));
        trg.add(std::string(1, c));
    }
    ModelDims d;
    d.embed = 4;
    d.enc_hidden = 3;
    d.dec_hidden = 5;
    d.act_hidden = 3;
    d.att_hidden = 4;
    return build_model(family, d, std::move(src), std::move(trg), 0.5, 0.01, seed);
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("total_loss") {
    Tape tape;
    Value xent = tape.leaf(Tensor::scalar(2.0));
    Value r = tape.leaf(Tensor::scalar(0.5));
    SUBCASE("tau = 0 returns xent exactly") {
        Value remainders[1] = {r};
        Value loss = total_loss(tape, xent, remainders, 0.0);
        CHECK(loss.idx == xent.idx);
    }
    SUBCASE("xent 2.0, R 0.5, tau 1.0 gives 2.5") {
        Value remainders[1] = {r};
        CHECK(tape.scalar(total_loss(tape, xent, remainders, 1.0)) == doctest::Approx(2.5));
    }
    SUBCASE("mean over per-sequence remainders") {
        Value remainders[2] = {tape.leaf(Tensor::scalar(0.2)), tape.leaf(Tensor::scalar(0.6))};
        CHECK(tape.scalar(total_loss(tape, xent, remainders, 2.0)) ==
              doctest::Approx(2.0 + 2.0 * 0.4));
    }
}

TEST_CASE("full act-enc loss passes gradient check (tau path included)") {
    CHECK(cmd_gradcheck("act-enc", 4, 7) <= 1e-4);
}

TEST_CASE("adam_step") {
    SUBCASE("first step with unit gradients moves by about -lr") {
        Parameter p("w", 2, 1);
        p.value.v = {1.0, -2.0};
        p.grad = Tensor(2, 1);
        p.grad.fill(1.0);
        OptimState opt;
        Parameter* ps[1] = {&p};
        CHECK_FALSE(adam_step(opt, ps, 0.01).has_value());
        CHECK(p.value.v[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
        CHECK(p.value.v[1] == doctest::Approx(-2.0 - 0.01).epsilon(1e-6));
        CHECK(opt.t == 1);
    }
    SUBCASE("zero gradient leaves parameters unchanged") {
        Parameter p("w", 2, 1);
        p.value.v = {1.0, -2.0};
        p.grad = Tensor(2, 1);
        OptimState opt;
        Parameter* ps[1] = {&p};
        adam_step(opt, ps, 0.01);
        CHECK(p.value.v[0] == 1.0);
        CHECK(p.value.v[1] == -2.0);
    }
    SUBCASE("first update is invariant to gradient scaling") {
        auto run = [](double scale) {
            Parameter p("w", 1, 1);
            p.value.v[0] = 0.5;
            p.grad = Tensor(1, 1);
            p.grad.v[0] = 0.37 * scale;
            OptimState opt;
            Parameter* ps[1] = {&p};
            adam_step(opt, ps, 0.01);
            return p.value.v[0];
        };
        CHECK(run(1.0) == doctest::Approx(run(10.0)).epsilon(1e-7));
    }
    SUBCASE("non-finite gradient skips the whole step and names the parameter") {
        Parameter a("alpha", 1, 1), b("beta", 1, 1);
        a.grad = Tensor(1, 1);
        b.grad = Tensor(1, 1);
        b.grad.v[0] = std::numeric_limits<double>::infinity();
        a.value.v[0] = 1.0;
        b.value.v[0] = 2.0;
        OptimState opt;
        Parameter* ps[2] = {&a, &b};
        auto skipped = adam_step(opt, ps, 0.01);
        REQUIRE(skipped.has_value());
        CHECK(*skipped == "beta");
        CHECK(a.value.v[0] == 1.0);
        CHECK(b.value.v[0] == 2.0);
        CHECK(opt.t == 0);
    }
    SUBCASE("finite inputs never produce non-finite parameters") {
        Parameter p("w", 1, 1);
        p.value.v[0] = 1.0;
        p.grad = Tensor(1, 1);
        p.grad.v[0] = 1e30;
        OptimState opt;
        Parameter* ps[1] = {&p};
        for (int i = 0; i < 100; ++i) adam_step(opt, ps, 1.0);
        CHECK(std::isfinite(p.value.v[0]));
    }
}

TEST_CASE("clip_global_norm") {
    Parameter a("a", 2, 1), b("b", 1, 1);
    a.grad = Tensor(2, 1);
    b.grad = Tensor(1, 1);
    a.grad.v = {3.0, 0.0};
    b.grad.v = {4.0};
    Parameter* ps[2] = {&a, &b};
    const double norm = clip_global_norm(ps, 2.5);
    CHECK(norm == doctest::Approx(5.0));
    CHECK(a.grad.v[0] == doctest::Approx(1.5));
    CHECK(b.grad.v[0] == doctest::Approx(2.0));
}

TEST_CASE("schedule_update") {
    SUBCASE("monotone improvement never halves") {
        ScheduleState s;
        for (double score : {1.0, 2.0, 3.0}) schedule_update(s, score, 3, 10);
        CHECK(s.lr_multiplier == 1.0);
        CHECK(s.best == 3.0);
        CHECK_FALSE(s.stop);
    }
    SUBCASE("three consecutive non-improving validations halve once") {
        ScheduleState s;
        schedule_update(s, 3.0, 3, 10);
        for (int i = 0; i < 4; ++i) schedule_update(s, 3.0, 3, 10);
        CHECK(s.lr_multiplier == doctest::Approx(0.5));
        CHECK(s.halvings == 1);
    }
    SUBCASE("30 non-improving validations produce 10 halvings then stop") {
        ScheduleState s;
        schedule_update(s, 5.0, 3, 10);
        int halvings_seen = 0;
        for (int i = 0; i < 30; ++i) {
            schedule_update(s, 1.0, 3, 10);
            halvings_seen = s.halvings;
        }
        CHECK(halvings_seen == 10);
        CHECK(s.stop);
        CHECK(s.lr_multiplier == doctest::Approx(std::pow(0.5, 10)));
    }
    SUBCASE("an improvement resets the consecutive-halving run") {
        ScheduleState s;
        schedule_update(s, 5.0, 3, 10);
        for (int i = 0; i < 3; ++i) schedule_update(s, 1.0, 3, 10);
        CHECK(s.halvings == 1);
        schedule_update(s, 6.0, 3, 10);
        CHECK(s.halvings == 0);
        CHECK(s.bad_validations == 0);
    }
}

TEST_CASE("toy corpus tasks") {
    SUBCASE("copy targets equal their sources") {
        auto c = gen_toy_corpus("copy", 20, 2, 6, 8, 3);
        for (size_t i = 0; i < c.size(); ++i) CHECK(c.trg[i] == c.src[i]);
    }
    SUBCASE("reverse targets are reversed sources") {
        auto c = gen_toy_corpus("reverse", 20, 2, 6, 8, 3);
        for (size_t i = 0; i < c.size(); ++i) {
            std::string r(c.src[i].rbegin(), c.src[i].rend());
            CHECK(c.trg[i] == r);
        }
    }
    SUBCASE("digit-to-word joins digit names with spaces") {
        static const char* names[10] = {"zero", "one", "two",   "three", "four",
                                        "five", "six", "seven", "eight", "nine"};
        auto c = gen_toy_corpus("digit-to-word", 20, 1, 4, 10, 3);
        for (size_t i = 0; i < c.size(); ++i) {
            std::string expect;
            for (size_t k = 0; k < c.src[i].size(); ++k) {
                if (k > 0) expect += ' ';
                expect += names[c.src[i][k] - '0'];
            }
            CHECK(c.trg[i] == expect);
        }
    }
    SUBCASE("deterministic for a fixed seed") {
        auto a = gen_toy_corpus("copy", 10, 2, 5, 6, 42);
        auto b = gen_toy_corpus("copy", 10, 2, 5, 6, 42);
        CHECK(a.src == b.src);
    }
    SUBCASE("unknown task rejected") {
        CHECK_THROWS_AS(gen_toy_corpus("sort", 5, 1, 3, 4, 1), UsageError);
    }
}

TEST_CASE("batch stream") {
    auto pair = [](std::vector<int> s, std::vector<int> t) {
        t.push_back(Vocabulary::eos_id);
        return IdPair{std::move(s), std::move(t)};
    };
    SUBCASE("single pair under the cap gives one batch of size 1") {
        BatchStream bs({pair({4, 5}, {4})}, 8, 60, 1);
        CHECK(bs.batches_per_epoch() == 1);
        Batch b = bs.next();
        CHECK(b.size() == 1);
        CHECK(b.src_len[0] == 2);
    }
    SUBCASE("over-cap pairs are filtered and counted") {
        std::vector<IdPair> pairs = {pair({4, 5}, {4}), pair(std::vector<int>(201, 4), {4})};
        BatchStream bs(std::move(pairs), 8, 200, 1);
        CHECK(bs.kept() == 1);
        CHECK(bs.filtered() == 1);
    }
    SUBCASE("all pairs filtered is a data error with counts") {
        std::vector<IdPair> pairs = {pair(std::vector<int>(100, 4), {4})};
        try {
            BatchStream bs(std::move(pairs), 8, 60, 1);
            FAIL("expected throw");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("1") != std::string::npos);
        }
    }
    SUBCASE("fixed seed gives identical batch order; seek replays") {
        std::vector<IdPair> pairs;
        for (int i = 0; i < 23; ++i) pairs.push_back(pair({4 + i % 6}, {4 + (i + 1) % 6}));
        BatchStream b1(pairs, 4, 60, 42);
        BatchStream b2(pairs, 4, 60, 42);
        for (int i = 0; i < 13; ++i) {
            CHECK(b1.next().src == b2.next().src);
        }
        // replay from an arbitrary position
        BatchStream b3(pairs, 4, 60, 42);
        b3.seek(7);
        b2.seek(7);
        for (int i = 0; i < 6; ++i) CHECK(b3.next().src == b2.next().src);
        // padding masks mark exactly the non-pad prefix
        BatchStream b4(pairs, 4, 60, 42);
        Batch batch = b4.next();
        for (int j = 0; j < batch.size(); ++j) {
            for (size_t t = 0; t < batch.src[static_cast<size_t>(j)].size(); ++t) {
                const bool real = t < static_cast<size_t>(batch.src_len[static_cast<size_t>(j)]);
                CHECK(batch.src_mask[static_cast<size_t>(j)][t] == (real ? 1 : 0));
            }
        }
    }
}

TEST_CASE("batch loss equals the mean of per-sentence losses") {
    auto m = tiny_model(Family::act_enc, 1234);
    std::vector<IdPair> pairs = {
        {{4, 5, 6}, {4, 5, Vocabulary::eos_id}},
        {{5, 5}, {5, Vocabulary::eos_id}},
        {{6, 4, 5, 6}, {6, 6, 6, Vocabulary::eos_id}},
    };
    // batch-style accumulation on one tape
    Tape tape;
    Value xent_sum = tape.zeros(1, 1);
    std::vector<Value> remainders;
    for (const auto& p : pairs) {
        PairLoss pl = pair_loss(tape, *m, p.src, p.trg);
        xent_sum = tape.add(xent_sum, pl.xent);
        remainders.push_back(pl.remainder);
    }
    Value loss = total_loss(tape, tape.scale(xent_sum, 1.0 / 3.0), remainders, m->tau);
    // per-sentence on fresh tapes
    double expect = 0.0;
    for (const auto& p : pairs) {
        Tape t2;
        PairLoss pl = pair_loss(t2, *m, p.src, p.trg);
        expect += (t2.scalar(pl.xent) + m->tau * t2.scalar(pl.remainder)) / 3.0;
    }
    CHECK(tape.scalar(loss) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("ten updates on a memorizable pair decrease the loss monotonically") {
    auto m = tiny_model(Family::chars, 99);
    ParallelCorpus corpus;
    corpus.src = {"abc"};
    corpus.trg = {"abc"};
    TrainConfig cfg;
    cfg.batch_size = 1;
    cfg.lr = 0.01;
    cfg.tau = 0.0;
    cfg.validate_every = 1000000;
    cfg.seed = 3;
    std::vector<IdPair> pairs = {{tokenize_source(*m, "abc"), tokenize_target(*m, "abc")}};
    Trainer trainer(*m, cfg, pairs, corpus);
    std::vector<double> losses;
    trainer.set_batch_callback([&](const BatchStats& s) { losses.push_back(s.loss); });
    trainer.run(10);
    REQUIRE(losses.size() == 10);
    for (size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] < losses[i - 1]);
}

TEST_CASE("checkpoint persistence") {
    const std::string path = temp_path("actseg_test_ckpt.bin");
    SUBCASE("save -> load -> save is byte identical") {
        auto m = tiny_model(Family::act_enc, 7);
        // populate optimizer state so the moment arrays are exercised
        m->zero_grad();
        for (Parameter* p : m->params) {
            for (auto& g : p->grad.v) g = 0.01;
        }
        OptimState opt;
        adam_step(opt, m->params, 0.001);
        TrainState ts;
        ts.opt = opt;
        ts.batch_index = 17;
        ts.instances_seen = 272;
        ts.schedule.best = 0.75;
        ts.schedule.has_best = true;
        ts.schedule.lr_multiplier = 0.25;
        save_checkpoint(*m, path, &ts);
        TrainState loaded_ts;
        auto loaded = load_checkpoint(path, &loaded_ts);
        CHECK(loaded_ts.batch_index == 17);
        CHECK(loaded_ts.opt.t == 1);
        CHECK(loaded_ts.schedule.lr_multiplier == 0.25);
        const std::string path2 = temp_path("actseg_test_ckpt2.bin");
        save_checkpoint(*loaded, path2, &loaded_ts);
        CHECK(slurp(path) == slurp(path2));
        std::filesystem::remove(path2);
    }
    SUBCASE("magic mismatch rejected") {
        std::ofstream out(path, std::ios::binary);
        out << "NOTMAGIC garbage";
        out.close();
        CHECK_THROWS_AS(load_checkpoint(path), DataError);
    }
    SUBCASE("truncated file rejected") {
        auto m = tiny_model(Family::chars, 8);
        save_checkpoint(*m, path);
        std::string bytes = slurp(path);
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
        out.close();
        CHECK_THROWS_AS(load_checkpoint(path), DataError);
    }
    SUBCASE("manifest shape mismatch is rejected naming the array") {
        auto m = tiny_model(Family::chars, 9);
        save_checkpoint(*m, path);
        std::string bytes = slurp(path);
        const std::string needle = "array=E_src 10 4";
        const size_t at = bytes.find(needle);
        REQUIRE(at != std::string::npos);
        bytes.replace(at, needle.size(), "array=E_src 11 4");
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        try {
            load_checkpoint(path);
            FAIL("expected throw");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("E_src") != std::string::npos);
        }
    }
    SUBCASE("family guard rejects mismatched loads") {
        auto m = tiny_model(Family::chars, 10);
        save_checkpoint(*m, path);
        CHECK_THROWS_AS(load_checkpoint(path, nullptr, Family::act_enc), DataError);
        CHECK(load_checkpoint(path, nullptr, Family::chars) != nullptr);
    }
    std::filesystem::remove(path);
}

TEST_CASE("save, load, resume reproduces subsequent losses bit-exactly") {
    ParallelCorpus corpus = gen_toy_corpus("copy", 40, 3, 8, 6, 5);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.lr = 0.003;
    cfg.tau = 0.5;
    cfg.validate_every = 1000000;
    cfg.seed = 21;

    auto build = [&]() {
        Vocabulary sv = Vocabulary::from_chars(corpus.src);
        Vocabulary tv = Vocabulary::from_chars(corpus.trg);
        ModelDims d;
        d.embed = 4;
        d.enc_hidden = 3;
        d.dec_hidden = 5;
        d.act_hidden = 3;
        d.att_hidden = 4;
        return build_model(Family::act_enc, d, sv, tv, cfg.tau, 0.01, cfg.seed);
    };
    auto pairs_of = [&](Model& m) {
        std::vector<IdPair> pairs;
        for (size_t i = 0; i < corpus.size(); ++i) {
            pairs.push_back({tokenize_source(m, corpus.src[i]), tokenize_target(m, corpus.trg[i])});
        }
        return pairs;
    };

    const std::string path = temp_path("actseg_resume_ckpt.bin");
    std::vector<double> cont;
    {
        auto m = build();
        Trainer tr(*m, cfg, pairs_of(*m), corpus);
        tr.run(7);
        save_checkpoint(*m, path, &tr.state());
        tr.set_batch_callback([&](const BatchStats& s) { cont.push_back(s.loss); });
        tr.run(20);
    }
    std::vector<double> resumed;
    {
        TrainState ts;
        auto m = load_checkpoint(path, &ts);
        Trainer tr(*m, cfg, pairs_of(*m), corpus);
        tr.restore(ts);
        tr.set_batch_callback([&](const BatchStats& s) { resumed.push_back(s.loss); });
        tr.run(20);
    }
    REQUIRE(cont.size() == resumed.size());
    for (size_t i = 0; i < cont.size(); ++i) {
        CHECK(cont[i] == resumed[i]); // bit-exact
    }
    std::filesystem::remove(path);
}

TEST_CASE("training log lines follow the tab format") {
    auto m = tiny_model(Family::chars, 15);
    ParallelCorpus corpus;
    corpus.src = {"ab"};
    corpus.trg = {"ab"};
    TrainConfig cfg;
    cfg.batch_size = 1;
    cfg.validate_every = 1000000;
    std::vector<IdPair> pairs = {{tokenize_source(*m, "ab"), tokenize_target(*m, "ab")}};
    Trainer trainer(*m, cfg, pairs, corpus);
    std::vector<std::string> lines;
    trainer.set_log_sink([&](const std::string& l) { lines.push_back(l); });
    trainer.run(2);
    REQUIRE(lines.size() >= 2);
    int tabs = 0;
    for (char c : lines[0]) tabs += c == '\t';
    CHECK(tabs == 5); // step loss xent R lr val_score
}
