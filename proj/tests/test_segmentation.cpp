#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bpe.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "vocab.hpp"

#include <filesystem>
#include <map>

using namespace actseg;

TEST_CASE("vocabulary reserves specials and round-trips ids") {
    Vocabulary v;
    CHECK(v.size() == 4);
    CHECK(v.symbol(Vocabulary::pad_id) == "<pad>");
    CHECK(v.symbol(Vocabulary::eos_id) == "<eos>");
    const int a = v.add("a");
    CHECK(a == 4);
    CHECK(v.add("a") == a); // bijection: no remap
    CHECK(v.id("a") == a);
    CHECK(v.symbol(a) == "a");
    CHECK(v.id("never-seen") == Vocabulary::unk_id);
    CHECK_THROWS_AS(v.symbol(99), DataError);
}

TEST_CASE("char_tokenize") {
    Vocabulary v;
    for (const char* s : {"a", "b", " "}) v.add(s);

    CHECK(char_tokenize("", v).empty());

    const auto ids = char_tokenize("ab a", v);
    CHECK(ids == std::vector<int>{v.id("a"), v.id("b"), v.id(" "), v.id("a")});

    const auto with_unk = char_tokenize("a\xce\xbe\x62", v); // a, xi, b
    CHECK(with_unk == std::vector<int>{v.id("a"), Vocabulary::unk_id, v.id("b")});

    // invalid UTF-8 rejected with byte offset
    try {
        char_tokenize("ab\xff", v);
        FAIL("expected throw");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }

    // identity on in-vocabulary text
    CHECK(detokenize_chars(char_tokenize("ab a", v), v) == "ab a");
}

TEST_CASE("vocabulary file round-trip") {
    Vocabulary v;
    v.add("a");
    v.add("\xc3\xa9"); // é
    const auto path = std::filesystem::temp_directory_path() / "actseg_vocab_test.txt";
    v.save(path.string());
    Vocabulary loaded = Vocabulary::load(path.string());
    CHECK(loaded.size() == v.size());
    CHECK(loaded.id("\xc3\xa9") == v.id("\xc3\xa9"));
    std::filesystem::remove(path);
}

TEST_CASE("bpe_learn") {
    SUBCASE("zero merges") {
        CHECK(bpe_learn({{"abab", 3}}, 0).empty());
    }
    SUBCASE("most frequent pair wins: (a,b) count 7 beats (b,a) count 3") {
        const auto table = bpe_learn({{"abab", 3}, {"ab", 1}}, 1);
        REQUIRE(table.size() == 1);
        CHECK(table.merges[0] == std::pair<std::string, std::string>{"a", "b"});
    }
    SUBCASE("single word 'aa': one possible merge then early stop") {
        const auto table = bpe_learn({{"aa", 1}}, 10);
        REQUIRE(table.size() == 1);
        CHECK(table.merges[0] == std::pair<std::string, std::string>{"a", "a"});
    }
    SUBCASE("deterministic and permutation invariant over entry order") {
        std::map<std::string, long> c1 = {{"low", 5}, {"lower", 2}, {"newest", 6}, {"widest", 3}};
        std::map<std::string, long> c2(c1.rbegin(), c1.rend());
        const auto t1 = bpe_learn(c1, 20);
        const auto t2 = bpe_learn(c2, 20);
        CHECK(t1.to_text() == t2.to_text());
    }
    SUBCASE("empty corpus rejected") {
        CHECK_THROWS_AS(bpe_learn({}, 5), DataError);
    }
}

TEST_CASE("bpe_apply") {
    SUBCASE("no merges: one segment per character") {
        CHECK(bpe_apply("abc", {}) == std::vector<std::string>{"a", "b", "c"});
    }
    SUBCASE("sequential merges") {
        MergeTable t;
        t.merges = {{"a", "b"}, {"ab", "ab"}};
        CHECK(bpe_apply("abab", t) == std::vector<std::string>{"abab"});
    }
    SUBCASE("display carries continuation markers") {
        MergeTable t;
        t.merges = {{"t", "i"}, {"ti", "e"}, {"tie", "r"}, {"tier", "e"}};
        CHECK(bpe_display(bpe_apply("jungtiere", t)) == "j@@ u@@ n@@ g@@ tiere");
    }
    SUBCASE("roundtrip reconstructs 1000 random words") {
        Rng rng(99);
        std::map<std::string, long> corpus;
        std::vector<std::string> words;
        for (int i = 0; i < 1000; ++i) {
            std::string w;
            const int len = rng.uniform_int(1, 10);
            for (int k = 0; k < len; ++k) w += static_cast<char>('a' + rng.uniform_int(0, 5));
            corpus[w] += 1;
            words.push_back(w);
        }
        const auto table = bpe_learn(corpus, 100);
        for (const auto& w : words) {
            std::string joined;
            for (const auto& seg : bpe_apply(w, table)) joined += seg;
            CHECK(joined == w);
        }
    }
}

TEST_CASE("merge table file round-trip is byte identical") {
    const auto table = bpe_learn({{"banana", 4}, {"bandana", 2}}, 6);
    const auto path = std::filesystem::temp_directory_path() / "actseg_merges_test.txt";
    table.save(path.string());
    const auto loaded = MergeTable::load(path.string());
    CHECK(loaded.to_text() == table.to_text());
    std::filesystem::remove(path);
}

TEST_CASE("extract_segments") {
    SegmentTrace t;
    t.score.assign(5, 0.5);
    t.boundaries = {2, 5};
    CHECK(extract_segments(t, "hello") == std::vector<std::string>{"he", "llo"});

    SegmentTrace per_char;
    per_char.score.assign(3, 0.5);
    per_char.boundaries = {1, 2, 3};
    CHECK(extract_segments(per_char, "abc") == std::vector<std::string>{"a", "b", "c"});

    SegmentTrace whole;
    whole.score.assign(3, 0.5);
    whole.boundaries = {3};
    CHECK(extract_segments(whole, "abc") == std::vector<std::string>{"abc"});

    CHECK_THROWS_AS(extract_segments(whole, "abcd"), DataError);
}

TEST_CASE("trace render matches the pipe display style") {
    SegmentTrace t;
    t.score.assign(9, 0.5);
    t.boundaries = {2, 4, 6, 8, 9};
    const std::vector<std::string> sym = {"i", "n", " ", "g", "r", "u", "p", "p", "e"};
    CHECK(t.render(sym) == "in| g|ru|pp|e|");
}

TEST_CASE("segment_stats") {
    SUBCASE("all length one gives mean 1.00") {
        std::vector<std::vector<std::string>> corpus = {{"a", "b"}, {"c"}};
        const auto s = segment_stats(corpus);
        CHECK(s.mean_length == doctest::Approx(1.0));
        CHECK(s.total_segments == 3);
    }
    SUBCASE("mean of lengths 2,3,1 is 2.0") {
        std::vector<std::vector<std::string>> corpus = {{"ab", "abc", "a"}};
        CHECK(segment_stats(corpus).mean_length == doctest::Approx(2.0));
    }
    SUBCASE("counts are additive over corpus concatenation") {
        std::vector<std::vector<std::string>> c1 = {{"ab", "ab", "x"}};
        std::vector<std::vector<std::string>> c2 = {{"ab", "y"}};
        auto joint = c1;
        joint.insert(joint.end(), c2.begin(), c2.end());
        const auto s1 = segment_stats(c1);
        const auto s2 = segment_stats(c2);
        const auto sj = segment_stats(joint);
        long ab1 = 0, ab2 = 0, abj = 0;
        for (const auto& [len, items] : s1.top_segments)
            for (const auto& [seg, c] : items)
                if (seg == "ab") ab1 = c;
        for (const auto& [len, items] : s2.top_segments)
            for (const auto& [seg, c] : items)
                if (seg == "ab") ab2 = c;
        for (const auto& [len, items] : sj.top_segments)
            for (const auto& [seg, c] : items)
                if (seg == "ab") abj = c;
        CHECK(abj == ab1 + ab2);
    }
    SUBCASE("ties break lexicographically, counts descending") {
        std::vector<std::vector<std::string>> corpus = {{"zz", "aa", "zz", "aa", "mm"}};
        const auto s = segment_stats(corpus, 10);
        REQUIRE(s.top_segments.size() == 1);
        const auto& items = s.top_segments[0].second;
        REQUIRE(items.size() == 3);
        CHECK(items[0].first == "aa"); // tie with zz at count 2 -> lexicographic
        CHECK(items[1].first == "zz");
        CHECK(items[2].first == "mm");
    }
    SUBCASE("csv escapes commas and quotes") {
        std::vector<std::vector<std::string>> corpus = {{"a,b", "\"q\""}};
        const auto csv = segment_stats(corpus).render_csv();
        CHECK(csv.find("\"a,b\"") != std::string::npos);
        CHECK(csv.find("\"\"\"q\"\"\"") != std::string::npos);
    }
}
