#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "langgan/corpus.hpp"
#include "langgan/embedding.hpp"

using namespace langgan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("langgan_test_" + std::to_string(Rng(::getpid()).bits()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name, const std::string& contents) const {
        fs::path p = path / name;
        std::ofstream out(p, std::ios::binary);
        out << contents;
        return p.string();
    }
};

Corpus parse_lines(const std::vector<std::string>& lines) {
    Corpus c;
    for (const auto& l : lines) c.push_back(tokenize(l));
    return c;
}

}  // namespace

TEST_CASE("tokenize basics") {
    REQUIRE(tokenize("the cat sat") == std::vector<std::string>{"the", "cat", "sat"});
    REQUIRE(tokenize("").empty());
    REQUIRE(tokenize("A  b", true) == std::vector<std::string>{"a", "b"});
    REQUIRE(tokenize("  padded\tout \n") == std::vector<std::string>{"padded", "out"});
}

TEST_CASE("tokenize matches a reference split on random ascii") {
    Rng rng(71);
    for (int iter = 0; iter < 50; ++iter) {
        std::string line;
        for (int i = 0; i < 40; ++i) {
            int r = static_cast<int>(rng.index(8));
            line.push_back(r < 2 ? ' ' : static_cast<char>('a' + rng.index(26)));
        }
        // oracle: istringstream extraction
        std::vector<std::string> want;
        std::istringstream iss(line);
        std::string tok;
        while (iss >> tok) want.push_back(tok);
        REQUIRE(tokenize(line) == want);
    }
}

TEST_CASE("tokenize rejects invalid utf8") {
    std::string bad = "ok \xff\xfe bad";
    REQUIRE_THROWS_AS(tokenize(bad), IngestionError);
    std::string truncated = "caf\xc3";  // lead byte without continuation
    REQUIRE_THROWS_AS(tokenize(truncated), IngestionError);
    std::string fine = "caf\xc3\xa9";
    REQUIRE(tokenize(fine) == std::vector<std::string>{"café"});
}

TEST_CASE("build_vocab keeps reserved slots and counts sizes") {
    Corpus c = parse_lines({"a b c", "a b", "a"});
    Vocabulary v = build_vocab(c, 10);
    REQUIRE(v.size() == 6);  // 3 reserved + 3 tokens
    REQUIRE(v.encode("a") == 3);
    REQUIRE(v.encode("b") == 4);
    REQUIRE(v.encode("c") == 5);
    REQUIRE(v.decode(kPadId) == kPadToken);
}

TEST_CASE("build_vocab min_freq drops rare tokens to unk") {
    Corpus c = parse_lines({"a a b", "a rare"});
    Vocabulary v = build_vocab(c, 10, 2);
    REQUIRE(v.contains("a"));
    REQUIRE(!v.contains("rare"));
    REQUIRE(v.encode("rare") == kUnkId);
}

TEST_CASE("build_vocab frequency order matches a brute-force counter") {
    std::vector<std::string> lines = {
        "d a b c a", "b a d d", "c c b a", "e d b a", "a a c d",
        "f e d c b", "a b", "g f e", "b c d", "a"};
    Corpus c = parse_lines(lines);
    Vocabulary v = build_vocab(c, 100);

    std::map<std::string, int64_t> counts;
    for (const auto& s : c)
        for (const auto& t : s) counts[t]++;
    for (const auto& [tok, cnt] : counts) {
        REQUIRE(v.contains(tok));
        REQUIRE(v.frequencies[static_cast<size_t>(v.encode(tok))] == cnt);
    }
    // ids are assigned by descending frequency
    for (size_t id = kReservedTokens; id + 1 < v.size(); ++id)
        REQUIRE(v.frequencies[id] >= v.frequencies[id + 1]);
    // deterministic rebuild
    Vocabulary v2 = build_vocab(c, 100);
    REQUIRE(v.id_to_token == v2.id_to_token);
}

TEST_CASE("build_vocab max_size truncation and tie order") {
    Corpus c = parse_lines({"z y x", "z y", "z"});
    Vocabulary v = build_vocab(c, 5);  // room for 2 tokens
    REQUIRE(v.size() == 5);
    REQUIRE(v.contains("z"));
    REQUIRE(v.contains("y"));
    REQUIRE(!v.contains("x"));
    REQUIRE_THROWS_AS(build_vocab(Corpus{}, 10), IngestionError);
}

TEST_CASE("filter_by_length") {
    Corpus c = parse_lines({"one two three four five",
                            "a b c d e f g",
                            "a b c d e f g h i j k"});
    Corpus filtered = filter_by_length(c, 7, 100);
    REQUIRE(filtered.size() == 2);  // the 5-token sentence is dropped
    REQUIRE(filter_by_length(c, 1).size() == c.size());
    REQUIRE_THROWS_AS(filter_by_length(c, 0), ArgumentError);

    // survivor count matches a counting oracle on a synthetic corpus
    Rng rng(5);
    Corpus synth;
    for (int i = 0; i < 200; ++i)
        synth.push_back(std::vector<std::string>(1 + rng.index(15), "w"));
    size_t want = 0;
    for (const auto& s : synth)
        if (s.size() >= 4 && s.size() <= 9) ++want;
    REQUIRE(filter_by_length(synth, 4, 9).size() == want);
}

TEST_CASE("encode decode round trips") {
    Corpus c = parse_lines({"a b c", "b c d e"});
    Vocabulary v = build_vocab(c, 100);
    for (const auto& sent : c) {
        TokenSequence seq = encode_sequence(sent, v, 10);
        REQUIRE(valid_token_sequence(seq));
        REQUIRE(decode_sequence(seq, v) == sent);
    }
    // decode∘encode identity on id arrays
    TokenSequence seq = encode_sequence({"a", "c", "d"}, v, 8);
    TokenSequence again = encode_sequence(decode_sequence(seq, v), v, 8);
    REQUIRE(seq.ids == again.ids);
}

TEST_CASE("encode handles truncation and oov") {
    Corpus c = parse_lines({"a b"});
    Vocabulary v = build_vocab(c, 100);
    TokenSequence t = encode_sequence({"a", "b", "a", "b"}, v, 3);
    REQUIRE(t.length == 3);
    REQUIRE(t.truncated());
    REQUIRE(valid_token_sequence(t));

    TokenSequence u = encode_sequence({"mystery"}, v, 4);
    REQUIRE(u.ids[0] == kUnkId);
    REQUIRE(u.ids[1] == kEosId);
    REQUIRE(u.ids[2] == kPadId);
}

TEST_CASE("batch iterator yields whole epochs deterministically") {
    Corpus c;
    for (int i = 0; i < 10; ++i)
        c.push_back({std::string("tok") + std::to_string(i)});
    Vocabulary v = build_vocab(c, 100);
    auto data = encode_corpus(c, v, 6);

    BatchIterator it(data, 3, 99);
    REQUIRE(it.batches_per_epoch() == 3);

    // same seed -> identical order across fresh iterators
    BatchIterator it2(data, 3, 99);
    for (int b = 0; b < 7; ++b) {
        TokenBatch a = it.next();
        TokenBatch bb = it2.next();
        REQUIRE(a.tokens.data == bb.tokens.data);
    }

    // multiset over one epoch equals corpus minus dropped remainder
    BatchIterator it3(data, 3, 123);
    std::multiset<int32_t> seen;
    for (int b = 0; b < 3; ++b) {
        TokenBatch batch = it3.next();
        for (size_t r = 0; r < batch.n(); ++r) seen.insert(batch.tokens(r, 0));
    }
    REQUIRE(seen.size() == 9);
    std::multiset<int32_t> all;
    for (const auto& s : data) all.insert(s.ids[0]);
    for (int32_t id : seen) REQUIRE(all.count(id) == 1);
}

TEST_CASE("embedding file loader covers and fills") {
    TempDir tmp;
    Corpus c = parse_lines({"alpha beta gamma"});
    Vocabulary v = build_vocab(c, 100);

    SECTION("full coverage is bit exact") {
        std::string path = tmp.file("full.vec",
                                    "alpha 0.125 -2.5\n"
                                    "beta 1e-3 4.0\n"
                                    "gamma -0.0625 3.25\n");
        auto res = load_embedding_file(path, v, 2, 7);
        REQUIRE(res.coverage == Catch::Approx(3.0 / 6.0));
        REQUIRE(res.table(static_cast<size_t>(v.encode("alpha")), 0) == 0.125);
        REQUIRE(res.table(static_cast<size_t>(v.encode("beta")), 0) == 1e-3);
        REQUIRE(res.table(static_cast<size_t>(v.encode("gamma")), 1) == 3.25);
    }

    SECTION("empty file randomizes every row") {
        std::string path = tmp.file("empty.vec", "");
        auto res = load_embedding_file(path, v, 2, 7);
        REQUIRE(res.coverage == 0.0);
        for (double x : res.table.data) REQUIRE(x != 0.0);
        // deterministic under the same seed
        auto res2 = load_embedding_file(path, v, 2, 7);
        REQUIRE(res.table.data == res2.table.data);
    }

    SECTION("partial file fills exactly the listed tokens") {
        std::string path = tmp.file("part.vec", "beta 9 8\nnotinvocab 1 2\n");
        auto res = load_embedding_file(path, v, 2, 7);
        REQUIRE(res.table(static_cast<size_t>(v.encode("beta")), 0) == 9.0);
        REQUIRE(res.table(static_cast<size_t>(v.encode("beta")), 1) == 8.0);
        REQUIRE(res.coverage == Catch::Approx(1.0 / 6.0));
        // unlisted rows differ from file values and are nonzero
        REQUIRE(res.table(static_cast<size_t>(v.encode("alpha")), 0) != 0.0);
    }

    SECTION("malformed lines carry line numbers") {
        std::string path = tmp.file("bad.vec", "alpha 1 2\nbeta oops 4\n");
        try {
            load_embedding_file(path, v, 2, 7);
            FAIL("expected IngestionError");
        } catch (const IngestionError& e) {
            REQUIRE(std::string(e.what()).find(":2:") != std::string::npos);
        }
        std::string dimpath = tmp.file("dim.vec", "alpha 1 2 3\n");
        REQUIRE_THROWS_AS(load_embedding_file(dimpath, v, 2, 7), IngestionError);
    }
}

TEST_CASE("embedding lookup and backward touch only learned columns") {
    Corpus c = parse_lines({"a b"});
    Vocabulary v = build_vocab(c, 100);
    auto pre = std::make_shared<Tensor2>(v.size(), 2);
    for (size_t i = 0; i < pre->size(); ++i) pre->data[i] = static_cast<double>(i);
    EmbeddingTable table = make_embedding_table("gen", pre, v.size(), 3, 11);

    std::vector<int32_t> ids = {v.encode("a"), v.encode("b"), v.encode("a")};
    Tensor2 e = embedding_forward(table, ids);
    REQUIRE(e.rows == 3);
    REQUIRE(e.cols == 5);
    REQUIRE(e(0, 0) == (*pre)(static_cast<size_t>(ids[0]), 0));
    REQUIRE(e(2, 4) == table.learned.value(static_cast<size_t>(ids[0]), 2));

    Tensor2 d(3, 5, 1.0);
    embedding_backward(d, ids, table);
    // row for "a" was used twice
    REQUIRE(table.learned.grad(static_cast<size_t>(ids[0]), 0) == 2.0);
    REQUIRE(table.learned.grad(static_cast<size_t>(ids[1]), 0) == 1.0);
}

TEST_CASE("corpus loader reports file errors") {
    REQUIRE_THROWS_AS(load_corpus("/nonexistent/path/corpus.txt"), IoError);
    TempDir tmp;
    std::string path = tmp.file("c.txt", "a b\n\nc d\n");
    Corpus c = load_corpus(path);
    REQUIRE(c.size() == 2);  // blank lines skipped
}
