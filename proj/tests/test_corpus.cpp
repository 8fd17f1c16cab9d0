#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "srs/corpus.hpp"
#include "srs/errors.hpp"
#include "srs/image.hpp"
#include "srs/rng.hpp"

using namespace srs;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* tag) {
    fs::path p = fs::temp_directory_path() / (std::string("srs_corpus_") + tag);
    fs::remove_all(p);
    fs::create_directories(p / "stickers");
    return p;
}

void append(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::app);
    out << text;
}

// Lays down a minimal well-formed corpus directory: vocabulary hello/world
// plus u0..u24, three 4x4 stickers of classes 0,0,1.
fs::path scaffold(const char* tag) {
    auto dir = fresh_dir(tag);
    {
        std::ofstream v(dir / "vocab.txt", std::ios::binary);
        v << "<pad>\n<oov>\nhello\nworld\n";
        for (int i = 0; i < 25; ++i) v << "u" << i << "\n";
    }
    for (int s = 0; s < 3; ++s) {
        Tensor img({1, 4, 4});
        for (int i = 0; i < img.size(); ++i) img[i] = ((s * 31 + i) % 256) / 255.0;
        write_pgm((dir / "stickers" / ("s" + std::to_string(s) + ".pgm")).string(), img);
        append(dir / "stickers.jsonl",
               "{\"id\":\"s" + std::to_string(s) + "\",\"file\":\"stickers/s" +
                   std::to_string(s) + ".pgm\",\"emoji\":" + std::to_string(s / 2) + "}\n");
    }
    return dir;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("vocabulary reserves pad=0 and oov=1 and maps unknowns to oov") {
    Vocabulary v;
    CHECK(v.size() == 2);
    CHECK(v.word(Vocabulary::kPad) == "<pad>");
    CHECK(v.word(Vocabulary::kOov) == "<oov>");
    int h = v.add("hello");
    CHECK(h == 2);
    CHECK(v.add("hello") == 2);  // idempotent
    CHECK(v.id("hello") == 2);
    CHECK(v.id("never-seen") == Vocabulary::kOov);
}

TEST_CASE("vocabulary save/load round trip") {
    auto dir = fresh_dir("vocab");
    Vocabulary v;
    v.add("alpha");
    v.add("beta");
    v.save((dir / "vocab.txt").string());
    Vocabulary w = Vocabulary::load((dir / "vocab.txt").string());
    CHECK(w.size() == 4);
    CHECK(w.id("alpha") == 2);
    CHECK(w.id("beta") == 3);

    std::ofstream bad(dir / "bad.txt", std::ios::binary);
    bad << "<pad>\n<oov>\ndup\ndup\n";
    bad.close();
    CHECK_THROWS_AS(Vocabulary::load((dir / "bad.txt").string()), CorpusError);
    std::ofstream worse(dir / "worse.txt", std::ios::binary);
    worse << "not-pad\n";
    worse.close();
    CHECK_THROWS_AS(Vocabulary::load((dir / "worse.txt").string()), CorpusError);
}

TEST_CASE("tokenize_and_pad: 5-word sentence at T_x=30") {
    Vocabulary v;
    std::vector<std::string> words = {"a", "b", "c", "d", "e"};
    for (const auto& w : words) v.add(w);
    Utterance u = tokenize_and_pad(words, v, 30);
    REQUIRE(u.length() == 30);
    CHECK(u.real_count() == 5);
    for (int j = 0; j < 5; ++j) {
        CHECK(u.ids[j] == v.id(words[j]));
        CHECK(u.mask[j] == 1);
    }
    for (int j = 5; j < 30; ++j) {
        CHECK(u.ids[j] == Vocabulary::kPad);
        CHECK(u.mask[j] == 0);
    }
}

TEST_CASE("tokenize_and_pad: 40-word sentence keeps the first 30") {
    Vocabulary v;
    std::vector<std::string> words;
    for (int i = 0; i < 40; ++i) {
        words.push_back("t" + std::to_string(i));
        v.add(words.back());
    }
    Utterance u = tokenize_and_pad(words, v, 30);
    REQUIRE(u.length() == 30);
    CHECK(u.real_count() == 30);
    for (int j = 0; j < 30; ++j) CHECK(u.ids[j] == v.id("t" + std::to_string(j)));
}

TEST_CASE("tokenize_and_pad: empty text and OOV words") {
    Vocabulary v;
    Utterance empty = tokenize_and_pad({}, v, 4);
    CHECK(empty.real_count() == 0);
    for (int j = 0; j < 4; ++j) {
        CHECK(empty.ids[j] == Vocabulary::kPad);
        CHECK(empty.mask[j] == 0);
    }
    Utterance oov = tokenize_and_pad({"unknown"}, v, 2);
    CHECK(oov.ids[0] == Vocabulary::kOov);
    CHECK(oov.mask[0] == 1);
    CHECK_THROWS_AS(tokenize_and_pad({"x"}, v, 0), DimensionError);
}

TEST_CASE("sample_negatives: forced selection of the 9 others") {
    std::vector<int> pool;
    for (int i = 0; i < 10; ++i) pool.push_back(i);
    Rng rng(3);
    auto negs = sample_negatives(pool, 4, 9, rng);
    REQUIRE(negs.size() == 9);
    std::set<int> got(negs.begin(), negs.end());
    CHECK(got.size() == 9);
    CHECK(got.count(4) == 0);
    // Exactly the other nine elements.
    for (int i = 0; i < 10; ++i)
        if (i != 4) CHECK(got.count(i) == 1);
}

TEST_CASE("sample_negatives: pool of 5 cannot provide 9") {
    std::vector<int> pool = {0, 1, 2, 3, 4};
    Rng rng(1);
    CHECK_THROWS_AS(sample_negatives(pool, 0, 9, rng), CorpusError);
}

TEST_CASE("sample_negatives: deterministic per seed") {
    std::vector<int> pool;
    for (int i = 0; i < 30; ++i) pool.push_back(i * 3);
    Rng a(42), b(42), c(43);
    auto na = sample_negatives(pool, 9, 9, a);
    auto nb = sample_negatives(pool, 9, 9, b);
    auto nc = sample_negatives(pool, 9, 9, c);
    CHECK(na == nb);
    CHECK(na != nc);
}

TEST_CASE("sample_negatives: property over random pools with duplicates") {
    Rng meta(99);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<int> pool;
        int span = 12 + static_cast<int>(meta.uniform_index(20));
        int len = 12 + static_cast<int>(meta.uniform_index(30));
        for (int i = 0; i < len; ++i)
            pool.push_back(static_cast<int>(meta.uniform_index(span)));
        int positive = static_cast<int>(meta.uniform_index(span));
        std::set<int> distinct(pool.begin(), pool.end());
        distinct.erase(positive);
        int n = 1 + static_cast<int>(meta.uniform_index(distinct.size()));
        Rng rng(meta.next_u64());
        auto negs = sample_negatives(pool, positive, n, rng);
        REQUIRE(static_cast<int>(negs.size()) == n);
        std::set<int> seen;
        for (int v : negs) {
            CHECK(v != positive);
            CHECK(distinct.count(v) == 1);
            CHECK(seen.insert(v).second);
        }
    }
}

TEST_CASE("make_candidate_set shuffles and reports the positive slot") {
    Rng rng(5);
    std::set<int> positions;
    for (int trial = 0; trial < 60; ++trial) {
        auto [cands, pos] = make_candidate_set(100, {1, 2, 3, 4}, rng);
        REQUIRE(cands.size() == 5);
        CHECK(cands[static_cast<size_t>(pos)] == 100);
        std::set<int> all(cands.begin(), cands.end());
        CHECK(all == std::set<int>{1, 2, 3, 4, 100});
        positions.insert(pos);
    }
    // Over 60 shuffles the positive should have landed in several slots.
    CHECK(positions.size() >= 3);
}

TEST_CASE("load_corpus reads a well-formed directory") {
    auto dir = scaffold("ok");
    append(dir / "train.jsonl",
           "{\"utterances\":[[\"hello\",\"world\"],[\"hello\"]],"
           "\"candidates\":[\"s0\",\"s1\",\"s2\"],\"positive\":1}\n");
    Corpus c = load_corpus(dir.string(), "train", 6, 20);
    CHECK(c.vocab.id("hello") == 2);
    REQUIRE(c.stickers.size() == 3);
    CHECK(c.stickers.at(0).emoji_tag == 0);
    CHECK(c.stickers.at(2).emoji_tag == 1);
    CHECK(c.stickers.at(1).image.shape() == std::vector<int>{1, 4, 4});
    REQUIRE(c.contexts.size() == 1);
    const auto& ctx = c.contexts[0];
    REQUIRE(ctx.utterances.size() == 2);
    CHECK(ctx.utterances[0].ids[0] == 2);
    CHECK(ctx.utterances[0].ids[1] == 3);
    CHECK(ctx.utterances[0].real_count() == 2);
    CHECK(ctx.utterances[1].real_count() == 1);
    CHECK(ctx.candidates == std::vector<int>{0, 1, 2});
    CHECK(ctx.positive_index == 1);
}

TEST_CASE("load_corpus keeps the last 20 of 22 utterances") {
    auto dir = scaffold("trunc");
    std::string turns = "[";
    for (int i = 0; i < 22; ++i) {
        if (i) turns += ",";
        turns += "[\"u" + std::to_string(i) + "\"]";
    }
    turns += "]";
    append(dir / "train.jsonl",
           "{\"utterances\":" + turns + ",\"candidates\":[\"s0\",\"s1\"],\"positive\":0}\n");
    Corpus c = load_corpus(dir.string(), "train", 3, 20);
    REQUIRE(c.contexts.size() == 1);
    REQUIRE(c.contexts[0].utterances.size() == 20);
    // First kept turn is u2, last is u21.
    CHECK(c.contexts[0].utterances.front().ids[0] == c.vocab.id("u2"));
    CHECK(c.contexts[0].utterances.back().ids[0] == c.vocab.id("u21"));
}

TEST_CASE("load_corpus rejects malformed records with the line number") {
    auto good = "{\"utterances\":[[\"hello\"]],\"candidates\":[\"s0\",\"s1\"],\"positive\":0}\n";

    auto expect_error_at = [&](const char* tag, const std::string& bad_line,
                               const char* needle) {
        auto dir = scaffold(tag);
        append(dir / "train.jsonl", std::string(good) + good + bad_line + "\n");
        try {
            load_corpus(dir.string(), "train", 4, 20);
            FAIL_CHECK("expected CorpusError for " << tag);
        } catch (const CorpusError& e) {
            std::string msg = e.what();
            CHECK(msg.find("train.jsonl:3") != std::string::npos);
            CHECK(msg.find(needle) != std::string::npos);
        }
    };

    expect_error_at("json", "{not json", "invalid JSON");
    expect_error_at("fields", "{\"utterances\":[[\"hello\"]]}", "needs utterances");
    expect_error_at("zerocand",
                    "{\"utterances\":[[\"hello\"]],\"candidates\":[],\"positive\":0}",
                    "no candidate");
    expect_error_at("noturns",
                    "{\"utterances\":[],\"candidates\":[\"s0\"],\"positive\":0}",
                    "no utterances");
    expect_error_at("posrange",
                    "{\"utterances\":[[\"hello\"]],\"candidates\":[\"s0\"],\"positive\":3}",
                    "positive index");
    expect_error_at("unknown",
                    "{\"utterances\":[[\"hello\"]],\"candidates\":[\"zz\"],\"positive\":0}",
                    "unknown candidate sticker id");
    expect_error_at("dupcand",
                    "{\"utterances\":[[\"hello\"]],\"candidates\":[\"s0\",\"s0\"],\"positive\":0}",
                    "repeats candidate");
    expect_error_at("types",
                    "{\"utterances\":[\"hello\"],\"candidates\":[\"s0\"],\"positive\":0}",
                    "bad dialog record");
}

TEST_CASE("load_corpus reports a missing sticker image by path") {
    auto dir = scaffold("noimg");
    append(dir / "stickers.jsonl",
           "{\"id\":\"s9\",\"file\":\"stickers/absent.pgm\",\"emoji\":0}\n");
    append(dir / "train.jsonl",
           "{\"utterances\":[[\"hello\"]],\"candidates\":[\"s0\"],\"positive\":0}\n");
    try {
        load_corpus(dir.string(), "train", 4, 20);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("stickers/absent.pgm") != std::string::npos);
    }
}

TEST_CASE("load_corpus rejects broken sticker records") {
    {
        auto dir = scaffold("stkdup");
        append(dir / "stickers.jsonl",
               "{\"id\":\"s0\",\"file\":\"stickers/s0.pgm\",\"emoji\":0}\n");
        append(dir / "train.jsonl",
               "{\"utterances\":[[\"hello\"]],\"candidates\":[\"s0\"],\"positive\":0}\n");
        try {
            load_corpus(dir.string(), "train", 4, 20);
            FAIL("expected CorpusError");
        } catch (const CorpusError& e) {
            std::string msg = e.what();
            CHECK(msg.find("stickers.jsonl:4") != std::string::npos);
            CHECK(msg.find("duplicate sticker id") != std::string::npos);
        }
    }
    {
        auto dir = scaffold("stkfield");
        append(dir / "stickers.jsonl", "{\"id\":\"s9\",\"emoji\":1}\n");
        CHECK_THROWS_AS(load_corpus(dir.string(), "train", 4, 20), CorpusError);
    }
}

TEST_CASE("missing split or vocab files raise IoError") {
    auto dir = scaffold("missing");
    CHECK_THROWS_AS(load_corpus(dir.string(), "train", 4, 20), IoError);  // no train.jsonl
    CHECK_THROWS_AS(load_corpus((dir / "nowhere").string(), "train", 4, 20), IoError);
}

}  // TEST_SUITE
