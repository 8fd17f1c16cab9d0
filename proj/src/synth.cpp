#include "srs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "srs/errors.hpp"
#include "srs/image.hpp"

namespace srs {

namespace {
using nlohmann::json;

const char* kGlyphNames[10] = {"ring",  "disc",   "square", "triangle", "plus",
                               "cross", "diamond", "hbars",  "vbars",    "checker"};

std::string pad3(int n) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03d", n);
    return buf;
}

void check_spec(const SynthSpec& s) {
    if (s.pairs <= 0) throw UsageError("synth: pairs must be positive");
    if (s.heldout_pairs < 0) throw UsageError("synth: heldout_pairs must be >= 0");
    if (s.classes <= 1) throw UsageError("synth: need at least two classes");
    if (s.stickers_per_class <= 0) throw UsageError("synth: stickers_per_class must be positive");
    if (s.shared_words <= 0 || s.class_words <= 0)
        throw UsageError("synth: vocabulary sizes must be positive");
    if (s.negatives <= 0) throw UsageError("synth: negatives must be positive");
    if (s.min_utterances <= 0 || s.max_utterances < s.min_utterances)
        throw UsageError("synth: bad utterance count range");
    if (s.min_words <= 0 || s.max_words < s.min_words)
        throw UsageError("synth: bad words-per-utterance range");
    if (s.signal_prob < 0.0 || s.signal_prob > 1.0)
        throw UsageError("synth: signal_prob must lie in [0, 1]");
    if (s.image_side < 8) throw UsageError("synth: image_side must be at least 8");
    // Negatives are drawn from other classes only, so the rest of the library
    // must be big enough.
    int other = (s.classes - 1) * s.stickers_per_class;
    if (other < s.negatives)
        throw UsageError("synth: only " + std::to_string(other) +
                         " out-of-class stickers available for " +
                         std::to_string(s.negatives) + " negatives");
}

std::vector<std::string> make_utterance_words(const SynthSpec& spec, int cls, Rng& rng) {
    int n = rng.uniform_int(spec.min_words, spec.max_words);
    std::vector<std::string> words;
    words.reserve(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        if (rng.uniform() < spec.signal_prob) {
            int t = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.class_words)));
            words.push_back("c" + std::to_string(cls) + "t" + std::to_string(t));
        } else {
            int t = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.shared_words)));
            words.push_back("w" + std::to_string(t));
        }
    }
    return words;
}

std::vector<DialogContext> make_split(const SynthSpec& spec, const Corpus& corpus,
                                      int count, Rng& rng) {
    std::vector<DialogContext> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        int cls = i % spec.classes;
        DialogContext ctx;
        ctx.id = i;
        int turns = rng.uniform_int(spec.min_utterances, spec.max_utterances);
        for (int u = 0; u < turns; ++u)
            ctx.utterances.push_back(tokenize_and_pad(make_utterance_words(spec, cls, rng),
                                                      corpus.vocab, spec.max_words));

        int positive = cls * spec.stickers_per_class +
                       static_cast<int>(rng.uniform_index(
                           static_cast<std::uint64_t>(spec.stickers_per_class)));
        std::vector<int> pool;
        for (int s = 0; s < corpus.stickers.size(); ++s)
            if (corpus.stickers.at(s).emoji_tag != cls) pool.push_back(s);
        auto negs = sample_negatives(pool, positive, spec.negatives, rng);
        auto [cands, pos] = make_candidate_set(positive, std::move(negs), rng);
        ctx.candidates = std::move(cands);
        ctx.positive_index = pos;
        ctx.validate(corpus.stickers.size());
        out.push_back(std::move(ctx));
    }
    return out;
}

}  // namespace

std::string glyph_name(int cls) {
    return kGlyphNames[((cls % 10) + 10) % 10];
}

Tensor paint_glyph(int cls, int side, Rng& rng) {
    const int shape = ((cls % 10) + 10) % 10;
    const double cx = side / 2.0 + rng.uniform(-side * 0.08, side * 0.08);
    const double cy = side / 2.0 + rng.uniform(-side * 0.08, side * 0.08);
    const double r = side * 0.28 + rng.uniform(-side * 0.05, side * 0.05);
    const double th = std::max(1.5, side * 0.03 + rng.uniform(-side * 0.01, side * 0.01));
    const double cell = std::max(2.0, side / 12.0);
    const int fg = 200 + static_cast<int>(rng.uniform_index(56));
    const double fgv = fg / 255.0;

    Tensor img({1, side, side});
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double ax = std::fabs(dx), ay = std::fabs(dy);
            bool on = false;
            switch (shape) {
                case 0: on = std::fabs(std::hypot(dx, dy) - r) <= th; break;
                case 1: on = std::hypot(dx, dy) <= r * 0.85; break;
                case 2: on = std::fabs(std::max(ax, ay) - r) <= th; break;
                case 3: on = dy >= -r && dy <= r && ax <= (dy + r) * 0.5; break;
                case 4: on = (ax <= th && ay <= r) || (ay <= th && ax <= r); break;
                case 5: on = std::fabs(ax - ay) <= th && std::max(ax, ay) <= r; break;
                case 6: on = std::fabs(ax + ay - r) <= th; break;
                case 7: on = ax <= r && ay <= r &&
                             static_cast<long>(std::floor(y / cell)) % 2 == 0; break;
                case 8: on = ax <= r && ay <= r &&
                             static_cast<long>(std::floor(x / cell)) % 2 == 0; break;
                case 9: on = ax <= r && ay <= r &&
                             (static_cast<long>(std::floor(x / cell)) +
                              static_cast<long>(std::floor(y / cell))) % 2 == 0; break;
            }
            if (on) img[y * side + x] = fgv;
        }
    }
    return img;
}

Corpus synth_corpus(const SynthSpec& spec, const std::string& dir) {
    check_spec(spec);
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "stickers");

    Corpus corpus;
    // Fixed vocabulary order: shared words first, then the class blocks, so
    // ids are stable regardless of what the dialogs happen to sample.
    for (int t = 0; t < spec.shared_words; ++t)
        corpus.vocab.add("w" + std::to_string(t));
    for (int c = 0; c < spec.classes; ++c)
        for (int t = 0; t < spec.class_words; ++t)
            corpus.vocab.add("c" + std::to_string(c) + "t" + std::to_string(t));
    corpus.vocab.save(dir + "/vocab.txt");

    Rng sticker_rng(mix_seed(spec.seed, 1));
    {
        std::ofstream out(dir + "/stickers.jsonl", std::ios::binary);
        if (!out) throw IoError(dir + "/stickers.jsonl: cannot open for writing");
        for (int c = 0; c < spec.classes; ++c) {
            for (int k = 0; k < spec.stickers_per_class; ++k) {
                Sticker s;
                s.id = "s" + pad3(c * spec.stickers_per_class + k);
                s.file = "stickers/" + s.id + ".pgm";
                s.emoji_tag = c;
                s.image = paint_glyph(c, spec.image_side, sticker_rng);
                write_pgm(dir + "/" + s.file, s.image);
                json rec;
                rec["id"] = s.id;
                rec["file"] = s.file;
                rec["emoji"] = s.emoji_tag;
                out << rec.dump() << "\n";
                corpus.stickers.add(std::move(s));
            }
        }
        if (!out) throw IoError(dir + "/stickers.jsonl: write failed");
    }

    Rng train_rng(mix_seed(spec.seed, 2));
    corpus.contexts = make_split(spec, corpus, spec.pairs, train_rng);
    save_records(dir, "train", corpus.contexts, corpus.vocab, corpus.stickers);

    if (spec.heldout_pairs > 0) {
        Rng held_rng(mix_seed(spec.seed, 3));
        auto held = make_split(spec, corpus, spec.heldout_pairs, held_rng);
        save_records(dir, "heldout", held, corpus.vocab, corpus.stickers);
    }

    json manifest;
    manifest["seed"] = spec.seed;
    manifest["classes"] = spec.classes;
    manifest["stickers_per_class"] = spec.stickers_per_class;
    manifest["pairs"] = spec.pairs;
    manifest["heldout_pairs"] = spec.heldout_pairs;
    manifest["negatives"] = spec.negatives;
    manifest["shared_words"] = spec.shared_words;
    manifest["class_words"] = spec.class_words;
    manifest["signal_prob"] = spec.signal_prob;
    manifest["utterances"] = {spec.min_utterances, spec.max_utterances};
    manifest["words_per_utterance"] = {spec.min_words, spec.max_words};
    manifest["image_side"] = spec.image_side;
    manifest["vocab_size"] = corpus.vocab.size();
    json glyphs = json::object();
    for (int c = 0; c < spec.classes; ++c)
        glyphs[std::to_string(c)] = glyph_name(c);
    manifest["class_glyphs"] = std::move(glyphs);
    std::ofstream mf(dir + "/manifest.json", std::ios::binary);
    if (!mf) throw IoError(dir + "/manifest.json: cannot open for writing");
    mf << manifest.dump(2) << "\n";
    if (!mf) throw IoError(dir + "/manifest.json: write failed");

    return corpus;
}

}  // namespace srs
