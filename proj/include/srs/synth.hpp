#pragma once

#include <cstdint>
#include <string>

#include "srs/corpus.hpp"

namespace srs {

/// Parameters for the synthetic dialog/sticker corpus generator.
struct SynthSpec {
    int pairs = 200;           // dialog records in the train split
    int heldout_pairs = 0;     // extra records in a heldout split (same stickers/vocab)
    int classes = 10;          // emoji classes; each gets its own glyph
    int stickers_per_class = 4;
    int shared_words = 20;     // class-neutral vocabulary
    int class_words = 10;      // class-specific vocabulary per class
    int negatives = 9;         // negative candidates per record
    int min_utterances = 2;
    int max_utterances = 4;
    int min_words = 3;         // words per utterance, before padding
    int max_words = 8;
    double signal_prob = 0.75; // chance a sampled word is class-specific
    int image_side = 128;
    std::uint64_t seed = 7;
};

/// Generates a corpus directory: vocab.txt, stickers.jsonl with PGM images
/// under stickers/, train.jsonl, optionally heldout.jsonl, and manifest.json.
/// Output is a pure function of the spec. Returns the generated records
/// (train contexts) as loaded back with t_x = max_words.
Corpus synth_corpus(const SynthSpec& spec, const std::string& dir);

/// Name of the glyph painted for a class (classes cycle through ten shapes).
std::string glyph_name(int cls);

/// Paints the glyph for `cls` with per-sticker jitter into a (1, side, side)
/// tensor whose values lie exactly on the 1/255 grid.
Tensor paint_glyph(int cls, int side, Rng& rng);

}  // namespace srs
