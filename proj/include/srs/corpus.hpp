#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "srs/rng.hpp"
#include "srs/tensor.hpp"

namespace srs {

/// Word-id dictionary. Id 0 is the padding token, id 1 the out-of-vocabulary
/// token; both exist from construction.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kOov = 1;

    Vocabulary();

    /// Returns the id of `word`, adding it when unseen.
    int add(const std::string& word);
    /// Returns the id of `word`, or kOov when unknown.
    int id(const std::string& word) const;
    const std::string& word(int id) const;
    int size() const { return static_cast<int>(words_.size()); }

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

/// One utterance, tokenized and padded to a fixed length. mask[j] is 1 for a
/// real token and 0 for padding.
struct Utterance {
    std::vector<int> ids;
    std::vector<std::uint8_t> mask;

    int length() const { return static_cast<int>(ids.size()); }
    int real_count() const;
};

/// Converts words to ids, keeping the first t_x words and padding the rest.
/// An empty word list yields an all-pad, all-masked-out utterance.
Utterance tokenize_and_pad(const std::vector<std::string>& words,
                           const Vocabulary& vocab, int t_x);

struct Sticker {
    std::string id;      // stable key used by dialog records
    std::string file;    // image path relative to the corpus directory
    int emoji_tag = 0;   // weak label: emoji class of the sticker
    Tensor image;        // (1, h, w) grayscale in [0, 1]
};

class StickerLibrary {
public:
    /// Adds a sticker and returns its index. Ids must be unique.
    int add(Sticker s);
    /// Index of the sticker with the given id, or -1 when absent.
    int index_of(const std::string& id) const;
    const Sticker& at(int index) const;
    int size() const { return static_cast<int>(stickers_.size()); }
    const std::vector<Sticker>& all() const { return stickers_; }

private:
    std::vector<Sticker> stickers_;
    std::unordered_map<std::string, int> by_id_;
};

/// One training/evaluation record: a short dialog plus a candidate sticker
/// set containing exactly one ground-truth response.
struct DialogContext {
    int id = 0;                        // ordinal position in the split file
    std::vector<Utterance> utterances; // chronological, oldest first
    std::vector<int> candidates;       // indices into the sticker library
    int positive_index = 0;            // position of the true response in candidates

    /// Throws CorpusError when the record violates an invariant.
    void validate(int sticker_count) const;
};

struct Corpus {
    Vocabulary vocab;
    StickerLibrary stickers;
    std::vector<DialogContext> contexts;
};

/// Draws n distinct stickers from `pool`, never returning `positive`.
/// Duplicates in the pool are ignored. Order is seed-determined. Throws
/// CorpusError when the pool holds fewer than n usable entries.
std::vector<int> sample_negatives(const std::vector<int>& pool, int positive,
                                  int n, Rng& rng);

/// Builds a shuffled candidate list from a positive and its negatives and
/// reports where the positive landed.
std::pair<std::vector<int>, int> make_candidate_set(int positive,
                                                    std::vector<int> negatives,
                                                    Rng& rng);

/// Loads a corpus directory: vocab.txt, stickers.jsonl plus the referenced
/// images, and <split>.jsonl. Utterances are tokenized to length t_x; only
/// the most recent max_utterances turns of each record are kept. Malformed
/// records raise CorpusError naming the file and line.
Corpus load_corpus(const std::string& dir, const std::string& split, int t_x,
                   int max_utterances);

/// Writes dialog records back out as <split>.jsonl under dir, mapping token
/// ids to words through the vocabulary. Inverse of the record-loading half of
/// load_corpus for records without OOV tokens or truncation.
void save_records(const std::string& dir, const std::string& split,
                  const std::vector<DialogContext>& contexts,
                  const Vocabulary& vocab, const StickerLibrary& stickers);

}  // namespace srs
