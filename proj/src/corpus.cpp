#include "srs/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "srs/errors.hpp"
#include "srs/image.hpp"

namespace srs {

namespace {
using nlohmann::json;

std::string loc(const std::string& file, int line) {
    return file + ":" + std::to_string(line) + ": ";
}
}  // namespace

Vocabulary::Vocabulary() {
    add("<pad>");
    add("<oov>");
}

int Vocabulary::add(const std::string& word) {
    auto it = index_.find(word);
    if (it != index_.end()) return it->second;
    int id = static_cast<int>(words_.size());
    words_.push_back(word);
    index_.emplace(word, id);
    return id;
}

int Vocabulary::id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kOov : it->second;
}

const std::string& Vocabulary::word(int id) const {
    if (id < 0 || id >= size())
        throw DimensionError("vocabulary id " + std::to_string(id) + " out of range");
    return words_[static_cast<size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path + ": cannot open for writing");
    for (const auto& w : words_) out << w << "\n";
    if (!out) throw IoError(path + ": write failed");
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": cannot open for reading");
    Vocabulary v;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) throw CorpusError(loc(path, line_no) + "empty vocabulary entry");
        int expected = line_no - 1;
        if (expected < 2) {
            const char* fixed = expected == 0 ? "<pad>" : "<oov>";
            if (line != fixed)
                throw CorpusError(loc(path, line_no) + "expected reserved token " +
                                  std::string(fixed) + ", got '" + line + "'");
            continue;
        }
        if (v.index_.count(line))
            throw CorpusError(loc(path, line_no) + "duplicate word '" + line + "'");
        v.add(line);
    }
    return v;
}

int Utterance::real_count() const {
    int n = 0;
    for (auto m : mask) n += m ? 1 : 0;
    return n;
}

Utterance tokenize_and_pad(const std::vector<std::string>& words,
                           const Vocabulary& vocab, int t_x) {
    if (t_x <= 0) throw DimensionError("tokenize_and_pad: t_x must be positive");
    Utterance u;
    u.ids.assign(static_cast<size_t>(t_x), Vocabulary::kPad);
    u.mask.assign(static_cast<size_t>(t_x), 0);
    size_t keep = std::min(words.size(), static_cast<size_t>(t_x));
    for (size_t j = 0; j < keep; ++j) {
        u.ids[j] = vocab.id(words[j]);
        u.mask[j] = 1;
    }
    return u;
}

int StickerLibrary::add(Sticker s) {
    if (by_id_.count(s.id))
        throw CorpusError("duplicate sticker id '" + s.id + "'");
    int idx = static_cast<int>(stickers_.size());
    by_id_.emplace(s.id, idx);
    stickers_.push_back(std::move(s));
    return idx;
}

int StickerLibrary::index_of(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? -1 : it->second;
}

const Sticker& StickerLibrary::at(int index) const {
    if (index < 0 || index >= size())
        throw DimensionError("sticker index " + std::to_string(index) + " out of range");
    return stickers_[static_cast<size_t>(index)];
}

void DialogContext::validate(int sticker_count) const {
    if (utterances.empty())
        throw CorpusError("dialog " + std::to_string(id) + " has no utterances");
    if (candidates.empty())
        throw CorpusError("dialog " + std::to_string(id) + " has no candidates");
    if (positive_index < 0 || positive_index >= static_cast<int>(candidates.size()))
        throw CorpusError("dialog " + std::to_string(id) + " positive index " +
                          std::to_string(positive_index) + " outside candidate set");
    std::set<int> seen;
    for (int c : candidates) {
        if (c < 0 || c >= sticker_count)
            throw CorpusError("dialog " + std::to_string(id) + " references sticker index " +
                              std::to_string(c) + " outside the library");
        if (!seen.insert(c).second)
            throw CorpusError("dialog " + std::to_string(id) + " repeats candidate sticker " +
                              std::to_string(c));
    }
}

std::vector<int> sample_negatives(const std::vector<int>& pool, int positive,
                                  int n, Rng& rng) {
    if (n < 0) throw DimensionError("sample_negatives: n must be non-negative");
    std::vector<int> usable(pool);
    std::sort(usable.begin(), usable.end());
    usable.erase(std::unique(usable.begin(), usable.end()), usable.end());
    usable.erase(std::remove(usable.begin(), usable.end(), positive), usable.end());
    if (static_cast<int>(usable.size()) < n)
        throw CorpusError("cannot draw " + std::to_string(n) + " negatives from a pool of " +
                          std::to_string(usable.size()) + " non-positive stickers");
    rng.shuffle(usable);
    usable.resize(static_cast<size_t>(n));
    return usable;
}

std::pair<std::vector<int>, int> make_candidate_set(int positive,
                                                    std::vector<int> negatives,
                                                    Rng& rng) {
    std::vector<int> cands = std::move(negatives);
    cands.push_back(positive);
    rng.shuffle(cands);
    int pos = static_cast<int>(std::find(cands.begin(), cands.end(), positive) - cands.begin());
    return {std::move(cands), pos};
}

namespace {

json parse_line(const std::string& file, int line_no, const std::string& line) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw CorpusError(loc(file, line_no) + "invalid JSON: " + e.what());
    }
}

}  // namespace

Corpus load_corpus(const std::string& dir, const std::string& split, int t_x,
                   int max_utterances) {
    if (max_utterances <= 0)
        throw DimensionError("load_corpus: max_utterances must be positive");
    Corpus corpus;
    corpus.vocab = Vocabulary::load(dir + "/vocab.txt");

    {
        const std::string path = dir + "/stickers.jsonl";
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError(path + ": cannot open for reading");
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            json rec = parse_line(path, line_no, line);
            if (!rec.is_object() || !rec.contains("id") || !rec.contains("file") ||
                !rec.contains("emoji"))
                throw CorpusError(loc(path, line_no) +
                                  "sticker record needs id, file and emoji fields");
            Sticker s;
            try {
                s.id = rec.at("id").get<std::string>();
                s.file = rec.at("file").get<std::string>();
                s.emoji_tag = rec.at("emoji").get<int>();
            } catch (const json::exception& e) {
                throw CorpusError(loc(path, line_no) + "bad sticker record: " + e.what());
            }
            if (s.id.empty())
                throw CorpusError(loc(path, line_no) + "sticker id must be non-empty");
            if (s.emoji_tag < 0)
                throw CorpusError(loc(path, line_no) + "sticker emoji tag must be >= 0");
            s.image = read_pgm(dir + "/" + s.file);
            try {
                corpus.stickers.add(std::move(s));
            } catch (const CorpusError& e) {
                throw CorpusError(loc(path, line_no) + e.what());
            }
        }
        if (corpus.stickers.size() == 0)
            throw CorpusError(path + ": sticker library is empty");
    }

    {
        const std::string path = dir + "/" + split + ".jsonl";
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError(path + ": cannot open for reading");
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            json rec = parse_line(path, line_no, line);
            if (!rec.is_object() || !rec.contains("utterances") ||
                !rec.contains("candidates") || !rec.contains("positive"))
                throw CorpusError(loc(path, line_no) +
                                  "dialog record needs utterances, candidates and positive fields");
            DialogContext ctx;
            ctx.id = static_cast<int>(corpus.contexts.size());
            std::vector<std::vector<std::string>> turns;
            std::vector<std::string> cand_ids;
            int positive_slot = -1;
            try {
                turns = rec.at("utterances").get<std::vector<std::vector<std::string>>>();
                cand_ids = rec.at("candidates").get<std::vector<std::string>>();
                positive_slot = rec.at("positive").get<int>();
            } catch (const json::exception& e) {
                throw CorpusError(loc(path, line_no) + "bad dialog record: " + e.what());
            }
            if (turns.empty())
                throw CorpusError(loc(path, line_no) + "dialog has no utterances");
            if (cand_ids.empty())
                throw CorpusError(loc(path, line_no) + "dialog has no candidate stickers");
            if (positive_slot < 0 || positive_slot >= static_cast<int>(cand_ids.size()))
                throw CorpusError(loc(path, line_no) + "positive index " +
                                  std::to_string(positive_slot) + " outside candidate set");

            // Keep only the most recent turns when the history is long.
            size_t first = 0;
            if (turns.size() > static_cast<size_t>(max_utterances))
                first = turns.size() - static_cast<size_t>(max_utterances);
            for (size_t k = first; k < turns.size(); ++k)
                ctx.utterances.push_back(tokenize_and_pad(turns[k], corpus.vocab, t_x));

            for (const auto& cid : cand_ids) {
                int idx = corpus.stickers.index_of(cid);
                if (idx < 0)
                    throw CorpusError(loc(path, line_no) + "unknown candidate sticker id '" +
                                      cid + "'");
                ctx.candidates.push_back(idx);
            }
            ctx.positive_index = positive_slot;
            try {
                ctx.validate(corpus.stickers.size());
            } catch (const CorpusError& e) {
                throw CorpusError(loc(path, line_no) + e.what());
            }
            corpus.contexts.push_back(std::move(ctx));
        }
    }
    return corpus;
}

void save_records(const std::string& dir, const std::string& split,
                  const std::vector<DialogContext>& contexts,
                  const Vocabulary& vocab, const StickerLibrary& stickers) {
    const std::string path = dir + "/" + split + ".jsonl";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path + ": cannot open for writing");
    for (const auto& ctx : contexts) {
        json rec;
        auto& turns = rec["utterances"] = json::array();
        for (const auto& u : ctx.utterances) {
            json words = json::array();
            for (int j = 0; j < u.length(); ++j)
                if (u.mask[static_cast<size_t>(j)])
                    words.push_back(vocab.word(u.ids[static_cast<size_t>(j)]));
            turns.push_back(std::move(words));
        }
        auto& cands = rec["candidates"] = json::array();
        for (int c : ctx.candidates) cands.push_back(stickers.at(c).id);
        rec["positive"] = ctx.positive_index;
        out << rec.dump() << "\n";
    }
    if (!out) throw IoError(path + ": write failed");
}

}  // namespace srs
