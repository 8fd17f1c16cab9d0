// Command-line surface for the sticker response selector: corpus synthesis,
// training, evaluation, single-context ranking and attention dumps.
//
// Exit codes: 0 success, 2 usage/config faults, 3 data faults (corpus,
// checkpoint, files), 4 numeric faults during training or evaluation.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "srs/corpus.hpp"
#include "srs/errors.hpp"
#include "srs/evaluator.hpp"
#include "srs/model.hpp"
#include "srs/synth.hpp"
#include "srs/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace srs;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string utc_now() {
    std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("short write to " + path.string());
}

/// Every command records its resolved configuration next to its outputs.
void write_manifest(const fs::path& out_dir, const std::string& command, json resolved) {
    json m;
    m["command"] = command;
    m["resolved"] = std::move(resolved);
    m["created_utc"] = utc_now();
    write_text(out_dir / "manifest.json", m.dump(2) + "\n");
}

fs::path ensure_dir(const std::string& dir) {
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec || !fs::is_directory(p)) throw IoError("cannot create output directory " + dir);
    return p;
}

struct CorpusArgs {
    std::string dir;
    std::string split;
};

void add_corpus_options(CLI::App* cmd, CorpusArgs& args, const char* default_split) {
    args.split = default_split;
    cmd->add_option("--corpus", args.dir, "Corpus directory")
        ->envname("SRS_DATA_DIR")
        ->required();
    cmd->add_option("--split", args.split, "Record file to read (<split>.jsonl)")
        ->capture_default_str();
}

void add_model_options(CLI::App* cmd, ModelConfig& cfg) {
    cmd->add_option("--d", cfg.d, "Hidden size")->capture_default_str();
    cmd->add_option("--p", cfg.p, "Sticker grid side (p x p cells)")->capture_default_str();
    cmd->add_option("--t-x", cfg.t_x, "Tokens kept per utterance")->capture_default_str();
    cmd->add_option("--max-utterances", cfg.max_utterances, "Dialog turns kept")
        ->capture_default_str();
    cmd->add_option("--k-emoji", cfg.k_emoji, "Emoji classes for the auxiliary head")
        ->capture_default_str();
    cmd->add_option("--conv-channels", cfg.conv_channels, "Channels of the four conv stages")
        ->capture_default_str()
        ->expected(4);
    cmd->add_option("--dropout", cfg.dropout, "Dropout probability")->capture_default_str();
    cmd->add_flag("--scale-attention", cfg.scale_attention,
                  "Divide attention logits by sqrt(d)");
    cmd->add_flag("--normalize-tau", cfg.normalize_tau,
                  "Softmax the pooled interaction weights");
    cmd->add_flag("--no-classify", cfg.no_classify, "Drop the emoji classification head");
    cmd->add_flag("--no-din", cfg.no_din, "Bypass the deep interaction network");
    cmd->add_flag("--no-fusion-rnn", cfg.no_fusion_rnn, "Zero the short-term fusion branch");
}

/// A checkpoint, its rebuilt model, and a corpus loaded with the checkpoint's
/// own geometry and validated against it.
struct LoadedModel {
    ModelConfig cfg;
    Corpus corpus;
    Model model;
};

LoadedModel load_for_eval(const std::string& ckpt_path, const CorpusArgs& where) {
    Checkpoint ck = read_checkpoint(ckpt_path);
    if (!ck.config.contains("model"))
        throw IoError("checkpoint " + ckpt_path + " carries no model config");
    ModelConfig cfg = ModelConfig::from_json(ck.config.at("model"));
    Corpus corpus = load_corpus(where.dir, where.split, cfg.t_x, cfg.max_utterances);
    if (corpus.vocab.size() > cfg.vocab_size) {
        std::ostringstream os;
        os << "checkpoint/corpus mismatch: corpus vocabulary has " << corpus.vocab.size()
           << " words but the checkpoint was trained with vocab_size " << cfg.vocab_size;
        throw CorpusError(os.str());
    }
    LoadedModel lm{cfg, std::move(corpus), Model(cfg, 0)};
    install_checkpoint(ck, lm.model.params());
    return lm;
}

int cmd_synth(const SynthSpec& spec, const std::string& out_dir) {
    fs::path dir = ensure_dir(out_dir);
    synth_corpus(spec, dir);
    std::cout << "wrote corpus (" << spec.pairs << " train / " << spec.heldout_pairs
              << " held-out pairs, " << spec.classes << " classes) to " << dir.string()
              << "\n";
    return 0;
}

int cmd_train(const CorpusArgs& where, const std::string& out_dir, ModelConfig mc,
              TrainConfig tc, unsigned long long seed) {
    fs::path dir = ensure_dir(out_dir);
    Corpus corpus = load_corpus(where.dir, where.split, mc.t_x, mc.max_utterances);
    mc.vocab_size = corpus.vocab.size();
    tc.t_x = mc.t_x;
    tc.max_utterances = mc.max_utterances;
    tc.seed = seed;

    Model model(mc, seed);
    Trainer trainer(model, corpus, tc);

    std::ofstream loss_log(dir / "loss_log.jsonl", std::ios::binary);
    std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
    if (!loss_log || !metrics) throw IoError("cannot write logs under " + dir.string());

    trainer.train([&](const EpochStats& st) {
        json line;
        line["epoch"] = st.epoch;
        line["hinge_loss"] = st.hinge_loss;
        line["cls_loss"] = st.cls_loss;
        line["train_r_at_1"] = st.train_recall_at1;
        loss_log << line.dump() << "\n";
        line["wall_seconds"] = st.wall_seconds;
        metrics << line.dump() << "\n";
        std::cout << "epoch " << st.epoch << "  hinge " << st.hinge_loss << "  cls "
                  << st.cls_loss << "  train R@1 " << st.train_recall_at1 << "  ("
                  << st.wall_seconds << "s)\n";
    });
    loss_log.close();
    metrics.close();

    json ck_config;
    ck_config["model"] = mc.to_json();
    ck_config["train"] = tc.to_json();
    write_checkpoint((dir / "model.ckpt").string(), model.params(), ck_config);

    json resolved;
    resolved["corpus"] = where.dir;
    resolved["split"] = where.split;
    resolved["model"] = mc.to_json();
    resolved["train"] = tc.to_json();
    resolved["outputs"] = {"model.ckpt", "loss_log.jsonl", "metrics.jsonl"};
    write_manifest(dir, "train", resolved);
    std::cout << "wrote " << (dir / "model.ckpt").string() << "\n";
    return 0;
}

int cmd_eval(const CorpusArgs& where, const std::string& ckpt, const std::string& out_dir,
             const std::vector<int>& sweep, bool with_similarity) {
    fs::path dir = ensure_dir(out_dir);
    LoadedModel lm = load_for_eval(ckpt, where);

    std::vector<RankingResult> results = score_corpus(lm.model, lm.corpus);
    json report;
    report["eval"] = evaluate(results).to_json();
    if (!sweep.empty()) {
        report["sweep"] = json::array();
        for (const SweepRow& row : sweep_utterances(lm.model, lm.corpus, sweep)) {
            json rj = row.report.to_json();
            rj["last_n"] = row.last_n;
            report["sweep"].push_back(rj);
        }
    }
    if (with_similarity)
        report["similarity"] = similarity_report(lm.corpus, results).to_json();

    std::string text = report.dump(2) + "\n";
    write_text(dir / "report.json", text);
    std::cout << text;

    json resolved;
    resolved["corpus"] = where.dir;
    resolved["split"] = where.split;
    resolved["checkpoint"] = ckpt;
    resolved["sweep"] = sweep;
    resolved["similarity_report"] = with_similarity;
    write_manifest(dir, "eval", resolved);
    return 0;
}

int cmd_rank(const CorpusArgs& where, const std::string& ckpt, const std::string& out_dir,
             int context_index) {
    fs::path dir = ensure_dir(out_dir);
    LoadedModel lm = load_for_eval(ckpt, where);
    if (context_index < 0 || context_index >= static_cast<int>(lm.corpus.contexts.size())) {
        std::ostringstream os;
        os << "rank: no context with index " << context_index << " (corpus has "
           << lm.corpus.contexts.size() << ")";
        throw UsageError(os.str());
    }

    Corpus one;
    one.vocab = lm.corpus.vocab;
    for (const Sticker& s : lm.corpus.stickers.all()) one.stickers.add(s);
    one.contexts.push_back(lm.corpus.contexts[static_cast<size_t>(context_index)]);
    RankingResult rr = score_corpus(lm.model, one).at(0);

    const DialogContext& ctx = one.contexts[0];
    std::vector<int> order(rr.scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return rr.scores[static_cast<size_t>(a)] > rr.scores[static_cast<size_t>(b)];
    });

    json out;
    out["context_id"] = ctx.id;
    out["positive_index"] = ctx.positive_index;
    out["rank_of_positive"] = rr.rank();
    out["candidates"] = json::array();
    for (int i : order) {
        json cj;
        cj["candidate_index"] = i;
        cj["sticker_id"] = lm.corpus.stickers.at(ctx.candidates[static_cast<size_t>(i)]).id;
        cj["score"] = rr.scores[static_cast<size_t>(i)];
        cj["positive"] = (i == ctx.positive_index);
        out["candidates"].push_back(cj);
    }
    std::string text = out.dump(2) + "\n";
    write_text(dir / "ranking.json", text);
    std::cout << text;

    json resolved;
    resolved["corpus"] = where.dir;
    resolved["split"] = where.split;
    resolved["checkpoint"] = ckpt;
    resolved["context"] = context_index;
    write_manifest(dir, "rank", resolved);
    return 0;
}

int cmd_attention(const CorpusArgs& where, const std::string& ckpt,
                  const std::string& out_dir, int context_index, int candidate_index) {
    fs::path dir = ensure_dir(out_dir);
    LoadedModel lm = load_for_eval(ckpt, where);
    AttentionDump dump = attention_dump(lm.model, lm.corpus, context_index, candidate_index);
    std::string text = dump.to_json().dump(2) + "\n";
    write_text(dir / "attention.json", text);
    std::cout << text;

    json resolved;
    resolved["corpus"] = where.dir;
    resolved["split"] = where.split;
    resolved["checkpoint"] = ckpt;
    resolved["context"] = context_index;
    resolved["candidate"] = candidate_index;
    write_manifest(dir, "attention", resolved);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sticker response selector"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read option defaults from an INI file");

    // synth --------------------------------------------------------------
    SynthSpec spec;
    std::string synth_out;
    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
    synth->add_option("--out", synth_out, "Corpus output directory")->required();
    synth->add_option("--pairs", spec.pairs, "Training contexts")->capture_default_str();
    synth->add_option("--heldout", spec.heldout_pairs, "Held-out contexts")
        ->capture_default_str();
    synth->add_option("--classes", spec.classes, "Sticker classes")->capture_default_str();
    synth->add_option("--stickers-per-class", spec.stickers_per_class, "Stickers per class")
        ->capture_default_str();
    synth->add_option("--negatives", spec.negatives, "Negatives per context")
        ->capture_default_str();
    synth->add_option("--min-utterances", spec.min_utterances, "Fewest turns per context")
        ->capture_default_str();
    synth->add_option("--max-utterances", spec.max_utterances, "Most turns per context")
        ->capture_default_str();
    synth->add_option("--min-words", spec.min_words, "Fewest words per turn")
        ->capture_default_str();
    synth->add_option("--max-words", spec.max_words, "Most words per turn")
        ->capture_default_str();
    synth->add_option("--shared-words", spec.shared_words, "Class-neutral vocabulary size")
        ->capture_default_str();
    synth->add_option("--class-words", spec.class_words, "Per-class vocabulary size")
        ->capture_default_str();
    synth->add_option("--signal-prob", spec.signal_prob,
                      "Probability a word is class-specific")
        ->capture_default_str();
    synth->add_option("--image-side", spec.image_side, "Sticker image side")
        ->capture_default_str();
    synth->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();

    // train --------------------------------------------------------------
    CorpusArgs train_where;
    std::string train_out;
    ModelConfig mc;
    TrainConfig tc;
    unsigned long long train_seed = 7;
    CLI::App* train = app.add_subcommand("train", "Train a selector");
    add_corpus_options(train, train_where, "train");
    train->add_option("--out", train_out, "Run output directory")->required();
    add_model_options(train, mc);
    train->add_option("--batch", tc.batch_size, "Mini-batch size")->capture_default_str();
    train->add_option("--lr", tc.lr, "Adam learning rate")->capture_default_str();
    train->add_option("--margin", tc.margin, "Hinge margin")->capture_default_str();
    train->add_option("--lambda-cls", tc.lambda_cls, "Auxiliary loss weight")
        ->capture_default_str();
    train->add_option("--epochs", tc.epochs, "Epochs to run")->capture_default_str();
    train->add_option("--negatives", tc.negatives, "Negatives per candidate set")
        ->capture_default_str();
    train->add_option("--seed", train_seed, "Init/shuffle/dropout seed")
        ->capture_default_str();

    // eval ---------------------------------------------------------------
    CorpusArgs eval_where;
    std::string eval_ckpt, eval_out;
    std::vector<int> eval_sweep;
    bool eval_similarity = false;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    add_corpus_options(eval, eval_where, "heldout");
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval->add_option("--out", eval_out, "Report output directory")->required();
    eval->add_option("--sweep", eval_sweep,
                     "Re-evaluate keeping only the most recent n utterances");
    eval->add_flag("--similarity-report", eval_similarity,
                   "Group contexts by positive/negative image similarity");

    // rank ---------------------------------------------------------------
    CorpusArgs rank_where;
    std::string rank_ckpt, rank_out;
    int rank_context = 0;
    CLI::App* rank = app.add_subcommand("rank", "Rank one context's candidates");
    add_corpus_options(rank, rank_where, "heldout");
    rank->add_option("--checkpoint", rank_ckpt, "Checkpoint file")->required();
    rank->add_option("--out", rank_out, "Output directory")->required();
    rank->add_option("--context", rank_context, "Context index within the split")
        ->required();

    // attention ------------------------------------------------------------
    CorpusArgs attn_where;
    std::string attn_ckpt, attn_out;
    int attn_context = 0, attn_candidate = -1;
    CLI::App* attn = app.add_subcommand("attention", "Dump interaction attention");
    add_corpus_options(attn, attn_where, "heldout");
    attn->add_option("--checkpoint", attn_ckpt, "Checkpoint file")->required();
    attn->add_option("--out", attn_out, "Output directory")->required();
    attn->add_option("--context", attn_context, "Context index within the split")
        ->required();
    attn->add_option("--candidate", attn_candidate, "Candidate index (-1 = the positive)")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(spec, synth_out);
        if (train->parsed()) return cmd_train(train_where, train_out, mc, tc, train_seed);
        if (eval->parsed())
            return cmd_eval(eval_where, eval_ckpt, eval_out, eval_sweep, eval_similarity);
        if (rank->parsed()) return cmd_rank(rank_where, rank_ckpt, rank_out, rank_context);
        if (attn->parsed())
            return cmd_attention(attn_where, attn_ckpt, attn_out, attn_context,
                                 attn_candidate);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const TrainingFault& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const CorpusError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
