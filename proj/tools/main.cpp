#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lapkit/augment.hpp"
#include "lapkit/checkpoint.hpp"
#include "lapkit/conllu.hpp"
#include "lapkit/corpus.hpp"
#include "lapkit/experiment.hpp"
#include "lapkit/masking.hpp"
#include "lapkit/pretrain.hpp"
#include "lapkit/rng.hpp"
#include "lapkit/vocab.hpp"

namespace fs = std::filesystem;
using namespace lapkit;

namespace {

// ---- corpus clean ----

struct CleanArgs {
  std::string input, output;
  bool line_corpus = false;  // forum-style: one sentence per line
  double subsample = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::string> exclude;  // treebanks whose sentences must go
  bool length_filter = false;
  std::size_t min_len = 5, max_len = 50;
};

int cmd_corpus_clean(const CleanArgs& a) {
  auto docs = read_documents(a.input, !a.line_corpus);
  if (a.subsample < 1.0) docs = subsample_articles(docs, a.subsample, a.seed);

  std::vector<SentenceRecord> sentences;
  for (const RawDocument& doc : docs) {
    int idx = 0;
    for (const std::string& text : clean_wiki_document(doc)) {
      SentenceRecord rec;
      rec.tokens = basic_tokenize(text);
      if (rec.tokens.empty()) continue;
      rec.source_doc = doc.doc_id;
      rec.index_in_doc = idx++;
      sentences.push_back(std::move(rec));
    }
  }

  std::set<std::vector<std::string>> eval_sentences;
  for (const std::string& path : a.exclude)
    for (const TreebankSentence& s : read_conllu(path))
      eval_sentences.insert(s.tokens);

  const auto kept = filter_sentences(sentences, eval_sentences, a.min_len,
                                     a.max_len, a.length_filter);
  write_sentence_file(a.output, kept);
  std::cout << "kept " << kept.size() << " of " << sentences.size()
            << " sentences -> " << a.output << "\n";
  return 0;
}

// ---- vocab ----

int cmd_vocab_train(const std::string& corpus_path, int size,
                    const std::string& output) {
  const auto corpus = read_sentence_file(corpus_path);
  const Vocabulary vocab = train_vocabulary(corpus, size);
  vocab.save(output);
  std::cout << "trained " << vocab.size() << " pieces -> " << output << "\n";
  return 0;
}

int cmd_vocab_stats(const std::string& corpus_path,
                    const std::string& vocab_path) {
  const auto corpus = read_sentence_file(corpus_path);
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  const CorpusStats stats = compute_corpus_stats(corpus, vocab);
  std::cout << "sentences:  " << stats.n_sentences << "\n"
            << "tokens:     " << stats.n_tokens << "\n"
            << "wp/token:   " << stats.wp_per_token << "\n"
            << "unk tokens: " << stats.unk_tokens << "\n";
  return 0;
}

int cmd_vocab_augment(const std::string& corpus_path,
                      const std::string& vocab_path, int new_size, int slots,
                      bool type_based, const std::string& output) {
  const auto corpus = read_sentence_file(corpus_path);
  const Vocabulary orig = Vocabulary::load(vocab_path);
  const auto counting = type_based ? CandidateCounting::kTypeBased
                                   : CandidateCounting::kTokenWeighted;

  Vocabulary augmented = orig;
  AugmentationReport report;
  if (slots == kNumUnusedSlots) {
    AugmentationRun run = run_augmentation(corpus, orig, new_size,
                                           kNumUnusedSlots, counting);
    augmented = std::move(run.augmented);
    report = std::move(run.report);
  } else {
    const Vocabulary new_vocab = train_vocabulary(corpus, new_size);
    const auto improved = improved_words(corpus, orig, new_vocab);
    const SelectionResult sel =
        select_pieces(improved, corpus, orig, new_vocab, slots, counting);
    augmented = orig.with_replaced_slots(sel.pieces);
    report = augmentation_report(corpus, orig, augmented, sel.fallback_used);
  }
  augmented.save(output);
  std::cout << "pieces added:  " << report.pieces_added.size()
            << " (fallback " << report.fallback_used << ")\n"
            << "unk before:    " << report.unk_before << "\n"
            << "unk after:     " << report.unk_after << "\n"
            << "-> " << output << "\n";
  return 0;
}

// ---- pretrain ----

int cmd_make_shards(const std::string& corpus_path,
                    const std::string& vocab_path, const std::string& output,
                    const MaskingConfig& mask, std::uint64_t seed) {
  const auto corpus = read_sentence_file(corpus_path);
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  std::vector<std::vector<int>> pieces;
  pieces.reserve(corpus.size());
  for (const SentenceRecord& rec : corpus)
    pieces.push_back(tokenize_sentence(rec.tokens, vocab).piece_ids);
  const auto instances = build_instances(pieces, vocab, mask, seed);
  write_shard(output, instances, vocab.fingerprint());
  std::cout << instances.size() << " instances -> " << output << "\n";
  return 0;
}

struct PretrainArgs {
  std::string shard, vocab_path, init, output;
  std::string mode = "base";
  PretrainConfig config;
  std::vector<int> grid;
  EncoderConfig encoder;
};

int cmd_pretrain_run(PretrainArgs& a) {
  std::uint64_t shard_fp = 0;
  const auto instances = read_shard(a.shard, &shard_fp);

  Vocabulary vocab = Vocabulary::load(a.vocab_path);
  if (vocab.fingerprint() != shard_fp)
    throw std::runtime_error("shard was built with a different vocabulary");

  const PretrainMode mode = pretrain_mode_from_string(a.mode);
  if (!a.grid.empty()) a.config.epochs_grid = a.grid;

  EncoderModel model = [&] {
    if (a.init.empty()) {
      a.encoder.vocab_size = static_cast<int>(vocab.size());
      return create_encoder(a.encoder, a.config.seed);
    }
    EncoderCheckpoint ckpt = load_encoder_checkpoint(a.init);
    if (ckpt.vocab.fingerprint() != vocab.fingerprint()) {
      if (mode != PretrainMode::kVa && mode != PretrainMode::kTva)
        throw std::runtime_error(
            "vocabulary differs from the checkpoint's; only va/tva may "
            "swap in an augmented vocabulary");
      initialize_new_embeddings(ckpt.model, vocab.replaced_slot_ids(),
                                derive_seed(a.config.seed, 0x51a7ULL, 0));
    }
    return std::move(ckpt.model);
  }();

  const fs::path out(a.output);
  const fs::path prefix = out.parent_path() / out.stem();
  const PretrainResult result = train_mlm(
      model, instances, mode, a.config,
      [&](int epoch, const EncoderModel& snapshot) {
        const std::string path =
            prefix.string() + "-e" + std::to_string(epoch) + ".ckpt";
        save_encoder_checkpoint(path, snapshot, vocab);
        std::cout << "epoch " << epoch << " -> " << path << "\n";
      });
  save_encoder_checkpoint(a.output, model, vocab);
  if (!result.epoch_mean_losses.empty())
    std::cout << "final mean loss " << result.epoch_mean_losses.back() << "\n";
  std::cout << "-> " << a.output << "\n";
  return 0;
}

// ---- parse ----

struct ParseTrainArgs {
  std::string encoder_ckpt, train, valid, output;
  std::string mode = "frozen";
  ParserConfig config;
  RunConfig run;
};

int cmd_parse_train(ParseTrainArgs& a) {
  EncoderCheckpoint enc = load_encoder_checkpoint(a.encoder_ckpt);
  const auto train = read_conllu(a.train);
  const auto valid = read_conllu(a.valid);
  std::vector<TreebankSentence> known = train;
  known.insert(known.end(), valid.begin(), valid.end());

  a.config.mode = representation_mode_from_string(a.mode);
  a.run.mode = a.config.mode;
  ParserModel model = create_parser(enc.model, enc.vocab,
                                    relation_inventory(known), a.config,
                                    a.run.model_seed);
  const ParserTrainResult result = train_parser(model, train, valid, a.run);
  save_parser_checkpoint(a.output, model);
  std::cout << "best validation LAS " << result.best_las << " at epoch "
            << result.best_epoch << " ("
            << result.valid_las_by_epoch.size() << " epochs";
  if (result.sentences_skipped > 0)
    std::cout << ", " << result.sentences_skipped << " sentences skipped";
  std::cout << ")\n-> " << a.output << "\n";
  return 0;
}

int cmd_parse_predict(const std::string& model_path, const std::string& input,
                      const std::string& output) {
  ParserModel model = load_parser_checkpoint(model_path);
  const auto sentences = read_conllu(input);
  std::vector<TreebankSentence> out;
  out.reserve(sentences.size());
  std::size_t fallbacks = 0;
  for (const TreebankSentence& s : sentences) {
    DependencyTree tree;
    try {
      tree = predict_tree(model, s.tokens);
    } catch (const std::invalid_argument&) {
      // Longer than the encoder's positions: emit a left-branching chain.
      ++fallbacks;
      for (int i = 0; i < static_cast<int>(s.tokens.size()); ++i) {
        tree.heads.push_back(i);
        tree.labels.push_back(0);
      }
    }
    out.push_back(with_prediction(s, tree, model.relations));
  }
  std::ofstream f(output);
  if (!f) throw std::runtime_error("cannot write " + output);
  f << format_conllu(out);
  std::cout << out.size() << " sentences";
  if (fallbacks > 0) std::cout << " (" << fallbacks << " over length)";
  std::cout << " -> " << output << "\n";
  return 0;
}

// ---- eval / treebank ----

int cmd_eval_score(const std::string& gold_path, const std::string& pred_path,
                   bool exclude_punct) {
  const auto gold = read_conllu(gold_path);
  const auto pred = read_conllu(pred_path);
  const ScoreReport rep = score(pred, gold, exclude_punct);
  std::cout << "UAS " << rep.uas << "\nLAS " << rep.las << "\ntokens "
            << rep.n_tokens << (exclude_punct ? " (punctuation excluded)" : "")
            << "\n";
  return 0;
}

int cmd_treebank_split(const std::string& input, const std::string& out_dir,
                       std::vector<double> ratios, std::uint64_t seed) {
  if (ratios.empty()) ratios = {0.8, 0.1, 0.1};
  if (ratios.size() != 3)
    throw std::runtime_error("--ratios needs exactly three values");
  const auto sentences = read_conllu(input);
  const TreebankSplit split =
      split_treebank(sentences, ratios[0], ratios[1], ratios[2], seed);
  fs::create_directories(out_dir);
  const auto write = [&](const std::string& name,
                         const std::vector<TreebankSentence>& part) {
    std::ofstream f(fs::path(out_dir) / name);
    f << format_conllu(part);
    std::cout << name << ": " << part.size() << " sentences\n";
  };
  write("train.conllu", split.train);
  write("valid.conllu", split.valid);
  write("test.conllu", split.test);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"language-adaptive pretraining toolkit"};
  app.require_subcommand(1);

  // corpus
  auto* corpus = app.add_subcommand("corpus", "corpus preparation");
  corpus->require_subcommand(1);
  CleanArgs clean;
  auto* corpus_clean =
      corpus->add_subcommand("clean", "clean raw text into a sentence file");
  corpus_clean->add_option("--input", clean.input)->required();
  corpus_clean->add_option("--output", clean.output)->required();
  corpus_clean->add_flag("--line-corpus", clean.line_corpus,
                         "one independent sentence per line (no markup)");
  corpus_clean->add_option("--subsample", clean.subsample,
                           "fraction of documents to keep");
  corpus_clean->add_option("--seed", clean.seed);
  corpus_clean->add_option("--exclude", clean.exclude,
                           "treebank files whose sentences are removed");
  corpus_clean->add_flag("--length-filter", clean.length_filter);
  corpus_clean->add_option("--min-len", clean.min_len);
  corpus_clean->add_option("--max-len", clean.max_len);

  // vocab
  auto* vocab = app.add_subcommand("vocab", "wordpiece vocabularies");
  vocab->require_subcommand(1);
  std::string v_corpus, v_vocab, v_output;
  int v_size = 5000;
  auto* vocab_train = vocab->add_subcommand("train", "train a vocabulary");
  vocab_train->add_option("--corpus", v_corpus)->required();
  vocab_train->add_option("--size", v_size);
  vocab_train->add_option("--output", v_output)->required();

  std::string s_corpus, s_vocab;
  auto* vocab_stats = vocab->add_subcommand("stats", "corpus statistics");
  vocab_stats->add_option("--corpus", s_corpus)->required();
  vocab_stats->add_option("--vocab", s_vocab)->required();

  std::string a_corpus, a_vocab, a_output;
  int a_new_size = 5000, a_slots = kNumUnusedSlots;
  bool a_type_based = false;
  auto* vocab_augment =
      vocab->add_subcommand("augment", "fill unused slots from target text");
  vocab_augment->add_option("--corpus", a_corpus)->required();
  vocab_augment->add_option("--vocab", a_vocab)->required();
  vocab_augment->add_option("--new-size", a_new_size);
  vocab_augment->add_option("--slots", a_slots);
  vocab_augment->add_flag("--type-based", a_type_based,
                          "count each improved word type once");
  vocab_augment->add_option("--output", a_output)->required();

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "masked-LM pretraining");
  pretrain->require_subcommand(1);
  std::string m_corpus, m_vocab, m_output;
  MaskingConfig mask;
  std::uint64_t m_seed = 0;
  auto* make_shards =
      pretrain->add_subcommand("make-shards", "masked instances as JSONL");
  make_shards->add_option("--corpus", m_corpus)->required();
  make_shards->add_option("--vocab", m_vocab)->required();
  make_shards->add_option("--output", m_output)->required();
  make_shards->add_option("--max-seq", mask.max_seq);
  make_shards->add_option("--max-pred", mask.max_pred);
  make_shards->add_option("--mask-prob", mask.mask_prob);
  make_shards->add_option("--dup", mask.dup_factor);
  make_shards->add_option("--seed", m_seed);

  PretrainArgs pt;
  auto* pretrain_run = pretrain->add_subcommand("run", "train the encoder");
  pretrain_run->add_option("--shard", pt.shard)->required();
  pretrain_run->add_option("--vocab", pt.vocab_path)->required();
  pretrain_run->add_option("--init", pt.init,
                           "encoder checkpoint to adapt from");
  pretrain_run->add_option("--output", pt.output)->required();
  pretrain_run->add_option("--mode", pt.mode, "base|lapt|va|tva");
  pretrain_run->add_option("--epochs-grid", pt.grid,
                           "checkpoint epochs, e.g. 1 5 10");
  pretrain_run->add_option("--lr", pt.config.lr);
  pretrain_run->add_option("--tiered-lr", pt.config.tiered_lr);
  pretrain_run->add_option("--warmup", pt.config.warmup_steps);
  pretrain_run->add_option("--batch", pt.config.batch_size);
  pretrain_run->add_option("--clip", pt.config.clip_norm);
  pretrain_run->add_option("--seed", pt.config.seed);
  pretrain_run->add_option("--layers", pt.encoder.n_layers);
  pretrain_run->add_option("--hidden", pt.encoder.hidden);
  pretrain_run->add_option("--heads", pt.encoder.n_heads);
  pretrain_run->add_option("--ff", pt.encoder.ff_dim);
  pretrain_run->add_option("--max-positions", pt.encoder.max_positions);
  pretrain_run->add_option("--dropout", pt.encoder.dropout);

  // parse
  auto* parse = app.add_subcommand("parse", "dependency parsing");
  parse->require_subcommand(1);
  ParseTrainArgs ptr_args;
  auto* parse_train = parse->add_subcommand("train", "train the parser");
  parse_train->add_option("--encoder", ptr_args.encoder_ckpt)->required();
  parse_train->add_option("--treebank", ptr_args.train)->required();
  parse_train->add_option("--valid", ptr_args.valid)->required();
  parse_train->add_option("--output", ptr_args.output)->required();
  parse_train->add_option("--mode", ptr_args.mode, "frozen|ft");
  parse_train->add_option("--max-epochs", ptr_args.config.max_epochs);
  parse_train->add_option("--patience", ptr_args.config.patience);
  parse_train->add_option("--batch", ptr_args.config.batch_size);
  parse_train->add_option("--lr", ptr_args.config.parser_lr);
  parse_train->add_option("--encoder-lr", ptr_args.config.encoder_lr);
  parse_train->add_option("--arc-dim", ptr_args.config.arc_dim);
  parse_train->add_option("--label-dim", ptr_args.config.label_dim);
  parse_train->add_option("--bilstm-layers", ptr_args.config.bilstm_layers);
  parse_train->add_option("--bilstm-hidden", ptr_args.config.bilstm_hidden);
  parse_train->add_option("--beta1", ptr_args.run.adam_beta1);
  parse_train->add_option("--beta2", ptr_args.run.adam_beta2);
  parse_train->add_option("--clip", ptr_args.run.grad_norm_clip);
  parse_train->add_option("--env-seed", ptr_args.run.env_seed);
  parse_train->add_option("--numeric-seed", ptr_args.run.numeric_seed);
  parse_train->add_option("--model-seed", ptr_args.run.model_seed);

  std::string pp_model, pp_input, pp_output;
  auto* parse_predict = parse->add_subcommand("predict", "predict trees");
  parse_predict->add_option("--model", pp_model)->required();
  parse_predict->add_option("--input", pp_input)->required();
  parse_predict->add_option("--output", pp_output)->required();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluation");
  eval->require_subcommand(1);
  std::string e_gold, e_pred;
  bool e_no_punct = false;
  auto* eval_score = eval->add_subcommand("score", "UAS/LAS against gold");
  eval_score->add_option("--gold", e_gold)->required();
  eval_score->add_option("--pred", e_pred)->required();
  eval_score->add_flag("--exclude-punct", e_no_punct);

  // treebank
  auto* treebank = app.add_subcommand("treebank", "treebank utilities");
  treebank->require_subcommand(1);
  std::string t_input, t_out_dir;
  std::vector<double> t_ratios;
  std::uint64_t t_seed = 0;
  auto* treebank_split =
      treebank->add_subcommand("split", "train/valid/test partition");
  treebank_split->add_option("--input", t_input)->required();
  treebank_split->add_option("--output-dir", t_out_dir)->required();
  treebank_split->add_option("--ratios", t_ratios, "three ratios summing to 1");
  treebank_split->add_option("--seed", t_seed);

  // experiment
  auto* experiment = app.add_subcommand("experiment", "manifest-driven runs");
  experiment->require_subcommand(1);
  std::string x_manifest, x_dir;
  auto* experiment_run =
      experiment->add_subcommand("run", "execute a manifest");
  experiment_run->add_option("--manifest", x_manifest)->required();
  auto* experiment_report =
      experiment->add_subcommand("report", "re-render results");
  experiment_report->add_option("--dir", x_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*corpus_clean) return cmd_corpus_clean(clean);
    if (*vocab_train) return cmd_vocab_train(v_corpus, v_size, v_output);
    if (*vocab_stats) return cmd_vocab_stats(s_corpus, s_vocab);
    if (*vocab_augment)
      return cmd_vocab_augment(a_corpus, a_vocab, a_new_size, a_slots,
                               a_type_based, a_output);
    if (*make_shards)
      return cmd_make_shards(m_corpus, m_vocab, m_output, mask, m_seed);
    if (*pretrain_run) return cmd_pretrain_run(pt);
    if (*parse_train) return cmd_parse_train(ptr_args);
    if (*parse_predict)
      return cmd_parse_predict(pp_model, pp_input, pp_output);
    if (*eval_score) return cmd_eval_score(e_gold, e_pred, e_no_punct);
    if (*treebank_split)
      return cmd_treebank_split(t_input, t_out_dir, t_ratios, t_seed);
    if (*experiment_run) {
      const ExperimentOutcome outcome = run_pipeline(x_manifest);
      std::cout << render_report(outcome.out_dir);
      return 0;
    }
    if (*experiment_report) {
      std::cout << render_report(x_dir);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
