#include "lapkit/synthlang.hpp"

#include <set>
#include <stdexcept>
#include <string>

#include "lapkit/rng.hpp"

namespace lapkit {

namespace {

const std::string kVowels = "aeiou";

std::string syllable(Rng& rng, const std::string& consonants) {
  std::string s;
  s += consonants[rng.uniform_int(consonants.size())];
  s += kVowels[rng.uniform_int(kVowels.size())];
  return s;
}

std::string make_stem(Rng& rng, const std::string& consonants, int syllables) {
  std::string s;
  for (int i = 0; i < syllables; ++i) s += syllable(rng, consonants);
  return s;
}

// Low indices are much more likely: a crude Zipf-like lexicon draw.
std::size_t zipfish(Rng& rng, std::size_t n) {
  const double u = rng.uniform();
  return static_cast<std::size_t>(u * u * static_cast<double>(n));
}

}  // namespace

std::vector<SentenceRecord> synth_base_corpus(int n_sentences,
                                              std::uint64_t seed) {
  if (n_sentences <= 0)
    throw std::invalid_argument("synth_base_corpus: n_sentences must be > 0");
  // Overlapping consonant inventories keep the languages related but
  // distinguishable.
  const std::vector<std::string> inventories = {"bdfgklmn", "klmnprst",
                                                "bdgkprst"};
  std::vector<std::vector<std::string>> lexicons;
  Rng lex_rng(derive_seed(seed, 0xba5eULL, 0));
  for (const std::string& inv : inventories) {
    std::vector<std::string> words;
    std::set<std::string> seen;
    while (words.size() < 140) {
      const int sylls = 2 + static_cast<int>(lex_rng.uniform_int(2));
      std::string w = make_stem(lex_rng, inv, sylls);
      if (seen.insert(w).second) words.push_back(std::move(w));
    }
    lexicons.push_back(std::move(words));
  }

  Rng rng(derive_seed(seed, 0xba5eULL, 1));
  std::vector<SentenceRecord> out;
  out.reserve(static_cast<std::size_t>(n_sentences));
  for (int i = 0; i < n_sentences; ++i) {
    const std::size_t lang = static_cast<std::size_t>(i) % lexicons.size();
    const auto& lex = lexicons[lang];
    SentenceRecord rec;
    rec.source_doc = "synth-base-" + std::to_string(lang);
    rec.index_in_doc = i;
    const int len = 4 + static_cast<int>(rng.uniform_int(6));
    for (int j = 0; j < len; ++j)
      rec.tokens.push_back(lex[zipfish(rng, lex.size())]);
    out.push_back(std::move(rec));
  }
  return out;
}

namespace {

struct TargetLexicon {
  std::vector<std::string> stems;
  std::string subj_suffix, obj_suffix, gen_suffix;
};

TargetLexicon make_target_lexicon(bool held_out_case, std::uint64_t seed) {
  TargetLexicon lex;
  // Stems reuse the shared consonants only; x/y/z/q/w never occur in the
  // base corpus.
  Rng rng(derive_seed(seed, 0x7a96ULL, 0));
  std::set<std::string> seen;
  while (lex.stems.size() < 40) {
    std::string s = make_stem(rng, "bdfgklmnprst", 2);
    if (seen.insert(s).second) lex.stems.push_back(std::move(s));
  }
  if (held_out_case) {
    lex.subj_suffix = "xy";
    lex.obj_suffix = "zy";
    lex.gen_suffix = "qw";
  } else {
    lex.subj_suffix = "bi";
    lex.obj_suffix = "go";
    lex.gen_suffix = "ku";
  }
  return lex;
}

enum class Case { kSubj, kObj };

// Emits one noun phrase in head-final order: [genitive] [adjectives] noun.
// Returns the index of the head noun; gold arcs land in `sent`.
int emit_np(TreebankSentence& sent, const TargetLexicon& lex, Rng& rng,
            Case np_case) {
  struct Pending {
    std::string form;
    std::string rel;
  };
  std::vector<Pending> before;
  if (rng.uniform() < 0.3)
    before.push_back({lex.stems[rng.uniform_int(lex.stems.size())] +
                          lex.gen_suffix,
                      "nmod"});
  const double adj_draw = rng.uniform();
  const int n_adj = adj_draw < 0.5 ? 0 : (adj_draw < 0.85 ? 1 : 2);
  for (int i = 0; i < n_adj; ++i)
    before.push_back(
        {lex.stems[rng.uniform_int(lex.stems.size())] + "ra", "amod"});

  for (const Pending& p : before) {
    sent.tokens.push_back(p.form);
    sent.heads.push_back(0);  // patched to the noun below
    sent.deprels.push_back(p.rel);
  }
  const std::string case_suffix =
      np_case == Case::kSubj ? lex.subj_suffix : lex.obj_suffix;
  sent.tokens.push_back(lex.stems[rng.uniform_int(lex.stems.size())] +
                        case_suffix);
  sent.heads.push_back(0);  // patched to the verb by the caller
  sent.deprels.push_back(np_case == Case::kSubj ? "nsubj" : "obj");
  const int noun_pos = static_cast<int>(sent.tokens.size());  // 1-based
  for (std::size_t i = sent.tokens.size() - before.size() - 1;
       i + 1 < sent.tokens.size(); ++i)
    sent.heads[i] = noun_pos;
  return noun_pos;
}

TreebankSentence make_target_sentence(const TargetLexicon& lex, Rng& rng) {
  TreebankSentence sent;
  const bool transitive = rng.uniform() < 0.6;
  std::vector<int> noun_positions;
  if (transitive) {
    // Case marking frees the argument order.
    const bool subj_first = rng.uniform() < 0.5;
    noun_positions.push_back(
        emit_np(sent, lex, rng, subj_first ? Case::kSubj : Case::kObj));
    noun_positions.push_back(
        emit_np(sent, lex, rng, subj_first ? Case::kObj : Case::kSubj));
  } else {
    noun_positions.push_back(emit_np(sent, lex, rng, Case::kSubj));
  }
  sent.tokens.push_back(lex.stems[rng.uniform_int(lex.stems.size())] + "ti");
  sent.heads.push_back(0);
  sent.deprels.push_back("root");
  const int verb_pos = static_cast<int>(sent.tokens.size());
  for (int np : noun_positions) sent.heads[static_cast<std::size_t>(np) - 1] = verb_pos;
  return sent;
}

}  // namespace

SynthTarget synth_target_language(int corpus_sentences, int treebank_sentences,
                                  bool held_out_case, std::uint64_t seed) {
  if (corpus_sentences < 0 || treebank_sentences <= 0)
    throw std::invalid_argument("synth_target_language: bad sentence counts");
  const TargetLexicon lex = make_target_lexicon(held_out_case, seed);
  SynthTarget out;

  Rng tree_rng(derive_seed(seed, 0x7a96ULL, 1));
  std::set<std::vector<std::string>> seen;
  while (static_cast<int>(out.treebank.size()) < treebank_sentences) {
    TreebankSentence s = make_target_sentence(lex, tree_rng);
    if (seen.insert(s.tokens).second) out.treebank.push_back(std::move(s));
  }

  // The raw corpus never repeats a treebank sentence, so parser evaluation
  // stays disjoint from pretraining text.
  Rng corpus_rng(derive_seed(seed, 0x7a96ULL, 2));
  int index = 0;
  while (static_cast<int>(out.corpus.size()) < corpus_sentences) {
    TreebankSentence s = make_target_sentence(lex, corpus_rng);
    if (seen.count(s.tokens)) continue;
    SentenceRecord rec;
    rec.tokens = std::move(s.tokens);
    rec.source_doc = "synth-target";
    rec.index_in_doc = index++;
    out.corpus.push_back(std::move(rec));
  }
  return out;
}

}  // namespace lapkit
