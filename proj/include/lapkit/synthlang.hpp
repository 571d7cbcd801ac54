#pragma once

#include <cstdint>
#include <vector>

#include "lapkit/conllu.hpp"
#include "lapkit/corpus.hpp"

namespace lapkit {

// Deterministic synthetic data for end-to-end experiments. The base corpus
// mixes three pseudo-languages over one shared alphabet. The target
// language is head-final: adjectives and genitives attach to the next
// noun, argument nouns to the clause-final verb. Word category lives in a
// suffix (verbs "-ti", adjectives "-ra", nouns a case suffix) while stems
// are drawn from one shared pool, so category is invisible to
// first-subpiece pooling and must come from contextualization. With
// held_out_case the case suffixes use characters absent from the base
// corpus: they tokenize to [UNK] under the base vocabulary, and only a
// vocabulary augmented on target text can separate subjects, objects and
// genitives.

std::vector<SentenceRecord> synth_base_corpus(int n_sentences,
                                              std::uint64_t seed);

struct SynthTarget {
  std::vector<SentenceRecord> corpus;      // raw sentences for LAPT / VA
  std::vector<TreebankSentence> treebank;  // gold trees, disjoint from corpus
};

SynthTarget synth_target_language(int corpus_sentences, int treebank_sentences,
                                  bool held_out_case, std::uint64_t seed);

}  // namespace lapkit
