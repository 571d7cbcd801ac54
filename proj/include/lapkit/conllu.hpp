#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lapkit/tree_decode.hpp"

namespace lapkit {

// One parsed sentence: surface forms with gold heads/relations. Multiword
// token ranges and empty nodes are dropped at read time; comment lines are
// preserved verbatim (including the leading '#').
struct TreebankSentence {
  std::vector<std::string> tokens;
  std::vector<int> heads;             // gold, 0 = root
  std::vector<std::string> deprels;   // gold relation names
  std::vector<std::string> comments;
};

// Reads CoNLL-U (10 tab-separated columns, '#' comments, blank-line
// sentence separation). Consumes ID/FORM/HEAD/DEPREL; skips multiword
// ranges ("1-2") and empty nodes ("1.1"). Malformed lines, out-of-range
// heads and cyclic gold annotation raise errors naming file:line.
std::vector<TreebankSentence> read_conllu(const std::string& path);
std::vector<TreebankSentence> parse_conllu(const std::string& text,
                                           const std::string& origin = "<string>");

// Emits valid CoNLL-U; columns we do not track are written as "_".
void write_conllu(const std::string& path,
                  const std::vector<TreebankSentence>& sentences);
std::string format_conllu(const std::vector<TreebankSentence>& sentences);

// Gold sentence with predicted heads/relations substituted.
TreebankSentence with_prediction(const TreebankSentence& gold,
                                 const DependencyTree& pred,
                                 const std::vector<std::string>& relations);

// Sorted unique relation names over a treebank.
std::vector<std::string> relation_inventory(
    const std::vector<TreebankSentence>& sentences);

// Random partition, deterministic in seed. Valid/test sizes are floored;
// the remainder goes to train.
struct TreebankSplit {
  std::vector<TreebankSentence> train, valid, test;
};
TreebankSplit split_treebank(const std::vector<TreebankSentence>& sentences,
                             double train_ratio, double valid_ratio,
                             double test_ratio, std::uint64_t seed);

struct ScoreReport {
  double uas = 0.0;
  double las = 0.0;
  long n_tokens = 0;
};

// Micro-averaged over tokens; punctuation (gold deprel "punct") counted
// unless excluded.
ScoreReport score(const std::vector<TreebankSentence>& predictions,
                  const std::vector<TreebankSentence>& gold,
                  bool exclude_punct = false);

}  // namespace lapkit
