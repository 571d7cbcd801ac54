#pragma once

#include <string>
#include <vector>

#include "lapkit/corpus.hpp"
#include "lapkit/vocab.hpp"

namespace lapkit {

// A word whose tokenization has strictly fewer unknowns under the
// target-language vocabulary than under the original one.
struct ImprovedWord {
  std::string word;
  long frequency = 0;             // corpus occurrences
  std::vector<int> new_piece_ids;  // tokenization under the new vocabulary
};

// Whether candidate counts are weighted by word corpus frequency or count
// each word type once.
enum class CandidateCounting { kTokenWeighted, kTypeBased };

struct SelectionResult {
  std::vector<std::string> pieces;
  int fallback_used = 0;  // slots filled from overall piece frequency
};

struct AugmentationReport {
  std::size_t unk_before = 0;
  std::size_t unk_after = 0;
  std::vector<std::string> pieces_added;
  int fallback_used = 0;
};

std::vector<ImprovedWord> improved_words(
    const std::vector<SentenceRecord>& corpus, const Vocabulary& orig_vocab,
    const Vocabulary& new_vocab, UnkPolicy policy = UnkPolicy::kPerChar);

// Ranks new-vocabulary pieces by their occurrence count across improved
// tokenizations; short candidate lists are completed with the overall most
// common new-vocabulary pieces. Returns exactly k pieces.
SelectionResult select_pieces(
    const std::vector<ImprovedWord>& improved,
    const std::vector<SentenceRecord>& corpus, const Vocabulary& orig_vocab,
    const Vocabulary& new_vocab, int k = kNumUnusedSlots,
    CandidateCounting counting = CandidateCounting::kTokenWeighted,
    UnkPolicy policy = UnkPolicy::kPerChar);

// Replaces every unused slot; size and all other ids are unchanged.
Vocabulary apply_augmentation(const Vocabulary& vocab,
                              const std::vector<std::string>& pieces);

AugmentationReport augmentation_report(const std::vector<SentenceRecord>& corpus,
                                       const Vocabulary& orig_vocab,
                                       const Vocabulary& aug_vocab,
                                       int fallback_used = 0,
                                       UnkPolicy policy = UnkPolicy::kPerChar);

struct AugmentationRun {
  Vocabulary new_vocab;
  Vocabulary augmented;
  AugmentationReport report;
};

// Full pipeline: train a target vocabulary, pick slot pieces, apply them.
AugmentationRun run_augmentation(
    const std::vector<SentenceRecord>& corpus, const Vocabulary& orig_vocab,
    int new_vocab_size = 5000, int k = kNumUnusedSlots,
    CandidateCounting counting = CandidateCounting::kTokenWeighted,
    UnkPolicy policy = UnkPolicy::kPerChar);

}  // namespace lapkit
