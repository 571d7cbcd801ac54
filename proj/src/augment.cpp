#include "lapkit/augment.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

namespace lapkit {

namespace {

std::map<std::string, long> word_frequencies(
    const std::vector<SentenceRecord>& corpus) {
  std::map<std::string, long> freq;
  for (const SentenceRecord& s : corpus)
    for (const std::string& tok : s.tokens) ++freq[tok];
  return freq;
}

// Descending count, ties by lexicographically smaller piece.
std::vector<std::string> ranked(const std::map<std::string, long>& counts) {
  std::vector<std::pair<std::string, long>> items(counts.begin(), counts.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  std::vector<std::string> out;
  out.reserve(items.size());
  for (auto& [piece, count] : items) out.push_back(piece);
  return out;
}

}  // namespace

std::vector<ImprovedWord> improved_words(
    const std::vector<SentenceRecord>& corpus, const Vocabulary& orig_vocab,
    const Vocabulary& new_vocab, UnkPolicy policy) {
  std::vector<ImprovedWord> out;
  for (const auto& [word, freq] : word_frequencies(corpus)) {
    const TokenizedWord before = tokenize_word(word, orig_vocab, policy);
    TokenizedWord after = tokenize_word(word, new_vocab, policy);
    if (after.unk_count < before.unk_count)
      out.push_back(ImprovedWord{word, freq, std::move(after.piece_ids)});
  }
  return out;
}

SelectionResult select_pieces(const std::vector<ImprovedWord>& improved,
                              const std::vector<SentenceRecord>& corpus,
                              const Vocabulary& orig_vocab,
                              const Vocabulary& new_vocab, int k,
                              CandidateCounting counting, UnkPolicy policy) {
  if (k < 0) throw std::invalid_argument("slot count must be non-negative");

  std::map<std::string, long> candidate_counts;
  for (const ImprovedWord& iw : improved) {
    const long w = counting == CandidateCounting::kTokenWeighted ? iw.frequency : 1;
    for (int id : iw.new_piece_ids) {
      const std::string& piece = new_vocab.piece(id);
      if (orig_vocab.contains(piece)) continue;
      candidate_counts[piece] += w;
    }
  }

  SelectionResult result;
  for (const std::string& piece : ranked(candidate_counts)) {
    if (static_cast<int>(result.pieces.size()) == k) break;
    result.pieces.push_back(piece);
  }

  if (static_cast<int>(result.pieces.size()) < k) {
    // Complete with the most common new-vocabulary pieces overall.
    std::set<std::string> taken(result.pieces.begin(), result.pieces.end());
    std::map<std::string, long> occurrence;
    for (int id = 0; id < new_vocab.size(); ++id) {
      if (!new_vocab.matchable(id)) continue;
      const std::string& piece = new_vocab.piece(id);
      if (orig_vocab.contains(piece) || taken.count(piece)) continue;
      occurrence[piece] = 0;
    }
    for (const auto& [word, freq] : word_frequencies(corpus)) {
      const long w = counting == CandidateCounting::kTokenWeighted ? freq : 1;
      for (int id : tokenize_word(word, new_vocab, policy).piece_ids) {
        auto it = occurrence.find(new_vocab.piece(id));
        if (it != occurrence.end()) it->second += w;
      }
    }
    for (const std::string& piece : ranked(occurrence)) {
      if (static_cast<int>(result.pieces.size()) == k) break;
      result.pieces.push_back(piece);
      ++result.fallback_used;
    }
  }

  if (static_cast<int>(result.pieces.size()) < k)
    throw std::runtime_error(
        "cannot fill " + std::to_string(k) + " slots: only " +
        std::to_string(result.pieces.size()) + " eligible pieces exist (" +
        std::to_string(k - static_cast<int>(result.pieces.size())) +
        " short)");
  return result;
}

Vocabulary apply_augmentation(const Vocabulary& vocab,
                              const std::vector<std::string>& pieces) {
  if (pieces.size() != vocab.unused_slot_ids().size())
    throw std::invalid_argument(
        "expected " + std::to_string(vocab.unused_slot_ids().size()) +
        " replacement pieces, got " + std::to_string(pieces.size()));
  std::set<std::string> seen;
  for (const std::string& p : pieces) {
    if (!seen.insert(p).second)
      throw std::invalid_argument("duplicate replacement piece: " + p);
    if (vocab.contains(p))
      throw std::invalid_argument("piece already in vocabulary: " + p);
  }
  return vocab.with_replaced_slots(pieces);
}

AugmentationReport augmentation_report(const std::vector<SentenceRecord>& corpus,
                                       const Vocabulary& orig_vocab,
                                       const Vocabulary& aug_vocab,
                                       int fallback_used, UnkPolicy policy) {
  AugmentationReport report;
  report.unk_before = count_unknowns(corpus, orig_vocab, policy);
  report.unk_after = count_unknowns(corpus, aug_vocab, policy);
  // Newly filled slots only: unused in orig, replaced in aug.
  for (int id : aug_vocab.replaced_slot_ids()) {
    const auto& was_unused = orig_vocab.unused_slot_ids();
    if (std::binary_search(was_unused.begin(), was_unused.end(), id))
      report.pieces_added.push_back(aug_vocab.piece(id));
  }
  report.fallback_used = fallback_used;
  return report;
}

AugmentationRun run_augmentation(const std::vector<SentenceRecord>& corpus,
                                 const Vocabulary& orig_vocab,
                                 int new_vocab_size, int k,
                                 CandidateCounting counting, UnkPolicy policy) {
  Vocabulary new_vocab = train_vocabulary(corpus, new_vocab_size);
  auto improved = improved_words(corpus, orig_vocab, new_vocab, policy);
  auto selection = select_pieces(improved, corpus, orig_vocab, new_vocab, k,
                                 counting, policy);
  Vocabulary augmented = apply_augmentation(orig_vocab, selection.pieces);
  AugmentationReport report = augmentation_report(
      corpus, orig_vocab, augmented, selection.fallback_used, policy);
  return AugmentationRun{std::move(new_vocab), std::move(augmented),
                         std::move(report)};
}

}  // namespace lapkit
