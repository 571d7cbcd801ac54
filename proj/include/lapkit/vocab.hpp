#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lapkit/corpus.hpp"

namespace lapkit {

inline constexpr int kNumUnusedSlots = 99;
inline constexpr const char* kContinuationPrefix = "##";
inline constexpr std::size_t kMaxPieceChars = 100;

// How tokenize_word treats spans not covered by the vocabulary: one [UNK]
// per character (default, keeps unknown counts graded) or one [UNK] for the
// whole word.
enum class UnkPolicy { kPerChar, kWholeWord };

struct TokenizedWord {
  std::string word;
  std::vector<int> piece_ids;
  int unk_count = 0;
};

// Ordered wordpiece inventory: [PAD], 99 reserved [unusedN] slots, [UNK],
// [CLS], [SEP], [MASK], then content pieces. Ids are line numbers in the
// vocab file. Immutable after construction.
class Vocabulary {
 public:
  // Builds the fixed header plus the given content pieces (in order).
  static Vocabulary build(const std::vector<std::string>& content_pieces);
  // Reads/writes the conventional one-piece-per-line format.
  static Vocabulary from_pieces(std::vector<std::string> pieces);
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(pieces_.size()); }
  const std::string& piece(int id) const { return pieces_.at(id); }
  const std::vector<std::string>& pieces() const { return pieces_; }
  std::optional<int> id_of(const std::string& piece) const;
  bool contains(const std::string& piece) const;

  int pad_id() const { return pad_id_; }
  int unk_id() const { return unk_id_; }
  int cls_id() const { return cls_id_; }
  int sep_id() const { return sep_id_; }
  int mask_id() const { return mask_id_; }
  bool is_special(int id) const;

  // Slots still holding their reserved "[unusedN]" placeholder.
  const std::vector<int>& unused_slot_ids() const { return unused_slot_ids_; }
  // Slots whose placeholder has been replaced by augmentation.
  const std::vector<int>& replaced_slot_ids() const { return replaced_slot_ids_; }

  // Pieces eligible for text matching (content + replaced slots).
  bool matchable(int id) const;

  // Replaces the remaining unused slots with the given pieces, in order.
  // The result has identical size and unchanged ids for every other piece.
  Vocabulary with_replaced_slots(const std::vector<std::string>& new_pieces) const;

  std::uint64_t fingerprint() const;

 private:
  Vocabulary() = default;
  void index();

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> id_of_;
  std::vector<int> unused_slot_ids_;
  std::vector<int> replaced_slot_ids_;
  int pad_id_ = -1, unk_id_ = -1, cls_id_ = -1, sep_id_ = -1, mask_id_ = -1;
};

// Frequency-based pair-merge training. The result has exactly target_size
// pieces: specials, 99 unused slots, every observed character in word-initial
// and continuation form, then merged pieces in emission order.
Vocabulary train_vocabulary(const std::vector<SentenceRecord>& corpus,
                            int target_size = 5000);

// Greedy longest-match-first wordpiece tokenization.
TokenizedWord tokenize_word(const std::string& word, const Vocabulary& vocab,
                            UnkPolicy policy = UnkPolicy::kPerChar);

struct TokenizedSentence {
  std::vector<int> piece_ids;
  // Per input token: (start, len) span into piece_ids.
  std::vector<std::pair<int, int>> word_alignment;
};

TokenizedSentence tokenize_sentence(const std::vector<std::string>& tokens,
                                    const Vocabulary& vocab,
                                    UnkPolicy policy = UnkPolicy::kPerChar);

// Number of corpus tokens whose tokenization contains at least one [UNK].
std::size_t count_unknowns(const std::vector<SentenceRecord>& corpus,
                           const Vocabulary& vocab,
                           UnkPolicy policy = UnkPolicy::kPerChar);

}  // namespace lapkit
