#include "lapkit/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include "lapkit/utf8.hpp"

namespace lapkit {

namespace {

constexpr const char* kPad = "[PAD]";
constexpr const char* kUnk = "[UNK]";
constexpr const char* kCls = "[CLS]";
constexpr const char* kSep = "[SEP]";
constexpr const char* kMask = "[MASK]";

std::string unused_placeholder(int slot) {
  return "[unused" + std::to_string(slot) + "]";
}

// Character count of a piece, not counting the continuation marker.
std::size_t piece_char_len(const std::string& piece) {
  std::string_view body = piece;
  if (body.substr(0, 2) == kContinuationPrefix) body.remove_prefix(2);
  std::size_t n = 0, i = 0;
  while (i < body.size()) {
    std::size_t len = utf8_char_len(static_cast<unsigned char>(body[i]));
    if (i + len > body.size()) len = 1;
    i += len;
    ++n;
  }
  return n;
}

}  // namespace

Vocabulary Vocabulary::build(const std::vector<std::string>& content_pieces) {
  std::vector<std::string> pieces;
  pieces.reserve(104 + content_pieces.size());
  pieces.emplace_back(kPad);
  for (int i = 0; i < kNumUnusedSlots; ++i) pieces.push_back(unused_placeholder(i));
  pieces.emplace_back(kUnk);
  pieces.emplace_back(kCls);
  pieces.emplace_back(kSep);
  pieces.emplace_back(kMask);
  pieces.insert(pieces.end(), content_pieces.begin(), content_pieces.end());
  return from_pieces(std::move(pieces));
}

Vocabulary Vocabulary::from_pieces(std::vector<std::string> pieces) {
  Vocabulary v;
  v.pieces_ = std::move(pieces);
  v.index();
  return v;
}

void Vocabulary::index() {
  if (pieces_.size() < static_cast<std::size_t>(kNumUnusedSlots) + 5)
    throw std::invalid_argument("vocabulary too small for reserved layout");
  id_of_.clear();
  id_of_.reserve(pieces_.size());
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (pieces_[i].empty()) throw std::invalid_argument("empty vocabulary piece");
    if (!id_of_.emplace(pieces_[i], static_cast<int>(i)).second)
      throw std::invalid_argument("duplicate vocabulary piece: " + pieces_[i]);
  }
  pad_id_ = 0;
  unk_id_ = kNumUnusedSlots + 1;
  cls_id_ = unk_id_ + 1;
  sep_id_ = unk_id_ + 2;
  mask_id_ = unk_id_ + 3;
  if (pieces_[pad_id_] != kPad || pieces_[unk_id_] != kUnk ||
      pieces_[cls_id_] != kCls || pieces_[sep_id_] != kSep ||
      pieces_[mask_id_] != kMask)
    throw std::invalid_argument(
        "special tokens missing from reserved vocabulary positions");
  unused_slot_ids_.clear();
  replaced_slot_ids_.clear();
  for (int id = 1; id <= kNumUnusedSlots; ++id) {
    if (pieces_[id] == unused_placeholder(id - 1))
      unused_slot_ids_.push_back(id);
    else
      replaced_slot_ids_.push_back(id);
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
  std::vector<std::string> pieces;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pieces.push_back(line);
  }
  // Trailing blank line from a final newline is not a piece.
  if (!pieces.empty() && pieces.back().empty()) pieces.pop_back();
  return from_pieces(std::move(pieces));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
  for (const std::string& p : pieces_) out << p << '\n';
}

std::optional<int> Vocabulary::id_of(const std::string& piece) const {
  auto it = id_of_.find(piece);
  if (it == id_of_.end()) return std::nullopt;
  return it->second;
}

bool Vocabulary::contains(const std::string& piece) const {
  return id_of_.count(piece) != 0;
}

bool Vocabulary::is_special(int id) const {
  return id == pad_id_ || id == unk_id_ || id == cls_id_ || id == sep_id_ ||
         id == mask_id_;
}

bool Vocabulary::matchable(int id) const {
  if (is_special(id)) return false;
  return !std::binary_search(unused_slot_ids_.begin(), unused_slot_ids_.end(), id);
}

Vocabulary Vocabulary::with_replaced_slots(
    const std::vector<std::string>& new_pieces) const {
  if (new_pieces.size() > unused_slot_ids_.size())
    throw std::invalid_argument("more replacement pieces than unused slots");
  std::vector<std::string> pieces = pieces_;
  for (std::size_t i = 0; i < new_pieces.size(); ++i)
    pieces[unused_slot_ids_[i]] = new_pieces[i];
  return from_pieces(std::move(pieces));
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
  auto mix = [&h](unsigned char b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (const std::string& p : pieces_) {
    for (char c : p) mix(static_cast<unsigned char>(c));
    mix(0x1f);
  }
  return h;
}

Vocabulary train_vocabulary(const std::vector<SentenceRecord>& corpus,
                            int target_size) {
  if (corpus.empty()) throw std::invalid_argument("cannot train on empty corpus");

  // Word type -> corpus frequency.
  std::map<std::string, long> word_freq;
  for (const SentenceRecord& s : corpus)
    for (const std::string& tok : s.tokens) ++word_freq[tok];

  // Symbolize each word type: first character bare, the rest "##"-prefixed.
  struct WordEntry {
    std::vector<std::string> symbols;
    long freq;
  };
  std::vector<WordEntry> words;
  words.reserve(word_freq.size());
  std::map<std::string, long> alphabet;  // observed character symbols
  for (const auto& [word, freq] : word_freq) {
    WordEntry e;
    e.freq = freq;
    for (const std::string& ch : utf8_chars(word)) {
      std::string sym = e.symbols.empty() ? ch : kContinuationPrefix + ch;
      alphabet[sym] += freq;
      e.symbols.push_back(std::move(sym));
    }
    if (!e.symbols.empty()) words.push_back(std::move(e));
  }
  if (words.empty()) throw std::invalid_argument("cannot train on empty corpus");

  const int forced = 5 + kNumUnusedSlots + static_cast<int>(alphabet.size());
  if (target_size < forced)
    throw std::invalid_argument(
        "target vocabulary size " + std::to_string(target_size) +
        " smaller than forced inventory " + std::to_string(forced));

  std::vector<std::string> content;
  content.reserve(static_cast<std::size_t>(target_size) - 104);
  for (const auto& [sym, freq] : alphabet) content.push_back(sym);

  // Iterative pair merging. Symbol frequencies and pair counts are weighted
  // by word-type frequency and recomputed per round; desk-scale corpora keep
  // this comfortably fast.
  auto merged_piece = [](const std::string& left, const std::string& right) {
    std::string_view body = right;
    body.remove_prefix(2);  // adjacent right symbols are continuations
    return left + std::string(body);
  };
  while (static_cast<int>(content.size()) + 5 + kNumUnusedSlots < target_size) {
    std::map<std::string, long> sym_freq;
    std::map<std::pair<std::string, std::string>, long> pair_freq;
    for (const WordEntry& e : words) {
      for (const std::string& s : e.symbols) sym_freq[s] += e.freq;
      for (std::size_t i = 0; i + 1 < e.symbols.size(); ++i)
        pair_freq[{e.symbols[i], e.symbols[i + 1]}] += e.freq;
    }
    const std::pair<std::string, std::string>* best = nullptr;
    long best_count = 0;
    long best_left_freq = 0;
    std::string best_merged;
    for (const auto& [pair, count] : pair_freq) {
      if (count < 2) continue;
      std::string m = merged_piece(pair.first, pair.second);
      if (piece_char_len(m) > kMaxPieceChars) continue;
      const long left_freq = sym_freq[pair.first];
      const bool better =
          !best || count > best_count ||
          (count == best_count &&
           (left_freq > best_left_freq ||
            (left_freq == best_left_freq && m < best_merged)));
      if (better) {
        best = &pair;
        best_count = count;
        best_left_freq = left_freq;
        best_merged = std::move(m);
      }
    }
    if (!best) break;
    const auto [left, right] = *best;
    for (WordEntry& e : words) {
      std::vector<std::string> out;
      out.reserve(e.symbols.size());
      std::size_t i = 0;
      while (i < e.symbols.size()) {
        if (i + 1 < e.symbols.size() && e.symbols[i] == left &&
            e.symbols[i + 1] == right) {
          out.push_back(best_merged);
          i += 2;
        } else {
          out.push_back(e.symbols[i]);
          ++i;
        }
      }
      e.symbols = std::move(out);
    }
    content.push_back(best_merged);
  }
  return Vocabulary::build(content);
}

TokenizedWord tokenize_word(const std::string& word, const Vocabulary& vocab,
                            UnkPolicy policy) {
  if (word.empty()) throw std::invalid_argument("cannot tokenize empty word");
  TokenizedWord out;
  out.word = word;
  const std::vector<std::string> chars = utf8_chars(word);
  const std::size_t n = chars.size();
  // Prefix sums of byte offsets to slice candidate substrings cheaply.
  std::vector<std::size_t> offs(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) offs[i + 1] = offs[i] + chars[i].size();

  std::size_t start = 0;
  while (start < n) {
    std::size_t end = std::min(n, start + kMaxPieceChars);
    int match_id = -1;
    while (end > start) {
      std::string candidate = word.substr(offs[start], offs[end] - offs[start]);
      if (start > 0) candidate = kContinuationPrefix + candidate;
      if (auto id = vocab.id_of(candidate); id && vocab.matchable(*id)) {
        match_id = *id;
        break;
      }
      --end;
    }
    if (match_id >= 0) {
      out.piece_ids.push_back(match_id);
      start = end;
    } else if (policy == UnkPolicy::kWholeWord) {
      out.piece_ids.assign(1, vocab.unk_id());
      out.unk_count = 1;
      return out;
    } else {
      out.piece_ids.push_back(vocab.unk_id());
      ++out.unk_count;
      ++start;
    }
  }
  return out;
}

TokenizedSentence tokenize_sentence(const std::vector<std::string>& tokens,
                                    const Vocabulary& vocab, UnkPolicy policy) {
  TokenizedSentence out;
  out.word_alignment.reserve(tokens.size());
  for (const std::string& tok : tokens) {
    TokenizedWord tw = tokenize_word(tok, vocab, policy);
    out.word_alignment.emplace_back(static_cast<int>(out.piece_ids.size()),
                                    static_cast<int>(tw.piece_ids.size()));
    out.piece_ids.insert(out.piece_ids.end(), tw.piece_ids.begin(),
                         tw.piece_ids.end());
  }
  return out;
}

std::size_t count_unknowns(const std::vector<SentenceRecord>& corpus,
                           const Vocabulary& vocab, UnkPolicy policy) {
  std::size_t n = 0;
  for (const SentenceRecord& s : corpus)
    for (const std::string& tok : s.tokens)
      if (tokenize_word(tok, vocab, policy).unk_count > 0) ++n;
  return n;
}

}  // namespace lapkit
