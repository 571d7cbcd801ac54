#include "lapkit/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lapkit/rng.hpp"
#include "lapkit/utf8.hpp"
#include "lapkit/vocab.hpp"
#include "json.hpp"

namespace lapkit {

namespace {

// Inclusive code point ranges of the Unicode P* (punctuation) categories.
constexpr std::pair<char32_t, char32_t> kPunctRanges[] = {
    {0x21, 0x23}, {0x25, 0x2A}, {0x2C, 0x2F}, {0x3A, 0x3B},
    {0x3F, 0x40}, {0x5B, 0x5D}, {0x5F, 0x5F}, {0x7B, 0x7B},
    {0x7D, 0x7D}, {0xA1, 0xA1}, {0xA7, 0xA7}, {0xAB, 0xAB},
    {0xB6, 0xB7}, {0xBB, 0xBB}, {0xBF, 0xBF}, {0x37E, 0x37E},
    {0x387, 0x387}, {0x55A, 0x55F}, {0x589, 0x58A}, {0x5BE, 0x5BE},
    {0x5C0, 0x5C0}, {0x5C3, 0x5C3}, {0x5C6, 0x5C6}, {0x5F3, 0x5F4},
    {0x609, 0x60A}, {0x60C, 0x60D}, {0x61B, 0x61B}, {0x61E, 0x61F},
    {0x66A, 0x66D}, {0x6D4, 0x6D4}, {0x700, 0x70D}, {0x7F7, 0x7F9},
    {0x830, 0x83E}, {0x85E, 0x85E}, {0x964, 0x965}, {0x970, 0x970},
    {0x9FD, 0x9FD}, {0xA76, 0xA76}, {0xAF0, 0xAF0}, {0xC77, 0xC77},
    {0xC84, 0xC84}, {0xDF4, 0xDF4}, {0xE4F, 0xE4F}, {0xE5A, 0xE5B},
    {0xF04, 0xF12}, {0xF14, 0xF14}, {0xF3A, 0xF3D}, {0xF85, 0xF85},
    {0xFD0, 0xFD4}, {0xFD9, 0xFDA}, {0x104A, 0x104F}, {0x10FB, 0x10FB},
    {0x1360, 0x1368}, {0x1400, 0x1400}, {0x166E, 0x166E}, {0x169B, 0x169C},
    {0x16EB, 0x16ED}, {0x1735, 0x1736}, {0x17D4, 0x17D6}, {0x17D8, 0x17DA},
    {0x1800, 0x180A}, {0x1944, 0x1945}, {0x1A1E, 0x1A1F}, {0x1AA0, 0x1AA6},
    {0x1AA8, 0x1AAD}, {0x1B5A, 0x1B60}, {0x1BFC, 0x1BFF}, {0x1C3B, 0x1C3F},
    {0x1C7E, 0x1C7F}, {0x1CC0, 0x1CC7}, {0x1CD3, 0x1CD3}, {0x2010, 0x2027},
    {0x2030, 0x2043}, {0x2045, 0x2051}, {0x2053, 0x205E}, {0x207D, 0x207E},
    {0x208D, 0x208E}, {0x2308, 0x230B}, {0x2329, 0x232A}, {0x2768, 0x2775},
    {0x27C5, 0x27C6}, {0x27E6, 0x27EF}, {0x2983, 0x2998}, {0x29D8, 0x29DB},
    {0x29FC, 0x29FD}, {0x2CF9, 0x2CFC}, {0x2CFE, 0x2CFF}, {0x2D70, 0x2D70},
    {0x2E00, 0x2E2E}, {0x2E30, 0x2E4F}, {0x2E52, 0x2E52}, {0x3001, 0x3003},
    {0x3008, 0x3011}, {0x3014, 0x301F}, {0x3030, 0x3030}, {0x303D, 0x303D},
    {0x30A0, 0x30A0}, {0x30FB, 0x30FB}, {0xA4FE, 0xA4FF}, {0xA60D, 0xA60F},
    {0xA673, 0xA673}, {0xA67E, 0xA67E}, {0xA6F2, 0xA6F7}, {0xA874, 0xA877},
    {0xA8CE, 0xA8CF}, {0xA8F8, 0xA8FA}, {0xA8FC, 0xA8FC}, {0xA92E, 0xA92F},
    {0xA95F, 0xA95F}, {0xA9C1, 0xA9CD}, {0xA9DE, 0xA9DF}, {0xAA5C, 0xAA5F},
    {0xAADE, 0xAADF}, {0xAAF0, 0xAAF1}, {0xABEB, 0xABEB}, {0xFD3E, 0xFD3F},
    {0xFE10, 0xFE19}, {0xFE30, 0xFE52}, {0xFE54, 0xFE61}, {0xFE63, 0xFE63},
    {0xFE68, 0xFE68}, {0xFE6A, 0xFE6B}, {0xFF01, 0xFF03}, {0xFF05, 0xFF0A},
    {0xFF0C, 0xFF0F}, {0xFF1A, 0xFF1B}, {0xFF1F, 0xFF20}, {0xFF3B, 0xFF3D},
    {0xFF3F, 0xFF3F}, {0xFF5B, 0xFF5B}, {0xFF5D, 0xFF5D}, {0xFF5F, 0xFF65},
    {0x10100, 0x10102}, {0x1039F, 0x1039F}, {0x103D0, 0x103D0}, {0x1056F, 0x1056F},
    {0x10857, 0x10857}, {0x1091F, 0x1091F}, {0x1093F, 0x1093F}, {0x10A50, 0x10A58},
    {0x10A7F, 0x10A7F}, {0x10AF0, 0x10AF6}, {0x10B39, 0x10B3F}, {0x10B99, 0x10B9C},
    {0x10EAD, 0x10EAD}, {0x10F55, 0x10F59}, {0x11047, 0x1104D}, {0x110BB, 0x110BC},
    {0x110BE, 0x110C1}, {0x11140, 0x11143}, {0x11174, 0x11175}, {0x111C5, 0x111C8},
    {0x111CD, 0x111CD}, {0x111DB, 0x111DB}, {0x111DD, 0x111DF}, {0x11238, 0x1123D},
    {0x112A9, 0x112A9}, {0x1144B, 0x1144F}, {0x1145A, 0x1145B}, {0x1145D, 0x1145D},
    {0x114C6, 0x114C6}, {0x115C1, 0x115D7}, {0x11641, 0x11643}, {0x11660, 0x1166C},
    {0x1173C, 0x1173E}, {0x1183B, 0x1183B}, {0x11944, 0x11946}, {0x119E2, 0x119E2},
    {0x11A3F, 0x11A46}, {0x11A9A, 0x11A9C}, {0x11A9E, 0x11AA2}, {0x11C41, 0x11C45},
    {0x11C70, 0x11C71}, {0x11EF7, 0x11EF8}, {0x11FFF, 0x11FFF}, {0x12470, 0x12474},
    {0x16A6E, 0x16A6F}, {0x16AF5, 0x16AF5}, {0x16B37, 0x16B3B}, {0x16B44, 0x16B44},
    {0x16E97, 0x16E9A}, {0x16FE2, 0x16FE2}, {0x1BC9F, 0x1BC9F}, {0x1DA87, 0x1DA8B},
    {0x1E95E, 0x1E95F},
};

}  // namespace

bool is_unicode_punct(char32_t cp) {
  auto it = std::upper_bound(
      std::begin(kPunctRanges), std::end(kPunctRanges), cp,
      [](char32_t v, const std::pair<char32_t, char32_t>& r) { return v < r.first; });
  if (it == std::begin(kPunctRanges)) return false;
  --it;
  return cp >= it->first && cp <= it->second;
}

namespace {

std::string strip(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// Removes <...> spans, including unterminated trailing ones.
std::string strip_tags(const std::string& line) {
  std::string out;
  out.reserve(line.size());
  bool in_tag = false;
  for (char c : line) {
    if (c == '<') {
      in_tag = true;
    } else if (c == '>' && in_tag) {
      in_tag = false;
    } else if (!in_tag) {
      out.push_back(c);
    }
  }
  return out;
}

bool is_section_header(const std::string& line) {
  if (line.size() < 2 || line.front() != '=' || line.back() != '=') return false;
  return true;
}

bool is_category_line(const std::string& line) {
  return line.rfind("Category:", 0) == 0 || line.rfind("[[Category:", 0) == 0;
}

}  // namespace

std::vector<std::string> clean_wiki_document(const RawDocument& doc) {
  std::vector<std::string> kept;
  for (const std::string& raw : doc.lines) {
    std::string line = strip(strip_tags(raw));
    if (line.empty()) continue;
    if (is_section_header(line)) continue;
    if (is_category_line(line)) continue;
    kept.push_back(line);
  }
  std::string text;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (i) text.push_back(doc.contiguous ? ' ' : '\n');
    text += kept[i];
  }
  // Split at periods; the delimiter itself is dropped. Non-contiguous
  // documents additionally break at line boundaries.
  std::vector<std::string> sentences;
  std::string cur;
  for (char c : text) {
    if (c == '.' || c == '\n') {
      std::string s = strip(cur);
      if (!s.empty()) sentences.push_back(s);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  std::string s = strip(cur);
  if (!s.empty()) sentences.push_back(s);
  return sentences;
}

std::vector<RawDocument> subsample_articles(const std::vector<RawDocument>& docs,
                                            double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("subsample fraction must be within [0, 1]");
  const std::size_t n = docs.size();
  const auto k = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle_indices(idx);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());  // keep source order among selected
  std::vector<RawDocument> out;
  out.reserve(k);
  for (std::size_t i : idx) out.push_back(docs[i]);
  return out;
}

std::vector<SentenceRecord> filter_sentences(
    const std::vector<SentenceRecord>& sentences,
    const std::set<std::vector<std::string>>& eval_sentences, std::size_t min_len,
    std::size_t max_len, bool apply_length_filter) {
  std::vector<SentenceRecord> out;
  out.reserve(sentences.size());
  for (const SentenceRecord& s : sentences) {
    if (eval_sentences.count(s.tokens)) continue;
    if (apply_length_filter &&
        (s.tokens.size() < min_len || s.tokens.size() > max_len))
      continue;
    out.push_back(s);
  }
  return out;
}

std::vector<std::string> basic_tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    const char32_t cp = utf8_decode(text, i);
    if (cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' ||
        cp == U'\f' || cp == U'\v') {
      flush();
    } else if (is_unicode_punct(cp)) {
      flush();
      tokens.push_back(text.substr(start, i - start));
    } else {
      cur += text.substr(start, i - start);
    }
  }
  flush();
  return tokens;
}

CorpusStats compute_corpus_stats(const std::vector<SentenceRecord>& corpus,
                                 const Vocabulary& vocab) {
  CorpusStats stats;
  std::size_t total_pieces = 0;
  for (const SentenceRecord& s : corpus) {
    ++stats.n_sentences;
    for (const std::string& tok : s.tokens) {
      ++stats.n_tokens;
      TokenizedWord tw = tokenize_word(tok, vocab);
      total_pieces += tw.piece_ids.size();
      if (tw.unk_count > 0) ++stats.unk_tokens;
    }
  }
  if (stats.n_tokens == 0)
    throw std::invalid_argument("corpus statistics undefined for empty corpus");
  stats.wp_per_token =
      static_cast<double>(total_pieces) / static_cast<double>(stats.n_tokens);
  return stats;
}

std::vector<RawDocument> read_documents(const std::string& path, bool contiguous) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  std::vector<RawDocument> docs;
  std::string line;
  bool json_mode = false;
  bool first = true;
  RawDocument cur;
  auto flush_doc = [&]() {
    if (!cur.lines.empty()) {
      if (cur.doc_id.empty()) cur.doc_id = "doc" + std::to_string(docs.size());
      docs.push_back(cur);
    }
    cur = RawDocument{};
    cur.contiguous = contiguous;
  };
  cur.contiguous = contiguous;
  while (std::getline(in, line)) {
    if (first) {
      json_mode = !line.empty() && line.front() == '{';
      first = false;
    }
    if (json_mode) {
      if (strip(line).empty()) continue;
      auto rec = nlohmann::json::parse(line);
      RawDocument d;
      d.doc_id = rec.value("doc_id", "doc" + std::to_string(docs.size()));
      std::istringstream body(rec.at("text").get<std::string>());
      std::string body_line;
      while (std::getline(body, body_line)) d.lines.push_back(body_line);
      d.contiguous = contiguous;
      docs.push_back(std::move(d));
    } else if (strip(line).empty()) {
      flush_doc();
    } else {
      cur.lines.push_back(line);
    }
  }
  if (!json_mode) flush_doc();
  return docs;
}

std::vector<SentenceRecord> read_sentence_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sentence file: " + path);
  std::vector<SentenceRecord> out;
  std::string line;
  int idx = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> toks;
    std::istringstream ss(line);
    std::string t;
    while (ss >> t) toks.push_back(t);
    if (toks.empty()) continue;
    out.push_back(SentenceRecord{std::move(toks), path, idx++});
  }
  return out;
}

void write_sentence_file(const std::string& path,
                         const std::vector<SentenceRecord>& sentences) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write sentence file: " + path);
  for (const SentenceRecord& s : sentences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      if (i) out << ' ';
      out << s.tokens[i];
    }
    out << '\n';
  }
}

}  // namespace lapkit
