#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace lapkit {

class Vocabulary;

struct RawDocument {
  std::string doc_id;
  std::vector<std::string> lines;
  // Whether sentences form a running document (wiki articles) as opposed to
  // independent lines (forum crawls).
  bool contiguous = true;
};

struct SentenceRecord {
  std::vector<std::string> tokens;
  std::string source_doc;
  int index_in_doc = 0;
};

struct CorpusStats {
  std::size_t n_sentences = 0;
  std::size_t n_tokens = 0;
  double wp_per_token = 0.0;
  std::size_t unk_tokens = 0;
};

// Strips markup per the wiki-dump cleaning rules and splits the remaining
// text into sentences at period characters. Dropped: lines that are pure
// markup after tag removal, ==section headers==, and category lines.
std::vector<std::string> clean_wiki_document(const RawDocument& doc);

std::vector<RawDocument> subsample_articles(const std::vector<RawDocument>& docs,
                                            double fraction, std::uint64_t seed);

std::vector<SentenceRecord> filter_sentences(
    const std::vector<SentenceRecord>& sentences,
    const std::set<std::vector<std::string>>& eval_sentences,
    std::size_t min_len = 5, std::size_t max_len = 50,
    bool apply_length_filter = false);

// Whitespace split followed by splitting off punctuation characters
// (Unicode P* categories) as separate tokens.
std::vector<std::string> basic_tokenize(const std::string& text);

CorpusStats compute_corpus_stats(const std::vector<SentenceRecord>& corpus,
                                 const Vocabulary& vocab);

// ---- corpus file IO ----
// Wiki dumps: documents separated by blank lines, or JSON-lines records
// {"doc_id": ..., "text": ...}. Forum corpora: one sentence per line.
std::vector<RawDocument> read_documents(const std::string& path, bool contiguous);
std::vector<SentenceRecord> read_sentence_file(const std::string& path);
void write_sentence_file(const std::string& path,
                         const std::vector<SentenceRecord>& sentences);

}  // namespace lapkit
