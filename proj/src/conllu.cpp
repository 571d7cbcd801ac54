#include "lapkit/conllu.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lapkit/rng.hpp"

namespace lapkit {

namespace {

[[noreturn]] void fail(const std::string& origin, long line,
                       const std::string& what) {
  throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return c >= '0' && c <= '9'; });
}

// Validates head ranges and acyclicity once a sentence is complete.
void finish_sentence(TreebankSentence& sent, const std::string& origin,
                     long line) {
  const int n = static_cast<int>(sent.tokens.size());
  for (int i = 0; i < n; ++i) {
    if (sent.heads[i] < 0 || sent.heads[i] > n)
      fail(origin, line, "head " + std::to_string(sent.heads[i]) +
                             " out of range for " + std::to_string(n) +
                             " tokens");
    if (sent.heads[i] == i + 1)
      fail(origin, line, "token " + std::to_string(i + 1) + " is its own head");
  }
  std::vector<int> reaches_root(n + 1, 0);
  reaches_root[0] = 1;
  for (int i = 1; i <= n; ++i) {
    std::vector<int> path;
    int u = i;
    while (!reaches_root[u]) {
      path.push_back(u);
      u = sent.heads[u - 1];
      if (std::find(path.begin(), path.end(), u) != path.end())
        fail(origin, line,
             "cyclic annotation through token " + std::to_string(u));
    }
    for (int v : path) reaches_root[v] = 1;
  }
}

}  // namespace

std::vector<TreebankSentence> parse_conllu(const std::string& text,
                                           const std::string& origin) {
  std::vector<TreebankSentence> out;
  TreebankSentence cur;
  int expected_id = 1;
  long lineno = 0;
  std::istringstream in(text);
  std::string line;
  auto flush = [&](long at) {
    if (cur.tokens.empty() && cur.comments.empty()) return;
    if (cur.tokens.empty()) fail(origin, at, "comments without tokens");
    finish_sentence(cur, origin, at);
    out.push_back(std::move(cur));
    cur = TreebankSentence{};
    expected_id = 1;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush(lineno);
      continue;
    }
    if (line[0] == '#') {
      cur.comments.push_back(line);
      continue;
    }
    const std::vector<std::string> cols = split_tabs(line);
    if (cols.size() != 10)
      fail(origin, lineno, "expected 10 tab-separated columns, got " +
                               std::to_string(cols.size()));
    const std::string& id = cols[0];
    if (id.find('-') != std::string::npos ||
        id.find('.') != std::string::npos)
      continue;  // multiword range / empty node: not part of the tree
    if (!all_digits(id)) fail(origin, lineno, "bad token id '" + id + "'");
    if (std::stoi(id) != expected_id)
      fail(origin, lineno, "expected token id " +
                               std::to_string(expected_id) + ", got " + id);
    ++expected_id;
    if (!all_digits(cols[6]))
      fail(origin, lineno, "bad head '" + cols[6] + "'");
    if (cols[7].empty() || cols[7] == "_")
      fail(origin, lineno, "missing deprel");
    cur.tokens.push_back(cols[1]);
    cur.heads.push_back(std::stoi(cols[6]));
    cur.deprels.push_back(cols[7]);
  }
  flush(lineno + 1);
  return out;
}

std::vector<TreebankSentence> read_conllu(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_conllu(buf.str(), path);
}

std::string format_conllu(const std::vector<TreebankSentence>& sentences) {
  std::ostringstream out;
  for (const TreebankSentence& s : sentences) {
    for (const std::string& c : s.comments) out << c << '\n';
    for (std::size_t i = 0; i < s.tokens.size(); ++i)
      out << i + 1 << '\t' << s.tokens[i] << "\t_\t_\t_\t_\t" << s.heads[i]
          << '\t' << s.deprels[i] << "\t_\t_\n";
    out << '\n';
  }
  return out.str();
}

void write_conllu(const std::string& path,
                  const std::vector<TreebankSentence>& sentences) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << format_conllu(sentences);
}

TreebankSentence with_prediction(const TreebankSentence& gold,
                                 const DependencyTree& pred,
                                 const std::vector<std::string>& relations) {
  if (pred.heads.size() != gold.tokens.size() ||
      pred.labels.size() != gold.tokens.size())
    throw std::invalid_argument("prediction/sentence length mismatch");
  TreebankSentence out = gold;
  out.heads = pred.heads;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const int r = pred.labels[i];
    if (r < 0 || r >= static_cast<int>(relations.size()))
      throw std::invalid_argument("label id out of range");
    out.deprels[i] = relations[r];
  }
  return out;
}

std::vector<std::string> relation_inventory(
    const std::vector<TreebankSentence>& sentences) {
  std::set<std::string> rels;
  for (const TreebankSentence& s : sentences)
    rels.insert(s.deprels.begin(), s.deprels.end());
  return {rels.begin(), rels.end()};
}

TreebankSplit split_treebank(const std::vector<TreebankSentence>& sentences,
                             double train_ratio, double valid_ratio,
                             double test_ratio, std::uint64_t seed) {
  if (sentences.empty()) throw std::invalid_argument("empty treebank");
  if (std::abs(train_ratio + valid_ratio + test_ratio - 1.0) > 1e-9)
    throw std::invalid_argument("split ratios must sum to 1");
  if (train_ratio < 0 || valid_ratio < 0 || test_ratio < 0)
    throw std::invalid_argument("split ratios must be non-negative");
  const std::size_t n = sentences.size();
  const auto n_valid = static_cast<std::size_t>(
      std::floor(valid_ratio * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(
      std::floor(test_ratio * static_cast<double>(n)));
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle_indices(order);
  TreebankSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    const TreebankSentence& s = sentences[order[i]];
    if (i < n - n_valid - n_test)
      split.train.push_back(s);
    else if (i < n - n_test)
      split.valid.push_back(s);
    else
      split.test.push_back(s);
  }
  return split;
}

ScoreReport score(const std::vector<TreebankSentence>& predictions,
                  const std::vector<TreebankSentence>& gold,
                  bool exclude_punct) {
  if (predictions.size() != gold.size())
    throw std::invalid_argument("prediction/gold sentence count mismatch");
  long total = 0, head_ok = 0, both_ok = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const TreebankSentence& p = predictions[s];
    const TreebankSentence& g = gold[s];
    if (p.tokens.size() != g.tokens.size())
      throw std::invalid_argument("token count mismatch in sentence " +
                                  std::to_string(s + 1));
    for (std::size_t i = 0; i < g.tokens.size(); ++i) {
      if (exclude_punct && g.deprels[i] == "punct") continue;
      ++total;
      if (p.heads[i] == g.heads[i]) {
        ++head_ok;
        if (p.deprels[i] == g.deprels[i]) ++both_ok;
      }
    }
  }
  if (total == 0) throw std::invalid_argument("no tokens to score");
  ScoreReport r;
  r.n_tokens = total;
  r.uas = 100.0 * static_cast<double>(head_ok) / static_cast<double>(total);
  r.las = 100.0 * static_cast<double>(both_ok) / static_cast<double>(total);
  return r;
}

}  // namespace lapkit
