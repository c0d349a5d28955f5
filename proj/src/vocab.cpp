#include "xlrec/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "xlrec/errors.hpp"
#include "xlrec/rng.hpp"

namespace xlrec {

namespace {

constexpr const char* kEndOfWord = "</w>";

std::string ascii_lower(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> words;
  std::istringstream in(s);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

// Split a word into UTF-8 code points (bytes with 10xxxxxx continue the
// previous character).
std::vector<std::string> utf8_chars(const std::string& w) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < w.size();) {
    std::size_t len = 1;
    const auto b = static_cast<unsigned char>(w[i]);
    if ((b & 0xE0) == 0xC0) len = 2;
    else if ((b & 0xF0) == 0xE0) len = 3;
    else if ((b & 0xF8) == 0xF0) len = 4;
    len = std::min(len, w.size() - i);
    out.push_back(w.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> bpe_word(const std::string& word,
                                  const BpeMerges& merges) {
  std::vector<std::string> parts = utf8_chars(word);
  parts.push_back(kEndOfWord);
  while (parts.size() > 1) {
    int best_rank = -1;
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      auto it = merges.rank.find(parts[i] + " " + parts[i + 1]);
      if (it != merges.rank.end() &&
          (best_rank < 0 || it->second < best_rank)) {
        best_rank = it->second;
        best_pos = i;
      }
    }
    if (best_rank < 0) break;
    // Merge every occurrence of the selected pair, left to right.
    const std::string left = parts[best_pos];
    const std::string right = parts[best_pos + 1];
    std::vector<std::string> next;
    next.reserve(parts.size());
    for (std::size_t i = 0; i < parts.size();) {
      if (i + 1 < parts.size() && parts[i] == left && parts[i + 1] == right) {
        next.push_back(left + right);
        i += 2;
      } else {
        next.push_back(parts[i]);
        i += 1;
      }
    }
    parts = std::move(next);
  }
  return parts;
}

}  // namespace

BpeMerges BpeMerges::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open merges file: " + path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string left, right, extra;
    if (!(ls >> left >> right) || (ls >> extra))
      throw ParseError("merges line must hold exactly two symbols", line_no);
    pairs.emplace_back(left, right);
  }
  return from_pairs(std::move(pairs));
}

BpeMerges BpeMerges::from_pairs(
    std::vector<std::pair<std::string, std::string>> in_pairs) {
  BpeMerges m;
  m.pairs = std::move(in_pairs);
  for (std::size_t i = 0; i < m.pairs.size(); ++i) {
    const std::string key = m.pairs[i].first + " " + m.pairs[i].second;
    if (!m.rank.emplace(key, static_cast<int>(i)).second)
      throw ParseError("duplicate merge pair: " + key, i + 1);
  }
  return m;
}

std::vector<std::string> apply_bpe(const std::string& title,
                                   const BpeMerges& merges) {
  std::vector<std::string> out;
  for (const std::string& word : split_ws(ascii_lower(title))) {
    std::vector<std::string> parts = bpe_word(word, merges);
    out.insert(out.end(), parts.begin(), parts.end());
  }
  return out;
}

std::vector<std::string> whitespace_tokenize(const std::string& title) {
  return split_ws(ascii_lower(title));
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

int Vocabulary::add(const std::string& token) {
  auto it = index.find(token);
  if (it != index.end()) return it->second;
  const int id = static_cast<int>(tokens.size());
  tokens.push_back(token);
  index.emplace(token, id);
  return id;
}

int Vocabulary::find(const std::string& token) const {
  auto it = index.find(token);
  return it == index.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::lookup(const std::vector<std::string>& toks,
                                    std::size_t max_title_len) const {
  if (max_title_len < 1) throw ContractError("lookup: max_title_len must be >= 1");
  std::vector<int> out;
  out.reserve(std::min(toks.size(), max_title_len));
  for (const std::string& t : toks) {
    if (out.size() >= max_title_len) break;
    out.push_back(find(t));
  }
  return out;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const std::string& t : tokens) {
    h = fnv1a64(t, h);
    h = fnv1a64("\x1f", h);  // token separator
  }
  return h;
}

std::vector<std::string> Tokenizer::tokenize(const std::string& title) const {
  return kind == Kind::kBpe ? apply_bpe(title, merges)
                            : whitespace_tokenize(title);
}

std::size_t load_embeddings_file(const std::string& path,
                                 const Vocabulary& vocab, Tensor& table) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embeddings file: " + path);
  if (table.shape.size() != 2 || table.shape[0] != vocab.size())
    throw DimensionError("embedding table " + table.shape_str() +
                         " does not match vocabulary of " +
                         std::to_string(vocab.size()));
  const std::size_t dim = table.shape[1];
  std::string line;
  std::size_t line_no = 0, filled = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    auto it = vocab.index.find(token);
    std::vector<double> v;
    v.reserve(dim);
    double x;
    while (ls >> x) v.push_back(x);
    if (v.size() != dim)
      throw ParseError("embedding line has " + std::to_string(v.size()) +
                           " values, expected " + std::to_string(dim),
                       line_no);
    if (it == vocab.index.end()) continue;
    std::copy(v.begin(), v.end(),
              table.data.begin() + static_cast<std::size_t>(it->second) * dim);
    ++filled;
  }
  return filled;
}

}  // namespace xlrec
