#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "xlrec/tensor.hpp"

namespace xlrec {

// Ordered list of BPE merge pairs; rank = position in the merges file.
struct BpeMerges {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::unordered_map<std::string, int> rank;  // "left right" -> rank

  // Plain text, one "left right" pair per line. Duplicate pairs are a
  // ParseError.
  static BpeMerges load(const std::string& path);
  static BpeMerges from_pairs(
      std::vector<std::pair<std::string, std::string>> pairs);

  bool empty() const { return pairs.empty(); }
};

// Lowercase, split on whitespace, decompose each word into UTF-8
// characters plus an end-of-word marker, then greedily apply the
// lowest-rank merge until none applies. Deterministic; empty title gives
// an empty sequence.
std::vector<std::string> apply_bpe(const std::string& title,
                                   const BpeMerges& merges);

// Fallback tokenizer for synthetic data and tests: lowercase,
// whitespace-split, one token per word.
std::vector<std::string> whitespace_tokenize(const std::string& title);

// Shared multilingual vocabulary. PAD and UNK are always present at
// indices 0 and 1; remaining indices are assigned in first-seen order.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  std::vector<std::string> tokens;             // index -> token
  std::unordered_map<std::string, int> index;  // token -> index
  std::size_t embedding_dim = 300;

  Vocabulary();

  std::size_t size() const { return tokens.size(); }
  int add(const std::string& token);   // returns (possibly existing) index
  int find(const std::string& token) const;  // kUnk when absent

  // Map tokens to indices, truncating to max_title_len. Unknown tokens
  // map to UNK; PAD is never emitted.
  std::vector<int> lookup(const std::vector<std::string>& toks,
                          std::size_t max_title_len) const;

  // FNV-1a over all tokens in index order; stored in checkpoints so a
  // reload can verify it is paired with the same vocabulary.
  std::uint64_t hash() const;
};

// Tokenizer selection for the ingestion pipeline.
struct Tokenizer {
  enum class Kind { kWhitespace, kBpe };
  Kind kind = Kind::kWhitespace;
  BpeMerges merges;

  std::vector<std::string> tokenize(const std::string& title) const;
};

// Pretrained subword vectors, one "token v1 ... vD" line each. Tokens
// absent from the file keep their existing (random) rows. Returns the
// number of vocabulary rows filled.
std::size_t load_embeddings_file(const std::string& path,
                                 const Vocabulary& vocab, Tensor& table);

}  // namespace xlrec
