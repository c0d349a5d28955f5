#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "xlrec/data.hpp"
#include "xlrec/rng.hpp"
#include "xlrec/vocab.hpp"

namespace xlrec {

struct TranslatorSpec {
  enum class Kind { kIdentity, kLexicon, kExternal };
  Kind kind = Kind::kIdentity;
  std::string lexicon_path;  // kLexicon
  std::string endpoint;      // kExternal, e.g. http://host:port
  std::string cache_path;    // kExternal: on-disk result cache
};

// Title translation. The lexicon kind substitutes word by word
// (out-of-lexicon words pass through unchanged); the external kind POSTs
// title batches to an endpoint and caches results on disk keyed by title
// hash, so re-runs are reproducible and offline.
class Translator {
 public:
  static Translator make(const TranslatorSpec& spec);  // ConfigError on bad spec

  std::string translate(const std::string& title) const;
  std::vector<std::string> translate_batch(
      const std::vector<std::string>& titles) const;

  TranslatorSpec::Kind kind() const { return spec_.kind; }

 private:
  TranslatorSpec spec_;
  std::unordered_map<std::string, std::string> lexicon_;
  mutable std::unordered_map<std::string, std::string> cache_;  // hash -> text

  std::vector<std::string> fetch_remote(
      const std::vector<std::string>& titles) const;
  void persist_cache() const;
};

struct EmbeddingProviderSpec {
  enum class Kind { kHashFallback, kFile };
  Kind kind = Kind::kHashFallback;
  std::size_t dim = 32;
  std::string path;  // kFile: "token v1 ... vD" lines
};

// Title embeddings for topical retrieval: the mean of per-token vectors.
// The file kind loads precomputed vectors (the stand-in for a multilingual
// pretrained model); the hash fallback maps each token deterministically
// to a unit vector so the pipeline runs hermetically.
class EmbeddingProvider {
 public:
  static EmbeddingProvider make(const EmbeddingProviderSpec& spec);

  std::vector<double> embed_title(const std::string& title) const;
  std::size_t dim() const { return spec_.dim; }

 private:
  EmbeddingProviderSpec spec_;
  std::unordered_map<std::string, std::vector<double>> table_;
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// Argmax cosine similarity against every target title; ties break toward
// the lowest news id. ContractError on an empty target set.
std::size_t find_most_similar(const std::string& title,
                              const std::vector<News>& target_news,
                              const EmbeddingProvider& provider);

// The augmented forms of one source news: forms[0] is always the original
// title's token sequence, forms[1] the translation, forms[2] (present only
// with use_target_news) the most topic-similar target news.
struct AugmentedNewsSet {
  std::string news_id;
  std::vector<std::vector<int>> forms;
};

AugmentedNewsSet build_augmented_set(const News& d, const Translator& translator,
                                     const EmbeddingProvider& provider,
                                     const std::vector<News>& target_news,
                                     bool use_target_news,
                                     const Tokenizer& tokenizer,
                                     const Vocabulary& vocab,
                                     std::size_t max_title_len);

// All source news, aligned with corpus order. Runs the translator once as
// a batch, then retrieval per news; parallel across `jobs` workers.
std::vector<AugmentedNewsSet> build_all_augmented_sets(
    const Corpus& source, const std::vector<News>& target_news,
    const Translator& translator, const EmbeddingProvider& provider,
    const Tokenizer& tokenizer, const Vocabulary& vocab,
    std::size_t max_title_len, bool use_target_news, std::size_t jobs);

// Cache persisted between runs; rejected (returns false) when the stored
// vocabulary hash or form arity no longer matches.
void save_augmented_sets(const std::string& path,
                         const std::vector<AugmentedNewsSet>& sets,
                         std::uint64_t vocab_hash, bool use_target_news);
bool load_augmented_sets(const std::string& path, std::uint64_t vocab_hash,
                         bool use_target_news,
                         std::vector<AugmentedNewsSet>& out);

// Uniform draw over the set's forms (Gamma). Optional weights skew the
// draw for experimentation; they must match the form count.
const std::vector<int>& random_mask(const AugmentedNewsSet& set, Rng& rng,
                                    const std::vector<double>* weights = nullptr);

}  // namespace xlrec
