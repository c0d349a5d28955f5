#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "xlrec/data.hpp"

namespace xlrec {

// Desk-scale bilingual corpus with a known transfer structure: T topics,
// two disjoint pseudo-languages (one per domain), a shared pattern ->
// topic preference matrix driving clicks in both domains, and a set of
// held-out preference patterns that never occur in target training users.
//
// Content shift is modeled by a partial lexicon: only lexicon_coverage of
// each topic's source words have a target translation, so the remaining
// target vocabulary is reachable only through real target-domain news.
struct SyntheticConfig {
  std::size_t topics = 8;
  std::size_t source_news = 2000;
  std::size_t target_news = 2000;
  std::size_t source_users = 1000;
  std::size_t target_train_users = 200;
  std::size_t target_test_users = 500;
  std::size_t words_per_topic = 100;  // per language
  double lexicon_coverage = 0.5;
  std::size_t title_len = 6;
  std::size_t history_len = 8;
  std::size_t impressions_per_user = 2;
  std::size_t candidates_per_impression = 10;
  std::size_t positives_per_impression = 2;
  std::size_t held_out_patterns = 2;
  double source_valid_fraction = 0.1;  // users contributing a valid impression
  std::size_t plm_dim = 8;             // provider vector width (>= topics)
};

struct SyntheticOutput {
  Dataset dataset;
  std::vector<std::pair<std::string, std::string>> lexicon;  // source -> target
  // Provider vectors that stand in for the multilingual language model:
  // words of the same topic cluster regardless of language.
  std::vector<std::pair<std::string, std::vector<double>>> plm_vectors;
  // Generator-internal oracles for tests.
  std::vector<std::vector<std::string>> source_words;  // per topic
  std::vector<std::vector<std::string>> target_words;  // per topic
  std::unordered_map<std::string, std::size_t> news_topic;  // "domain:id"
  std::vector<std::vector<std::size_t>> pattern_topics;     // liked topics
  std::size_t held_out_from = 0;  // patterns >= this index are held out
};

// ConfigError when topics < 2 or counts cannot produce a coherent corpus.
SyntheticOutput generate_synthetic_bilingual(const SyntheticConfig& cfg,
                                             Rng& rng);

// Canonical dataset files plus lexicon.tsv, plm_embeddings.txt and
// meta.json under dir.
void write_synthetic(const std::string& dir, const SyntheticOutput& out);

}  // namespace xlrec
