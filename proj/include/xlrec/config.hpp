#pragma once

#include <string>

#include <json.hpp>

#include "xlrec/augment.hpp"
#include "xlrec/train.hpp"

namespace xlrec {

// Resolved configuration of one run. Everything a run needs is in here;
// the echo written to the output directory makes the run reproducible.
struct RunConfig {
  std::string data_dir;  // canonical dataset directory
  TranslatorSpec translator;
  EmbeddingProviderSpec provider;
  TrainConfig train;
  long few_shot_n = -1;  // target training users; -1 = all, 0 = zero-shot
  std::string out_dir;
  std::string tokenizer = "whitespace";  // or "bpe"
  std::string merges_path;
  std::string embeddings_path;    // optional pretrained subword vectors
  std::string augmented_cache;    // optional persisted augmented-set cache

  static RunConfig load(const std::string& path);  // ConfigError/ParseError
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  std::string echo() const { return to_json().dump(2); }
};

// Everything assembled from a RunConfig short of training: dataset with
// tokens filled, the joint vocabulary (source + translated + target), and
// augmented sets when the configuration needs them.
struct Pipeline {
  Dataset dataset;
  Vocabulary vocab;
  Tokenizer tokenizer;
  std::vector<AugmentedNewsSet> augmented;
};

Pipeline build_pipeline(const RunConfig& cfg, bool need_augmented);

}  // namespace xlrec
