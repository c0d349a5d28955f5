#pragma once

#include <cstdint>
#include <string>

#include "xlrec/model.hpp"

namespace xlrec {

// Single binary file: model config, vocabulary hash, resolved run config
// echo, then every parameter tensor with a shape header. Doubles are
// written raw, so a save/load round trip is bit exact.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     std::uint64_t vocab_hash, const std::string& config_echo);

struct Checkpoint {
  ModelParams params;
  std::uint64_t vocab_hash = 0;
  std::string config_echo;
};

// ParseError on a malformed file. When expected_vocab_hash is nonzero the
// stored hash must match (ConfigError otherwise) so a model is never run
// against a different vocabulary.
Checkpoint load_checkpoint(const std::string& path,
                           std::uint64_t expected_vocab_hash = 0);

}  // namespace xlrec
