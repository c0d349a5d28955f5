#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xlrec/augment.hpp"
#include "xlrec/data.hpp"
#include "xlrec/metrics.hpp"
#include "xlrec/model.hpp"
#include "xlrec/vocab.hpp"

namespace xlrec {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 80;
  std::size_t embedding_dim = 300;
  std::size_t heads = 6;
  std::size_t attn_hidden = 200;
  double learning_rate = 3e-4;
  double alpha = 1.0;  // News-Align loss weight
  double beta = 1.0;   // source recommendation loss weight
  std::size_t negatives_k = 4;
  std::uint64_t seed = 42;
  bool use_target_news = true;
  bool use_news_align = true;
  bool use_random_mask = true;
  std::size_t max_title_len = 30;
  std::size_t max_history_len = 50;
  double dropout = 0.0;
  bool user_self_attention = false;
  // Alignment batch: per step, a uniform sample of batch_size source news.
  // The alternative cycles the full corpus once per epoch.
  bool align_full_corpus_per_epoch = false;
  double grad_clip = 0.0;            // global-norm clip; 0 disables
  std::vector<double> mask_weights;  // empty = uniform Gamma
  std::size_t jobs = 1;

  void validate() const;  // ConfigError on bad values
  bool needs_augmented_sets() const {
    return use_news_align || use_random_mask;
  }
};

// Mean over samples of -log softmax probability of the positive, which
// sits at index 0 of each score vector [r+, r1-, ..., rk-]. Mean (not
// sum) so alpha/beta do not depend on batch size.
double rec_loss(const std::vector<std::vector<double>>& score_vectors);

// Mean cross-entropy of classifying a masked form back to its news id.
// true_ids index the source news classes; an id outside them is a
// ContractError.
double align_loss(const std::vector<std::vector<double>>& logits,
                  const std::vector<int>& true_ids);

// alpha * l_align + beta * l_src + l_tgt; the target term is omitted in
// the zero-shot setting. Negative weights are a ConfigError.
double total_loss(double l_align, double l_src, double l_tgt, double alpha,
                  double beta, bool zero_shot);

struct EpochStats {
  double loss_total = 0.0;
  double loss_align = 0.0;
  double loss_source = 0.0;
  double loss_target = 0.0;
  MetricReport valid;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 when no validation set exists
  std::string checkpoint_path;
  bool zero_shot = false;
  nlohmann::json to_json() const;
};

struct TrainResult {
  ModelParams params;  // best-validation parameters (final when no valid set)
  TrainReport report;
};

using EpochCallback =
    std::function<void(std::size_t epoch_1based, const EpochStats&)>;

// Joint source+target training with Random Masking and News-Align.
// `augmented` must align with dataset.source.news order whenever the
// config needs augmented sets. News tokens must already be filled.
// Writes checkpoint.bin and run-log.json under out_dir unless it is
// empty.
TrainResult train(const Dataset& dataset,
                  const std::vector<AugmentedNewsSet>& augmented,
                  const Vocabulary& vocab, const TrainConfig& cfg,
                  const std::string& out_dir,
                  const std::string& config_echo = "{}",
                  const EpochCallback& on_epoch = {});

}  // namespace xlrec
