#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "xlrec/data.hpp"
#include "xlrec/model.hpp"

namespace xlrec {

// Probability that a random positive outranks a random negative; ties
// count 0.5. ContractError unless both classes are present (callers
// exclude such impressions instead of failing a whole evaluation).
double auc(const std::vector<int>& labels, const std::vector<double>& scores);

// Mean over positives of 1/rank, ranking by descending score with ties
// broken by original candidate order. ContractError without a positive.
double mrr(const std::vector<int>& labels, const std::vector<double>& scores);

// Binary-gain DCG@k with 1/log2(rank+1) discounts, normalized by the
// ideal ordering. ContractError without a positive.
double ndcg_at_k(const std::vector<int>& labels,
                 const std::vector<double>& scores, std::size_t k);

struct PerImpression {
  std::string impression_id;
  double auc = 0.0, mrr = 0.0, ndcg5 = 0.0, ndcg10 = 0.0;
  bool auc_valid = false, rank_valid = false;
};

struct MetricReport {
  double auc = 0.0, mrr = 0.0, ndcg5 = 0.0, ndcg10 = 0.0;
  std::size_t n_impressions = 0;   // impressions seen
  std::size_t n_auc = 0;           // contributing to the AUC mean
  std::size_t n_rank = 0;          // contributing to MRR/NDCG means
  std::vector<PerImpression> per_impression;  // optional

  nlohmann::json to_json(bool include_per_impression = false) const;
  std::string table() const;  // human-readable summary
};

struct EvaluateOptions {
  std::size_t max_title_len = 30;
  std::size_t max_history_len = 50;
  std::size_t jobs = 1;
  bool keep_per_impression = false;
};

// Frozen-model evaluation: e_u from the user's original history (most
// recent max_history_len entries, no masking at inference), candidates
// scored by dot product, unweighted metric means over impressions.
// Users with no usable history get the zero sentinel, which ties all
// scores and leaves the candidate order as the ranking.
MetricReport evaluate(const ModelParams& params, const Corpus& corpus,
                      const std::vector<const Impression*>& impressions,
                      const EvaluateOptions& opt);

// All impressions of a split, in corpus order.
std::vector<const Impression*> impressions_of_split(const Corpus& corpus,
                                                    Split split);

}  // namespace xlrec
