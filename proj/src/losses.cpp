#include <cmath>

#include "xlrec/errors.hpp"
#include "xlrec/train.hpp"

namespace xlrec {

namespace {

double row_xent(const std::vector<double>& logits, std::size_t label) {
  double m = logits[0];
  for (double x : logits) m = std::max(m, x);
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - m);
  return m + std::log(sum) - logits[label];
}

}  // namespace

double rec_loss(const std::vector<std::vector<double>>& score_vectors) {
  if (score_vectors.empty()) throw ContractError("rec_loss: empty batch");
  double sum = 0.0;
  for (const auto& scores : score_vectors) {
    if (scores.empty())
      throw ContractError("rec_loss: empty score vector");
    sum += row_xent(scores, 0);
  }
  return sum / static_cast<double>(score_vectors.size());
}

double align_loss(const std::vector<std::vector<double>>& logits,
                  const std::vector<int>& true_ids) {
  if (logits.empty()) throw ContractError("align_loss: empty batch");
  if (logits.size() != true_ids.size())
    throw ContractError("align_loss: " + std::to_string(true_ids.size()) +
                        " ids for " + std::to_string(logits.size()) + " rows");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (true_ids[i] < 0 ||
        static_cast<std::size_t>(true_ids[i]) >= logits[i].size())
      throw ContractError("align_loss: news id " + std::to_string(true_ids[i]) +
                          " outside the source corpus classes");
    sum += row_xent(logits[i], static_cast<std::size_t>(true_ids[i]));
  }
  return sum / static_cast<double>(logits.size());
}

double total_loss(double l_align, double l_src, double l_tgt, double alpha,
                  double beta, bool zero_shot) {
  if (alpha < 0.0 || beta < 0.0)
    throw ConfigError("total_loss: loss weights must be non-negative");
  double total = alpha * l_align + beta * l_src;
  if (!zero_shot) total += l_tgt;
  return total;
}

}  // namespace xlrec
