#include "xlrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <thread>
#include <unordered_map>

#include "xlrec/errors.hpp"
#include "xlrec/vocab.hpp"

namespace xlrec {

namespace {

void check_lengths(const std::vector<int>& labels,
                   const std::vector<double>& scores, const char* who) {
  if (labels.size() != scores.size() || labels.empty())
    throw DimensionError(std::string(who) + ": " +
                         std::to_string(labels.size()) + " labels vs " +
                         std::to_string(scores.size()) + " scores");
}

// Candidate order sorted by descending score, ties keeping original order.
std::vector<std::size_t> ranking(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });
  return order;
}

}  // namespace

double auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  check_lengths(labels, scores, "auc");
  std::size_t pairs = 0;
  double wins = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  if (pairs == 0)
    throw ContractError("auc: needs at least one positive and one negative");
  return wins / static_cast<double>(pairs);
}

double mrr(const std::vector<int>& labels, const std::vector<double>& scores) {
  check_lengths(labels, scores, "mrr");
  const auto order = ranking(scores);
  double sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] == 1) {
      sum += 1.0 / static_cast<double>(rank + 1);
      ++positives;
    }
  }
  if (positives == 0) throw ContractError("mrr: no positive candidate");
  return sum / static_cast<double>(positives);
}

double ndcg_at_k(const std::vector<int>& labels,
                 const std::vector<double>& scores, std::size_t k) {
  check_lengths(labels, scores, "ndcg");
  if (k < 1) throw ContractError("ndcg: k must be >= 1");
  std::size_t positives = 0;
  for (int l : labels) positives += l == 1;
  if (positives == 0) throw ContractError("ndcg: no positive candidate");

  const auto order = ranking(scores);
  const std::size_t cutoff = std::min(k, labels.size());
  double dcg = 0.0;
  for (std::size_t rank = 0; rank < cutoff; ++rank)
    if (labels[order[rank]] == 1)
      dcg += 1.0 / std::log2(static_cast<double>(rank + 2));
  double ideal = 0.0;
  for (std::size_t rank = 0; rank < std::min(cutoff, positives); ++rank)
    ideal += 1.0 / std::log2(static_cast<double>(rank + 2));
  return dcg / ideal;
}

nlohmann::json MetricReport::to_json(bool include_per_impression) const {
  nlohmann::json j{{"auc", auc},
                   {"mrr", mrr},
                   {"ndcg5", ndcg5},
                   {"ndcg10", ndcg10},
                   {"n_impressions", n_impressions},
                   {"n_auc", n_auc},
                   {"n_rank", n_rank}};
  if (include_per_impression) {
    nlohmann::json rows = nlohmann::json::array();
    for (const PerImpression& p : per_impression)
      rows.push_back({{"impression_id", p.impression_id},
                      {"auc", p.auc},
                      {"mrr", p.mrr},
                      {"ndcg5", p.ndcg5},
                      {"ndcg10", p.ndcg10},
                      {"auc_valid", p.auc_valid},
                      {"rank_valid", p.rank_valid}});
    j["per_impression"] = rows;
  }
  return j;
}

std::string MetricReport::table() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "impressions %zu (auc on %zu, ranking on %zu)\n"
                "  AUC     %.4f\n  MRR     %.4f\n  NDCG@5  %.4f\n  NDCG@10 %.4f\n",
                n_impressions, n_auc, n_rank, auc, mrr, ndcg5, ndcg10);
  return buf;
}

std::vector<const Impression*> impressions_of_split(const Corpus& corpus,
                                                    Split split) {
  std::vector<const Impression*> out;
  for (const Impression& imp : corpus.impressions)
    if (imp.split == split) out.push_back(&imp);
  return out;
}

MetricReport evaluate(const ModelParams& params, const Corpus& corpus,
                      const std::vector<const Impression*>& impressions,
                      const EvaluateOptions& opt) {
  // Frozen model: every news vector is a pure function of its tokens, so
  // encode each referenced news once.
  std::vector<const News*> needed;
  {
    std::unordered_set<std::string> seen;
    auto want = [&](const std::string& id) {
      const News* n = corpus.find_news(id);
      if (n != nullptr && seen.insert(id).second) needed.push_back(n);
    };
    for (const Impression* imp : impressions) {
      const User* u = corpus.find_user(imp->user_id);
      if (u != nullptr) {
        const std::size_t take = std::min(u->history.size(), opt.max_history_len);
        for (std::size_t i = u->history.size() - take; i < u->history.size(); ++i)
          want(u->history[i]);
      }
      for (const std::string& c : imp->candidates) want(c);
    }
  }

  std::unordered_map<std::string, Tensor> news_vec;
  news_vec.reserve(needed.size());
  {
    std::vector<Tensor> encoded(needed.size());
    auto encode_range = [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        std::vector<int> tokens = needed[i]->tokens;
        if (tokens.empty()) tokens.push_back(Vocabulary::kUnk);
        encoded[i] = encode_news_value(params, tokens);
      }
    };
    const std::size_t workers =
        std::max<std::size_t>(1, std::min(opt.jobs, needed.size()));
    if (workers <= 1 || needed.size() < 2) {
      encode_range(0, needed.size());
    } else {
      std::vector<std::thread> pool;
      const std::size_t chunk = (needed.size() + workers - 1) / workers;
      for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(begin + chunk, needed.size());
        if (begin < end) pool.emplace_back(encode_range, begin, end);
      }
      for (auto& th : pool) th.join();
    }
    for (std::size_t i = 0; i < needed.size(); ++i)
      news_vec.emplace(needed[i]->id, std::move(encoded[i]));
  }

  // Per-impression rows are computed (possibly in parallel) into an
  // index-aligned vector; aggregation then runs in impression order, so
  // the report does not depend on scheduling.
  std::vector<PerImpression> rows(impressions.size());
  auto eval_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t idx = begin; idx < end; ++idx) {
      const Impression& imp = *impressions[idx];
      PerImpression& row = rows[idx];
      row.impression_id = imp.impression_id;

      Tensor e_u({1, params.cfg.embedding_dim});  // zero-history sentinel
      const User* u = corpus.find_user(imp.user_id);
      if (u != nullptr && !u->history.empty()) {
        std::vector<Tensor> hist;
        const std::size_t take = std::min(u->history.size(), opt.max_history_len);
        for (std::size_t i = u->history.size() - take; i < u->history.size(); ++i) {
          auto it = news_vec.find(u->history[i]);
          if (it != news_vec.end()) hist.push_back(it->second);
        }
        if (!hist.empty()) e_u = encode_user_value(params, hist);
      }

      std::vector<double> scores;
      scores.reserve(imp.candidates.size());
      for (const std::string& c : imp.candidates) {
        auto it = news_vec.find(c);
        scores.push_back(it == news_vec.end() ? 0.0
                                              : score_value(e_u, it->second));
      }

      std::size_t pos = 0, neg = 0;
      for (int l : imp.labels) (l == 1 ? pos : neg) += 1;
      if (pos > 0 && neg > 0) {
        row.auc = auc(imp.labels, scores);
        row.auc_valid = true;
      }
      if (pos > 0) {
        row.mrr = mrr(imp.labels, scores);
        row.ndcg5 = ndcg_at_k(imp.labels, scores, 5);
        row.ndcg10 = ndcg_at_k(imp.labels, scores, 10);
        row.rank_valid = true;
      }
    }
  };

  const std::size_t workers =
      std::max<std::size_t>(1, std::min(opt.jobs, impressions.size()));
  if (workers <= 1 || impressions.size() < 2) {
    eval_range(0, impressions.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (impressions.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(begin + chunk, impressions.size());
      if (begin < end) pool.emplace_back(eval_range, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  MetricReport report;
  report.n_impressions = impressions.size();
  for (const PerImpression& row : rows) {
    if (row.auc_valid) {
      report.auc += row.auc;
      ++report.n_auc;
    }
    if (row.rank_valid) {
      report.mrr += row.mrr;
      report.ndcg5 += row.ndcg5;
      report.ndcg10 += row.ndcg10;
      ++report.n_rank;
    }
  }
  if (report.n_auc > 0) report.auc /= static_cast<double>(report.n_auc);
  if (report.n_rank > 0) {
    report.mrr /= static_cast<double>(report.n_rank);
    report.ndcg5 /= static_cast<double>(report.n_rank);
    report.ndcg10 /= static_cast<double>(report.n_rank);
  }
  if (opt.keep_per_impression) report.per_impression = std::move(rows);
  return report;
}

}  // namespace xlrec
