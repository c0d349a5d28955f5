#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "testutil.hpp"
#include "xlrec/errors.hpp"
#include "xlrec/metrics.hpp"

using namespace xlrec;

namespace {

// Exhaustive pairwise oracle: wins + half-ties over all pos-neg pairs.
double auc_bruteforce(const std::vector<int>& labels,
                      const std::vector<double>& scores) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[i] != 1 || labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("auc: perfect and reversed rankings") {
  CHECK(auc({1, 1, 0, 0}, {4, 3, 2, 1}) == 1.0);
  CHECK(auc({1, 1, 0, 0}, {1, 2, 3, 4}) == 0.0);
}

TEST_CASE("auc: spec instance matches the exhaustive pairwise oracle") {
  const std::vector<int> labels = {1, 0, 1, 0};
  const std::vector<double> scores = {0.9, 0.9, 0.2, 0.1};
  // Pairs: (c0,c1) tie = 0.5, (c0,c3) win, (c2,c1) loss, (c2,c3) win.
  const double expected = auc_bruteforce(labels, scores);
  CHECK(expected == doctest::Approx(2.5 / 4.0));
  CHECK(auc(labels, scores) == expected);
}

TEST_CASE("auc equals brute force exactly on random instances") {
  Rng rng(41);
  std::uniform_int_distribution<int> n_cand(2, 20);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> coarse(0, 4);  // forces ties
  for (int it = 0; it < 1000; ++it) {
    const int n = n_cand(rng);
    std::vector<int> labels(n);
    std::vector<double> scores(n);
    bool pos = false, neg = false;
    for (int i = 0; i < n; ++i) {
      labels[i] = coin(rng);
      scores[i] = coarse(rng) / 4.0;
      (labels[i] ? pos : neg) = true;
    }
    if (!pos || !neg) continue;
    CHECK(auc(labels, scores) == auc_bruteforce(labels, scores));
  }
}

TEST_CASE("auc requires both classes") {
  CHECK_THROWS_AS(auc({1, 1}, {0.5, 0.2}), ContractError);
  CHECK_THROWS_AS(auc({0, 0}, {0.5, 0.2}), ContractError);
  CHECK_THROWS_AS(auc({}, {}), DimensionError);
}

TEST_CASE("mrr: top rank, second rank and the direct formula") {
  CHECK(mrr({1, 0, 0}, {9, 2, 1}) == 1.0);
  CHECK(mrr({0, 1, 0}, {9, 2, 1}) == 0.5);
  // labels [1,1,0], scores [3,1,2]: positives ranked 1 and 3.
  CHECK(mrr({1, 1, 0}, {3, 1, 2}) ==
        doctest::Approx((1.0 + 1.0 / 3.0) / 2.0).epsilon(1e-12));
  CHECK_THROWS_AS(mrr({0, 0}, {1, 2}), ContractError);
}

TEST_CASE("mrr ties break by candidate order") {
  // Equal scores: the earlier candidate keeps the better rank.
  CHECK(mrr({1, 0}, {5, 5}) == 1.0);
  CHECK(mrr({0, 1}, {5, 5}) == 0.5);
}

TEST_CASE("ndcg: ideal ordering and forced top") {
  CHECK(ndcg_at_k({1, 1, 0}, {3, 2, 1}, 5) == 1.0);
  CHECK(ndcg_at_k({1}, {0.3}, 5) == 1.0);
  CHECK_THROWS_AS(ndcg_at_k({0, 0}, {1, 2}, 5), ContractError);
  CHECK_THROWS_AS(ndcg_at_k({1, 0}, {1, 2}, 0), ContractError);
}

TEST_CASE("ndcg: direct-formula value for labels [1,0,1], scores [3,2,1]") {
  // Positives at ranks 1 and 3: DCG = 1/log2(2) + 1/log2(4);
  // ideal = 1/log2(2) + 1/log2(3).
  const double expected =
      (1.0 + 1.0 / std::log2(4.0)) / (1.0 + 1.0 / std::log2(3.0));
  CHECK(ndcg_at_k({1, 0, 1}, {3, 2, 1}, 5) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ndcg with k >= candidate count equals full-list ndcg") {
  Rng rng(43);
  std::uniform_int_distribution<int> n_cand(2, 12);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_real_distribution<double> sc(-2, 2);
  for (int it = 0; it < 200; ++it) {
    const int n = n_cand(rng);
    std::vector<int> labels(n);
    std::vector<double> scores(n);
    bool pos = false;
    for (int i = 0; i < n; ++i) {
      labels[i] = coin(rng);
      scores[i] = sc(rng);
      pos |= labels[i] == 1;
    }
    if (!pos) continue;
    CHECK(ndcg_at_k(labels, scores, n) ==
          ndcg_at_k(labels, scores, n + 7));
  }
}

TEST_CASE("all metrics are invariant under strictly increasing transforms") {
  Rng rng(47);
  std::uniform_int_distribution<int> n_cand(3, 15);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_real_distribution<double> sc(-2, 2);
  for (int it = 0; it < 200; ++it) {
    const int n = n_cand(rng);
    std::vector<int> labels(n);
    std::vector<double> scores(n), warped(n);
    bool pos = false, neg = false;
    for (int i = 0; i < n; ++i) {
      labels[i] = coin(rng);
      scores[i] = sc(rng);
      warped[i] = std::exp(3.0 * scores[i]) + 1.0;  // strictly increasing
      (labels[i] ? pos : neg) = true;
    }
    if (!pos || !neg) continue;
    CHECK(auc(labels, scores) == doctest::Approx(auc(labels, warped)));
    CHECK(mrr(labels, scores) == doctest::Approx(mrr(labels, warped)));
    CHECK(ndcg_at_k(labels, scores, 5) ==
          doctest::Approx(ndcg_at_k(labels, warped, 5)));
    CHECK(ndcg_at_k(labels, scores, 10) ==
          doctest::Approx(ndcg_at_k(labels, warped, 10)));
  }
}

TEST_CASE("label leakage scores give all metrics 1.0") {
  const std::vector<int> labels = {0, 1, 0, 1, 0};
  std::vector<double> scores(labels.begin(), labels.end());
  CHECK(auc(labels, scores) == 1.0);
  CHECK(mrr(labels, scores) == doctest::Approx((1.0 + 0.5) / 2.0));
  // With ties broken by order both positives precede nothing better.
  CHECK(ndcg_at_k(labels, scores, 5) == 1.0);
  CHECK(ndcg_at_k(labels, scores, 10) == 1.0);
}

namespace {

// A small frozen model over a corpus whose titles are single tokens.
struct EvalFixture {
  ModelParams params;
  Corpus corpus;

  explicit EvalFixture(std::size_t n_news, std::uint64_t seed)
      : params(ModelParams::init(config(), seed)) {
    for (std::size_t i = 0; i < n_news; ++i) {
      News n;
      n.id = "N" + std::to_string(i);
      n.domain = Domain::kTarget;
      n.title = "w" + std::to_string(i);
      n.tokens = {static_cast<int>(2 + i % 28)};
      corpus.news.push_back(n);
    }
    corpus.reindex();
  }

  static ModelConfig config() {
    ModelConfig cfg;
    cfg.vocab_size = 30;
    cfg.embedding_dim = 12;
    cfg.heads = 3;
    cfg.attn_hidden = 8;
    return cfg;
  }

  void add_user(const std::string& id, std::vector<std::string> history) {
    User u;
    u.id = id;
    u.domain = Domain::kTarget;
    u.history = std::move(history);
    corpus.users.push_back(u);
    corpus.reindex();
  }

  Impression impression(const std::string& id, const std::string& user,
                        std::vector<std::string> candidates,
                        std::vector<int> labels) {
    Impression imp;
    imp.impression_id = id;
    imp.user_id = user;
    imp.domain = Domain::kTarget;
    imp.split = Split::kTest;
    imp.candidates = std::move(candidates);
    imp.labels = std::move(labels);
    corpus.impressions.push_back(imp);
    return corpus.impressions.back();
  }
};

}  // namespace

TEST_CASE("evaluate: a single impression aggregates to its own metrics") {
  EvalFixture f(6, 3);
  f.add_user("U", {"N0", "N1"});
  f.impression("i1", "U", {"N2", "N3", "N4"}, {1, 0, 0});
  EvaluateOptions opt;
  const auto imps = impressions_of_split(f.corpus, Split::kTest);
  const MetricReport r = evaluate(f.params, f.corpus, imps, opt);
  CHECK(r.n_impressions == 1);
  CHECK(r.n_auc == 1);
  CHECK(r.n_rank == 1);

  // Recompute the same impression by hand through the frozen encoders.
  std::vector<Tensor> hist = {encode_news_value(f.params, {2}),
                              encode_news_value(f.params, {3})};
  const Tensor e_u = encode_user_value(f.params, hist);
  std::vector<double> scores;
  for (int t : {4, 5, 6})
    scores.push_back(score_value(e_u, encode_news_value(f.params, {t})));
  CHECK(r.auc == auc({1, 0, 0}, scores));
  CHECK(r.mrr == mrr({1, 0, 0}, scores));
}

TEST_CASE("evaluate: zero-history users tie every candidate") {
  EvalFixture f(4, 5);
  f.add_user("U", {});
  f.impression("i1", "U", {"N0", "N1"}, {0, 1});
  EvaluateOptions opt;
  const auto imps = impressions_of_split(f.corpus, Split::kTest);
  const MetricReport r = evaluate(f.params, f.corpus, imps, opt);
  // All scores are 0: the tie is broken by candidate order, so the
  // positive in second place lands at rank 2.
  CHECK(r.auc == 0.5);
  CHECK(r.mrr == 0.5);
}

TEST_CASE("evaluate: single-class impressions are excluded and counted") {
  EvalFixture f(4, 7);
  f.add_user("U", {"N0"});
  f.impression("all_pos", "U", {"N1", "N2"}, {1, 1});
  f.impression("mixed", "U", {"N1", "N2"}, {1, 0});
  f.impression("all_neg", "U", {"N1", "N3"}, {0, 0});
  EvaluateOptions opt;
  const auto imps = impressions_of_split(f.corpus, Split::kTest);
  const MetricReport r = evaluate(f.params, f.corpus, imps, opt);
  CHECK(r.n_impressions == 3);
  CHECK(r.n_auc == 1);   // only the mixed impression
  CHECK(r.n_rank == 2);  // all_neg lacks a positive
}

TEST_CASE("evaluate: metric means ignore impression order and jobs") {
  EvalFixture f(20, 9);
  Rng rng(13);
  std::uniform_int_distribution<int> pick(0, 19);
  for (int u = 0; u < 8; ++u) {
    const std::string uid = "U" + std::to_string(u);
    f.add_user(uid, {"N" + std::to_string(pick(rng)),
                     "N" + std::to_string(pick(rng))});
    f.impression("i" + std::to_string(u), uid,
                 {"N" + std::to_string(pick(rng)),
                  "N" + std::to_string(pick(rng)),
                  "N" + std::to_string(pick(rng))},
                 {1, 0, u % 2});
  }
  auto imps = impressions_of_split(f.corpus, Split::kTest);
  EvaluateOptions opt;
  const MetricReport forward = evaluate(f.params, f.corpus, imps, opt);
  std::reverse(imps.begin(), imps.end());
  const MetricReport reversed = evaluate(f.params, f.corpus, imps, opt);
  CHECK(forward.auc == doctest::Approx(reversed.auc).epsilon(1e-12));
  CHECK(forward.mrr == doctest::Approx(reversed.mrr).epsilon(1e-12));

  EvaluateOptions par = opt;
  par.jobs = 4;
  std::reverse(imps.begin(), imps.end());
  const MetricReport threaded = evaluate(f.params, f.corpus, imps, par);
  CHECK(threaded.auc == forward.auc);
  CHECK(threaded.mrr == forward.mrr);
  CHECK(threaded.ndcg5 == forward.ndcg5);
  CHECK(threaded.ndcg10 == forward.ndcg10);
}

TEST_CASE("evaluate: random scores hover near auc 0.5") {
  // The model's scores against random labels are as good as chance.
  EvalFixture f(30, 11);
  Rng rng(17);
  std::uniform_int_distribution<int> pick(0, 29);
  std::uniform_int_distribution<int> coin(0, 1);
  int made = 0;
  for (int u = 0; made < 800; ++u) {
    const std::string uid = "U" + std::to_string(u);
    f.add_user(uid, {"N" + std::to_string(pick(rng))});
    std::vector<std::string> cands;
    std::vector<int> labels;
    bool pos = false, neg = false;
    for (int c = 0; c < 8; ++c) {
      cands.push_back("N" + std::to_string(pick(rng)));
      labels.push_back(coin(rng));
      (labels.back() ? pos : neg) = true;
    }
    if (!pos || !neg) continue;
    f.impression("i" + std::to_string(u), uid, cands, labels);
    ++made;
  }
  EvaluateOptions opt;
  opt.jobs = 2;
  const auto imps = impressions_of_split(f.corpus, Split::kTest);
  const MetricReport r = evaluate(f.params, f.corpus, imps, opt);
  CHECK(r.auc == doctest::Approx(0.5).epsilon(0.04));  // 0.5 +/- 0.02
}

TEST_CASE("metric report json carries the aggregate fields") {
  MetricReport r;
  r.auc = 0.75;
  r.mrr = 0.5;
  r.ndcg5 = 0.6;
  r.ndcg10 = 0.7;
  r.n_impressions = 10;
  r.n_auc = 9;
  r.n_rank = 10;
  const auto j = r.to_json();
  CHECK(j.at("auc").get<double>() == 0.75);
  CHECK(j.at("n_auc").get<std::size_t>() == 9);
  CHECK(!j.contains("per_impression"));
  PerImpression p;
  p.impression_id = "x";
  r.per_impression.push_back(p);
  CHECK(r.to_json(true).at("per_impression").size() == 1);
}
