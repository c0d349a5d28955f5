#include "xlrec/train.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "xlrec/adam.hpp"
#include "xlrec/checkpoint.hpp"
#include "xlrec/errors.hpp"

namespace xlrec {

namespace fs = std::filesystem;

namespace {

const std::vector<int> kUnkTokens = {Vocabulary::kUnk};

// Per-occurrence resolved token sequences for one training sample.
// Pointers reach into News::tokens or AugmentedNewsSet::forms, both stable
// for the duration of training; occurrences that drew the same form share
// a pointer and therefore one encoder subgraph.
struct RecItem {
  std::vector<const std::vector<int>*> history;
  std::vector<const std::vector<int>*> candidates;  // positive at index 0
  bool is_source = false;
};

struct AlignItem {
  const std::vector<int>* tokens = nullptr;
  int label = 0;
};

struct WorkerOut {
  std::vector<Tensor> grads;
  double src_sum = 0.0, tgt_sum = 0.0, align_sum = 0.0;
  std::size_t src_n = 0, tgt_n = 0, align_n = 0;
};

std::vector<TrainingSample> build_samples(const Corpus& corpus, std::size_t k,
                                          Rng& rng) {
  std::unordered_map<std::string, std::unordered_set<std::string>> clicked;
  for (const User& u : corpus.users)
    clicked[u.id] = {u.history.begin(), u.history.end()};
  for (const Impression& imp : corpus.impressions) {
    if (imp.split != Split::kTrain) continue;
    auto& set = clicked[imp.user_id];
    for (std::size_t i = 0; i < imp.candidates.size(); ++i)
      if (imp.labels[i] == 1) set.insert(imp.candidates[i]);
  }
  std::vector<TrainingSample> out;
  for (const Impression& imp : corpus.impressions) {
    if (imp.split != Split::kTrain) continue;
    auto samples = sample_negatives(imp, corpus, clicked[imp.user_id], k, rng);
    for (auto& s : samples) out.push_back(std::move(s));
  }
  return out;
}

MetricReport merge_reports(const MetricReport& a, const MetricReport& b) {
  MetricReport m;
  m.n_impressions = a.n_impressions + b.n_impressions;
  m.n_auc = a.n_auc + b.n_auc;
  m.n_rank = a.n_rank + b.n_rank;
  if (m.n_auc > 0)
    m.auc = (a.auc * static_cast<double>(a.n_auc) +
             b.auc * static_cast<double>(b.n_auc)) /
            static_cast<double>(m.n_auc);
  if (m.n_rank > 0) {
    const double an = static_cast<double>(a.n_rank);
    const double bn = static_cast<double>(b.n_rank);
    const double n = static_cast<double>(m.n_rank);
    m.mrr = (a.mrr * an + b.mrr * bn) / n;
    m.ndcg5 = (a.ndcg5 * an + b.ndcg5 * bn) / n;
    m.ndcg10 = (a.ndcg10 * an + b.ndcg10 * bn) / n;
  }
  return m;
}

MetricReport eval_valid(const ModelParams& params, const Dataset& ds,
                        const EvaluateOptions& opt) {
  const auto sv = impressions_of_split(ds.source, Split::kValid);
  const auto tv = impressions_of_split(ds.target, Split::kValid);
  MetricReport a, b;
  if (!sv.empty()) a = evaluate(params, ds.source, sv, opt);
  if (!tv.empty()) b = evaluate(params, ds.target, tv, opt);
  return merge_reports(a, b);
}

// Forward + backward over one worker's share of the step. Pure compute:
// all stochastic choices were resolved on the main thread.
WorkerOut run_worker(const ModelParams& params,
                     const std::vector<RecItem>& items, std::size_t item_begin,
                     std::size_t item_end, const std::vector<AlignItem>& aligns,
                     std::size_t align_begin, std::size_t align_end,
                     double src_coeff, double tgt_coeff, double align_coeff,
                     Rng* dropout_rng) {
  WorkerOut out;
  out.grads = params.zero_grads();
  if (item_begin >= item_end && align_begin >= align_end) return out;

  Graph g;
  ParamVars pv = register_params(g, params);
  std::unordered_map<const std::vector<int>*, Var> memo;
  auto enc = [&](const std::vector<int>* toks) {
    auto it = memo.find(toks);
    if (it != memo.end()) return it->second;
    Var v = encode_news(g, pv, params.cfg, *toks, dropout_rng);
    memo.emplace(toks, v);
    return v;
  };

  std::vector<Var> src_rows, tgt_rows;
  for (std::size_t i = item_begin; i < item_end; ++i) {
    const RecItem& item = items[i];
    Var e_u;
    if (item.history.empty()) {
      e_u = g.input(Tensor({1, params.cfg.embedding_dim}));
    } else {
      std::vector<Var> hist;
      hist.reserve(item.history.size());
      for (const auto* t : item.history) hist.push_back(enc(t));
      e_u = encode_user(g, pv, params.cfg, hist, dropout_rng);
    }
    std::vector<Var> scores;
    scores.reserve(item.candidates.size());
    for (const auto* t : item.candidates)
      scores.push_back(score(g, e_u, enc(t)));
    (item.is_source ? src_rows : tgt_rows).push_back(g.concat_cols(scores));
  }

  Var loss;
  auto add_term = [&](Var sum_var, double coeff, double& out_sum,
                      std::size_t& out_n, std::size_t n) {
    out_sum = g.value(sum_var).item();
    out_n = n;
    Var term = g.scale(sum_var, coeff);
    loss = loss.valid() ? g.add(loss, term) : term;
  };

  if (!src_rows.empty()) {
    Var sum = g.softmax_xent_rows(g.concat_rows(src_rows),
                                  std::vector<int>(src_rows.size(), 0));
    add_term(sum, src_coeff, out.src_sum, out.src_n, src_rows.size());
  }
  if (!tgt_rows.empty()) {
    Var sum = g.softmax_xent_rows(g.concat_rows(tgt_rows),
                                  std::vector<int>(tgt_rows.size(), 0));
    add_term(sum, tgt_coeff, out.tgt_sum, out.tgt_n, tgt_rows.size());
  }
  if (align_begin < align_end) {
    std::vector<Var> rows;
    std::vector<int> labels;
    rows.reserve(align_end - align_begin);
    for (std::size_t i = align_begin; i < align_end; ++i) {
      rows.push_back(align_logits(g, pv, params.cfg, enc(aligns[i].tokens)));
      labels.push_back(aligns[i].label);
    }
    Var sum = g.softmax_xent_rows(g.concat_rows(rows), std::move(labels));
    add_term(sum, align_coeff, out.align_sum, out.align_n,
             align_end - align_begin);
  }

  if (loss.valid()) g.backward_accumulate(loss, out.grads);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (alpha < 0.0 || beta < 0.0)
    throw ConfigError("train: loss weights must be non-negative");
  if (learning_rate < 0.0)
    throw ConfigError("train: learning rate must be non-negative");
  if (negatives_k < 1) throw ConfigError("train: negatives_k must be >= 1");
  if (max_title_len < 1 || max_history_len < 1)
    throw ConfigError("train: sequence caps must be >= 1");
  if (embedding_dim == 0 || heads == 0 || embedding_dim % heads != 0)
    throw ConfigError("train: embedding_dim must divide into heads");
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const EpochStats& e = epochs[i];
    rows.push_back({{"epoch", i + 1},
                    {"loss_total", e.loss_total},
                    {"loss_align", e.loss_align},
                    {"loss_source", e.loss_source},
                    {"loss_target", e.loss_target},
                    {"valid", e.valid.to_json()}});
  }
  return {{"epochs", rows},
          {"best_epoch", best_epoch},
          {"checkpoint", checkpoint_path},
          {"zero_shot", zero_shot}};
}

TrainResult train(const Dataset& dataset,
                  const std::vector<AugmentedNewsSet>& augmented,
                  const Vocabulary& vocab, const TrainConfig& cfg,
                  const std::string& out_dir, const std::string& config_echo,
                  const EpochCallback& on_epoch) {
  cfg.validate();

  bool source_has_train = false;
  for (const Impression& imp : dataset.source.impressions)
    if (imp.split == Split::kTrain) source_has_train = true;
  if (!source_has_train)
    throw ConfigError("train: empty source training set; the method requires "
                      "a source domain");
  if (cfg.needs_augmented_sets() &&
      augmented.size() != dataset.source.news.size())
    throw ConfigError("train: augmented sets do not align with source news");

  ModelConfig mcfg;
  mcfg.vocab_size = vocab.size();
  mcfg.embedding_dim = cfg.embedding_dim;
  mcfg.heads = cfg.heads;
  mcfg.attn_hidden = cfg.attn_hidden;
  mcfg.align_classes = cfg.use_news_align ? dataset.source.news.size() : 0;
  mcfg.user_self_attention = cfg.user_self_attention;
  mcfg.dropout = cfg.dropout;
  ModelParams params = ModelParams::init(mcfg, cfg.seed);

  // With beta = 0 and both alignment and masking off, source samples
  // cannot influence the parameters, and training reduces exactly to
  // single-domain training on the target data (the "only target data"
  // baseline). Excluding them up front makes the reduction literal.
  const bool nrms_only_mode =
      cfg.beta == 0.0 && !cfg.use_news_align && !cfg.use_random_mask;

  Rng rng_src = child_rng(cfg.seed, "negatives/source");
  Rng rng_tgt = child_rng(cfg.seed, "negatives/target");
  std::vector<TrainingSample> src_samples =
      nrms_only_mode
          ? std::vector<TrainingSample>{}
          : build_samples(dataset.source, cfg.negatives_k, rng_src);
  std::vector<TrainingSample> tgt_samples =
      build_samples(dataset.target, cfg.negatives_k, rng_tgt);

  const bool zero_shot = tgt_samples.empty();

  std::vector<const TrainingSample*> pool;
  pool.reserve(src_samples.size() + tgt_samples.size());
  for (const auto& s : src_samples) pool.push_back(&s);
  for (const auto& s : tgt_samples) pool.push_back(&s);
  if (pool.empty())
    throw ConfigError("train: no training samples after negative sampling");

  const std::size_t n_src_classes = dataset.source.news.size();
  const std::vector<double>* mask_weights =
      cfg.mask_weights.empty() ? nullptr : &cfg.mask_weights;

  Rng rng_shuffle = child_rng(cfg.seed, "batch_shuffle");
  Rng rng_mask = child_rng(cfg.seed, "random_mask");
  Rng rng_align = child_rng(cfg.seed, "align_sample");

  // Full-corpus alignment alternative: cycle a reshuffled index queue.
  std::vector<std::size_t> align_queue;
  auto refill_align_queue = [&]() {
    align_queue.resize(n_src_classes);
    for (std::size_t i = 0; i < n_src_classes; ++i) align_queue[i] = i;
    std::shuffle(align_queue.begin(), align_queue.end(), rng_align);
  };

  auto resolve_tokens = [&](const Corpus& corpus, bool masked,
                            const std::string& news_id)
      -> const std::vector<int>* {
    auto it = corpus.news_by_id.find(news_id);
    if (it == corpus.news_by_id.end()) return nullptr;
    if (masked)
      return &random_mask(augmented[it->second], rng_mask, mask_weights);
    const std::vector<int>& toks = corpus.news[it->second].tokens;
    return toks.empty() ? &kUnkTokens : &toks;
  };

  AdamState adam = AdamState::init(
      const_cast<const ModelParams&>(params).tensor_ptrs());
  EvaluateOptions eval_opt;
  eval_opt.max_title_len = cfg.max_title_len;
  eval_opt.max_history_len = cfg.max_history_len;
  eval_opt.jobs = cfg.jobs;

  TrainReport report;
  report.zero_shot = zero_shot;
  ModelParams best_params = params;
  double best_auc = -1.0;
  bool any_valid = false;
  std::size_t global_step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(pool.begin(), pool.end(), rng_shuffle);

    double ep_src_sum = 0, ep_tgt_sum = 0, ep_align_sum = 0;
    std::size_t ep_src_n = 0, ep_tgt_n = 0, ep_align_n = 0;

    for (std::size_t start = 0; start < pool.size();
         start += cfg.batch_size, ++global_step) {
      const std::size_t end = std::min(start + cfg.batch_size, pool.size());

      // Resolve every stochastic choice on this thread, in a fixed order,
      // so worker count never changes what gets computed.
      std::vector<RecItem> items;
      items.reserve(end - start);
      std::size_t n_src_rows = 0, n_tgt_rows = 0;
      for (std::size_t i = start; i < end; ++i) {
        const TrainingSample& s = *pool[i];
        const Corpus& corpus = dataset.corpus(s.domain);
        const bool masked =
            cfg.use_random_mask && s.domain == Domain::kSource;

        RecItem item;
        item.is_source = s.domain == Domain::kSource;
        const User* user = corpus.find_user(s.user_id);
        if (user != nullptr && !user->history.empty()) {
          const std::size_t take =
              std::min(user->history.size(), cfg.max_history_len);
          for (std::size_t h = user->history.size() - take;
               h < user->history.size(); ++h) {
            const auto* t = resolve_tokens(corpus, masked, user->history[h]);
            if (t != nullptr) item.history.push_back(t);
          }
        }
        const auto* pos = resolve_tokens(corpus, masked, s.positive);
        if (pos == nullptr) continue;
        item.candidates.push_back(pos);
        for (const std::string& n : s.negatives) {
          const auto* t = resolve_tokens(corpus, masked, n);
          if (t != nullptr) item.candidates.push_back(t);
        }
        if (item.candidates.size() < 2) continue;
        (item.is_source ? n_src_rows : n_tgt_rows) += 1;
        items.push_back(std::move(item));
      }

      std::vector<AlignItem> aligns;
      if (cfg.use_news_align && n_src_classes > 0) {
        std::vector<std::size_t> ids;
        if (cfg.align_full_corpus_per_epoch) {
          while (ids.size() < cfg.batch_size) {
            if (align_queue.empty()) refill_align_queue();
            ids.push_back(align_queue.back());
            align_queue.pop_back();
            if (ids.size() >= n_src_classes) break;
          }
        } else {
          std::vector<std::size_t> all(n_src_classes);
          for (std::size_t i = 0; i < n_src_classes; ++i) all[i] = i;
          std::sample(all.begin(), all.end(), std::back_inserter(ids),
                      std::min(cfg.batch_size, n_src_classes), rng_align);
        }
        for (std::size_t id : ids)
          aligns.push_back(
              {&random_mask(augmented[id], rng_align, mask_weights),
               static_cast<int>(id)});
      }

      const double src_coeff =
          n_src_rows > 0 ? cfg.beta / static_cast<double>(n_src_rows) : 0.0;
      const double tgt_coeff =
          n_tgt_rows > 0 ? 1.0 / static_cast<double>(n_tgt_rows) : 0.0;
      const double align_coeff =
          aligns.empty() ? 0.0 : cfg.alpha / static_cast<double>(aligns.size());

      const std::size_t workers = std::max<std::size_t>(
          1, std::min(cfg.jobs, std::max(items.size(), aligns.size())));
      std::vector<WorkerOut> outs(workers);
      auto share = [](std::size_t n, std::size_t w, std::size_t k) {
        const std::size_t chunk = (n + w - 1) / w;
        return std::pair{std::min(k * chunk, n), std::min((k + 1) * chunk, n)};
      };
      auto run = [&](std::size_t w) {
        const auto [ib, ie] = share(items.size(), workers, w);
        const auto [ab, ae] = share(aligns.size(), workers, w);
        Rng drng;
        Rng* drng_ptr = nullptr;
        if (cfg.dropout > 0.0) {
          drng = child_rng(cfg.seed, "dropout/" + std::to_string(global_step) +
                                         "/" + std::to_string(w));
          drng_ptr = &drng;
        }
        outs[w] = run_worker(params, items, ib, ie, aligns, ab, ae, src_coeff,
                             tgt_coeff, align_coeff, drng_ptr);
      };
      if (workers == 1) {
        run(0);
      } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run, w);
        for (auto& th : threads) th.join();
      }

      // Merge in worker order: deterministic for a fixed worker count.
      std::vector<Tensor> grads = params.zero_grads();
      for (const WorkerOut& o : outs) {
        for (std::size_t i = 0; i < grads.size(); ++i)
          accumulate(grads[i], o.grads[i]);
        ep_src_sum += o.src_sum;
        ep_tgt_sum += o.tgt_sum;
        ep_align_sum += o.align_sum;
        ep_src_n += o.src_n;
        ep_tgt_n += o.tgt_n;
        ep_align_n += o.align_n;
      }
      clip_grad_norm(grads, cfg.grad_clip);
      adam_step(params.tensor_ptrs(), grads, adam, cfg.learning_rate);
    }

    EpochStats stats;
    stats.loss_source = ep_src_n ? ep_src_sum / static_cast<double>(ep_src_n) : 0.0;
    stats.loss_target = ep_tgt_n ? ep_tgt_sum / static_cast<double>(ep_tgt_n) : 0.0;
    stats.loss_align =
        ep_align_n ? ep_align_sum / static_cast<double>(ep_align_n) : 0.0;
    stats.loss_total = total_loss(stats.loss_align, stats.loss_source,
                                  stats.loss_target, cfg.alpha, cfg.beta,
                                  zero_shot);
    stats.valid = eval_valid(params, dataset, eval_opt);
    if (stats.valid.n_impressions > 0) {
      any_valid = true;
      if (stats.valid.auc > best_auc) {
        best_auc = stats.valid.auc;
        best_params = params;
        report.best_epoch = epoch + 1;
      }
    }
    report.epochs.push_back(std::move(stats));
    if (on_epoch) on_epoch(epoch + 1, report.epochs.back());
  }

  TrainResult result;
  result.params = any_valid ? std::move(best_params) : std::move(params);
  if (!any_valid) report.best_epoch = 0;

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const std::string ckpt = (fs::path(out_dir) / "checkpoint.bin").string();
    save_checkpoint(ckpt, result.params, vocab.hash(), config_echo);
    report.checkpoint_path = ckpt;
    std::ofstream log(fs::path(out_dir) / "run-log.json", std::ios::trunc);
    log << report.to_json().dump(2) << '\n';
  }

  result.report = std::move(report);
  return result;
}

}  // namespace xlrec
