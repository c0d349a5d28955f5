#include "xlrec/model.hpp"

#include <cmath>
#include <random>

#include "xlrec/errors.hpp"

namespace xlrec {

namespace {

Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in,
                    Rng& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t({rows, cols});
  for (double& x : t.data) x = dist(rng);
  return t;
}

// Inverted-dropout mask; scaling keeps the expectation unchanged.
Var dropout_mask(Graph& g, Var x, double p, Rng* rng) {
  if (p <= 0.0 || rng == nullptr) return x;
  const Tensor& v = g.value(x);
  Tensor mask(v.shape);
  std::bernoulli_distribution keep(1.0 - p);
  for (double& m : mask.data) m = keep(*rng) ? 1.0 / (1.0 - p) : 0.0;
  return g.mul_elem(x, g.input(std::move(mask)));
}

Var self_attention(Graph& g, Var x, const std::vector<Var>& wq,
                   const std::vector<Var>& wk, const std::vector<Var>& wv,
                   std::size_t head_dim) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> heads;
  heads.reserve(wq.size());
  for (std::size_t h = 0; h < wq.size(); ++h) {
    Var q = g.matmul(x, wq[h]);
    Var k = g.matmul(x, wk[h]);
    Var v = g.matmul(x, wv[h]);
    Var att = g.softmax_rows(g.scale(g.matmul(q, g.transpose(k)), inv_sqrt));
    heads.push_back(g.matmul(att, v));
  }
  return g.concat_cols(heads);
}

// score_i = query . tanh(W x_i); weights = softmax(scores); out = sum_i w_i x_i
Var additive_pool(Graph& g, Var x, Var proj, Var query) {
  Var scores = g.matmul(g.tanh(g.matmul(x, proj)), query);  // L x 1
  Var weights = g.softmax_rows(g.transpose(scores));        // 1 x L
  return g.matmul(weights, x);                              // 1 x E
}

}  // namespace

std::size_t ModelConfig::head_dim() const {
  if (heads == 0 || embedding_dim % heads != 0)
    throw ConfigError("embedding_dim " + std::to_string(embedding_dim) +
                      " not divisible by " + std::to_string(heads) + " heads");
  return embedding_dim / heads;
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.vocab_size < 2) throw ConfigError("vocabulary too small for a model");
  const std::size_t hd = cfg.head_dim();
  Rng rng = child_rng(seed, "model_init");

  ModelParams p;
  p.cfg = cfg;
  p.embedding = uniform_init(cfg.vocab_size, cfg.embedding_dim,
                             cfg.embedding_dim, rng);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    p.news_q.push_back(uniform_init(cfg.embedding_dim, hd, cfg.embedding_dim, rng));
    p.news_k.push_back(uniform_init(cfg.embedding_dim, hd, cfg.embedding_dim, rng));
    p.news_v.push_back(uniform_init(cfg.embedding_dim, hd, cfg.embedding_dim, rng));
  }
  p.news_pool_proj =
      uniform_init(cfg.embedding_dim, cfg.attn_hidden, cfg.embedding_dim, rng);
  p.news_pool_query = uniform_init(cfg.attn_hidden, 1, cfg.attn_hidden, rng);
  if (cfg.user_self_attention) {
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      p.user_q.push_back(uniform_init(cfg.embedding_dim, hd, cfg.embedding_dim, rng));
      p.user_k.push_back(uniform_init(cfg.embedding_dim, hd, cfg.embedding_dim, rng));
      p.user_v.push_back(uniform_init(cfg.embedding_dim, hd, cfg.embedding_dim, rng));
    }
  }
  p.user_pool_proj =
      uniform_init(cfg.embedding_dim, cfg.attn_hidden, cfg.embedding_dim, rng);
  p.user_pool_query = uniform_init(cfg.attn_hidden, 1, cfg.attn_hidden, rng);
  if (cfg.align_classes > 0) {
    p.align_w = uniform_init(cfg.embedding_dim, cfg.align_classes,
                             cfg.embedding_dim, rng);
    p.align_b = Tensor({1, cfg.align_classes});  // bias starts at zero
  }
  return p;
}

template <typename Self, typename TensorPtr>
static std::vector<std::pair<std::string, TensorPtr>> named_impl(Self& p) {
  std::vector<std::pair<std::string, TensorPtr>> out;
  out.emplace_back("embedding", &p.embedding);
  for (std::size_t h = 0; h < p.news_q.size(); ++h) {
    const std::string n = std::to_string(h);
    out.emplace_back("news_q" + n, &p.news_q[h]);
    out.emplace_back("news_k" + n, &p.news_k[h]);
    out.emplace_back("news_v" + n, &p.news_v[h]);
  }
  out.emplace_back("news_pool_proj", &p.news_pool_proj);
  out.emplace_back("news_pool_query", &p.news_pool_query);
  for (std::size_t h = 0; h < p.user_q.size(); ++h) {
    const std::string n = std::to_string(h);
    out.emplace_back("user_q" + n, &p.user_q[h]);
    out.emplace_back("user_k" + n, &p.user_k[h]);
    out.emplace_back("user_v" + n, &p.user_v[h]);
  }
  out.emplace_back("user_pool_proj", &p.user_pool_proj);
  out.emplace_back("user_pool_query", &p.user_pool_query);
  if (p.cfg.align_classes > 0) {
    out.emplace_back("align_w", &p.align_w);
    out.emplace_back("align_b", &p.align_b);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_tensors() {
  return named_impl<ModelParams, Tensor*>(*this);
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named_tensors()
    const {
  return named_impl<const ModelParams, const Tensor*>(*this);
}

std::vector<Tensor*> ModelParams::tensor_ptrs() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named_tensors()) out.push_back(t);
  return out;
}

std::vector<const Tensor*> ModelParams::tensor_ptrs() const {
  std::vector<const Tensor*> out;
  for (auto& [name, t] : named_tensors()) out.push_back(t);
  return out;
}

std::vector<Tensor> ModelParams::zero_grads() const {
  std::vector<Tensor> out;
  for (const Tensor* t : tensor_ptrs()) out.push_back(Tensor::zeros_like(*t));
  return out;
}

bool ModelParams::all_finite() const {
  for (const Tensor* t : tensor_ptrs())
    if (!t->all_finite()) return false;
  return true;
}

ParamVars register_params(Graph& g, const ModelParams& p) {
  ParamVars pv;
  int slot = 0;
  auto reg = [&](const Tensor& t) { return g.param(slot++, t); };

  pv.embedding = reg(p.embedding);
  for (std::size_t h = 0; h < p.news_q.size(); ++h) {
    pv.news_q.push_back(reg(p.news_q[h]));
    pv.news_k.push_back(reg(p.news_k[h]));
    pv.news_v.push_back(reg(p.news_v[h]));
  }
  pv.news_pool_proj = reg(p.news_pool_proj);
  pv.news_pool_query = reg(p.news_pool_query);
  for (std::size_t h = 0; h < p.user_q.size(); ++h) {
    pv.user_q.push_back(reg(p.user_q[h]));
    pv.user_k.push_back(reg(p.user_k[h]));
    pv.user_v.push_back(reg(p.user_v[h]));
  }
  pv.user_pool_proj = reg(p.user_pool_proj);
  pv.user_pool_query = reg(p.user_pool_query);
  if (p.cfg.align_classes > 0) {
    pv.align_w = reg(p.align_w);
    pv.align_b = reg(p.align_b);
  }
  return pv;
}

Var encode_news(Graph& g, const ParamVars& pv, const ModelConfig& cfg,
                const std::vector<int>& tokens, Rng* dropout_rng) {
  if (tokens.empty())
    throw ContractError("encode_news: empty token list");
  Var x = g.lookup_rows(pv.embedding, tokens);
  x = dropout_mask(g, x, cfg.dropout, dropout_rng);
  Var attended =
      self_attention(g, x, pv.news_q, pv.news_k, pv.news_v, cfg.head_dim());
  attended = dropout_mask(g, attended, cfg.dropout, dropout_rng);
  return additive_pool(g, attended, pv.news_pool_proj, pv.news_pool_query);
}

Var encode_user(Graph& g, const ParamVars& pv, const ModelConfig& cfg,
                const std::vector<Var>& history, Rng* dropout_rng) {
  if (history.empty())
    throw ContractError("encode_user: empty history");
  Var x = history.size() == 1 ? history[0] : g.concat_rows(history);
  if (cfg.user_self_attention) {
    x = self_attention(g, x, pv.user_q, pv.user_k, pv.user_v, cfg.head_dim());
    x = dropout_mask(g, x, cfg.dropout, dropout_rng);
  }
  return additive_pool(g, x, pv.user_pool_proj, pv.user_pool_query);
}

Var score(Graph& g, Var e_u, Var e_d) {
  const Tensor& u = g.value(e_u);
  const Tensor& d = g.value(e_d);
  if (u.shape != d.shape || u.rows() != 1)
    throw DimensionError("score: expected two 1xE rows, got " + u.shape_str() +
                         " and " + d.shape_str());
  return g.matmul(e_u, g.transpose(e_d));
}

Var align_logits(Graph& g, const ParamVars& pv, const ModelConfig& cfg,
                 Var e_d) {
  if (cfg.align_classes == 0)
    throw ContractError("align_logits: alignment head not configured");
  return g.add_rowvec(g.matmul(e_d, pv.align_w), pv.align_b);
}

Tensor encode_news_value(const ModelParams& p, const std::vector<int>& tokens) {
  Graph g;
  ParamVars pv = register_params(g, p);
  return g.value(encode_news(g, pv, p.cfg, tokens));
}

Tensor encode_user_value(const ModelParams& p,
                         const std::vector<Tensor>& history) {
  Graph g;
  ParamVars pv = register_params(g, p);
  std::vector<Var> h;
  h.reserve(history.size());
  for (const Tensor& t : history) h.push_back(g.input(t));
  return g.value(encode_user(g, pv, p.cfg, h));
}

double score_value(const Tensor& e_u, const Tensor& e_d) {
  if (!e_u.same_shape(e_d))
    throw DimensionError("score: shape mismatch, " + e_u.shape_str() + " vs " +
                         e_d.shape_str());
  double s = 0.0;
  for (std::size_t i = 0; i < e_u.data.size(); ++i)
    s += e_u.data[i] * e_d.data[i];
  return s;
}

}  // namespace xlrec
