#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xlrec/autodiff.hpp"
#include "xlrec/rng.hpp"
#include "xlrec/tensor.hpp"

namespace xlrec {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 300;
  std::size_t heads = 6;
  std::size_t attn_hidden = 200;   // additive-attention hidden width
  std::size_t align_classes = 0;   // |D^s|; 0 disables the alignment head
  bool user_self_attention = false;  // extra self-attention over history
  double dropout = 0.0;

  std::size_t head_dim() const;  // embedding_dim / heads; ConfigError otherwise
};

// Every learnable tensor of the shared network. Tensor order in
// named_tensors() is the canonical slot order used by gradients, Adam
// state and checkpoints.
struct ModelParams {
  ModelConfig cfg;

  Tensor embedding;                          // |V| x E
  std::vector<Tensor> news_q, news_k, news_v;  // per head, E x head_dim
  Tensor news_pool_proj;                     // E x attn_hidden
  Tensor news_pool_query;                    // attn_hidden x 1
  std::vector<Tensor> user_q, user_k, user_v;  // only when user_self_attention
  Tensor user_pool_proj;                     // E x attn_hidden
  Tensor user_pool_query;                    // attn_hidden x 1
  Tensor align_w;                            // E x align_classes (when enabled)
  Tensor align_b;                            // 1 x align_classes

  // Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights, zero biases.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
  std::vector<Tensor*> tensor_ptrs();
  std::vector<const Tensor*> tensor_ptrs() const;
  std::vector<Tensor> zero_grads() const;
  bool all_finite() const;
};

// Parameter handles registered on one graph, slot-aligned with
// named_tensors().
struct ParamVars {
  Var embedding;
  std::vector<Var> news_q, news_k, news_v;
  Var news_pool_proj, news_pool_query;
  std::vector<Var> user_q, user_k, user_v;
  Var user_pool_proj, user_pool_query;
  Var align_w, align_b;
};

ParamVars register_params(Graph& g, const ModelParams& p);

// Title -> 1 x E news representation: embedding lookup, multi-head
// self-attention, additive-attention pooling. No positional encoding, so
// the output is invariant to token order. Empty token list is a
// ContractError (callers substitute a single UNK).
// dropout_rng enables dropout masks when cfg.dropout > 0.
Var encode_news(Graph& g, const ParamVars& pv, const ModelConfig& cfg,
                const std::vector<int>& tokens, Rng* dropout_rng = nullptr);

// History of news representations -> 1 x E user representation via
// additive-attention pooling (optionally preceded by self-attention over
// the history). Empty history is a ContractError (callers substitute the
// zero-history sentinel).
Var encode_user(Graph& g, const ParamVars& pv, const ModelConfig& cfg,
                const std::vector<Var>& history, Rng* dropout_rng = nullptr);

// Unnormalized click score r_ud = e_u . e_d (1x1).
Var score(Graph& g, Var e_u, Var e_d);

// One logit per source news class. ContractError when the alignment head
// is not configured.
Var align_logits(Graph& g, const ParamVars& pv, const ModelConfig& cfg,
                 Var e_d);

// Inference conveniences (no gradients kept).
Tensor encode_news_value(const ModelParams& p, const std::vector<int>& tokens);
Tensor encode_user_value(const ModelParams& p,
                         const std::vector<Tensor>& history);
double score_value(const Tensor& e_u, const Tensor& e_d);

}  // namespace xlrec
