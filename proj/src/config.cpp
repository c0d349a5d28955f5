#include "xlrec/config.hpp"

#include <fstream>

#include "xlrec/errors.hpp"

namespace xlrec {

using nlohmann::json;

namespace {

TranslatorSpec::Kind translator_kind(const std::string& s) {
  if (s == "identity") return TranslatorSpec::Kind::kIdentity;
  if (s == "lexicon") return TranslatorSpec::Kind::kLexicon;
  if (s == "external") return TranslatorSpec::Kind::kExternal;
  throw ConfigError("unknown translator kind: " + s);
}

const char* translator_kind_name(TranslatorSpec::Kind k) {
  switch (k) {
    case TranslatorSpec::Kind::kIdentity: return "identity";
    case TranslatorSpec::Kind::kLexicon: return "lexicon";
    default: return "external";
  }
}

EmbeddingProviderSpec::Kind provider_kind(const std::string& s) {
  if (s == "hash" || s == "hash-fallback")
    return EmbeddingProviderSpec::Kind::kHashFallback;
  if (s == "file") return EmbeddingProviderSpec::Kind::kFile;
  throw ConfigError("unknown embedding provider kind: " + s);
}

}  // namespace

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("bad config json in " + path + ": " + e.what());
  }
  return from_json(j);
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  try {
    cfg.data_dir = j.value("data_dir", std::string());
    cfg.out_dir = j.value("out_dir", std::string());
    cfg.few_shot_n = j.value("few_shot_n", -1L);
    cfg.tokenizer = j.value("tokenizer", std::string("whitespace"));
    cfg.merges_path = j.value("merges", std::string());
    cfg.embeddings_path = j.value("embeddings", std::string());
    cfg.augmented_cache = j.value("augmented_cache", std::string());

    if (j.contains("translator")) {
      const json& t = j["translator"];
      cfg.translator.kind = translator_kind(t.value("kind", "identity"));
      cfg.translator.lexicon_path = t.value("lexicon", std::string());
      cfg.translator.endpoint = t.value("endpoint", std::string());
      cfg.translator.cache_path = t.value("cache", std::string());
    }
    if (j.contains("embedding_provider")) {
      const json& p = j["embedding_provider"];
      cfg.provider.kind = provider_kind(p.value("kind", "hash"));
      cfg.provider.dim = p.value("dim", std::size_t{32});
      cfg.provider.path = p.value("path", std::string());
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      TrainConfig& c = cfg.train;
      c.epochs = t.value("epochs", c.epochs);
      c.batch_size = t.value("batch_size", c.batch_size);
      c.embedding_dim = t.value("embedding_dim", c.embedding_dim);
      c.heads = t.value("heads", c.heads);
      c.attn_hidden = t.value("attn_hidden", c.attn_hidden);
      c.learning_rate = t.value("learning_rate", c.learning_rate);
      c.alpha = t.value("alpha", c.alpha);
      c.beta = t.value("beta", c.beta);
      c.negatives_k = t.value("negatives_k", c.negatives_k);
      c.use_target_news = t.value("use_target_news", c.use_target_news);
      c.use_news_align = t.value("use_news_align", c.use_news_align);
      c.use_random_mask = t.value("use_random_mask", c.use_random_mask);
      c.max_title_len = t.value("max_title_len", c.max_title_len);
      c.max_history_len = t.value("max_history_len", c.max_history_len);
      c.dropout = t.value("dropout", c.dropout);
      c.user_self_attention =
          t.value("user_self_attention", c.user_self_attention);
      c.align_full_corpus_per_epoch =
          t.value("align_full_corpus_per_epoch", c.align_full_corpus_per_epoch);
      c.grad_clip = t.value("grad_clip", c.grad_clip);
      c.mask_weights = t.value("mask_weights", c.mask_weights);
    }
    cfg.train.seed = j.value("seed", cfg.train.seed);
    cfg.train.jobs = j.value("jobs", cfg.train.jobs);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return cfg;
}

json RunConfig::to_json() const {
  json t{{"epochs", train.epochs},
         {"batch_size", train.batch_size},
         {"embedding_dim", train.embedding_dim},
         {"heads", train.heads},
         {"attn_hidden", train.attn_hidden},
         {"learning_rate", train.learning_rate},
         {"alpha", train.alpha},
         {"beta", train.beta},
         {"negatives_k", train.negatives_k},
         {"use_target_news", train.use_target_news},
         {"use_news_align", train.use_news_align},
         {"use_random_mask", train.use_random_mask},
         {"max_title_len", train.max_title_len},
         {"max_history_len", train.max_history_len},
         {"dropout", train.dropout},
         {"user_self_attention", train.user_self_attention},
         {"align_full_corpus_per_epoch", train.align_full_corpus_per_epoch},
         {"grad_clip", train.grad_clip}};
  if (!train.mask_weights.empty()) t["mask_weights"] = train.mask_weights;

  json pj{{"kind", provider.kind == EmbeddingProviderSpec::Kind::kFile
                       ? "file"
                       : "hash"},
          {"dim", provider.dim}};
  if (!provider.path.empty()) pj["path"] = provider.path;

  json tj{{"kind", translator_kind_name(translator.kind)}};
  if (!translator.lexicon_path.empty()) tj["lexicon"] = translator.lexicon_path;
  if (!translator.endpoint.empty()) tj["endpoint"] = translator.endpoint;
  if (!translator.cache_path.empty()) tj["cache"] = translator.cache_path;

  json j{{"data_dir", data_dir},
         {"out_dir", out_dir},
         {"few_shot_n", few_shot_n},
         {"seed", train.seed},
         {"jobs", train.jobs},
         {"tokenizer", tokenizer},
         {"translator", tj},
         {"embedding_provider", pj},
         {"train", t}};
  if (!merges_path.empty()) j["merges"] = merges_path;
  if (!embeddings_path.empty()) j["embeddings"] = embeddings_path;
  if (!augmented_cache.empty()) j["augmented_cache"] = augmented_cache;
  return j;
}

Pipeline build_pipeline(const RunConfig& cfg, bool need_augmented) {
  if (cfg.data_dir.empty()) throw ConfigError("config: data_dir is required");

  Pipeline p;
  p.dataset = load_canonical(cfg.data_dir);

  if (cfg.tokenizer == "bpe") {
    if (cfg.merges_path.empty())
      throw ConfigError("config: bpe tokenizer needs a merges file");
    p.tokenizer.kind = Tokenizer::Kind::kBpe;
    p.tokenizer.merges = BpeMerges::load(cfg.merges_path);
  } else if (cfg.tokenizer != "whitespace") {
    throw ConfigError("config: unknown tokenizer " + cfg.tokenizer);
  }

  // The vocabulary spans source titles, their translations and target
  // titles, so one shared encoder covers both languages.
  Translator translator = Translator::make(cfg.translator);
  std::vector<std::string> source_titles;
  source_titles.reserve(p.dataset.source.news.size());
  for (const News& n : p.dataset.source.news) source_titles.push_back(n.title);
  const auto translated = translator.translate_batch(source_titles);

  p.vocab.embedding_dim = cfg.train.embedding_dim;
  auto absorb = [&](const std::string& title) {
    for (const std::string& tok : p.tokenizer.tokenize(title)) p.vocab.add(tok);
  };
  for (const News& n : p.dataset.source.news) absorb(n.title);
  for (const std::string& t : translated) absorb(t);
  for (const News& n : p.dataset.target.news) absorb(n.title);

  for (Corpus* c : {&p.dataset.source, &p.dataset.target})
    for (News& n : c->news)
      n.tokens = p.vocab.lookup(p.tokenizer.tokenize(n.title),
                                cfg.train.max_title_len);

  {
    Rng rng = child_rng(cfg.train.seed, "few_shot");
    apply_few_shot(p.dataset, cfg.few_shot_n, rng);
  }

  if (need_augmented && cfg.train.needs_augmented_sets()) {
    const std::uint64_t vh = p.vocab.hash();
    bool loaded = false;
    if (!cfg.augmented_cache.empty())
      loaded = load_augmented_sets(cfg.augmented_cache, vh,
                                   cfg.train.use_target_news, p.augmented) &&
               p.augmented.size() == p.dataset.source.news.size();
    if (!loaded) {
      EmbeddingProvider provider = EmbeddingProvider::make(cfg.provider);
      p.augmented = build_all_augmented_sets(
          p.dataset.source, p.dataset.target.news, translator, provider,
          p.tokenizer, p.vocab, cfg.train.max_title_len,
          cfg.train.use_target_news, cfg.train.jobs);
      if (!cfg.augmented_cache.empty())
        save_augmented_sets(cfg.augmented_cache, p.augmented, vh,
                            cfg.train.use_target_news);
    }
  }
  return p;
}

}  // namespace xlrec
