#include "xlrec/synthetic.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "xlrec/errors.hpp"

namespace xlrec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string word_name(Domain d, std::size_t topic, std::size_t i) {
  const char* lang = d == Domain::kSource ? "alang" : "blang";
  return std::string(lang) + "_t" + std::to_string(topic) + "_w" +
         std::to_string(i);
}

std::string make_title(const std::vector<std::string>& words,
                       std::size_t title_len, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  std::string title;
  for (std::size_t i = 0; i < title_len; ++i) {
    if (i) title += ' ';
    title += words[pick(rng)];
  }
  return title;
}

}  // namespace

SyntheticOutput generate_synthetic_bilingual(const SyntheticConfig& cfg,
                                             Rng& rng) {
  if (cfg.topics < 2) throw ConfigError("synthetic: need at least 2 topics");
  if (cfg.words_per_topic < 2 || cfg.title_len < 1)
    throw ConfigError("synthetic: degenerate wordlist or title length");
  if (cfg.positives_per_impression >= cfg.candidates_per_impression)
    throw ConfigError("synthetic: impressions need negative candidates");
  if (cfg.held_out_patterns >= cfg.topics)
    throw ConfigError("synthetic: cannot hold out every pattern");
  if (cfg.plm_dim < cfg.topics)
    throw ConfigError("synthetic: plm_dim must be >= topics");

  SyntheticOutput out;
  const std::size_t T = cfg.topics;

  // Wordlists, lexicon (partial, by design) and provider vectors.
  out.source_words.resize(T);
  out.target_words.resize(T);
  std::normal_distribution<double> jitter(0.0, 0.02);
  const auto translatable = static_cast<std::size_t>(
      cfg.lexicon_coverage * static_cast<double>(cfg.words_per_topic));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < cfg.words_per_topic; ++i) {
      const std::string sw = word_name(Domain::kSource, t, i);
      const std::string tw = word_name(Domain::kTarget, t, i);
      out.source_words[t].push_back(sw);
      out.target_words[t].push_back(tw);
      if (i < translatable) out.lexicon.emplace_back(sw, tw);
      for (const std::string& w : {sw, tw}) {
        std::vector<double> v(cfg.plm_dim, 0.0);
        v[t] = 1.0;
        for (double& x : v) x += jitter(rng);
        out.plm_vectors.emplace_back(w, std::move(v));
      }
    }
  }

  // News: topics round-robin so every topic is equally represented.
  auto make_news = [&](Domain d, std::size_t count, const char* prefix) {
    Corpus& c = out.dataset.corpus(d);
    const auto& words =
        d == Domain::kSource ? out.source_words : out.target_words;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t t = i % T;
      News n;
      n.id = prefix + std::to_string(i);
      n.domain = d;
      n.title = make_title(words[t], cfg.title_len, rng);
      n.category = "topic" + std::to_string(t);
      out.news_topic[std::string(to_string(d)) + ":" + n.id] = t;
      c.news.push_back(std::move(n));
    }
  };
  make_news(Domain::kSource, cfg.source_news, "s_n");
  make_news(Domain::kTarget, cfg.target_news, "t_n");

  // Preference patterns: each likes two topics; the stride varies so the
  // patterns differ. The last held_out_patterns are absent from target
  // training users and reachable only through the source domain.
  for (std::size_t p = 0; p < T; ++p) {
    const std::size_t stride = 1 + p % (T - 1);
    out.pattern_topics.push_back({p, (p + stride) % T});
  }
  out.held_out_from = T - cfg.held_out_patterns;

  std::vector<std::vector<std::size_t>> news_of_topic_src(T), news_of_topic_tgt(T);
  for (std::size_t i = 0; i < out.dataset.source.news.size(); ++i)
    news_of_topic_src[i % T].push_back(i);
  for (std::size_t i = 0; i < out.dataset.target.news.size(); ++i)
    news_of_topic_tgt[i % T].push_back(i);

  auto make_user = [&](Domain d, const std::string& uid, std::size_t pattern,
                       Split split, bool with_valid) {
    Corpus& c = out.dataset.corpus(d);
    const auto& by_topic =
        d == Domain::kSource ? news_of_topic_src : news_of_topic_tgt;
    const auto& liked = out.pattern_topics[pattern];

    User u;
    u.id = uid;
    u.domain = d;
    std::uniform_int_distribution<std::size_t> pick_liked(0, liked.size() - 1);
    for (std::size_t i = 0; i < cfg.history_len; ++i) {
      const auto& pool = by_topic[liked[pick_liked(rng)]];
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      u.history.push_back(c.news[pool[pick(rng)]].id);
    }

    std::unordered_set<std::size_t> liked_set(liked.begin(), liked.end());
    std::vector<std::size_t> disliked;
    for (std::size_t t = 0; t < T; ++t)
      if (!liked_set.count(t)) disliked.push_back(t);

    const std::size_t n_impressions =
        cfg.impressions_per_user + (with_valid ? 1 : 0);
    for (std::size_t k = 0; k < n_impressions; ++k) {
      Impression imp;
      imp.impression_id = uid + "#" + std::to_string(k);
      imp.user_id = uid;
      imp.domain = d;
      imp.split = (with_valid && k == n_impressions - 1) ? Split::kValid : split;
      for (std::size_t i = 0; i < cfg.candidates_per_impression; ++i) {
        const bool positive = i < cfg.positives_per_impression;
        std::size_t topic;
        if (positive) {
          topic = liked[pick_liked(rng)];
        } else {
          std::uniform_int_distribution<std::size_t> pick(0, disliked.size() - 1);
          topic = disliked[pick(rng)];
        }
        const auto& pool = by_topic[topic];
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        imp.candidates.push_back(c.news[pool[pick(rng)]].id);
        imp.labels.push_back(positive ? 1 : 0);
      }
      // Candidate order must not leak the label.
      std::vector<std::size_t> perm(imp.candidates.size());
      for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
      std::shuffle(perm.begin(), perm.end(), rng);
      Impression shuffled = imp;
      for (std::size_t i = 0; i < perm.size(); ++i) {
        shuffled.candidates[i] = imp.candidates[perm[i]];
        shuffled.labels[i] = imp.labels[perm[i]];
      }
      c.impressions.push_back(std::move(shuffled));
    }
    c.users.push_back(std::move(u));
  };

  // Source users draw from every pattern, including the held-out ones.
  std::uniform_int_distribution<std::size_t> any_pattern(0, T - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < cfg.source_users; ++i)
    make_user(Domain::kSource, "s_u" + std::to_string(i), any_pattern(rng),
              Split::kTrain, unit(rng) < cfg.source_valid_fraction);

  // Target training pool: only non-held-out patterns.
  std::uniform_int_distribution<std::size_t> trainable_pattern(
      0, out.held_out_from - 1);
  for (std::size_t i = 0; i < cfg.target_train_users; ++i)
    make_user(Domain::kTarget, "t_u" + std::to_string(i),
              trainable_pattern(rng), Split::kTrain, false);

  // Target test users: every pattern, so held-out patterns appear only in
  // source training and target test.
  for (std::size_t i = 0; i < cfg.target_test_users; ++i)
    make_user(Domain::kTarget,
              "t_u" + std::to_string(cfg.target_train_users + i),
              any_pattern(rng), Split::kTest, false);

  out.dataset.source.reindex();
  out.dataset.target.reindex();
  return out;
}

void write_synthetic(const std::string& dir, const SyntheticOutput& out) {
  fs::create_directories(dir);
  write_canonical(dir, out.dataset);

  std::ofstream lex(fs::path(dir) / "lexicon.tsv", std::ios::trunc);
  for (const auto& [src, tgt] : out.lexicon) lex << src << '\t' << tgt << '\n';

  std::ofstream plm(fs::path(dir) / "plm_embeddings.txt", std::ios::trunc);
  plm.precision(17);
  for (const auto& [word, vec] : out.plm_vectors) {
    plm << word;
    for (double v : vec) plm << ' ' << v;
    plm << '\n';
  }

  json meta;
  meta["held_out_from"] = out.held_out_from;
  meta["pattern_topics"] = out.pattern_topics;
  meta["source_words"] = out.source_words;
  meta["target_words"] = out.target_words;
  std::ofstream mf(fs::path(dir) / "meta.json", std::ios::trunc);
  mf << meta.dump(2) << '\n';
}

}  // namespace xlrec
