#include "xlrec/augment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "xlrec/errors.hpp"

namespace xlrec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string title_key(const std::string& title) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(title)));
  return buf;
}

// Split endpoint "http://host:port/path" for httplib.
void split_endpoint(const std::string& endpoint, std::string& base,
                    std::string& path) {
  std::size_t scheme = endpoint.find("://");
  std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  std::size_t slash = endpoint.find('/', host_start);
  if (slash == std::string::npos) {
    base = endpoint;
    path = "/translate";
  } else {
    base = endpoint.substr(0, slash);
    path = endpoint.substr(slash);
  }
}

}  // namespace

Translator Translator::make(const TranslatorSpec& spec) {
  Translator t;
  t.spec_ = spec;
  if (spec.kind == TranslatorSpec::Kind::kLexicon) {
    std::ifstream in(spec.lexicon_path);
    if (!in)
      throw ConfigError("lexicon file missing: " + spec.lexicon_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const std::size_t tab = line.find('\t');
      if (tab == std::string::npos || tab == 0)
        throw ParseError("lexicon line must be source<TAB>target", line_no);
      t.lexicon_[line.substr(0, tab)] = line.substr(tab + 1);
    }
  } else if (spec.kind == TranslatorSpec::Kind::kExternal) {
    if (spec.endpoint.empty())
      throw ConfigError("external translator needs an endpoint");
    if (!spec.cache_path.empty() && fs::exists(spec.cache_path)) {
      std::ifstream in(spec.cache_path);
      try {
        json j = json::parse(in);
        for (auto& [k, v] : j.items()) t.cache_[k] = v.get<std::string>();
      } catch (const json::exception&) {
        // Unreadable cache is discarded and rebuilt.
        t.cache_.clear();
      }
    }
  }
  return t;
}

std::string Translator::translate(const std::string& title) const {
  return translate_batch({title})[0];
}

std::vector<std::string> Translator::translate_batch(
    const std::vector<std::string>& titles) const {
  std::vector<std::string> out(titles.size());
  switch (spec_.kind) {
    case TranslatorSpec::Kind::kIdentity:
      out = titles;
      break;
    case TranslatorSpec::Kind::kLexicon:
      for (std::size_t i = 0; i < titles.size(); ++i) {
        std::istringstream in(titles[i]);
        std::string word, translated;
        bool first = true;
        while (in >> word) {
          auto it = lexicon_.find(word);
          if (!first) translated += ' ';
          translated += it == lexicon_.end() ? word : it->second;
          first = false;
        }
        out[i] = translated;
      }
      break;
    case TranslatorSpec::Kind::kExternal: {
      std::vector<std::size_t> missing;
      std::vector<std::string> batch;
      for (std::size_t i = 0; i < titles.size(); ++i) {
        auto it = cache_.find(title_key(titles[i]));
        if (it != cache_.end()) {
          out[i] = it->second;
        } else {
          missing.push_back(i);
          batch.push_back(titles[i]);
        }
      }
      if (!batch.empty()) {
        const auto fetched = fetch_remote(batch);
        for (std::size_t i = 0; i < missing.size(); ++i) {
          out[missing[i]] = fetched[i];
          cache_[title_key(batch[i])] = fetched[i];
        }
        persist_cache();
      }
      break;
    }
  }
  return out;
}

std::vector<std::string> Translator::fetch_remote(
    const std::vector<std::string>& titles) const {
  std::string base, path;
  split_endpoint(spec_.endpoint, base, path);
  httplib::Client client(base);
  client.set_connection_timeout(5, 0);
  client.set_read_timeout(30, 0);

  const std::string body = json{{"titles", titles}}.dump();
  auto res = client.Post(path, body, "application/json");
  if (!res || res->status != 200)
    throw TransportError("translation endpoint unreachable: " + spec_.endpoint,
                         titles);
  try {
    json j = json::parse(res->body);
    auto translations = j.at("translations").get<std::vector<std::string>>();
    if (translations.size() != titles.size())
      throw TransportError("translation endpoint returned " +
                               std::to_string(translations.size()) +
                               " items for " + std::to_string(titles.size()),
                           titles);
    return translations;
  } catch (const json::exception& e) {
    throw TransportError(std::string("bad translation response: ") + e.what(),
                         titles);
  }
}

void Translator::persist_cache() const {
  if (spec_.cache_path.empty()) return;
  json j = json::object();
  for (const auto& [k, v] : cache_) j[k] = v;
  const std::string tmp = spec_.cache_path + ".tmp";
  std::ofstream out(tmp, std::ios::trunc);
  out << j.dump();
  out.close();
  fs::rename(tmp, spec_.cache_path);
}

EmbeddingProvider EmbeddingProvider::make(const EmbeddingProviderSpec& spec) {
  EmbeddingProvider p;
  p.spec_ = spec;
  if (spec.dim == 0) throw ConfigError("embedding provider dim must be > 0");
  if (spec.kind == EmbeddingProviderSpec::Kind::kFile) {
    std::ifstream in(spec.path);
    if (!in) throw ConfigError("provider embeddings file missing: " + spec.path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string token;
      ls >> token;
      std::vector<double> v;
      double x;
      while (ls >> x) v.push_back(x);
      if (v.size() != spec.dim)
        throw ParseError("provider vector has " + std::to_string(v.size()) +
                             " dims, declared " + std::to_string(spec.dim),
                         line_no);
      p.table_[token] = std::move(v);
    }
  }
  return p;
}

std::vector<double> EmbeddingProvider::embed_title(
    const std::string& title) const {
  const auto tokens = whitespace_tokenize(title);
  std::vector<double> mean(spec_.dim, 0.0);
  if (tokens.empty()) return mean;
  for (const std::string& tok : tokens) {
    if (spec_.kind == EmbeddingProviderSpec::Kind::kFile) {
      auto it = table_.find(tok);
      if (it == table_.end()) continue;  // unknown token: zero contribution
      for (std::size_t i = 0; i < spec_.dim; ++i) mean[i] += it->second[i];
    } else {
      // Deterministic unit vector from the token hash.
      Rng rng(fnv1a64(tok));
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::vector<double> v(spec_.dim);
      double norm = 0.0;
      for (double& x : v) {
        x = gauss(rng);
        norm += x * x;
      }
      norm = std::sqrt(norm);
      for (std::size_t i = 0; i < spec_.dim; ++i) mean[i] += v[i] / norm;
    }
  }
  for (double& x : mean) x /= static_cast<double>(tokens.size());
  return mean;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return -1.0;  // zero vectors never win
  return dot / std::sqrt(na * nb);
}

namespace {

std::size_t most_similar_index(const std::vector<double>& query,
                               const std::vector<std::vector<double>>& embedded,
                               const std::vector<News>& target_news) {
  std::size_t best = 0;
  double best_sim = cosine(query, embedded[0]);
  for (std::size_t i = 1; i < embedded.size(); ++i) {
    const double sim = cosine(query, embedded[i]);
    if (sim > best_sim ||
        (sim == best_sim && target_news[i].id < target_news[best].id)) {
      best_sim = sim;
      best = i;
    }
  }
  return best;
}

}  // namespace

std::size_t find_most_similar(const std::string& title,
                              const std::vector<News>& target_news,
                              const EmbeddingProvider& provider) {
  if (target_news.empty())
    throw ContractError("find_most_similar: empty target news set");
  std::vector<std::vector<double>> embedded;
  embedded.reserve(target_news.size());
  for (const News& n : target_news) embedded.push_back(provider.embed_title(n.title));
  return most_similar_index(provider.embed_title(title), embedded, target_news);
}

AugmentedNewsSet build_augmented_set(const News& d, const Translator& translator,
                                     const EmbeddingProvider& provider,
                                     const std::vector<News>& target_news,
                                     bool use_target_news,
                                     const Tokenizer& tokenizer,
                                     const Vocabulary& vocab,
                                     std::size_t max_title_len) {
  AugmentedNewsSet set;
  set.news_id = d.id;
  auto tokens_of = [&](const std::string& title) {
    auto ids = vocab.lookup(tokenizer.tokenize(title), max_title_len);
    if (ids.empty()) ids.push_back(Vocabulary::kUnk);
    return ids;
  };
  set.forms.push_back(tokens_of(d.title));
  set.forms.push_back(tokens_of(translator.translate(d.title)));
  if (use_target_news) {
    const std::size_t idx = find_most_similar(d.title, target_news, provider);
    set.forms.push_back(tokens_of(target_news[idx].title));
  }
  return set;
}

std::vector<AugmentedNewsSet> build_all_augmented_sets(
    const Corpus& source, const std::vector<News>& target_news,
    const Translator& translator, const EmbeddingProvider& provider,
    const Tokenizer& tokenizer, const Vocabulary& vocab,
    std::size_t max_title_len, bool use_target_news, std::size_t jobs) {
  if (use_target_news && target_news.empty())
    throw ContractError("build_all_augmented_sets: no target news to select from");

  auto tokens_of = [&](const std::string& title) {
    auto ids = vocab.lookup(tokenizer.tokenize(title), max_title_len);
    if (ids.empty()) ids.push_back(Vocabulary::kUnk);
    return ids;
  };

  // One batched translation pass; the external kind caches it on disk.
  std::vector<std::string> titles;
  titles.reserve(source.news.size());
  for (const News& n : source.news) titles.push_back(n.title);
  const auto translated = translator.translate_batch(titles);

  std::vector<std::vector<double>> target_embedded;
  if (use_target_news) {
    target_embedded.reserve(target_news.size());
    for (const News& n : target_news)
      target_embedded.push_back(provider.embed_title(n.title));
  }

  std::vector<AugmentedNewsSet> sets(source.news.size());
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const News& d = source.news[i];
      AugmentedNewsSet& set = sets[i];
      set.news_id = d.id;
      set.forms.push_back(tokens_of(d.title));
      set.forms.push_back(tokens_of(translated[i]));
      if (use_target_news) {
        const std::size_t idx = most_similar_index(
            provider.embed_title(d.title), target_embedded, target_news);
        set.forms.push_back(tokens_of(target_news[idx].title));
      }
    }
  };

  const std::size_t workers =
      std::max<std::size_t>(1, std::min(jobs, source.news.size()));
  if (workers == 1) {
    run(0, source.news.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (source.news.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(begin + chunk, source.news.size());
      if (begin < end) pool.emplace_back(run, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  return sets;
}

void save_augmented_sets(const std::string& path,
                         const std::vector<AugmentedNewsSet>& sets,
                         std::uint64_t vocab_hash, bool use_target_news) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write augmented-set cache: " + path);
  out << json{{"vocab_hash", vocab_hash}, {"use_target_news", use_target_news}}
             .dump()
      << '\n';
  for (const AugmentedNewsSet& s : sets)
    out << json{{"news_id", s.news_id}, {"forms", s.forms}}.dump() << '\n';
}

bool load_augmented_sets(const std::string& path, std::uint64_t vocab_hash,
                         bool use_target_news,
                         std::vector<AugmentedNewsSet>& out) {
  std::ifstream in(path);
  if (!in) return false;
  std::string line;
  if (!std::getline(in, line)) return false;
  try {
    json header = json::parse(line);
    if (header.at("vocab_hash").get<std::uint64_t>() != vocab_hash ||
        header.at("use_target_news").get<bool>() != use_target_news)
      return false;
    std::vector<AugmentedNewsSet> sets;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      AugmentedNewsSet s;
      s.news_id = j.at("news_id").get<std::string>();
      s.forms = j.at("forms").get<std::vector<std::vector<int>>>();
      if (s.forms.empty()) return false;
      sets.push_back(std::move(s));
    }
    out = std::move(sets);
    return true;
  } catch (const json::exception&) {
    return false;
  }
}

const std::vector<int>& random_mask(const AugmentedNewsSet& set, Rng& rng,
                                    const std::vector<double>* weights) {
  if (set.forms.empty()) throw ContractError("random_mask: no forms");
  if (weights != nullptr) {
    if (weights->size() != set.forms.size())
      throw ConfigError("random_mask: weight count does not match forms");
    std::discrete_distribution<std::size_t> pick(weights->begin(),
                                                 weights->end());
    return set.forms[pick(rng)];
  }
  std::uniform_int_distribution<std::size_t> pick(0, set.forms.size() - 1);
  return set.forms[pick(rng)];
}

}  // namespace xlrec
