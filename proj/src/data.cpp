#include "xlrec/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "xlrec/errors.hpp"

namespace xlrec {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Domain d) {
  return d == Domain::kSource ? "source" : "target";
}

const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    default: return "test";
  }
}

Domain domain_from_string(const std::string& s) {
  if (s == "source") return Domain::kSource;
  if (s == "target") return Domain::kTarget;
  throw ParseError("unknown domain: " + s);
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "valid") return Split::kValid;
  if (s == "test") return Split::kTest;
  throw ParseError("unknown split: " + s);
}

void Corpus::reindex() {
  news_by_id.clear();
  users_by_id.clear();
  for (std::size_t i = 0; i < news.size(); ++i) news_by_id[news[i].id] = i;
  for (std::size_t i = 0; i < users.size(); ++i) users_by_id[users[i].id] = i;
}

const News* Corpus::find_news(const std::string& id) const {
  auto it = news_by_id.find(id);
  return it == news_by_id.end() ? nullptr : &news[it->second];
}

const User* Corpus::find_user(const std::string& id) const {
  auto it = users_by_id.find(id);
  return it == users_by_id.end() ? nullptr : &users[it->second];
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

std::vector<std::string> split_spaces(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

ParsedBehaviors parse_behaviors(const std::string& line,
                                std::size_t line_number) {
  const auto fields = split_tabs(strip_cr(line));
  if (fields.size() != 5)
    throw ParseError("behaviors line has " + std::to_string(fields.size()) +
                         " fields, expected 5",
                     line_number);
  ParsedBehaviors out;
  out.impression_id = fields[0];
  out.user_id = fields[1];
  out.time = fields[2];
  out.history = split_spaces(fields[3]);
  for (const std::string& token : split_spaces(fields[4])) {
    const std::size_t dash = token.rfind('-');
    if (dash == std::string::npos || dash == 0)
      throw ParseError("impression token lacks a label: " + token, line_number);
    const std::string label = token.substr(dash + 1);
    if (label != "0" && label != "1")
      throw ParseError("impression label must be 0 or 1: " + token,
                       line_number);
    out.candidates.push_back(token.substr(0, dash));
    out.labels.push_back(label == "1" ? 1 : 0);
  }
  return out;
}

void ingest_mind_news(const std::string& path, Domain domain, Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open news file: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() < 4)
      throw ParseError("news line has " + std::to_string(f.size()) +
                           " fields, expected at least 4",
                       line_no);
    f.resize(8);  // optional trailing fields
    News n;
    n.id = f[0];
    n.domain = domain;
    n.category = f[1];
    n.subcategory = f[2];
    n.title = f[3];
    n.abstract = f[4];
    n.url = f[5];
    n.title_entities = f[6];
    n.abstract_entities = f[7];
    if (n.title.empty())
      throw ParseError("news " + n.id + " has an empty title", line_no);
    corpus.news.push_back(std::move(n));
  }
  corpus.reindex();
}

void ingest_mind_behaviors(const std::string& path, Domain domain, Split split,
                           Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open behaviors file: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip_cr(line).empty()) continue;
    ParsedBehaviors b = parse_behaviors(line, line_no);
    if (corpus.users_by_id.find(b.user_id) == corpus.users_by_id.end()) {
      User u;
      u.id = b.user_id;
      u.domain = domain;
      u.history = b.history;
      corpus.users_by_id[b.user_id] = corpus.users.size();
      corpus.users.push_back(std::move(u));
    }
    Impression imp;
    imp.impression_id = b.impression_id;
    imp.user_id = b.user_id;
    imp.time = b.time;
    imp.domain = domain;
    imp.split = split;
    imp.candidates = std::move(b.candidates);
    imp.labels = std::move(b.labels);
    if (imp.candidates.empty())
      throw ParseError("impression without candidates", line_no);
    corpus.impressions.push_back(std::move(imp));
  }
}

void write_mind_news(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write news file: " + path);
  for (const News& n : corpus.news)
    out << n.id << '\t' << n.category << '\t' << n.subcategory << '\t'
        << n.title << '\t' << n.abstract << '\t' << n.url << '\t'
        << n.title_entities << '\t' << n.abstract_entities << '\n';
}

void write_mind_behaviors(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write behaviors file: " + path);
  for (const Impression& imp : corpus.impressions) {
    const User* u = corpus.find_user(imp.user_id);
    out << imp.impression_id << '\t' << imp.user_id << '\t' << imp.time << '\t';
    if (u) {
      for (std::size_t i = 0; i < u->history.size(); ++i)
        out << (i ? " " : "") << u->history[i];
    }
    out << '\t';
    for (std::size_t i = 0; i < imp.candidates.size(); ++i)
      out << (i ? " " : "") << imp.candidates[i] << '-' << imp.labels[i];
    out << '\n';
  }
}

void ingest_adressa_events(const std::string& path, Domain domain,
                           const AdressaOptions& opt, Rng& rng,
                           Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open events file: " + path);

  struct Event {
    std::string user, news, title, time;
  };
  std::vector<Event> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad event json: ") + e.what(), line_no);
    }
    Event e;
    if (j.contains("userId")) e.user = j["userId"].get<std::string>();
    else if (j.contains("uid")) e.user = j["uid"].get<std::string>();
    else throw ParseError("event lacks a user id", line_no);
    if (!j.contains("id")) throw ParseError("event lacks a news id", line_no);
    e.news = j["id"].get<std::string>();
    e.title = j.value("title", std::string());
    if (j.contains("time")) {
      if (j["time"].is_string()) e.time = j["time"].get<std::string>();
      else e.time = j["time"].dump();
    }
    events.push_back(std::move(e));
  }

  // Register news on first sight; titles may repeat across events.
  for (const Event& e : events) {
    if (corpus.news_by_id.count(e.news)) continue;
    News n;
    n.id = e.news;
    n.domain = domain;
    n.title = e.title.empty() ? e.news : e.title;
    corpus.news_by_id[n.id] = corpus.news.size();
    corpus.news.push_back(std::move(n));
  }

  // Group per user, keeping the stream's time order (stable sort on the
  // time string keeps equal timestamps in file order).
  std::vector<std::string> user_order;
  std::unordered_map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < events.size(); ++i) {
    auto [it, inserted] = by_user.try_emplace(events[i].user);
    if (inserted) user_order.push_back(events[i].user);
    it->second.push_back(i);
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const std::string& uid : user_order) {
    auto idx = by_user[uid];
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return events[a].time < events[b].time;
    });
    const std::size_t clicks =
        std::min(opt.impression_clicks,
                 idx.size() > 1 ? idx.size() - 1 : std::size_t{0});
    User u;
    u.id = uid;
    u.domain = domain;
    for (std::size_t i = 0; i + clicks < idx.size(); ++i)
      u.history.push_back(events[idx[i]].news);

    std::unordered_set<std::string> clicked(u.history.begin(), u.history.end());
    for (std::size_t i = idx.size() - clicks; i < idx.size(); ++i)
      clicked.insert(events[idx[i]].news);

    const Split split =
        unit(rng) < opt.valid_fraction ? Split::kValid : opt.split;
    for (std::size_t i = idx.size() - clicks; i < idx.size(); ++i) {
      Impression imp;
      imp.impression_id = uid + "#" + std::to_string(i - (idx.size() - clicks));
      imp.user_id = uid;
      imp.time = events[idx[i]].time;
      imp.domain = domain;
      imp.split = split;
      imp.candidates.push_back(events[idx[i]].news);
      imp.labels.push_back(1);
      // Negatives: unread news sampled without replacement.
      std::vector<std::size_t> pool;
      for (std::size_t n = 0; n < corpus.news.size(); ++n)
        if (!clicked.count(corpus.news[n].id)) pool.push_back(n);
      std::shuffle(pool.begin(), pool.end(), rng);
      for (std::size_t n = 0; n < std::min(opt.negatives, pool.size()); ++n) {
        imp.candidates.push_back(corpus.news[pool[n]].id);
        imp.labels.push_back(0);
      }
      corpus.impressions.push_back(std::move(imp));
    }
    corpus.users_by_id[uid] = corpus.users.size();
    corpus.users.push_back(std::move(u));
  }
}

namespace {

json news_to_json(const News& n) {
  json j{{"id", n.id}, {"domain", to_string(n.domain)}, {"title", n.title}};
  if (!n.category.empty()) j["category"] = n.category;
  if (!n.subcategory.empty()) j["subcategory"] = n.subcategory;
  if (!n.abstract.empty()) j["abstract"] = n.abstract;
  if (!n.url.empty()) j["url"] = n.url;
  if (!n.title_entities.empty()) j["title_entities"] = n.title_entities;
  if (!n.abstract_entities.empty()) j["abstract_entities"] = n.abstract_entities;
  return j;
}

News news_from_json(const json& j) {
  News n;
  n.id = j.at("id").get<std::string>();
  n.domain = domain_from_string(j.at("domain").get<std::string>());
  n.title = j.at("title").get<std::string>();
  n.category = j.value("category", std::string());
  n.subcategory = j.value("subcategory", std::string());
  n.abstract = j.value("abstract", std::string());
  n.url = j.value("url", std::string());
  n.title_entities = j.value("title_entities", std::string());
  n.abstract_entities = j.value("abstract_entities", std::string());
  return n;
}

}  // namespace

void write_canonical(const std::string& dir, const Dataset& dataset) {
  fs::create_directories(dir);
  std::ofstream news_out(fs::path(dir) / "news.jsonl", std::ios::trunc);
  std::ofstream users_out(fs::path(dir) / "users.jsonl", std::ios::trunc);
  std::ofstream imps_out(fs::path(dir) / "impressions.jsonl", std::ios::trunc);
  if (!news_out || !users_out || !imps_out)
    throw ConfigError("cannot write canonical dataset under " + dir);

  for (const Corpus* c : {&dataset.source, &dataset.target}) {
    for (const News& n : c->news) news_out << news_to_json(n).dump() << '\n';
    for (const User& u : c->users)
      users_out << json{{"id", u.id},
                        {"domain", to_string(u.domain)},
                        {"history", u.history}}
                       .dump()
                << '\n';
    for (const Impression& imp : c->impressions)
      imps_out << json{{"impression_id", imp.impression_id},
                       {"user_id", imp.user_id},
                       {"time", imp.time},
                       {"domain", to_string(imp.domain)},
                       {"split", to_string(imp.split)},
                       {"candidates", imp.candidates},
                       {"labels", imp.labels}}
                      .dump()
               << '\n';
  }
}

Dataset load_canonical(const std::string& dir) {
  Dataset ds;
  auto each_line = [&](const std::string& name, auto&& fn) {
    const fs::path path = fs::path(dir) / name;
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        fn(json::parse(line));
      } catch (const json::exception& e) {
        throw ParseError(name + ": " + e.what(), line_no);
      }
    }
  };

  each_line("news.jsonl", [&](const json& j) {
    News n = news_from_json(j);
    ds.corpus(n.domain).news.push_back(std::move(n));
  });
  each_line("users.jsonl", [&](const json& j) {
    User u;
    u.id = j.at("id").get<std::string>();
    u.domain = domain_from_string(j.at("domain").get<std::string>());
    u.history = j.at("history").get<std::vector<std::string>>();
    ds.corpus(u.domain).users.push_back(std::move(u));
  });
  each_line("impressions.jsonl", [&](const json& j) {
    Impression imp;
    imp.impression_id = j.at("impression_id").get<std::string>();
    imp.user_id = j.at("user_id").get<std::string>();
    imp.time = j.value("time", std::string());
    imp.domain = domain_from_string(j.at("domain").get<std::string>());
    imp.split = split_from_string(j.at("split").get<std::string>());
    imp.candidates = j.at("candidates").get<std::vector<std::string>>();
    imp.labels = j.at("labels").get<std::vector<int>>();
    if (imp.candidates.size() != imp.labels.size() || imp.candidates.empty())
      throw ParseError("impression " + imp.impression_id +
                       " has inconsistent candidates/labels");
    ds.corpus(imp.domain).impressions.push_back(std::move(imp));
  });

  ds.source.reindex();
  ds.target.reindex();
  return ds;
}

std::vector<TrainingSample> sample_negatives(
    const Impression& impression, const Corpus& corpus,
    const std::unordered_set<std::string>& user_clicked, std::size_t k,
    Rng& rng) {
  if (k < 1) throw ContractError("sample_negatives: k must be >= 1");

  std::vector<std::string> positives;
  std::vector<std::string> in_impression;  // non-clicked candidates
  for (std::size_t i = 0; i < impression.candidates.size(); ++i) {
    if (impression.labels[i] == 1) {
      positives.push_back(impression.candidates[i]);
    } else if (!user_clicked.count(impression.candidates[i])) {
      // A candidate the user clicked elsewhere is not a negative.
      in_impression.push_back(impression.candidates[i]);
    }
  }
  if (positives.empty()) return {};

  // Corpus-wide pool of news the user never clicked, in corpus order.
  std::vector<const std::string*> global_pool;
  for (const News& n : corpus.news)
    if (!user_clicked.count(n.id)) global_pool.push_back(&n.id);

  std::vector<TrainingSample> out;
  out.reserve(positives.size());
  for (const std::string& pos : positives) {
    TrainingSample s;
    s.user_id = impression.user_id;
    s.domain = impression.domain;
    s.positive = pos;

    std::vector<std::string> local = in_impression;
    std::shuffle(local.begin(), local.end(), rng);
    for (const std::string& n : local) {
      if (s.negatives.size() >= k) break;
      s.negatives.push_back(n);
    }
    if (s.negatives.size() < k) {
      std::vector<const std::string*> pool = global_pool;
      std::shuffle(pool.begin(), pool.end(), rng);
      for (const std::string* n : pool) {
        if (s.negatives.size() >= k) break;
        if (*n == pos) continue;
        if (std::find(s.negatives.begin(), s.negatives.end(), *n) !=
            s.negatives.end())
          continue;
        s.negatives.push_back(*n);
      }
    }
    if (s.negatives.empty())
      throw ContractError(
          "sample_negatives: no negative pool; user clicked every news");
    // Both pools exhausted below k: draw the remainder with replacement.
    std::uniform_int_distribution<std::size_t> pick(0, s.negatives.size() - 1);
    while (s.negatives.size() < k) s.negatives.push_back(s.negatives[pick(rng)]);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> few_shot_sample(const std::vector<User>& target_users,
                                         std::size_t n, Rng& rng) {
  std::vector<std::string> ids;
  ids.reserve(target_users.size());
  for (const User& u : target_users) ids.push_back(u.id);
  if (n >= ids.size()) return ids;
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(n);
  std::sort(ids.begin(), ids.end());
  return ids;
}

void apply_few_shot(Dataset& dataset, long n, Rng& rng) {
  if (n < 0) return;

  // The sampling pool is every target user with at least one train
  // impression.
  std::unordered_set<std::string> has_train;
  for (const Impression& imp : dataset.target.impressions)
    if (imp.split == Split::kTrain) has_train.insert(imp.user_id);
  std::vector<User> pool;
  for (const User& u : dataset.target.users)
    if (has_train.count(u.id)) pool.push_back(u);

  const auto kept_ids =
      few_shot_sample(pool, static_cast<std::size_t>(n), rng);
  std::unordered_set<std::string> kept(kept_ids.begin(), kept_ids.end());

  std::vector<Impression> remaining;
  for (Impression& imp : dataset.target.impressions) {
    if (imp.split != Split::kTrain || kept.count(imp.user_id))
      remaining.push_back(std::move(imp));
  }
  dataset.target.impressions = std::move(remaining);
}

}  // namespace xlrec
