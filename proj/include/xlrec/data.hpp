#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "xlrec/rng.hpp"

namespace xlrec {

enum class Domain { kSource, kTarget };
enum class Split { kTrain, kValid, kTest };

const char* to_string(Domain d);
const char* to_string(Split s);
Domain domain_from_string(const std::string& s);
Split split_from_string(const std::string& s);

struct News {
  std::string id;
  Domain domain = Domain::kSource;
  std::string title;
  std::vector<int> tokens;  // filled after the vocabulary is built

  // Extra MIND fields, preserved verbatim so ingestion is lossless.
  std::string category, subcategory, abstract, url;
  std::string title_entities, abstract_entities;
};

struct User {
  std::string id;
  Domain domain = Domain::kSource;
  std::vector<std::string> history;  // news ids, oldest first
};

struct Impression {
  std::string impression_id;
  std::string user_id;
  std::string time;  // preserved verbatim; may be empty
  Domain domain = Domain::kSource;
  Split split = Split::kTrain;
  std::vector<std::string> candidates;
  std::vector<int> labels;  // 0/1, aligned with candidates
};

struct Corpus {
  std::vector<News> news;
  std::vector<User> users;
  std::vector<Impression> impressions;

  std::unordered_map<std::string, std::size_t> news_by_id;
  std::unordered_map<std::string, std::size_t> users_by_id;

  void reindex();
  const News* find_news(const std::string& id) const;
  const User* find_user(const std::string& id) const;
};

struct Dataset {
  Corpus source;
  Corpus target;

  Corpus& corpus(Domain d) { return d == Domain::kSource ? source : target; }
  const Corpus& corpus(Domain d) const {
    return d == Domain::kSource ? source : target;
  }
};

// One ranking training sample: a clicked news plus k sampled negatives.
struct TrainingSample {
  std::string user_id;
  Domain domain = Domain::kSource;
  std::string positive;
  std::vector<std::string> negatives;
};

// ---- MIND format ----

struct ParsedBehaviors {
  std::string impression_id, user_id, time;
  std::vector<std::string> history;
  std::vector<std::string> candidates;
  std::vector<int> labels;
};

// One behaviors.tsv line: impression_id \t user_id \t time \t history \t
// impressions, where each impression token is "<news_id>-<label>" split at
// the final hyphen. Bad field counts or labels raise ParseError carrying
// the line number.
ParsedBehaviors parse_behaviors(const std::string& line,
                                std::size_t line_number = 0);

void ingest_mind_news(const std::string& path, Domain domain, Corpus& corpus);
void ingest_mind_behaviors(const std::string& path, Domain domain, Split split,
                           Corpus& corpus);
void write_mind_news(const std::string& path, const Corpus& corpus);
void write_mind_behaviors(const std::string& path, const Corpus& corpus);

// ---- Adressa format ----

// The raw dataset is a stream of click events, one JSON object per line
// (fields: userId/uid, id, title, time). The adapter groups events per
// user in time order: all but the last `impression_clicks` clicks become
// reading history, and each remaining click becomes an impression holding
// the clicked news plus `negatives` sampled unread news. This grouping is
// a documented convention, not a claim about the original experiments.
struct AdressaOptions {
  std::size_t impression_clicks = 1;
  std::size_t negatives = 4;
  double valid_fraction = 0.0;  // fraction of users routed to the valid split
  Split split = Split::kTrain;
};

void ingest_adressa_events(const std::string& path, Domain domain,
                           const AdressaOptions& opt, Rng& rng, Corpus& corpus);

// ---- Canonical on-disk format ----

// news.jsonl, users.jsonl, impressions.jsonl under one directory, each
// record tagged with its domain.
void write_canonical(const std::string& dir, const Dataset& dataset);
Dataset load_canonical(const std::string& dir);

// ---- Sampling ----

// One TrainingSample per positive candidate. Negatives come first from
// the impression's non-clicked candidates, then from the corpus-wide pool
// of news the user never clicked; only when both pools are exhausted are
// negatives drawn with replacement. A user who has clicked every news in
// the corpus is a ContractError.
std::vector<TrainingSample> sample_negatives(
    const Impression& impression, const Corpus& corpus,
    const std::unordered_set<std::string>& user_clicked, std::size_t k,
    Rng& rng);

// Uniform sample of n target users without replacement; n = 0 is the
// zero-shot configuration, n >= |users| keeps everyone.
std::vector<std::string> few_shot_sample(const std::vector<User>& target_users,
                                         std::size_t n, Rng& rng);

// Restrict the target training set to n few-shot users: train impressions
// of unsampled users are dropped (valid/test impressions are untouched).
// n < 0 keeps everything.
void apply_few_shot(Dataset& dataset, long n, Rng& rng);

}  // namespace xlrec
