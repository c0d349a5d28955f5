#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "xlrec/data.hpp"
#include "xlrec/errors.hpp"
#include "xlrec/synthetic.hpp"

using namespace xlrec;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = XLREC_FIXTURE_DIR;

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("xlrec_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

bool same_news(const News& a, const News& b) {
  return a.id == b.id && a.domain == b.domain && a.title == b.title &&
         a.category == b.category && a.subcategory == b.subcategory &&
         a.abstract == b.abstract && a.url == b.url &&
         a.title_entities == b.title_entities &&
         a.abstract_entities == b.abstract_entities;
}

}  // namespace

TEST_CASE("parse_behaviors: manual oracle") {
  const auto b = parse_behaviors("1\tU1\tT\tN1 N2\tN3-1 N4-0");
  CHECK(b.impression_id == "1");
  CHECK(b.user_id == "U1");
  CHECK(b.time == "T");
  CHECK(b.history == std::vector<std::string>{"N1", "N2"});
  CHECK(b.candidates == std::vector<std::string>{"N3", "N4"});
  CHECK(b.labels == std::vector<int>{1, 0});
}

TEST_CASE("parse_behaviors: empty history field gives empty history") {
  const auto b = parse_behaviors("7\tU9\tT\t\tN1-1");
  CHECK(b.history.empty());
  CHECK(b.candidates == std::vector<std::string>{"N1"});
}

TEST_CASE("parse_behaviors: impression tokens split at the final hyphen") {
  const auto b = parse_behaviors("1\tU1\tT\t\tN-3-1 up-2-date-0");
  CHECK(b.candidates == std::vector<std::string>{"N-3", "up-2-date"});
  CHECK(b.labels == std::vector<int>{1, 0});
}

TEST_CASE("parse_behaviors: bad labels and field counts carry line numbers") {
  try {
    parse_behaviors("1\tU1\tT\t\tN3-2", 17);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line_number == 17);
    CHECK(std::string(e.what()).find("line 17") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_behaviors("only\tfour\tfields\there", 3), ParseError);
  CHECK_THROWS_AS(parse_behaviors("1\tU1\tT\t\tN3", 3), ParseError);
}

TEST_CASE("MIND fixtures round-trip byte-identically") {
  Corpus c;
  ingest_mind_news((kFixtures / "mind_news.tsv").string(), Domain::kTarget, c);
  ingest_mind_behaviors((kFixtures / "mind_behaviors.tsv").string(),
                        Domain::kTarget, Split::kTrain, c);
  CHECK(c.news.size() == 4);
  CHECK(c.users.size() == 2);
  CHECK(c.impressions.size() == 3);
  CHECK(c.find_news("N2")->title_entities == "[{\"Label\":\"vote\"}]");
  CHECK(c.find_user("U2")->history.empty());

  const auto dir = temp_dir("mind_roundtrip");
  write_mind_news((dir / "news.tsv").string(), c);
  write_mind_behaviors((dir / "behaviors.tsv").string(), c);
  CHECK(slurp(dir / "news.tsv") == slurp(kFixtures / "mind_news.tsv"));
  CHECK(slurp(dir / "behaviors.tsv") ==
        slurp(kFixtures / "mind_behaviors.tsv"));
}

TEST_CASE("canonical dataset round trip preserves every structure") {
  Corpus src;
  ingest_mind_news((kFixtures / "mind_news.tsv").string(), Domain::kSource, src);
  ingest_mind_behaviors((kFixtures / "mind_behaviors.tsv").string(),
                        Domain::kSource, Split::kValid, src);
  Dataset ds;
  ds.source = src;
  News tn;
  tn.id = "T1";
  tn.domain = Domain::kTarget;
  tn.title = "målløs tittel";  // non-ASCII survives the json round trip
  ds.target.news.push_back(tn);
  User tu;
  tu.id = "TU1";
  tu.domain = Domain::kTarget;
  tu.history = {"T1"};
  ds.target.users.push_back(tu);
  Impression ti;
  ti.impression_id = "ti1";
  ti.user_id = "TU1";
  ti.domain = Domain::kTarget;
  ti.split = Split::kTest;
  ti.candidates = {"T1"};
  ti.labels = {1};
  ds.target.impressions.push_back(ti);

  const auto dir = temp_dir("canonical");
  write_canonical(dir.string(), ds);
  const Dataset back = load_canonical(dir.string());

  REQUIRE(back.source.news.size() == ds.source.news.size());
  for (std::size_t i = 0; i < ds.source.news.size(); ++i)
    CHECK(same_news(back.source.news[i], ds.source.news[i]));
  REQUIRE(back.source.users.size() == ds.source.users.size());
  for (std::size_t i = 0; i < ds.source.users.size(); ++i) {
    CHECK(back.source.users[i].id == ds.source.users[i].id);
    CHECK(back.source.users[i].history == ds.source.users[i].history);
  }
  REQUIRE(back.source.impressions.size() == ds.source.impressions.size());
  for (std::size_t i = 0; i < ds.source.impressions.size(); ++i) {
    const Impression& a = back.source.impressions[i];
    const Impression& b = ds.source.impressions[i];
    CHECK(a.impression_id == b.impression_id);
    CHECK(a.user_id == b.user_id);
    CHECK(a.time == b.time);
    CHECK(a.split == b.split);
    CHECK(a.candidates == b.candidates);
    CHECK(a.labels == b.labels);
  }
  CHECK(back.target.news.size() == 1);
  CHECK(back.target.news[0].title == "målløs tittel");
  CHECK(back.target.impressions[0].split == Split::kTest);
}

namespace {

Corpus tiny_corpus(std::size_t n_news) {
  Corpus c;
  for (std::size_t i = 0; i < n_news; ++i) {
    News n;
    n.id = "N" + std::to_string(i);
    n.domain = Domain::kSource;
    n.title = "t " + std::to_string(i);
    c.news.push_back(n);
  }
  c.reindex();
  return c;
}

}  // namespace

TEST_CASE("sample_negatives: one sample per positive, k negatives each") {
  Corpus c = tiny_corpus(30);
  Impression imp;
  imp.user_id = "U";
  imp.candidates = {"N0", "N1", "N2", "N3", "N4", "N5", "N6"};
  imp.labels = {1, 0, 0, 1, 0, 0, 0};
  std::unordered_set<std::string> clicked = {"N0", "N3", "N9"};
  Rng rng(5);
  const auto samples = sample_negatives(imp, c, clicked, 4, rng);
  REQUIRE(samples.size() == 2);  // one per positive
  for (const auto& s : samples) {
    CHECK((s.positive == "N0" || s.positive == "N3"));
    CHECK(s.negatives.size() == 4);  // scores vector will have length 5
    for (const auto& n : s.negatives) {
      CHECK(n != s.positive);
      CHECK(!clicked.count(n));
    }
    // Negatives are pairwise distinct while the pool allows it.
    std::set<std::string> uniq(s.negatives.begin(), s.negatives.end());
    CHECK(uniq.size() == s.negatives.size());
  }
}

TEST_CASE("sample_negatives: no positives yields an empty list") {
  Corpus c = tiny_corpus(5);
  Impression imp;
  imp.user_id = "U";
  imp.candidates = {"N0", "N1"};
  imp.labels = {0, 0};
  Rng rng(5);
  CHECK(sample_negatives(imp, c, {}, 4, rng).empty());
}

TEST_CASE("sample_negatives: user who clicked everything is a contract error") {
  Corpus c = tiny_corpus(3);
  Impression imp;
  imp.user_id = "U";
  imp.candidates = {"N0"};
  imp.labels = {1};
  std::unordered_set<std::string> clicked = {"N0", "N1", "N2"};
  Rng rng(5);
  CHECK_THROWS_AS(sample_negatives(imp, c, clicked, 4, rng), ContractError);
}

TEST_CASE("sample_negatives: exhausted pools fall back to replacement") {
  Corpus c = tiny_corpus(3);
  Impression imp;
  imp.user_id = "U";
  imp.candidates = {"N0"};
  imp.labels = {1};
  std::unordered_set<std::string> clicked = {"N0", "N1"};  // pool = {N2}
  Rng rng(5);
  const auto samples = sample_negatives(imp, c, clicked, 4, rng);
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].negatives == std::vector<std::string>(4, "N2"));
}

TEST_CASE("sample_negatives: negatives never come from the clicked set") {
  Corpus c = tiny_corpus(40);
  std::unordered_set<std::string> clicked;
  for (int i = 0; i < 20; ++i) clicked.insert("N" + std::to_string(i * 2));
  Impression imp;
  imp.user_id = "U";
  imp.candidates = {"N1", "N2", "N4"};
  imp.labels = {1, 0, 0};
  clicked.insert("N1");
  Rng rng(11);
  std::size_t draws = 0;
  while (draws < 10000) {
    const auto samples = sample_negatives(imp, c, clicked, 4, rng);
    for (const auto& s : samples)
      for (const auto& n : s.negatives) {
        ++draws;
        CHECK(!clicked.count(n));
      }
  }
}

TEST_CASE("few_shot_sample: zero-shot, exhaustive and deterministic") {
  std::vector<User> users(10);
  for (int i = 0; i < 10; ++i) users[i].id = "U" + std::to_string(i);
  Rng a(3);
  CHECK(few_shot_sample(users, 0, a).empty());
  CHECK(few_shot_sample(users, 10, a).size() == 10);
  CHECK(few_shot_sample(users, 99, a).size() == 10);
  Rng b1(3), b2(3);
  CHECK(few_shot_sample(users, 4, b1) == few_shot_sample(users, 4, b2));
}

TEST_CASE("apply_few_shot drops only train impressions of unsampled users") {
  Dataset ds;
  for (int i = 0; i < 6; ++i) {
    User u;
    u.id = "TU" + std::to_string(i);
    u.domain = Domain::kTarget;
    ds.target.users.push_back(u);
    Impression imp;
    imp.impression_id = "ti" + std::to_string(i);
    imp.user_id = u.id;
    imp.domain = Domain::kTarget;
    imp.split = i < 4 ? Split::kTrain : Split::kTest;
    imp.candidates = {"X"};
    imp.labels = {1};
    ds.target.impressions.push_back(imp);
  }
  Impression src;
  src.impression_id = "si";
  src.user_id = "SU";
  src.domain = Domain::kSource;
  src.split = Split::kTrain;
  src.candidates = {"X"};
  src.labels = {1};
  ds.source.impressions.push_back(src);

  Rng rng(9);
  apply_few_shot(ds, 2, rng);
  std::size_t target_train = 0, target_test = 0;
  for (const auto& imp : ds.target.impressions) {
    if (imp.split == Split::kTrain) ++target_train;
    if (imp.split == Split::kTest) ++target_test;
  }
  CHECK(target_train == 2);
  CHECK(target_test == 2);                   // untouched
  CHECK(ds.source.impressions.size() == 1);  // source untouched

  Rng rng2(10);
  apply_few_shot(ds, 0, rng2);  // zero-shot: no target train impressions
  for (const auto& imp : ds.target.impressions)
    CHECK(imp.split != Split::kTrain);
}

TEST_CASE("synthetic generator: bookkeeping matches the config") {
  SyntheticConfig cfg;
  cfg.topics = 4;
  cfg.source_news = 40;
  cfg.target_news = 36;
  cfg.source_users = 12;
  cfg.target_train_users = 6;
  cfg.target_test_users = 8;
  cfg.words_per_topic = 20;
  cfg.held_out_patterns = 1;
  cfg.plm_dim = 4;
  Rng rng(21);
  const SyntheticOutput out = generate_synthetic_bilingual(cfg, rng);
  CHECK(out.dataset.source.news.size() == 40);
  CHECK(out.dataset.target.news.size() == 36);
  CHECK(out.dataset.source.users.size() == 12);
  CHECK(out.dataset.target.users.size() == 14);
  CHECK(out.dataset.source.impressions.size() >=
        12 * cfg.impressions_per_user);
  CHECK(out.lexicon.size() ==
        static_cast<std::size_t>(4 * 20 * cfg.lexicon_coverage));
}

TEST_CASE("synthetic generator: translation lands in the same topic's target words") {
  SyntheticConfig cfg;
  cfg.topics = 4;
  cfg.source_news = 24;
  cfg.target_news = 24;
  cfg.source_users = 4;
  cfg.target_train_users = 2;
  cfg.target_test_users = 2;
  cfg.words_per_topic = 10;
  cfg.lexicon_coverage = 1.0;  // full lexicon: every word translates
  cfg.held_out_patterns = 1;
  cfg.plm_dim = 4;
  Rng rng(22);
  const SyntheticOutput out = generate_synthetic_bilingual(cfg, rng);

  std::unordered_map<std::string, std::string> lex(out.lexicon.begin(),
                                                   out.lexicon.end());
  for (const News& n : out.dataset.source.news) {
    const std::size_t topic = out.news_topic.at("source:" + n.id);
    std::istringstream words(n.title);
    std::string w;
    while (words >> w) {
      REQUIRE(lex.count(w));
      const std::string& tw = lex[w];
      const auto& wordlist = out.target_words[topic];
      // Translated word belongs to the same topic's target-language list.
      CHECK(std::find(wordlist.begin(), wordlist.end(), tw) != wordlist.end());
    }
  }
}

TEST_CASE("synthetic generator: degenerate configs are config errors") {
  Rng rng(1);
  SyntheticConfig cfg;
  cfg.topics = 1;
  CHECK_THROWS_AS(generate_synthetic_bilingual(cfg, rng), ConfigError);
  cfg = SyntheticConfig{};
  cfg.held_out_patterns = cfg.topics;
  CHECK_THROWS_AS(generate_synthetic_bilingual(cfg, rng), ConfigError);
  cfg = SyntheticConfig{};
  cfg.positives_per_impression = cfg.candidates_per_impression;
  CHECK_THROWS_AS(generate_synthetic_bilingual(cfg, rng), ConfigError);
}

TEST_CASE("synthetic generator: held-out patterns never reach target training users") {
  SyntheticConfig cfg;
  cfg.topics = 6;
  cfg.source_news = 60;
  cfg.target_news = 60;
  cfg.source_users = 10;
  cfg.target_train_users = 30;
  cfg.target_test_users = 40;
  cfg.words_per_topic = 10;
  cfg.held_out_patterns = 2;
  cfg.plm_dim = 6;
  Rng rng(31);
  const SyntheticOutput out = generate_synthetic_bilingual(cfg, rng);

  std::vector<std::set<std::size_t>> pattern_sets;
  for (const auto& p : out.pattern_topics)
    pattern_sets.emplace_back(p.begin(), p.end());

  // Users with train impressions must match a non-held-out pattern; their
  // positives reveal their liked topics.
  std::unordered_map<std::string, std::set<std::size_t>> positive_topics;
  std::unordered_map<std::string, bool> has_train;
  for (const Impression& imp : out.dataset.target.impressions) {
    for (std::size_t i = 0; i < imp.candidates.size(); ++i)
      if (imp.labels[i] == 1)
        positive_topics[imp.user_id].insert(
            out.news_topic.at("target:" + imp.candidates[i]));
    if (imp.split == Split::kTrain) has_train[imp.user_id] = true;
  }
  bool saw_held_out_in_test = false;
  for (const auto& [uid, topics] : positive_topics) {
    bool fits_trainable = false;
    bool fits_held_out = false;
    for (std::size_t pidx = 0; pidx < pattern_sets.size(); ++pidx) {
      const bool fits =
          std::includes(pattern_sets[pidx].begin(), pattern_sets[pidx].end(),
                        topics.begin(), topics.end());
      if (fits && pidx < out.held_out_from) fits_trainable = true;
      if (fits && pidx >= out.held_out_from) fits_held_out = true;
    }
    if (has_train.count(uid)) {
      CHECK(fits_trainable);
    } else if (fits_held_out && !fits_trainable) {
      saw_held_out_in_test = true;
    }
  }
  CHECK(saw_held_out_in_test);
}

TEST_CASE("adressa adapter groups click events into history plus impressions") {
  const auto dir = temp_dir("adressa");
  {
    std::ofstream out(dir / "events.jsonl");
    out << R"({"userId":"u1","id":"a1","title":"Fersk sak om sport","time":"2017-01-01T08:00:00"})" << "\n";
    out << R"({"userId":"u1","id":"a2","title":"Ny politikk i dag","time":"2017-01-01T09:00:00"})" << "\n";
    out << R"({"userId":"u1","id":"a3","title":"Vaer og vind","time":"2017-01-01T10:00:00"})" << "\n";
    out << R"({"uid":"u2","id":"a2","title":"Ny politikk i dag","time":"2017-01-02T10:00:00"})" << "\n";
    out << R"({"uid":"u2","id":"a4","title":"Kultur i byen","time":"2017-01-02T11:00:00"})" << "\n";
  }
  Corpus c;
  AdressaOptions opt;
  opt.negatives = 2;
  Rng rng(3);
  ingest_adressa_events((dir / "events.jsonl").string(), Domain::kSource, opt,
                        rng, c);
  CHECK(c.news.size() == 4);
  REQUIRE(c.users.size() == 2);
  CHECK(c.find_user("u1")->history == std::vector<std::string>{"a1", "a2"});
  REQUIRE(c.impressions.size() == 2);
  for (const Impression& imp : c.impressions) {
    CHECK(imp.labels[0] == 1);  // the clicked news leads the candidate list
    CHECK(imp.candidates.size() <= 1 + opt.negatives);
    const User* u = c.find_user(imp.user_id);
    for (std::size_t i = 1; i < imp.candidates.size(); ++i) {
      CHECK(imp.labels[i] == 0);
      CHECK(std::find(u->history.begin(), u->history.end(),
                      imp.candidates[i]) == u->history.end());
    }
  }

  std::ofstream bad(dir / "bad.jsonl");
  bad << "{not json}\n";
  bad.close();
  Corpus c2;
  CHECK_THROWS_AS(ingest_adressa_events((dir / "bad.jsonl").string(),
                                        Domain::kSource, opt, rng, c2),
                  ParseError);
}
