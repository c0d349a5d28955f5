// Command-line front end: dataset ingestion, synthetic corpus generation,
// augmented-set construction, training, evaluation, embedding export and
// the ablation grid. Every run echoes its resolved config into the output
// directory so it can be reproduced exactly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "xlrec/checkpoint.hpp"
#include "xlrec/config.hpp"
#include "xlrec/errors.hpp"
#include "xlrec/metrics.hpp"
#include "xlrec/synthetic.hpp"
#include "xlrec/train.hpp"

namespace fs = std::filesystem;
using namespace xlrec;

namespace {

void write_echo(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) return;
  fs::create_directories(cfg.out_dir);
  std::ofstream out(fs::path(cfg.out_dir) / "config-echo.json",
                    std::ios::trunc);
  out << cfg.echo() << '\n';
}

void print_epoch(std::size_t epoch, const EpochStats& s) {
  std::printf("epoch %2zu  total %.4f  align %.4f  src %.4f  tgt %.4f",
              epoch, s.loss_total, s.loss_align, s.loss_source, s.loss_target);
  if (s.valid.n_impressions > 0)
    std::printf("  valid auc %.4f", s.valid.auc);
  std::printf("\n");
  std::fflush(stdout);
}

MetricReport eval_target_test(const RunConfig& cfg, const Pipeline& p,
                              const ModelParams& params) {
  EvaluateOptions opt;
  opt.max_title_len = cfg.train.max_title_len;
  opt.max_history_len = cfg.train.max_history_len;
  opt.jobs = cfg.train.jobs;
  const auto test = impressions_of_split(p.dataset.target, Split::kTest);
  return evaluate(params, p.dataset.target, test, opt);
}

int cmd_train(const RunConfig& cfg) {
  Pipeline p = build_pipeline(cfg, true);
  write_echo(cfg);
  TrainResult result = train(p.dataset, p.augmented, p.vocab, cfg.train,
                             cfg.out_dir, cfg.echo(), print_epoch);
  std::printf("checkpoint: %s (best epoch %zu%s)\n",
              result.report.checkpoint_path.c_str(), result.report.best_epoch,
              result.report.zero_shot ? ", zero-shot" : "");
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_flag) {
  Pipeline p = build_pipeline(cfg, false);
  const std::string path =
      checkpoint_flag.empty()
          ? (fs::path(cfg.out_dir) / "checkpoint.bin").string()
          : checkpoint_flag;
  Checkpoint ckpt = load_checkpoint(path, p.vocab.hash());
  const MetricReport report = eval_target_test(cfg, p, ckpt.params);
  write_echo(cfg);
  if (!cfg.out_dir.empty()) {
    std::ofstream out(fs::path(cfg.out_dir) / "metrics.json", std::ios::trunc);
    out << report.to_json().dump(2) << '\n';
  }
  std::cout << report.table();
  return 0;
}

int cmd_dump_embeddings(const RunConfig& cfg,
                        const std::string& checkpoint_flag) {
  Pipeline p = build_pipeline(cfg, false);
  const std::string path =
      checkpoint_flag.empty()
          ? (fs::path(cfg.out_dir) / "checkpoint.bin").string()
          : checkpoint_flag;
  Checkpoint ckpt = load_checkpoint(path, p.vocab.hash());
  write_echo(cfg);
  const fs::path out_path = fs::path(cfg.out_dir) / "embeddings.tsv";
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + out_path.string());
  out.precision(17);
  for (const Corpus* c : {&p.dataset.source, &p.dataset.target}) {
    for (const News& n : c->news) {
      std::vector<int> tokens = n.tokens;
      if (tokens.empty()) tokens.push_back(Vocabulary::kUnk);
      const Tensor v = encode_news_value(ckpt.params, tokens);
      out << n.id << '\t' << to_string(n.domain);
      for (double x : v.data) out << '\t' << x;
      out << '\n';
    }
  }
  std::printf("wrote %s\n", out_path.string().c_str());
  return 0;
}

int cmd_augment(RunConfig cfg) {
  if (cfg.augmented_cache.empty())
    cfg.augmented_cache =
        (fs::path(cfg.out_dir.empty() ? cfg.data_dir : cfg.out_dir) /
         "augmented.jsonl")
            .string();
  Pipeline p = build_pipeline(cfg, true);
  write_echo(cfg);
  std::printf("augmented sets for %zu source news (%zu forms each) -> %s\n",
              p.augmented.size(),
              p.augmented.empty() ? 0 : p.augmented[0].forms.size(),
              cfg.augmented_cache.c_str());
  return 0;
}

// The Table-3-style configuration grid: masking/alignment with and
// without the target-domain form.
int cmd_ablate(const RunConfig& cfg) {
  struct Variant {
    const char* name;
    bool mask, align, target_news;
  };
  const Variant variants[] = {
      {"news_switch_wo_target_news", true, false, false},
      {"news_align_wo_target_news", false, true, false},
      {"news_switch_align_wo_target_news", true, true, false},
      {"news_switch", true, false, true},
      {"news_align", false, true, true},
      {"news_switch_align", true, true, true},
  };
  write_echo(cfg);
  nlohmann::json summary = nlohmann::json::array();
  std::printf("%-36s %8s %8s %8s %8s\n", "variant", "AUC", "MRR", "NDCG@5",
              "NDCG@10");
  for (const Variant& v : variants) {
    RunConfig run = cfg;
    run.train.use_random_mask = v.mask;
    run.train.use_news_align = v.align;
    run.train.use_target_news = v.target_news;
    run.out_dir = (fs::path(cfg.out_dir) / "ablate" / v.name).string();
    run.augmented_cache.clear();  // forms differ per variant
    Pipeline p = build_pipeline(run, true);
    write_echo(run);
    TrainResult result = train(p.dataset, p.augmented, p.vocab, run.train,
                               run.out_dir, run.echo());
    const MetricReport report = eval_target_test(run, p, result.params);
    std::ofstream out(fs::path(run.out_dir) / "metrics.json", std::ios::trunc);
    out << report.to_json().dump(2) << '\n';
    std::printf("%-36s %8.4f %8.4f %8.4f %8.4f\n", v.name, report.auc,
                report.mrr, report.ndcg5, report.ndcg10);
    std::fflush(stdout);
    summary.push_back({{"variant", v.name},
                       {"use_random_mask", v.mask},
                       {"use_news_align", v.align},
                       {"use_target_news", v.target_news},
                       {"metrics", report.to_json()}});
  }
  if (!cfg.out_dir.empty()) {
    std::ofstream out(fs::path(cfg.out_dir) / "ablate-summary.json",
                      std::ios::trunc);
    out << summary.dump(2) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-shot cross-lingual news recommender"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "run config (json)")
      ->envname("XLREC_CONFIG");
  long seed = -1;
  app.add_option("--seed", seed, "master seed (overrides config)");
  long few_shot = -2;
  app.add_option("--few-shot-users", few_shot,
                 "target-domain training users (0 = zero-shot, -1 = all)");
  long jobs = 0;
  app.add_option("--jobs", jobs, "worker threads (overrides config)");
  std::string out_dir;
  app.add_option("--out", out_dir, "output directory (overrides config)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic bilingual dataset");
  SyntheticConfig sc;
  std::string synth_out = "synth_data";
  std::uint64_t synth_seed = 7;
  synth->add_option("--out-dir", synth_out, "dataset directory");
  synth->add_option("--synth-seed", synth_seed, "generator seed");
  synth->add_option("--topics", sc.topics);
  synth->add_option("--source-news", sc.source_news);
  synth->add_option("--target-news", sc.target_news);
  synth->add_option("--source-users", sc.source_users);
  synth->add_option("--target-train-users", sc.target_train_users);
  synth->add_option("--target-test-users", sc.target_test_users);
  synth->add_option("--words-per-topic", sc.words_per_topic);
  synth->add_option("--lexicon-coverage", sc.lexicon_coverage);
  synth->add_option("--title-len", sc.title_len);
  synth->add_option("--history-len", sc.history_len);
  synth->add_option("--impressions-per-user", sc.impressions_per_user);
  synth->add_option("--candidates", sc.candidates_per_impression);
  synth->add_option("--positives", sc.positives_per_impression);
  synth->add_option("--held-out-patterns", sc.held_out_patterns);
  synth->add_option("--valid-fraction", sc.source_valid_fraction);
  synth->add_option("--plm-dim", sc.plm_dim);

  auto* ingest = app.add_subcommand("ingest", "normalize a raw dataset");
  std::string in_format = "mind", in_domain = "target", in_split = "train";
  std::string in_news, in_behaviors, in_events;
  double in_valid_fraction = 0.0;
  bool in_append = false;
  ingest->add_option("--format", in_format, "mind | adressa");
  ingest->add_option("--domain", in_domain, "source | target");
  ingest->add_option("--split", in_split, "train | valid | test");
  ingest->add_option("--news", in_news, "MIND news.tsv");
  ingest->add_option("--behaviors", in_behaviors, "MIND behaviors.tsv");
  ingest->add_option("--events", in_events, "Adressa click-event jsonl");
  ingest->add_option("--valid-fraction", in_valid_fraction,
                     "adressa: user fraction routed to the valid split");
  ingest->add_flag("--append", in_append, "extend an existing canonical dir");

  auto* augment = app.add_subcommand("augment", "build the augmented-set cache");
  auto* train_cmd = app.add_subcommand("train", "train a model");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the target test split");
  auto* dump = app.add_subcommand("dump-embeddings", "export every news vector");
  auto* ablate = app.add_subcommand("ablate", "run the ablation configuration grid");

  std::string checkpoint_flag;
  eval_cmd->add_option("--checkpoint", checkpoint_flag, "checkpoint path");
  dump->add_option("--checkpoint", checkpoint_flag, "checkpoint path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      Rng rng(synth_seed);
      if (seed >= 0) rng.seed(static_cast<std::uint64_t>(seed));
      const SyntheticOutput out = generate_synthetic_bilingual(sc, rng);
      const std::string dir = out_dir.empty() ? synth_out : out_dir;
      write_synthetic(dir, out);
      std::printf("synthetic dataset -> %s (%zu source news, %zu target news, "
                  "%zu source users)\n",
                  dir.c_str(), out.dataset.source.news.size(),
                  out.dataset.target.news.size(),
                  out.dataset.source.users.size());
      return 0;
    }

    if (ingest->parsed()) {
      if (out_dir.empty()) throw ConfigError("ingest: --out is required");
      Dataset ds;
      if (in_append && fs::exists(fs::path(out_dir) / "news.jsonl"))
        ds = load_canonical(out_dir);
      const Domain domain = domain_from_string(in_domain);
      const Split split = split_from_string(in_split);
      if (in_format == "mind") {
        if (!in_news.empty())
          ingest_mind_news(in_news, domain, ds.corpus(domain));
        if (!in_behaviors.empty())
          ingest_mind_behaviors(in_behaviors, domain, split, ds.corpus(domain));
      } else if (in_format == "adressa") {
        if (in_events.empty())
          throw ConfigError("ingest: adressa needs --events");
        AdressaOptions opt;
        opt.valid_fraction = in_valid_fraction;
        opt.split = split;
        Rng rng(seed >= 0 ? static_cast<std::uint64_t>(seed) : 42u);
        ingest_adressa_events(in_events, domain, opt, rng, ds.corpus(domain));
      } else {
        throw ConfigError("ingest: unknown format " + in_format);
      }
      write_canonical(out_dir, ds);
      std::printf("canonical dataset -> %s\n", out_dir.c_str());
      return 0;
    }

    // Remaining subcommands run off a config file.
    if (config_path.empty())
      throw ConfigError("--config is required (or set XLREC_CONFIG)");
    RunConfig cfg = RunConfig::load(config_path);
    if (seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed);
    if (few_shot >= -1) cfg.few_shot_n = few_shot;
    if (jobs > 0) cfg.train.jobs = static_cast<std::size_t>(jobs);
    if (!out_dir.empty()) cfg.out_dir = out_dir;

    if (augment->parsed()) return cmd_augment(cfg);
    if (train_cmd->parsed()) return cmd_train(cfg);
    if (eval_cmd->parsed()) return cmd_eval(cfg, checkpoint_flag);
    if (dump->parsed()) return cmd_dump_embeddings(cfg, checkpoint_flag);
    if (ablate->parsed()) return cmd_ablate(cfg);
    throw ConfigError("no subcommand");
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
