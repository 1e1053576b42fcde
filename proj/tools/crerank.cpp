#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crerank/checkpoint.hpp"
#include "crerank/config.hpp"
#include "crerank/corpus.hpp"
#include "crerank/experiments.hpp"
#include "crerank/serial.hpp"
#include "crerank/trainer.hpp"

namespace crerank {
namespace {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  int threads = 0;  // 0 = take the config value
  bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_out = true) {
  cmd->add_option("--config", args.config_path, "flat key=value config file");
  cmd->add_option("--set", args.sets, "override a config key, key=value")->take_all();
  auto* out = cmd->add_option("--out", args.out_dir, "output directory");
  if (needs_out) out->required();
  cmd->add_option("--threads", args.threads, "worker thread cap")
      ->envname("CRERANK_THREADS");
  cmd->add_flag("--force", args.force, "skip artifact hash cross-checks");
}

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg = RunConfig::load(args.config_path.empty() ? nullptr : &args.config_path,
                                  args.sets);
  if (args.threads > 0) cfg.threads = args.threads;
  cfg.validate();
  return cfg;
}

std::string prepare_out(const CommonArgs& args, const RunConfig& cfg) {
  fs::create_directories(args.out_dir);
  write_text_file((fs::path(args.out_dir) / "resolved_config.cfg").string(),
                  cfg.snapshot_text());
  return args.out_dir;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void check_hash(const std::string& what, const std::string& recorded, std::uint64_t actual,
                bool force) {
  if (recorded.empty() || recorded == hex64(actual)) return;
  const std::string msg = what + " hash mismatch (recorded " + recorded + ", actual " +
                          hex64(actual) + "); pass --force to override";
  if (!force) throw FormatError(msg);
  std::cerr << "warning: " << msg << " (forced)\n";
}

std::unique_ptr<Recommender> make_recommender(const Checkpoint& cp) {
  if (cp.kind == "cf") return std::make_unique<CfGenerator>(table_from_checkpoint(cp));
  if (cp.kind == "stamp" || cp.kind == "stmo") {
    const EncoderKind kind = cp.kind == "stamp" ? EncoderKind::stamp : EncoderKind::stmo;
    return std::make_unique<StampGenerator<float>>(
        stamp_from_checkpoint(cp), kind,
        cp.meta_or("attention_normalized", "false") == "true");
  }
  throw FormatError("checkpoint kind " + cp.kind + " is not a generator");
}

void write_train_log(const std::vector<TrainLogEntry>& log, const std::string& path) {
  std::ostringstream ss;
  ss << "step,train_loss,val_recall,best\n";
  for (const auto& e : log)
    ss << e.step << ',' << nlohmann::json(e.train_loss).dump() << ','
       << nlohmann::json(e.val_recall).dump() << ',' << (e.best ? 1 : 0) << '\n';
  write_text_file(path, ss.str());
}

// ---------------------------------------------------------------------- ingest

int cmd_ingest(const CommonArgs& args, const std::string& input) {
  RunConfig cfg = resolve_config(args);
  const std::string out = prepare_out(args, cfg);

  ParseReport report;
  std::vector<RawEvent> events;
  if (cfg.data.recipe == "yoochoose")
    events = parse_yoochoose(input, &report);
  else if (cfg.data.recipe == "diginetica")
    events = parse_diginetica(input, &report);
  else
    events = parse_generic_csv(input, &report);
  std::cout << "parsed " << report.events << " events (" << report.skipped << " rows skipped)\n";
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';

  ProcessedCorpus corpus = preprocess(events, cfg.data);
  const std::string corpus_path =
      (fs::path(out) / (cfg.data.dataset + ".corpus")).string();
  write_corpus(corpus, corpus_path);
  std::cout << "corpus: " << corpus.train_sessions.size() << " train sessions, "
            << corpus.test_sessions.size() << " test sessions, " << corpus.train.size()
            << " train examples, " << corpus.test.size() << " test examples, |I|="
            << corpus.vocab.size() << '\n';
  std::cout << "wrote " << corpus_path << '\n';
  return 0;
}

// -------------------------------------------------------------- train-generator

int cmd_train_generator(const CommonArgs& args, const std::string& corpus_path) {
  RunConfig cfg = resolve_config(args);
  const std::string out = prepare_out(args, cfg);
  ProcessedCorpus corpus = read_corpus(corpus_path);

  Checkpoint cp;
  if (cfg.model.generator == "cf") {
    auto counts = build_counts(corpus.train_sessions,
                               static_cast<std::uint32_t>(corpus.vocab.size()));
    auto table = asym_cosine(counts, cfg.model.alpha, cfg.model.table_width);
    cp = checkpoint_from_table(table);
  } else {
    auto result = train_generator(corpus, cfg.model, cfg.train, cfg.threads);
    cp = checkpoint_from_stamp(result.params,
                               cfg.model.generator == "stmo" ? EncoderKind::stmo
                                                             : EncoderKind::stamp,
                               cfg.model.attention_normalized);
    write_train_log(result.log, (fs::path(out) / "train_log.csv").string());
    if (!result.log.empty())
      std::cout << "final validation recall@" << cfg.train.val_n << " = "
                << result.log.back().val_recall << '\n';
  }
  cp.meta["corpus_hash"] = hex64(corpus.content_hash());
  cp.meta["dataset"] = corpus.meta.dataset;
  cp.meta["config"] = cfg.snapshot_text();
  const std::string ckpt_path = (fs::path(out) / "generator.ckpt").string();
  const std::uint64_t hash = write_checkpoint(cp, ckpt_path);
  std::cout << "wrote " << ckpt_path << " (" << cp.kind << ", hash " << hex64(hash) << ")\n";
  return 0;
}

// -------------------------------------------------------------- cache-candidates

int cmd_cache_candidates(const CommonArgs& args, const std::string& corpus_path,
                         const std::string& generator_path) {
  RunConfig cfg = resolve_config(args);
  const std::string out = prepare_out(args, cfg);
  ProcessedCorpus corpus = read_corpus(corpus_path);
  Checkpoint gen_cp = read_checkpoint(generator_path);
  check_hash("generator/corpus", gen_cp.meta_or("corpus_hash", ""), corpus.content_hash(),
             args.force);
  auto generator = make_recommender(gen_cp);

  CandidateCache cache;
  cache.generator_hash = gen_cp.stored_hash;
  cache.corpus_hash = corpus.content_hash();
  cache.k = cfg.model.k;
  cache.lists.resize(corpus.train.size());
  parallel_for(corpus.train.size(), cfg.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      cache.lists[i] = generator->recommend(corpus.train[i].history, cache.k);
  });
  const std::string path = (fs::path(out) / "candidates.cache").string();
  write_candidate_cache(cache, path);

  std::size_t covered = 0;
  for (std::size_t i = 0; i < cache.lists.size(); ++i)
    covered += rank_of_target(cache.lists[i], corpus.train[i].target) != 0;
  std::cout << "wrote " << path << " (" << cache.lists.size() << " examples, coverage "
            << static_cast<double>(covered) / static_cast<double>(cache.lists.size())
            << ")\n";
  return 0;
}

// --------------------------------------------------------------- train-reranker

int cmd_train_reranker(const CommonArgs& args, const std::string& corpus_path,
                       const std::string& generator_path, const std::string& cache_path) {
  RunConfig cfg = resolve_config(args);
  const std::string out = prepare_out(args, cfg);
  ProcessedCorpus corpus = read_corpus(corpus_path);
  Checkpoint gen_cp = read_checkpoint(generator_path);
  check_hash("generator/corpus", gen_cp.meta_or("corpus_hash", ""), corpus.content_hash(),
             args.force);
  auto generator = make_recommender(gen_cp);

  std::vector<std::vector<ItemIndex>> cached_lists;
  const std::vector<std::vector<ItemIndex>>* cached = nullptr;
  if (!cache_path.empty()) {
    CandidateCache cache = read_candidate_cache(cache_path);
    check_hash("cache/generator", hex64(cache.generator_hash), gen_cp.stored_hash, args.force);
    check_hash("cache/corpus", hex64(cache.corpus_hash), corpus.content_hash(), args.force);
    if (cache.k != cfg.model.k && !args.force)
      throw FormatError("cache built for k=" + std::to_string(cache.k) + ", config has k=" +
                        std::to_string(cfg.model.k) + "; pass --force to override");
    cached_lists = std::move(cache.lists);
    cached = &cached_lists;
  }

  auto result = train_reranker(*generator, corpus, cfg.model, cfg.train, cfg.threads, cached);
  std::cout << "coverage: " << result.surviving_examples << "/" << result.total_examples
            << " = " << result.coverage << '\n';
  if (!result.log.empty())
    std::cout << "final validation recall@" << cfg.train.val_n << " = "
              << result.log.back().val_recall << '\n';

  Checkpoint cp = checkpoint_from_reranker(result.params);
  cp.meta["corpus_hash"] = hex64(corpus.content_hash());
  cp.meta["generator_hash"] = hex64(gen_cp.stored_hash);
  cp.meta["dataset"] = corpus.meta.dataset;
  cp.meta["config"] = cfg.snapshot_text();
  write_train_log(result.log, (fs::path(out) / "train_log.csv").string());
  const std::string ckpt_path = (fs::path(out) / "reranker.ckpt").string();
  const std::uint64_t hash = write_checkpoint(cp, ckpt_path);
  std::cout << "wrote " << ckpt_path << " (hash " << hex64(hash) << ")\n";
  return 0;
}

// --------------------------------------------------------------------- evaluate

int cmd_evaluate(const CommonArgs& args, const std::string& corpus_path,
                 const std::string& generator_path, const std::string& reranker_path,
                 bool baseline) {
  RunConfig cfg = resolve_config(args);
  const std::string out = prepare_out(args, cfg);
  ProcessedCorpus corpus = read_corpus(corpus_path);
  Checkpoint gen_cp = read_checkpoint(generator_path);
  check_hash("generator/corpus", gen_cp.meta_or("corpus_hash", ""), corpus.content_hash(),
             args.force);
  auto generator = make_recommender(gen_cp);
  if (corpus.test.empty()) throw EmptyCorpusError("corpus has no test examples");

  auto emit = [&](const EvalReport& report, const std::string& stem) {
    write_eval_report_json(report, (fs::path(out) / (stem + ".json")).string());
    write_eval_report_csv(report, (fs::path(out) / (stem + ".csv")).string());
    std::cout << report.model_id << ": recall@" << report.n << " = " << report.recall
              << ", mrr@" << report.n << " = " << report.mrr << " (" << report.examples
              << " examples)\n";
  };

  if (!reranker_path.empty()) {
    Checkpoint rr_cp = read_checkpoint(reranker_path);
    check_hash("reranker/corpus", rr_cp.meta_or("corpus_hash", ""), corpus.content_hash(),
               args.force);
    check_hash("reranker/generator", rr_cp.meta_or("generator_hash", ""), gen_cp.stored_hash,
               args.force);
    auto params = reranker_from_checkpoint(rr_cp);
    TwoStagePipeline<float> pipeline(*generator, params);
    emit(evaluate(pipeline, corpus.test, cfg.eval_n, "rrcre-" + gen_cp.kind,
                  corpus.meta.dataset, cfg.threads),
         "pipeline_report");
    if (baseline)
      emit(evaluate(*generator, corpus.test, cfg.eval_n, gen_cp.kind, corpus.meta.dataset,
                    cfg.threads),
           "generator_report");
  } else {
    emit(evaluate(*generator, corpus.test, cfg.eval_n, gen_cp.kind, corpus.meta.dataset,
                  cfg.threads),
         "generator_report");
  }
  return 0;
}

// ---------------------------------------------------------------------- sweep-k

int cmd_sweep_k(const CommonArgs& args, const std::string& corpus_path,
                const std::string& generator_path, const std::vector<std::uint32_t>& ks,
                bool svg) {
  RunConfig cfg = resolve_config(args);
  const std::string out = prepare_out(args, cfg);
  ProcessedCorpus corpus = read_corpus(corpus_path);
  Checkpoint gen_cp = read_checkpoint(generator_path);
  check_hash("generator/corpus", gen_cp.meta_or("corpus_hash", ""), corpus.content_hash(),
             args.force);
  auto generator = make_recommender(gen_cp);

  auto sweep = sweep_k(*generator, corpus, cfg.model, cfg.train, ks, cfg.threads);

  std::vector<double> xs;
  CurveSeries recall{"recall" + std::to_string(cfg.train.val_n), {}};
  CurveSeries survivors{"surviving_examples", {}};
  for (const auto& pt : sweep.points) {
    xs.push_back(pt.k);
    recall.values.push_back(pt.recall);
    survivors.values.push_back(static_cast<double>(pt.surviving_examples));
  }
  write_curve_csv((fs::path(out) / "sweep_k.csv").string(), "k", xs, {recall, survivors});
  if (svg)
    write_curve_svg((fs::path(out) / "sweep_k.svg").string(), "k", xs, {recall});

  nlohmann::json summary;
  summary["best_k"] = sweep.points[sweep.best_index].k;
  summary["best_recall"] = sweep.points[sweep.best_index].recall;
  summary["declines_after_best"] = sweep.declines_after_best;
  write_text_file((fs::path(out) / "sweep_summary.json").string(), summary.dump(2) + "\n");
  std::cout << "best k = " << sweep.points[sweep.best_index].k << " (recall@"
            << cfg.train.val_n << " = " << sweep.points[sweep.best_index].recall << ")"
            << (sweep.declines_after_best ? ", recall declines beyond it" : "") << '\n';
  return 0;
}

// -------------------------------------------------------------------- ablate-cre

int cmd_ablate_cre(const CommonArgs& args, const std::string& corpus_path,
                   const std::string& generator_path, bool svg) {
  RunConfig cfg = resolve_config(args);
  const std::string out = prepare_out(args, cfg);
  ProcessedCorpus corpus = read_corpus(corpus_path);
  Checkpoint gen_cp = read_checkpoint(generator_path);
  check_hash("generator/corpus", gen_cp.meta_or("corpus_hash", ""), corpus.content_hash(),
             args.force);
  auto generator = make_recommender(gen_cp);

  auto ablation = ablate_cre(*generator, corpus, cfg.model, cfg.train, cfg.threads);

  // Paired validation curves; both runs see the same steps.
  std::vector<double> xs;
  CurveSeries rrcre{"rrcre_val_recall", {}};
  CurveSeries rr{"rr_val_recall", {}};
  const std::size_t n =
      std::min(ablation.with_cre.log.size(), ablation.without_cre.log.size());
  for (std::size_t i = 0; i < n; ++i) {
    xs.push_back(static_cast<double>(ablation.with_cre.log[i].step));
    rrcre.values.push_back(ablation.with_cre.log[i].val_recall);
    rr.values.push_back(ablation.without_cre.log[i].val_recall);
  }
  write_curve_csv((fs::path(out) / "ablation_curves.csv").string(), "step", xs, {rrcre, rr});
  if (svg)
    write_curve_svg((fs::path(out) / "ablation_curves.svg").string(), "step", xs, {rrcre, rr});

  auto emit = [&](const RerankerTrainResult& result, const std::string& stem,
                  const std::string& model_id) {
    Checkpoint cp = checkpoint_from_reranker(result.params);
    cp.meta["corpus_hash"] = hex64(corpus.content_hash());
    cp.meta["generator_hash"] = hex64(gen_cp.stored_hash);
    cp.meta["config"] = cfg.snapshot_text();
    write_checkpoint(cp, (fs::path(out) / (stem + ".ckpt")).string());
    if (!corpus.test.empty()) {
      TwoStagePipeline<float> pipeline(*generator, result.params);
      auto report = evaluate(pipeline, corpus.test, cfg.eval_n, model_id,
                             corpus.meta.dataset, cfg.threads);
      write_eval_report_json(report, (fs::path(out) / (stem + "_report.json")).string());
      write_eval_report_csv(report, (fs::path(out) / (stem + "_report.csv")).string());
      std::cout << model_id << ": test recall@" << cfg.eval_n << " = " << report.recall
                << ", mrr@" << cfg.eval_n << " = " << report.mrr << '\n';
    }
  };
  emit(ablation.with_cre, "rrcre", "rrcre-" + gen_cp.kind);
  emit(ablation.without_cre, "rr", "rr-" + gen_cp.kind);
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Two-stage session recommender: candidate generation plus candidate-rank re-ranking"};
  app.require_subcommand(1);

  CommonArgs ingest_args;
  std::string ingest_input;
  auto* ingest = app.add_subcommand("ingest", "parse a click log and write a corpus");
  ingest->add_option("--input", ingest_input, "raw click log")->required();
  add_common(ingest, ingest_args);

  CommonArgs tg_args;
  std::string tg_corpus;
  auto* tg = app.add_subcommand("train-generator", "build or train the candidate generator");
  tg->add_option("--corpus", tg_corpus, "corpus file")->required();
  add_common(tg, tg_args);

  CommonArgs cc_args;
  std::string cc_corpus, cc_generator;
  auto* cc = app.add_subcommand("cache-candidates", "precompute generator candidates");
  cc->add_option("--corpus", cc_corpus)->required();
  cc->add_option("--generator", cc_generator, "generator checkpoint")->required();
  add_common(cc, cc_args);

  CommonArgs tr_args;
  std::string tr_corpus, tr_generator, tr_cache;
  auto* tr = app.add_subcommand("train-reranker", "train the re-ranker against a frozen generator");
  tr->add_option("--corpus", tr_corpus)->required();
  tr->add_option("--generator", tr_generator)->required();
  tr->add_option("--candidates", tr_cache, "candidate cache file");
  add_common(tr, tr_args);

  CommonArgs ev_args;
  std::string ev_corpus, ev_generator, ev_reranker;
  bool ev_baseline = false;
  auto* ev = app.add_subcommand("evaluate", "evaluate a generator or a full pipeline");
  ev->add_option("--corpus", ev_corpus)->required();
  ev->add_option("--generator", ev_generator)->required();
  ev->add_option("--reranker", ev_reranker, "re-ranker checkpoint (evaluates the pipeline)");
  ev->add_flag("--baseline", ev_baseline, "also emit a generator-only report");
  add_common(ev, ev_args);

  CommonArgs sk_args;
  std::string sk_corpus, sk_generator;
  std::vector<std::uint32_t> sk_ks;
  bool sk_svg = false;
  auto* sk = app.add_subcommand("sweep-k", "train one re-ranker per k and plot recall");
  sk->add_option("--corpus", sk_corpus)->required();
  sk->add_option("--generator", sk_generator)->required();
  sk->add_option("--k-values", sk_ks, "candidate list sizes")->required()->delimiter(',');
  sk->add_flag("--svg", sk_svg, "also render an SVG chart");
  add_common(sk, sk_args);

  CommonArgs ab_args;
  std::string ab_corpus, ab_generator;
  bool ab_svg = false;
  auto* ab = app.add_subcommand("ablate-cre", "paired runs with and without rank embeddings");
  ab->add_option("--corpus", ab_corpus)->required();
  ab->add_option("--generator", ab_generator)->required();
  ab->add_flag("--svg", ab_svg, "also render an SVG chart");
  add_common(ab, ab_args);

  CLI11_PARSE(app, argc, argv);

  if (ingest->parsed()) return cmd_ingest(ingest_args, ingest_input);
  if (tg->parsed()) return cmd_train_generator(tg_args, tg_corpus);
  if (cc->parsed()) return cmd_cache_candidates(cc_args, cc_corpus, cc_generator);
  if (tr->parsed()) return cmd_train_reranker(tr_args, tr_corpus, tr_generator, tr_cache);
  if (ev->parsed())
    return cmd_evaluate(ev_args, ev_corpus, ev_generator, ev_reranker, ev_baseline);
  if (sk->parsed()) return cmd_sweep_k(sk_args, sk_corpus, sk_generator, sk_ks, sk_svg);
  if (ab->parsed()) return cmd_ablate_cre(ab_args, ab_corpus, ab_generator, ab_svg);
  return 1;
}

}  // namespace
}  // namespace crerank

int main(int argc, char** argv) {
  try {
    return crerank::run(argc, argv);
  } catch (const crerank::ConfigError& e) {
    std::cerr << "error: config: " << e.what() << '\n';
  } catch (const crerank::IoError& e) {
    std::cerr << "error: io: " << e.what() << '\n';
  } catch (const crerank::FormatError& e) {
    std::cerr << "error: format: " << e.what() << '\n';
  } catch (const crerank::TrainingError& e) {
    std::cerr << "error: training: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
  }
  return 1;
}
