#include "pedal/cli.h"

#include <algorithm>
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <thread>

#include <CLI11.hpp>

#include "pedal/error.h"
#include "pedal/journal.h"
#include "pedal/metrics.h"
#include "pedal/report.h"
#include "pedal/service.h"
#include "pedal/simulator.h"
#include "pedal/text.h"
#include "pedal/version.h"

namespace pedal {

namespace {

namespace fs = std::filesystem;

struct CorpusFlags {
  std::string corpus;
  std::optional<std::size_t> synthetic;
  std::optional<std::uint64_t> corpus_seed;
  std::string langs;
  std::optional<int> source, hypothesis, post_edit, reference, group, target_lang, origin;
  bool skip_malformed = false;

  void add(CLI::App* app) {
    auto* c = app->add_option("--corpus", corpus, "Corpus TSV file")->check(CLI::ExistingFile);
    auto* s = app->add_option("--synthetic", synthetic, "Generate a synthetic corpus with N segments instead");
    c->excludes(s);
    app->add_option("--corpus-seed", corpus_seed, "Seed of the synthetic corpus (default: --seed)");
    app->add_option("--langs", langs, "Language pair, e.g. de-en (default src-tgt)");
    app->add_option("--source-col", source, "Source column index (default 0)");
    app->add_option("--hypothesis-col", hypothesis, "Hypothesis column index (default 1)");
    app->add_option("--post-edit-col", post_edit, "Post-edit column index, -1 for none (default 2)");
    app->add_option("--reference-col", reference, "Reference column index, -1 for none (default 3)");
    app->add_option("--group-col", group, "Group key column joining multi-hypothesis rows (default none)");
    app->add_option("--target-lang-col", target_lang, "Per-row target language column (default none)");
    app->add_option("--origin-col", origin, "Hypothesis origin column (default none)");
    app->add_flag("--skip-malformed", skip_malformed, "Skip and count bad rows instead of failing");
  }

  bool given() const { return !corpus.empty() || synthetic.has_value(); }

  void apply(RunConfig& c, std::uint64_t seed) const {
    if (synthetic) {
      SyntheticParams p;
      p.segments = *synthetic;
      p.seed = corpus_seed.value_or(seed);
      c.synthetic = p;
      c.corpus_path.clear();
    } else if (!corpus.empty()) {
      c.corpus_path = corpus;
      c.synthetic.reset();
    }
    apply(c.ingest);
  }

  void apply(IngestOptions& o) const {
    if (!langs.empty()) o.langs = LangPair::parse(langs);
    auto& s = o.schema;
    for (auto [flag, field] : {std::pair{&source, &s.source}, {&hypothesis, &s.hypothesis}, {&post_edit, &s.post_edit},
                               {&reference, &s.reference}, {&group, &s.group}, {&target_lang, &s.target_lang},
                               {&origin, &s.origin}})
      if (*flag) *field = **flag;
    if (skip_malformed) o.skip_malformed = true;
  }
};

struct RunFlags {
  std::string config;
  std::string policy;
  std::optional<std::uint64_t> seed;
  std::vector<double> checkpoints;
  std::optional<double> effort;
  std::optional<double> tau_close, tau_sanity, learning_rate;
  std::optional<std::size_t> warmup, rescore_interval, random_seeds;
  std::string embeddings;
  CorpusFlags corpus;

  void add(CLI::App* app, bool with_seeds) {
    app->add_option("--config", config, "Run configuration JSON; flags override it")->check(CLI::ExistingFile);
    corpus.add(app);
    app->add_option("--policy", policy, "estimator, random or oracle (default estimator)")
        ->check(CLI::IsMember({"estimator", "random", "oracle"}));
    app->add_option("--seed", seed, "Seed for random draws, warmup and the synthetic corpus");
    app->add_option("--checkpoints", checkpoints, "Effort checkpoints in percent (default 20,30,...,80)")
        ->delimiter(',');
    app->add_option("--effort", effort, "Stop after this percent of the corpus (default 100)");
    app->add_option("--tau-close", tau_close, "Auto-close threshold on predicted TER (default off)");
    app->add_option("--tau-sanity", tau_sanity, "Sanity flag threshold (default 0.35)");
    app->add_option("--warmup", warmup, "Post-edits before the estimator ranks (default 25)");
    app->add_option("--rescore-interval", rescore_interval, "Rescore after every k post-edits (default 1)");
    app->add_option("--learning-rate", learning_rate, "AdaGrad step size (default 0.1)");
    app->add_option("--embeddings", embeddings, "Embedding file for the optional feature block")
        ->check(CLI::ExistingFile);
    if (with_seeds) app->add_option("--random-seeds", random_seeds, "Random runs averaged per comparison (default 10)");
  }

  RunConfig build(bool need_seed) const {
    RunConfig c;
    bool seed_from_config = false;
    if (!config.empty()) {
      c = RunConfig::load(config);
      std::ifstream in(config);
      seed_from_config = nlohmann::json::parse(in).contains("seed");
    }
    if (seed) c.seed = *seed;
    else if (need_seed && !seed_from_config) throw CLI::RequiredError("--seed");
    corpus.apply(c, c.seed);
    if (c.corpus_path.empty() && !c.synthetic) throw CLI::RequiredError("--corpus or --synthetic");
    if (!policy.empty()) c.policy = Policy::parse_kind(policy);
    if (!checkpoints.empty()) c.checkpoints = checkpoints;
    if (effort) c.effort_pct = *effort;
    if (tau_close) c.scheduler.tau_close = *tau_close;
    if (tau_sanity) c.scheduler.tau_sanity = *tau_sanity;
    if (warmup) c.scheduler.warmup = *warmup;
    if (rescore_interval) c.scheduler.rescore_interval = *rescore_interval;
    if (learning_rate) c.learner.learning_rate = *learning_rate;
    if (random_seeds) c.random_seeds = *random_seeds;
    if (!embeddings.empty()) c.embeddings_path = embeddings;
    return RunConfig::from_json(c.to_json());
  }
};

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << body;
  if (!out.flush()) throw Error("cannot write " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int cmd_ingest(const CorpusFlags& flags, std::optional<std::uint64_t> seed, const fs::path& out_dir,
               std::ostream& out) {
  if (!flags.given()) throw CLI::RequiredError("--corpus or --synthetic");
  nlohmann::ordered_json info;
  Corpus corpus;
  if (flags.synthetic) {
    if (!seed && !flags.corpus_seed) throw CLI::RequiredError("--seed");
    SyntheticParams p;
    p.segments = *flags.synthetic;
    p.seed = flags.corpus_seed.value_or(seed.value_or(0));
    corpus = make_synthetic_corpus(p);
    info["generator"] = p.to_json();
    info["segments"] = corpus.size();
  } else {
    IngestOptions opts;
    flags.apply(opts);
    IngestReport report;
    corpus = ingest_corpus(flags.corpus, opts, &report);
    info["source"] = flags.corpus;
    info["rows"] = report.rows;
    info["segments"] = report.segments;
    info["skipped"] = report.skipped;
    info["errors"] = report.errors;
  }
  info["has_references"] = corpus.has_references();
  info["has_gold_post_edits"] = corpus.has_gold_post_edits();
  fs::create_directories(out_dir);
  write_corpus_tsv(corpus, out_dir / "corpus.tsv");
  write_file(out_dir / "ingest.json", info.dump(2) + "\n");
  out << "ingested " << corpus.size() << " segments into " << (out_dir / "corpus.tsv").string() << "\n";
  return kExitOk;
}

// Two-column TSV of hypothesis and reference: one TER per line, then the mean.
int score_pairs(const fs::path& path, std::ostream& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  double sum = 0.0;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = text::chomp(line);
    if (row.empty()) continue;
    const auto cols = text::split(row, '\t');
    if (cols.size() != 2) throw ParseError("expected 2 columns (hypothesis, reference), found " + std::to_string(cols.size()), line_no);
    const auto r = metrics::tokenize(cols[1]);
    if (r.empty()) throw ParseError("empty reference", line_no);
    const double t = metrics::ter(metrics::tokenize(cols[0]), r).score;
    out << text::fixed(t) << "\n";
    sum += t;
    ++n;
  }
  if (n == 0) throw ParseError("no rows", line_no);
  out << "mean " << text::fixed(sum / static_cast<double>(n)) << "\n";
  return kExitOk;
}

int cmd_score(const CorpusFlags& flags, const std::string& pairs, const std::string& hyp, const std::string& ref,
              const std::optional<fs::path>& out_dir, std::ostream& out) {
  if (!pairs.empty()) return score_pairs(pairs, out);
  if (!hyp.empty() || !ref.empty()) {
    const auto h = metrics::tokenize(hyp);
    const auto r = metrics::tokenize(ref);
    const auto t = metrics::ter(h, r);
    out << "TER " << text::fixed(t.score) << " (" << t.edits << " edits / " << t.ref_length << " words; ins "
        << t.breakdown.insertions << ", del " << t.breakdown.deletions << ", sub " << t.breakdown.substitutions
        << ", shift " << t.breakdown.shifts << ")\n";
    return kExitOk;
  }
  if (flags.corpus.empty()) throw CLI::RequiredError("--pairs, --corpus, or --hypothesis with --reference");
  IngestOptions opts;
  flags.apply(opts);
  const Corpus corpus = ingest_corpus(flags.corpus, opts);
  if (!corpus.has_references()) throw Error("scoring needs a reference for every segment");
  std::string csv = "segment_id,hypothesis_index,ter,quality\n";
  for (const auto& seg : corpus.segments()) {
    for (std::size_t h = 0; h < seg.hypotheses.size(); ++h) {
      const double t = metrics::post_edit_ter(seg.hypotheses[h].text, *seg.reference);
      csv += std::to_string(seg.id) + "," + std::to_string(h) + "," + text::fixed(t) + "," +
             text::fixed(std::max(0.0, 100.0 * (1.0 - t))) + "\n";
    }
  }
  const double q = metrics::corpus_quality(corpus);
  out << "segments " << corpus.size() << ", corpus quality " << text::fixed(q, 4) << "\n";
  if (out_dir) {
    fs::create_directories(*out_dir);
    write_file(*out_dir / "scores.csv", csv);
  }
  return kExitOk;
}

int cmd_simulate(const RunFlags& flags, const fs::path& out_dir, std::ostream& out) {
  const RunConfig config = flags.build(true);
  const Corpus corpus = load_run_corpus(config);
  fs::create_directories(out_dir);
  auto journal = std::make_shared<Journal>(Journal::create(out_dir / "journal.log"));
  const auto report = simulate(corpus, config, load_run_embeddings(config), nullptr, journal);
  write_run_outputs(report, out_dir);
  out << report.label << ": " << report.events.size() << " post-edits, quality " << text::fixed(report.initial_quality, 2)
      << " -> " << text::fixed(report.curve.empty() ? report.initial_quality : report.curve.back().quality, 2) << "\n";
  for (const auto& c : report.checkpoints) out << "  " << c.pct << "%: " << text::fixed(c.quality, 4) << "\n";
  return kExitOk;
}

int cmd_compare(const std::string& config_dir, const RunFlags& flags, const std::vector<std::string>& policies,
                std::size_t threads, const fs::path& out_dir, std::ostream& out) {
  std::vector<RunConfig> configs;
  if (!config_dir.empty()) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(config_dir))
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error("no *.json run configurations in " + config_dir);
    for (const auto& f : files) configs.push_back(RunConfig::load(f));
  } else {
    const RunConfig base = flags.build(true);
    for (const auto& p : policies) {
      RunConfig c = base;
      c.policy = Policy::parse_kind(p);
      c.label.clear();
      configs.push_back(c);
    }
    if (configs.empty()) throw CLI::RequiredError("--config-dir or --policies");
  }
  const auto report = compare(configs, threads);
  write_comparison_outputs(report, out_dir);
  for (std::size_t i = 0; i < report.policies.size(); ++i) {
    const auto& p = report.policies[i];
    out << p.label << " (" << p.runs.size() << (p.runs.size() == 1 ? " run)" : " runs)");
    for (std::size_t c = 0; c < report.checkpoints.size(); ++c)
      out << "  " << report.checkpoints[c] << "%: " << text::fixed(p.checkpoint_quality[c], 2) << " ("
          << (report.delta_pct[i][c] >= 0 ? "+" : "") << text::fixed(report.delta_pct[i][c], 2) << "%)";
    out << "\n";
  }
  return kExitOk;
}

int cmd_replay(const RunFlags& flags, const std::string& journal_path, const std::string& expect,
               const std::optional<fs::path>& out_dir, std::ostream& out, std::ostream& err) {
  const RunConfig config = flags.build(true);
  Scheduler sched(load_run_corpus(config), SchedulerConfig{Policy{config.policy, config.seed}, config.scheduler,
                                                           config.learner},
                  load_run_embeddings(config));
  const auto events = read_journal(journal_path);
  replay(sched, events);
  const std::string snapshot = sched.model().snapshot();
  out << "replayed " << events.size() << " post-edits; model step " << sched.model().step();
  if (sched.has_references()) out << ", corpus quality " << text::fixed(sched.corpus_quality(), 4);
  out << "\n";
  if (out_dir) {
    fs::create_directories(*out_dir);
    write_file(*out_dir / "snapshot.json", snapshot + "\n");
  }
  if (!expect.empty()) {
    std::string archived = read_file(expect);
    while (!archived.empty() && (archived.back() == '\n' || archived.back() == '\r')) archived.pop_back();
    if (archived != snapshot) {
      err << "error: reconstructed snapshot differs from " << expect << "\n";
      return kExitRuntime;
    }
    out << "snapshot matches " << expect << "\n";
  }
  return kExitOk;
}

struct ServeFlags {
  std::string config;
  std::optional<std::string> host, data_dir, corpus, token, static_dir, embeddings, policy;
  std::optional<int> port;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau_close, tau_sanity, lease_minutes;
  std::optional<std::size_t> warmup, rescore_interval;
  CorpusFlags ingest;
};

int cmd_serve(const ServeFlags& f, std::ostream& out) {
  ServiceConfig c = f.config.empty() ? ServiceConfig{} : ServiceConfig::load(f.config);
  c.apply_env([](const char* name) { return std::getenv(name); });
  if (f.host) c.host = *f.host;
  if (f.port) c.port = *f.port;
  if (f.data_dir) c.data_dir = *f.data_dir;
  if (f.corpus) c.corpus_path = *f.corpus;
  if (f.token) c.api_token = *f.token;
  if (f.static_dir) c.static_dir = *f.static_dir;
  if (f.embeddings) c.embeddings_path = *f.embeddings;
  if (f.policy) c.scheduler.policy.kind = Policy::parse_kind(*f.policy);
  if (f.seed) c.scheduler.policy.seed = *f.seed;
  if (f.tau_close) c.scheduler.params.tau_close = *f.tau_close;
  if (f.tau_sanity) c.scheduler.params.tau_sanity = *f.tau_sanity;
  if (f.warmup) c.scheduler.params.warmup = *f.warmup;
  if (f.rescore_interval) c.scheduler.params.rescore_interval = *f.rescore_interval;
  if (f.lease_minutes) c.lease_ms = static_cast<std::int64_t>(*f.lease_minutes * 60000.0);
  f.ingest.apply(c.ingest);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  HttpService service(c);
  const int port = service.bind();
  out << "pedal serving on http://" << c.host << ":" << port << " (data in " << c.data_dir.string() << ", session "
      << (service.session().active() ? "active" : "waiting for /ingest") << ")" << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  service.run();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"pedal: active-learning prioritization of MT post-editing", "pedal"};
  app.set_version_flag("--version", kEngineVersion);
  app.require_subcommand(1);
  app.get_formatter()->column_width(40);

  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<std::string> opt_out;

  CorpusFlags ingest_flags;
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus TSV (or generate a synthetic one) and normalize it");
  ingest_flags.add(ingest);
  ingest->add_option("--seed", seed, "Seed of the synthetic corpus");
  ingest->add_option("--out", out_dir, "Output directory")->required();

  CorpusFlags score_flags;
  std::string hyp, ref, pairs;
  auto* score = app.add_subcommand("score", "TER and corpus quality of the hypotheses against references");
  score->add_option("--pairs", pairs, "Two-column TSV (hypothesis, reference): per-line TER and the mean")
      ->check(CLI::ExistingFile);
  score_flags.add(score);
  score->add_option("--hypothesis", hyp, "Score a single hypothesis string");
  score->add_option("--reference", ref, "Reference for --hypothesis");
  score->add_option("--out", opt_out, "Write scores.csv here");

  RunFlags sim_flags;
  auto* sim = app.add_subcommand("simulate", "Replay a corpus with gold post-edits under one policy");
  sim_flags.add(sim, false);
  sim->add_option("--out", out_dir, "Output directory")->required();

  RunFlags cmp_flags;
  std::string config_dir;
  std::vector<std::string> policies;
  std::size_t threads = 0;
  auto* cmp = app.add_subcommand("compare", "Run several policies on one corpus and tabulate the gains");
  cmp->add_option("--config-dir", config_dir, "Directory of run configuration JSON files")
      ->check(CLI::ExistingDirectory);
  cmp_flags.add(cmp, true);
  cmp->add_option("--policies", policies, "Policies to compare without --config-dir")->delimiter(',');
  cmp->add_option("--threads", threads, "Worker threads (default: hardware concurrency)");
  cmp->add_option("--out", out_dir, "Output directory")->required();

  ServeFlags serve_flags;
  auto* serve = app.add_subcommand("serve", "Run the post-editing HTTP service");
  serve->add_option("--config", serve_flags.config, "Service configuration JSON")->check(CLI::ExistingFile);
  serve->add_option("--host", serve_flags.host, "Bind address (default 127.0.0.1, env PEDAL_HOST)");
  serve->add_option("--port", serve_flags.port, "Port, 0 for any free port (default 8080, env PEDAL_PORT)");
  serve->add_option("--data-dir,--out", serve_flags.data_dir,
                    "Journal and uploaded corpus directory (default pedal-data, env PEDAL_DATA_DIR)");
  serve->add_option("--corpus", serve_flags.corpus, "Corpus TSV to serve (env PEDAL_CORPUS)");
  serve->add_option("--token", serve_flags.token, "Static API token (env PEDAL_API_TOKEN)");
  serve->add_option("--static-dir", serve_flags.static_dir, "Workbench assets served at / (env PEDAL_STATIC_DIR)");
  serve->add_option("--embeddings", serve_flags.embeddings, "Embedding file (env PEDAL_EMBEDDINGS)");
  serve->add_option("--policy", serve_flags.policy, "estimator, random or oracle (default estimator)")
      ->check(CLI::IsMember({"estimator", "random", "oracle"}));
  serve->add_option("--seed", serve_flags.seed, "Seed for random draws and warmup (default 0)");
  serve->add_option("--tau-close", serve_flags.tau_close, "Auto-close threshold (default off)");
  serve->add_option("--tau-sanity", serve_flags.tau_sanity, "Sanity flag threshold (default 0.35)");
  serve->add_option("--warmup", serve_flags.warmup, "Warmup post-edits (default 25)");
  serve->add_option("--rescore-interval", serve_flags.rescore_interval, "Rescore every k post-edits (default 1)");
  serve->add_option("--lease-minutes", serve_flags.lease_minutes, "Claim timeout (default 30)");
  serve->add_option("--langs", serve_flags.ingest.langs, "Language pair of the corpus (default src-tgt)");
  serve->add_flag("--skip-malformed", serve_flags.ingest.skip_malformed, "Skip bad corpus rows");

  RunFlags replay_flags;
  std::string journal, expect;
  auto* rep = app.add_subcommand("replay", "Rebuild the model from a journal and the corpus it was recorded on");
  rep->add_option("--journal", journal, "Journal file")->required()->check(CLI::ExistingFile);
  replay_flags.add(rep, false);
  rep->add_option("--expect-snapshot", expect, "Fail unless the rebuilt snapshot equals this file")
      ->check(CLI::ExistingFile);
  rep->add_option("--out", opt_out, "Write snapshot.json here");

  std::string run_dir;
  auto* report = app.add_subcommand("report", "Plot quality against effort from a simulate or compare directory");
  report->add_option("--run-dir", run_dir, "Output directory of simulate or compare")
      ->required()
      ->check(CLI::ExistingDirectory);
  report->add_option("--out", out_dir, "Directory for quality_vs_effort.svg")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    if (!app.get_subcommands().empty()) err << app.get_subcommands().front()->help();
    else err << app.help();
    return kExitUsage;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_flags, seed, out_dir, out);
    if (*score) return cmd_score(score_flags, pairs, hyp, ref, opt_out ? std::optional<fs::path>(*opt_out) : std::nullopt, out);
    if (*sim) return cmd_simulate(sim_flags, out_dir, out);
    if (*cmp) return cmd_compare(config_dir, cmp_flags, policies, threads, out_dir, out);
    if (*serve) return cmd_serve(serve_flags, out);
    if (*rep)
      return cmd_replay(replay_flags, journal, expect, opt_out ? std::optional<fs::path>(*opt_out) : std::nullopt, out,
                        err);
    if (*report) {
      out << "wrote " << plot_run_directory(run_dir, out_dir).string() << "\n";
      return kExitOk;
    }
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace pedal
