#include "pedal/simulator.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <thread>

#include "pedal/config.h"
#include "pedal/error.h"
#include "pedal/report.h"
#include "pedal/version.h"

namespace pedal {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

double pct_of(std::size_t events, std::size_t n) {
  return 100.0 * static_cast<double>(events) / static_cast<double>(n);
}

// Quality after `events` post-edits; runs that drained early hold their last value.
double quality_at(const RunReport& r, std::size_t events) {
  if (events == 0 || r.curve.empty()) return r.initial_quality;
  return r.curve[std::min(events, r.curve.size()) - 1].quality;
}

std::vector<CurvePoint> mean_curve(const std::vector<RunReport>& runs) {
  std::size_t len = 0;
  for (const auto& r : runs) len = std::max(len, r.curve.size());
  std::vector<CurvePoint> out(len);
  for (std::size_t i = 0; i < len; ++i) {
    double q = 0.0;
    for (const auto& r : runs) q += quality_at(r, i + 1);
    out[i] = {i + 1, pct_of(i + 1, runs.front().corpus_size), q / static_cast<double>(runs.size())};
  }
  return out;
}

}  // namespace

std::string RunConfig::display_label() const { return label.empty() ? std::string(to_string(policy)) : label; }

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["label"] = display_label();
  if (synthetic) j["synthetic"] = synthetic->to_json();
  else j["corpus"] = corpus_path.string();
  j["ingest"] = pedal::to_json(ingest);
  j["embeddings"] = embeddings_path.empty() ? json(nullptr) : json(embeddings_path.string());
  j["policy"] = to_string(policy);
  j["seed"] = seed;
  j["random_seeds"] = random_seeds;
  j["checkpoints"] = checkpoints;
  j["effort_pct"] = effort_pct;
  j["scheduler"] = pedal::to_json(scheduler);
  j["learner"] = pedal::to_json(learner);
  return j;
}

RunConfig RunConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ParseError("run configuration must be a JSON object");
  RunConfig c;
  try {
    c.label = j.value("label", std::string());
    if (j.contains("synthetic")) c.synthetic = SyntheticParams::from_json(j.at("synthetic"));
    if (j.contains("corpus")) c.corpus_path = resolve(j.at("corpus").get<std::string>(), base_dir);
    if (!c.synthetic && c.corpus_path.empty()) throw ParseError("run configuration needs 'corpus' or 'synthetic'");
    if (j.contains("ingest")) c.ingest = ingest_options_from_json(j.at("ingest"));
    if (j.contains("embeddings") && !j.at("embeddings").is_null())
      c.embeddings_path = resolve(j.at("embeddings").get<std::string>(), base_dir);
    if (j.contains("policy")) c.policy = Policy::parse_kind(j.at("policy").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.random_seeds = j.value("random_seeds", c.random_seeds);
    if (j.contains("checkpoints")) c.checkpoints = j.at("checkpoints").get<std::vector<double>>();
    c.effort_pct = j.value("effort_pct", c.effort_pct);
    if (j.contains("scheduler")) c.scheduler = scheduler_params_from_json(j.at("scheduler"));
    if (j.contains("learner")) c.learner = learner_params_from_json(j.at("learner"));
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad run configuration: ") + e.what());
  }
  if (c.random_seeds == 0) throw ParseError("random_seeds must be at least 1");
  if (!(c.effort_pct > 0.0 && c.effort_pct <= 100.0)) throw ParseError("effort_pct must be in (0, 100]");
  for (double p : c.checkpoints)
    if (!(p > 0.0 && p <= 100.0)) throw ParseError("checkpoints must lie in (0, 100]");
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

nlohmann::ordered_json RunReport::to_json() const {
  ordered_json j;
  j["engine_version"] = engine_version;
  j["config"] = config;
  j["label"] = label;
  j["policy"] = to_string(policy);
  j["seed"] = seed;
  j["corpus_size"] = corpus_size;
  j["initial_quality"] = initial_quality;
  j["events"] = events.size();
  ordered_json cps = ordered_json::array();
  for (const auto& c : checkpoints) cps.push_back({{"pct", c.pct}, {"events", c.events}, {"quality", c.quality}});
  j["checkpoints"] = cps;
  j["final_quality"] = curve.empty() ? initial_quality : curve.back().quality;
  j["prequential"] = pedal::to_json(prequential);
  j["sanity_flags"] = flags.size();
  j["final_counts"] = {{"pending", final_counts.pending},
                       {"in_progress", final_counts.in_progress},
                       {"post_edited", final_counts.post_edited},
                       {"auto_closed", final_counts.auto_closed}};
  return j;
}

double delta_pct(double proposed, double baseline) {
  if (baseline == 0.0) throw Error("relative change against a zero baseline");
  return (proposed - baseline) / baseline * 100.0;
}

std::size_t checkpoint_events(double pct, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(pct * static_cast<double>(n) / 100.0));
}

Corpus load_run_corpus(const RunConfig& config) {
  if (config.synthetic) return make_synthetic_corpus(*config.synthetic);
  return ingest_corpus(config.corpus_path, config.ingest);
}

std::shared_ptr<const EmbeddingTable> load_run_embeddings(const RunConfig& config) {
  if (config.embeddings_path.empty()) return nullptr;
  return std::make_shared<const EmbeddingTable>(EmbeddingTable::load(config.embeddings_path));
}

RunReport simulate(const Corpus& corpus, const RunConfig& config, std::shared_ptr<const EmbeddingTable> embeddings,
                   std::shared_ptr<TerMemo> memo, std::shared_ptr<Journal> journal) {
  if (!corpus.has_references()) throw Error("simulation needs a reference for every segment");
  if (!corpus.has_gold_post_edits()) throw Error("simulation needs a gold post-edit for every hypothesis");

  SchedulerConfig sc{Policy{config.policy, config.seed}, config.scheduler, config.learner};
  Scheduler sched(corpus, sc, std::move(embeddings), std::move(memo));
  if (journal) sched.attach_journal(journal);

  const std::size_t n = corpus.size();
  RunReport report;
  report.engine_version = kEngineVersion;
  report.config = config.to_json();
  report.label = config.display_label();
  report.policy = config.policy;
  report.seed = config.seed;
  report.corpus_size = n;
  report.initial_quality = sched.corpus_quality();

  const std::size_t budget = checkpoint_events(config.effort_pct, n);
  while (sched.completed() < budget) {
    const auto a = sched.next("simulator", static_cast<std::int64_t>(sched.completed() + 1));
    if (!a) break;
    const auto& gold = sched.corpus()[a->segment_id].gold_post_edits[a->hypothesis_index];
    auto done = sched.complete(a->segment_id, *gold, "simulator", static_cast<std::int64_t>(sched.completed() + 1));
    report.events.push_back(std::move(done.event));
    report.curve.push_back({sched.completed(), pct_of(sched.completed(), n), sched.corpus_quality()});
  }

  for (double pct : config.checkpoints) {
    const std::size_t e = checkpoint_events(pct, n);
    report.checkpoints.push_back({pct, e, quality_at(report, e)});
  }
  report.prequential = prequential_stats(sched.model().prequential_log());
  report.flags = sched.flags();
  report.final_counts = sched.counts();
  report.snapshot = sched.model().snapshot();
  return report;
}

RunReport simulate(const RunConfig& config) {
  return simulate(load_run_corpus(config), config, load_run_embeddings(config));
}

const PolicySummary& ComparisonReport::find(PolicyKind kind) const {
  for (const auto& p : policies)
    if (p.policy == kind) return p;
  throw NotFoundError("comparison has no " + std::string(to_string(kind)) + " policy");
}

nlohmann::ordered_json ComparisonReport::to_json() const {
  ordered_json j;
  j["engine_version"] = engine_version;
  j["corpus_size"] = corpus_size;
  j["initial_quality"] = initial_quality;
  j["checkpoints"] = checkpoints;
  j["baseline"] = policies.empty() ? std::string() : policies[baseline].label;
  ordered_json ps = ordered_json::array();
  for (std::size_t i = 0; i < policies.size(); ++i) {
    const auto& p = policies[i];
    ordered_json seeds = ordered_json::array();
    for (const auto& r : p.runs) seeds.push_back(r.seed);
    ps.push_back({{"label", p.label},
                  {"policy", to_string(p.policy)},
                  {"seeds", seeds},
                  {"config", p.runs.front().config},
                  {"quality", p.checkpoint_quality},
                  {"delta_pct", delta_pct[i]},
                  {"prequential", pedal::to_json(p.prequential)}});
  }
  j["policies"] = ps;
  return j;
}

ComparisonReport compare(const std::vector<RunConfig>& configs, std::size_t threads) {
  if (configs.empty()) throw Error("nothing to compare");
  return compare(load_run_corpus(configs.front()), configs, load_run_embeddings(configs.front()), threads);
}

ComparisonReport compare(const Corpus& corpus, const std::vector<RunConfig>& configs,
                         std::shared_ptr<const EmbeddingTable> embeddings, std::size_t threads) {
  if (configs.empty()) throw Error("nothing to compare");
  const auto& first = configs.front();
  for (const auto& c : configs) {
    if (c.checkpoints != first.checkpoints) throw Error("compared runs must share checkpoints");
    if (c.corpus_path != first.corpus_path || c.synthetic.has_value() != first.synthetic.has_value() ||
        (c.synthetic && c.synthetic->to_json() != first.synthetic->to_json()) ||
        c.embeddings_path != first.embeddings_path)
      throw Error("compared runs must share one corpus");
  }

  struct Job {
    std::size_t policy;
    RunConfig config;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const std::size_t runs = configs[i].policy == PolicyKind::Random ? configs[i].random_seeds : 1;
    for (std::size_t s = 0; s < runs; ++s) {
      RunConfig c = configs[i];
      c.seed = configs[i].seed + s;
      jobs.push_back({i, std::move(c)});
    }
  }

  auto memo = std::make_shared<TerMemo>();
  std::vector<RunReport> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> cursor{0};
  auto worker = [&] {
    for (std::size_t k; (k = cursor.fetch_add(1)) < jobs.size();) {
      try {
        results[k] = simulate(corpus, jobs[k].config, embeddings, memo);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  ComparisonReport out;
  out.engine_version = kEngineVersion;
  out.checkpoints = first.checkpoints;
  out.corpus_size = corpus.size();
  out.initial_quality = results.front().initial_quality;
  out.policies.resize(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    out.policies[i].label = configs[i].display_label();
    out.policies[i].policy = configs[i].policy;
  }
  for (std::size_t k = 0; k < jobs.size(); ++k) out.policies[jobs[k].policy].runs.push_back(std::move(results[k]));

  for (auto& p : out.policies) {
    p.checkpoint_quality.assign(out.checkpoints.size(), 0.0);
    for (const auto& r : p.runs)
      for (std::size_t c = 0; c < out.checkpoints.size(); ++c) p.checkpoint_quality[c] += r.checkpoints[c].quality;
    for (double& q : p.checkpoint_quality) q /= static_cast<double>(p.runs.size());
    p.mean_curve = mean_curve(p.runs);
    p.prequential = p.runs.front().prequential;
  }

  for (std::size_t i = 0; i < out.policies.size(); ++i) {
    if (out.policies[i].policy == PolicyKind::Random) {
      out.baseline = i;
      break;
    }
  }
  const auto& base = out.policies[out.baseline].checkpoint_quality;
  for (const auto& p : out.policies) {
    std::vector<double> d(out.checkpoints.size());
    for (std::size_t c = 0; c < d.size(); ++c)
      d[c] = delta_pct(p.checkpoint_quality[c], base[c]);
    out.delta_pct.push_back(std::move(d));
  }
  return out;
}

}  // namespace pedal
