#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pedal/corpus.h"
#include "pedal/learner.h"
#include "pedal/metrics.h"
#include "pedal/scheduler.h"
#include "pedal/synthetic.h"

namespace pedal {

/// One simulated post-editing run: the scheduler serves segments and the gold
/// post-edit of the served hypothesis is fed back as the editor's work.
struct RunConfig {
  std::string label;  // defaults to the policy name
  std::filesystem::path corpus_path;
  IngestOptions ingest;
  std::optional<SyntheticParams> synthetic;  // used instead of corpus_path
  std::filesystem::path embeddings_path;
  PolicyKind policy = PolicyKind::Estimator;
  std::uint64_t seed = 1;
  std::size_t random_seeds = 10;  // Random runs per comparison
  std::vector<double> checkpoints{20, 30, 40, 50, 60, 70, 80};
  double effort_pct = 100;  // stop after this share of the corpus
  SchedulerParams scheduler;
  LearnerParams learner;

  std::string display_label() const;
  nlohmann::ordered_json to_json() const;
  /// Relative corpus and embedding paths resolve against base_dir.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
};

struct CurvePoint {
  std::size_t events = 0;
  double pct_post_edited = 0.0;
  double quality = 0.0;
};

struct CheckpointValue {
  double pct = 0.0;
  std::size_t events = 0;
  double quality = 0.0;
};

struct RunReport {
  std::string engine_version;
  nlohmann::ordered_json config;
  std::string label;
  PolicyKind policy = PolicyKind::Estimator;
  std::uint64_t seed = 0;
  std::size_t corpus_size = 0;
  double initial_quality = 0.0;
  std::vector<CurvePoint> curve;  // one row per completed post-edit
  std::vector<CheckpointValue> checkpoints;
  EvalStats prequential;
  std::vector<PostEditEvent> events;
  std::vector<SanityFlag> flags;
  QueueCounts final_counts;
  std::string snapshot;

  nlohmann::ordered_json to_json() const;
};

/// (proposed - baseline) / baseline * 100.
double delta_pct(double proposed, double baseline);

/// Events needed to reach pct percent of n segments: ceil(pct * n / 100).
std::size_t checkpoint_events(double pct, std::size_t n);

Corpus load_run_corpus(const RunConfig& config);
std::shared_ptr<const EmbeddingTable> load_run_embeddings(const RunConfig& config);

/// Runs one simulation. The journal, when given, is written as the run goes.
RunReport simulate(const Corpus& corpus, const RunConfig& config,
                   std::shared_ptr<const EmbeddingTable> embeddings = nullptr,
                   std::shared_ptr<TerMemo> memo = nullptr, std::shared_ptr<Journal> journal = nullptr);
RunReport simulate(const RunConfig& config);

struct PolicySummary {
  std::string label;
  PolicyKind policy = PolicyKind::Estimator;
  std::vector<RunReport> runs;  // one per seed
  std::vector<double> checkpoint_quality;  // mean over runs
  std::vector<CurvePoint> mean_curve;
  EvalStats prequential;  // of the first run
};

struct ComparisonReport {
  std::string engine_version;
  std::vector<double> checkpoints;
  std::size_t corpus_size = 0;
  double initial_quality = 0.0;
  std::vector<PolicySummary> policies;
  std::size_t baseline = 0;  // index of the first Random policy, else 0
  /// (proposed - baseline) / baseline * 100 per policy and checkpoint.
  std::vector<std::vector<double>> delta_pct;

  const PolicySummary& find(PolicyKind kind) const;
  nlohmann::ordered_json to_json() const;
};

/// Runs every configuration over one shared corpus. Random configurations
/// expand to random_seeds runs with seeds seed, seed+1, ...; the others run
/// once. All configurations must name the same corpus and checkpoints.
ComparisonReport compare(const std::vector<RunConfig>& configs, std::size_t threads = 0);
ComparisonReport compare(const Corpus& corpus, const std::vector<RunConfig>& configs,
                         std::shared_ptr<const EmbeddingTable> embeddings = nullptr, std::size_t threads = 0);

}  // namespace pedal
