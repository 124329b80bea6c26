#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pedal/corpus.h"
#include "pedal/features.h"
#include "pedal/journal.h"
#include "pedal/learner.h"

namespace pedal {

enum class PolicyKind { Estimator, Random, Oracle };

struct Policy {
  PolicyKind kind = PolicyKind::Estimator;
  std::uint64_t seed = 0;

  static PolicyKind parse_kind(std::string_view name);
};

std::string_view to_string(PolicyKind kind);

struct SchedulerParams {
  std::optional<double> tau_close;  // auto-close disabled when absent
  double tau_sanity = 0.35;
  std::size_t warmup = 25;
  std::size_t rescore_interval = 1;
};

struct SchedulerConfig {
  Policy policy;
  SchedulerParams params;
  LearnerParams learner;
};

struct SanityFlag {
  std::uint64_t seq = 0;
  SegmentId segment_id = 0;
  std::string editor_id;
  double blind_prediction = 0.0;
  double realized_ter = 0.0;
  double discrepancy = 0.0;
  double threshold = 0.0;
};

struct Assignment {
  SegmentId segment_id = 0;
  std::size_t hypothesis_index = 0;
  double predicted_ter = 0.0;  // model estimate for the designated hypothesis
  double priority = 0.0;       // queue key at serve time
};

struct QueueCounts {
  std::size_t pending = 0;
  std::size_t in_progress = 0;
  std::size_t post_edited = 0;
  std::size_t auto_closed = 0;

  std::size_t total() const { return pending + in_progress + post_edited + auto_closed; }
};

struct Completion {
  PostEditEvent event;
  std::optional<SanityFlag> flag;
  std::vector<SegmentId> auto_closed;
  std::size_t pending = 0;
};

/// Thread-safe memo of TER over raw string pairs. Runs over the same corpus
/// share one to avoid recomputing shift searches.
class TerMemo {
 public:
  double post_edit_ter(std::string_view hypothesis, std::string_view edited);
  double quality(std::string_view current_text, std::string_view reference);

 private:
  std::mutex mu_;
  std::unordered_map<std::string, double> scores_;
};

/// Priority queue plus estimator, advanced as one state machine.
///
/// Estimator policy keys every pending segment by the largest predicted TER
/// over its hypotheses and designates the hypothesis with the smallest one
/// for editing. Random draws uniformly from pending segments with a
/// counter-based generator keyed by (seed, completed edits, open claims), so
/// the draw depends only on queue state and replays identically. Oracle keys
/// by the true TER of the best hypothesis against the reference. Ties go to
/// the lowest segment id. For the first `warmup` post-edits the Estimator
/// policy draws like Random and neither auto-close nor sanity flags fire.
///
/// Not synchronized; callers serialize access.
class Scheduler {
 public:
  Scheduler(Corpus corpus, SchedulerConfig config, std::shared_ptr<const EmbeddingTable> embeddings = nullptr,
            std::shared_ptr<TerMemo> memo = nullptr);

  /// Serves the next segment, or nullopt when nothing is pending. A named
  /// editor holding a claim gets the same assignment back.
  std::optional<Assignment> next(std::string_view editor_id = {}, std::int64_t now_ms = 0);

  /// Claims a specific pending segment (journal replay).
  Assignment claim(SegmentId id, std::size_t hypothesis_index, std::string_view editor_id = {},
                   std::int64_t now_ms = 0);

  /// Returns an in-progress segment to the queue.
  void release(SegmentId id);
  /// Releases claims older than timeout_ms.
  std::vector<SegmentId> release_expired(std::int64_t now_ms, std::int64_t timeout_ms);

  /// Accepts a post-edit: journals it, trains one step, rescores and
  /// applies auto-close. The journal write happens before any state change.
  Completion complete(SegmentId id, std::string edited_text, std::string editor_id, std::int64_t wall_time_ms);

  /// Closes every pending segment whose designated hypothesis is predicted
  /// below tau. Inactive during warmup.
  std::vector<SegmentId> auto_close(double tau);

  /// Recomputes all pending priority keys from the current model, then
  /// applies auto-close when configured. Returns the closed ids.
  std::vector<SegmentId> rescore();

  void attach_journal(std::shared_ptr<Journal> journal);

  /// Replaces the estimator (layout must match) and rescores.
  std::vector<SegmentId> set_model(OnlineRegressor model);

  const Corpus& corpus() const { return corpus_; }
  const FeatureLayout& layout() const { return layout_; }
  const OnlineRegressor& model() const { return model_; }
  const SchedulerConfig& config() const { return config_; }
  const FeatureVector& features(SegmentId id, std::size_t hypothesis) const { return features_[id][hypothesis]; }
  const std::vector<SanityFlag>& flags() const { return flags_; }
  std::size_t completed() const { return completed_; }
  std::size_t rescore_count() const { return rescores_; }
  QueueCounts counts() const;
  bool in_warmup() const { return model_.step() < config_.params.warmup; }

  /// Latest priority key and per-hypothesis predictions of a segment.
  double priority(SegmentId id) const { return keys_[id]; }
  const std::vector<double>& predictions(SegmentId id) const { return predictions_[id]; }
  std::optional<std::pair<std::string, std::int64_t>> claim_of(SegmentId id) const;

  /// Pending ids in service order for the deterministic policies; by id for
  /// Random.
  std::vector<SegmentId> queue_order() const;

  bool has_references() const { return has_references_; }
  /// Mean corpus quality (100 - TER) of the current texts. Requires references.
  double corpus_quality() const;

  /// Throws StateError if the state counts or segment invariants are broken.
  void check_invariants() const;

 private:
  struct Claim {
    std::size_t hypothesis;
    std::string editor;
    std::int64_t claimed_at;
  };

  Assignment make_assignment(SegmentId id) const;
  Assignment start(SegmentId id, std::size_t hypothesis, std::string_view editor, std::int64_t now_ms);
  void score_segment(SegmentId id);
  void set_designated(SegmentId id, std::size_t hypothesis);
  SegmentId draw_random() const;

  Corpus corpus_;
  SchedulerConfig config_;
  std::shared_ptr<const EmbeddingTable> embeddings_;
  std::shared_ptr<TerMemo> memo_;
  FeatureLayout layout_;
  OnlineRegressor model_;
  std::shared_ptr<Journal> journal_;

  std::vector<std::vector<FeatureVector>> features_;
  std::vector<std::vector<double>> predictions_;
  std::vector<double> keys_;
  std::vector<std::vector<double>> oracle_ter_;
  std::vector<std::vector<double>> hyp_quality_;
  std::vector<double> quality_;
  bool has_references_ = false;

  std::set<SegmentId> pending_;
  std::map<SegmentId, Claim> claims_;
  std::vector<SanityFlag> flags_;
  std::size_t completed_ = 0;
  std::size_t rescores_ = 0;
};

/// Re-feeds journaled post-edits to a scheduler built with the same corpus
/// and configuration. Throws when a recomputed blind prediction disagrees
/// with the journal at its six-decimal precision.
void replay(Scheduler& scheduler, std::span<const PostEditEvent> events);

}  // namespace pedal
