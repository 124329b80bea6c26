#include "pedal/scheduler.h"

#include <algorithm>
#include <cmath>

#include "pedal/error.h"
#include "pedal/metrics.h"
#include "pedal/text.h"

namespace pedal {

PolicyKind Policy::parse_kind(std::string_view name) {
  if (name == "estimator") return PolicyKind::Estimator;
  if (name == "random") return PolicyKind::Random;
  if (name == "oracle") return PolicyKind::Oracle;
  throw Error("unknown policy '" + std::string(name) + "' (expected estimator, random or oracle)");
}

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Estimator: return "estimator";
    case PolicyKind::Random: return "random";
    case PolicyKind::Oracle: return "oracle";
  }
  return "?";
}

double TerMemo::post_edit_ter(std::string_view hypothesis, std::string_view edited) {
  std::string key;
  key.reserve(hypothesis.size() + edited.size() + 1);
  key.append(hypothesis).push_back('\0');
  key.append(edited);
  {
    std::lock_guard lock(mu_);
    if (auto it = scores_.find(key); it != scores_.end()) return it->second;
  }
  const double score = metrics::post_edit_ter(hypothesis, edited);
  std::lock_guard lock(mu_);
  scores_.emplace(std::move(key), score);
  return score;
}

double TerMemo::quality(std::string_view current_text, std::string_view reference) {
  if (metrics::tokenize(reference).empty()) throw Error("TER is undefined for an empty reference");
  return std::max(0.0, 100.0 * (1.0 - post_edit_ter(current_text, reference)));
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

Scheduler::Scheduler(Corpus corpus, SchedulerConfig config, std::shared_ptr<const EmbeddingTable> embeddings,
                     std::shared_ptr<TerMemo> memo)
    : corpus_(std::move(corpus)),
      config_(config),
      embeddings_(std::move(embeddings)),
      memo_(memo ? std::move(memo) : std::make_shared<TerMemo>()),
      layout_(corpus_.target_languages(),
              embeddings_ ? std::optional<std::size_t>(embeddings_->dim()) : std::nullopt),
      model_(layout_.names(), config.learner) {
  if (corpus_.empty()) throw Error("scheduler needs a non-empty corpus");
  if (config_.params.rescore_interval == 0) throw Error("rescore interval must be at least 1");
  if (embeddings_) {
    if (auto missing = embeddings_->first_missing(corpus_)) throw LayoutError("embedding table lacks " + *missing);
  }
  has_references_ = corpus_.has_references();
  if (config_.policy.kind == PolicyKind::Oracle && !has_references_)
    throw Error("oracle policy needs a reference for every segment");

  const std::size_t n = corpus_.size();
  features_.resize(n);
  predictions_.resize(n);
  keys_.assign(n, 0.0);
  for (const auto& seg : corpus_.segments()) {
    if (seg.state != SegmentState::Pending) throw StateError("scheduler expects a fresh corpus");
    for (std::size_t h = 0; h < seg.hypotheses.size(); ++h)
      features_[seg.id].push_back(features::featurize(seg, h, layout_, embeddings_.get()));
    predictions_[seg.id].assign(seg.hypotheses.size(), 0.0);
    pending_.insert(seg.id);
  }
  if (has_references_) {
    oracle_ter_.resize(n);
    hyp_quality_.resize(n);
    quality_.resize(n);
    for (const auto& seg : corpus_.segments()) {
      for (const auto& hyp : seg.hypotheses) {
        hyp_quality_[seg.id].push_back(memo_->quality(hyp.text, *seg.reference));
        oracle_ter_[seg.id].push_back(memo_->post_edit_ter(hyp.text, *seg.reference));
      }
      quality_[seg.id] = hyp_quality_[seg.id][seg.designated];
    }
  }
  rescore();
}

void Scheduler::attach_journal(std::shared_ptr<Journal> journal) {
  if (journal && journal->last_seq() != completed_)
    throw StateError("journal ends at seq " + std::to_string(journal->last_seq()) + " but the scheduler has " +
                     std::to_string(completed_) + " completed post-edits");
  journal_ = std::move(journal);
}

std::vector<SegmentId> Scheduler::set_model(OnlineRegressor model) {
  if (model.feature_names() != layout_.names()) throw LayoutError("model layout differs from the corpus layout");
  model_ = std::move(model);
  return rescore();
}

void Scheduler::set_designated(SegmentId id, std::size_t hypothesis) {
  Segment& seg = corpus_[id];
  seg.designated = hypothesis;
  if (has_references_ && !seg.post_edit) quality_[id] = hyp_quality_[id][hypothesis];
}

void Scheduler::score_segment(SegmentId id) {
  const auto& preds = predictions_[id];
  switch (config_.policy.kind) {
    case PolicyKind::Estimator: {
      const auto best = std::min_element(preds.begin(), preds.end());
      set_designated(id, static_cast<std::size_t>(best - preds.begin()));
      keys_[id] = *std::max_element(preds.begin(), preds.end());
      break;
    }
    case PolicyKind::Random:
      set_designated(id, 0);
      keys_[id] = preds[0];
      break;
    case PolicyKind::Oracle: {
      const auto& truth = oracle_ter_[id];
      const auto best = std::min_element(truth.begin(), truth.end());
      set_designated(id, static_cast<std::size_t>(best - truth.begin()));
      keys_[id] = *best;
      break;
    }
  }
}

std::vector<SegmentId> Scheduler::rescore() {
  const PreparedModel predict(model_);
  for (SegmentId id : pending_) {
    auto& preds = predictions_[id];
    for (std::size_t h = 0; h < preds.size(); ++h) preds[h] = predict(features_[id][h]);
    score_segment(id);
  }
  ++rescores_;
  if (config_.params.tau_close) return auto_close(*config_.params.tau_close);
  return {};
}

std::vector<SegmentId> Scheduler::auto_close(double tau) {
  std::vector<SegmentId> closed;
  if (in_warmup()) return closed;
  for (SegmentId id : pending_) {
    if (predictions_[id][corpus_[id].designated] < tau) closed.push_back(id);
  }
  for (SegmentId id : closed) {
    pending_.erase(id);
    corpus_[id].state = SegmentState::AutoClosed;
  }
  return closed;
}

SegmentId Scheduler::draw_random() const {
  std::uint64_t x = splitmix64(config_.policy.seed);
  x = splitmix64(x ^ static_cast<std::uint64_t>(completed_));
  x = splitmix64(x ^ (static_cast<std::uint64_t>(claims_.size()) << 32));
  const auto index =
      static_cast<std::size_t>((static_cast<unsigned __int128>(x) * pending_.size()) >> 64);
  return *std::next(pending_.begin(), static_cast<std::ptrdiff_t>(index));
}

Assignment Scheduler::make_assignment(SegmentId id) const {
  const Segment& seg = corpus_[id];
  return {id, seg.designated, predictions_[id][seg.designated], keys_[id]};
}

Assignment Scheduler::start(SegmentId id, std::size_t hypothesis, std::string_view editor, std::int64_t now_ms) {
  Segment& seg = corpus_[id];
  pending_.erase(id);
  seg.state = SegmentState::InProgress;
  set_designated(id, hypothesis);
  claims_[id] = Claim{hypothesis, std::string(editor), now_ms};
  return make_assignment(id);
}

std::optional<Assignment> Scheduler::next(std::string_view editor_id, std::int64_t now_ms) {
  if (!editor_id.empty()) {
    for (const auto& [id, claim] : claims_)
      if (claim.editor == editor_id) return make_assignment(id);
  }
  if (pending_.empty()) return std::nullopt;

  SegmentId chosen = *pending_.begin();
  const bool random = config_.policy.kind == PolicyKind::Random ||
                      (config_.policy.kind == PolicyKind::Estimator && in_warmup());
  if (random) {
    chosen = draw_random();
  } else {
    double best = keys_[chosen];
    for (SegmentId id : pending_) {
      if (keys_[id] > best) {
        best = keys_[id];
        chosen = id;
      }
    }
  }
  return start(chosen, corpus_[chosen].designated, editor_id, now_ms);
}

Assignment Scheduler::claim(SegmentId id, std::size_t hypothesis_index, std::string_view editor_id,
                            std::int64_t now_ms) {
  if (id >= corpus_.size()) throw NotFoundError("no segment " + std::to_string(id));
  if (corpus_[id].state != SegmentState::Pending)
    throw StateError("segment " + std::to_string(id) + " is " + std::string(to_string(corpus_[id].state)) +
                     ", not Pending");
  if (hypothesis_index >= corpus_[id].hypotheses.size())
    throw Error("segment " + std::to_string(id) + " has no hypothesis " + std::to_string(hypothesis_index));
  return start(id, hypothesis_index, editor_id, now_ms);
}

void Scheduler::release(SegmentId id) {
  if (claims_.erase(id) == 0) throw StateError("segment " + std::to_string(id) + " is not in progress");
  corpus_[id].state = SegmentState::Pending;
  pending_.insert(id);
  score_segment(id);
}

std::vector<SegmentId> Scheduler::release_expired(std::int64_t now_ms, std::int64_t timeout_ms) {
  std::vector<SegmentId> expired;
  for (const auto& [id, claim] : claims_)
    if (now_ms - claim.claimed_at > timeout_ms) expired.push_back(id);
  for (SegmentId id : expired) release(id);
  return expired;
}

std::optional<std::pair<std::string, std::int64_t>> Scheduler::claim_of(SegmentId id) const {
  const auto it = claims_.find(id);
  if (it == claims_.end()) return std::nullopt;
  return std::make_pair(it->second.editor, it->second.claimed_at);
}

Completion Scheduler::complete(SegmentId id, std::string edited_text, std::string editor_id,
                               std::int64_t wall_time_ms) {
  if (id >= corpus_.size()) throw NotFoundError("no segment " + std::to_string(id));
  const auto claim = claims_.find(id);
  if (claim == claims_.end())
    throw StateError("segment " + std::to_string(id) + " is " + std::string(to_string(corpus_[id].state)) +
                     ", not InProgress");
  const std::size_t h = claim->second.hypothesis;
  Segment& seg = corpus_[id];
  const FeatureVector& x = features_[id][h];

  Completion out;
  PostEditEvent& event = out.event;
  event.seq = completed_ + 1;
  event.segment_id = id;
  event.hypothesis_index = h;
  event.editor_id = std::move(editor_id);
  event.blind_prediction = model_.predict(x);
  event.realized_target = memo_->post_edit_ter(seg.hypotheses[h].text, edited_text);
  event.edited_text = std::move(edited_text);
  event.wall_time_ms = wall_time_ms;
  if (journal_) journal_->append(event);

  const bool warm = !in_warmup();
  model_.train_step(x, event.realized_target);

  claims_.erase(claim);
  seg.state = SegmentState::PostEdited;
  seg.post_edit = PostEditRecord{h, event.edited_text, event.editor_id, event.realized_target};
  if (has_references_) quality_[id] = memo_->quality(event.edited_text, *seg.reference);
  ++completed_;

  const double discrepancy = std::abs(event.blind_prediction - event.realized_target);
  if (warm && discrepancy > config_.params.tau_sanity) {
    SanityFlag flag{event.seq,         id,          event.editor_id, event.blind_prediction,
                    event.realized_target, discrepancy, config_.params.tau_sanity};
    flags_.push_back(flag);
    out.flag = std::move(flag);
  }

  if (completed_ % config_.params.rescore_interval == 0) out.auto_closed = rescore();
  out.pending = pending_.size();
  return out;
}

QueueCounts Scheduler::counts() const {
  QueueCounts c;
  for (const auto& seg : corpus_.segments()) {
    switch (seg.state) {
      case SegmentState::Pending: ++c.pending; break;
      case SegmentState::InProgress: ++c.in_progress; break;
      case SegmentState::PostEdited: ++c.post_edited; break;
      case SegmentState::AutoClosed: ++c.auto_closed; break;
    }
  }
  return c;
}

std::vector<SegmentId> Scheduler::queue_order() const {
  std::vector<SegmentId> order(pending_.begin(), pending_.end());
  if (config_.policy.kind != PolicyKind::Random) {
    std::stable_sort(order.begin(), order.end(), [&](SegmentId a, SegmentId b) { return keys_[a] > keys_[b]; });
  }
  return order;
}

double Scheduler::corpus_quality() const {
  if (!has_references_) throw Error("corpus quality needs a reference for every segment");
  return metrics::mean_quality(quality_);
}

void Scheduler::check_invariants() const {
  const QueueCounts c = counts();
  if (c.total() != corpus_.size()) throw StateError("segment states do not add up to the corpus size");
  if (c.pending != pending_.size() || c.in_progress != claims_.size())
    throw StateError("queue bookkeeping out of sync with segment states");
  if (c.post_edited != completed_) throw StateError("post-edited count differs from completed events");
  for (const auto& seg : corpus_.segments()) seg.check_invariants();
}

void replay(Scheduler& scheduler, std::span<const PostEditEvent> events) {
  for (const auto& e : events) {
    if (e.seq != scheduler.completed() + 1)
      throw StateError("replay expected seq " + std::to_string(scheduler.completed() + 1) + ", journal has " +
                       std::to_string(e.seq));
    scheduler.claim(e.segment_id, e.hypothesis_index, e.editor_id, e.wall_time_ms);
    const auto done = scheduler.complete(e.segment_id, e.edited_text, e.editor_id, e.wall_time_ms);
    if (text::fixed(done.event.blind_prediction) != text::fixed(e.blind_prediction))
      throw StateError("replay diverged at seq " + std::to_string(e.seq) + ": blind prediction " +
                       text::fixed(done.event.blind_prediction) + " vs journaled " + text::fixed(e.blind_prediction));
  }
}

}  // namespace pedal
