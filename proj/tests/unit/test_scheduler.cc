#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "../support/fixtures.h"
#include "pedal/error.h"
#include "pedal/journal.h"
#include "pedal/metrics.h"
#include "pedal/scheduler.h"
#include "pedal/synthetic.h"

using namespace pedal;
using fixture::words;

namespace {

SchedulerConfig config(PolicyKind kind, std::size_t warmup = 0, std::uint64_t seed = 7) {
  SchedulerConfig c;
  c.policy = {kind, seed};
  c.params.warmup = warmup;
  return c;
}

Corpus small_synthetic(std::size_t n, std::uint64_t seed = 3, std::size_t hyps = 1) {
  SyntheticParams p;
  p.segments = n;
  p.seed = seed;
  p.hypotheses_per_segment = hyps;
  return make_synthetic_corpus(p);
}

// Serves and completes with the gold post-edit until `events` are done.
void drive(Scheduler& s, std::size_t events) {
  for (std::size_t i = 0; i < events; ++i) {
    const auto a = s.next();
    REQUIRE(a);
    const auto& gold = s.corpus()[a->segment_id].gold_post_edits[a->hypothesis_index];
    s.complete(a->segment_id, *gold, "ed", static_cast<std::int64_t>(i));
  }
}

}  // namespace

TEST_CASE("estimator serves the highest predicted TER first") {
  Scheduler s(fixture::corpus({{words(1), {"x"}, "x"}, {words(9), {"x"}, "x"}, {words(5), {"x"}, "x"}}),
              config(PolicyKind::Estimator));
  s.set_model(fixture::linear_model(s.layout().names(), {{"src.token_count", 0.1}}, 0.0));
  CHECK(s.predictions(0)[0] == doctest::Approx(0.1));
  CHECK(s.predictions(1)[0] == doctest::Approx(0.9));
  CHECK(s.predictions(2)[0] == doctest::Approx(0.5));
  CHECK(s.queue_order() == std::vector<SegmentId>{1, 2, 0});

  CHECK(s.next()->segment_id == 1);
}

TEST_CASE("equal keys are served by lowest id") {
  for (auto kind : {PolicyKind::Estimator, PolicyKind::Oracle}) {
    Scheduler s(fixture::corpus({{"a b", {"x y"}, "x z"}, {"a b", {"x y"}, "x z"}, {"a b", {"x y"}, "x z"}}),
                config(kind));
    std::vector<SegmentId> served;
    while (auto a = s.next()) {
      served.push_back(a->segment_id);
      s.complete(a->segment_id, "x z", "ed", 0);
    }
    CHECK(served == std::vector<SegmentId>{0, 1, 2});
  }
}

TEST_CASE("multi-hypothesis segments: key is the worst, designated is the best") {
  Scheduler s(fixture::corpus({{"a", {words(2), words(6), words(4)}, "w"}, {"a", {words(5)}, "w"}}),
              config(PolicyKind::Estimator));
  s.set_model(fixture::linear_model(s.layout().names(), {{"tgt.token_count", 0.1}}, 0.0));
  CHECK(s.priority(0) == doctest::Approx(0.6));
  CHECK(s.corpus()[0].designated == 0);
  const auto a = s.next();
  REQUIRE(a);
  CHECK(a->segment_id == 0);
  CHECK(a->hypothesis_index == 0);
  CHECK(a->predicted_ter == doctest::Approx(0.2));
  CHECK(a->priority == doctest::Approx(0.6));
}

TEST_CASE("oracle designates the hypothesis with the lowest true TER") {
  Scheduler s(fixture::corpus({{"a", {"q r s t", "a b c x", "a b c d"}, "a b c d"}, {"a", {"a q"}, "a b"}}),
              config(PolicyKind::Oracle));
  CHECK(s.corpus()[0].designated == 2);
  CHECK(s.priority(0) == 0.0);
  CHECK(s.priority(1) == doctest::Approx(0.5));
  CHECK(s.next()->segment_id == 1);
}

TEST_CASE("complete raises a sanity flag on a large discrepancy") {
  Scheduler s(fixture::corpus({{"a", {"a b c d"}, "a b c d"}, {"b", {"e f"}, "e f"}}), config(PolicyKind::Estimator));
  s.set_model(fixture::linear_model(s.layout().names(), {}, 0.10));
  s.claim(0, 0, "ann", 0);
  const auto done = s.complete(0, "a x y z", "ann", 5);
  CHECK(done.event.blind_prediction == doctest::Approx(0.10));
  CHECK(done.event.realized_target == doctest::Approx(0.75));
  REQUIRE(done.flag);
  CHECK(done.flag->discrepancy == doctest::Approx(0.65));
  CHECK(done.flag->threshold == 0.35);
  CHECK(done.flag->editor_id == "ann");
  CHECK(s.flags().size() == 1);
  CHECK(s.corpus()[0].state == SegmentState::PostEdited);
  CHECK(s.corpus()[0].post_edit->realized_ter == doctest::Approx(0.75));
}

TEST_CASE("no sanity flag during warmup or below threshold") {
  Scheduler warm(fixture::corpus({{"a", {"a b c d"}, "a b c d"}}), config(PolicyKind::Estimator, 25));
  warm.claim(0, 0);
  CHECK_FALSE(warm.complete(0, "a x y z", "ann", 0).flag);

  Scheduler s(fixture::corpus({{"a", {"a b c d"}, "a b c d"}}), config(PolicyKind::Estimator));
  s.set_model(fixture::linear_model(s.layout().names(), {}, 0.5));
  s.claim(0, 0);
  CHECK_FALSE(s.complete(0, "a x y z", "ann", 0).flag);
}

TEST_CASE("rescoring keys every pending segment with fresh predictions") {
  Scheduler s(small_synthetic(60, 5, 2), config(PolicyKind::Estimator, 5));
  drive(s, 20);
  CHECK(s.rescore_count() == 21);
  for (SegmentId id : s.queue_order()) {
    double worst = 0.0;
    for (std::size_t h = 0; h < 2; ++h) {
      const double p = s.model().predict(s.features(id, h));
      CHECK(s.predictions(id)[h] == p);
      worst = std::max(worst, p);
    }
    CHECK(s.priority(id) == worst);
  }
}

TEST_CASE("rescore interval batches rescoring") {
  auto c = config(PolicyKind::Estimator, 0);
  c.params.rescore_interval = 4;
  Scheduler s(small_synthetic(30), c);
  drive(s, 10);
  CHECK(s.rescore_count() == 1 + 2);
}

TEST_CASE("auto-close") {
  const auto rows = std::vector<fixture::Row>{{words(1), {"x"}, "x"}, {words(15), {"x"}, "x"}};
  auto model_for = [](const Scheduler& s) {
    return fixture::linear_model(s.layout().names(), {{"src.token_count", 0.02}}, 0.0, 25);
  };

  SUBCASE("threshold zero closes nothing") {
    auto c = config(PolicyKind::Estimator);
    c.params.tau_close = 0.0;
    Scheduler s(fixture::corpus(rows), c);
    CHECK(s.set_model(model_for(s)).empty());
    CHECK(s.counts().pending == 2);
  }
  SUBCASE("closes segments predicted below the threshold") {
    auto c = config(PolicyKind::Estimator, 25);
    c.params.tau_close = 0.05;
    Scheduler s(fixture::corpus(rows), c);
    CHECK(s.set_model(model_for(s)) == std::vector<SegmentId>{0});
    CHECK(s.corpus()[0].state == SegmentState::AutoClosed);
    CHECK(s.corpus()[1].state == SegmentState::Pending);
    CHECK(s.counts().auto_closed == 1);
    s.check_invariants();
  }
  SUBCASE("disabled by default") {
    Scheduler s(fixture::corpus(rows), config(PolicyKind::Estimator));
    CHECK(s.set_model(model_for(s)).empty());
    CHECK(s.counts().pending == 2);
  }
  SUBCASE("inactive during warmup") {
    auto c = config(PolicyKind::Estimator, 26);
    c.params.tau_close = 0.05;
    Scheduler s(fixture::corpus(rows), c);
    CHECK(s.set_model(model_for(s)).empty());
    CHECK(s.counts().pending == 2);
  }
}

TEST_CASE("states are conserved and no segment is served twice") {
  std::mt19937_64 rng(11);
  for (auto kind : {PolicyKind::Estimator, PolicyKind::Random, PolicyKind::Oracle}) {
    auto c = config(kind, 5);
    c.params.tau_close = 0.02;
    Scheduler s(small_synthetic(40, 9), c);
    std::set<SegmentId> completed;
    std::int64_t now = 0;
    while (true) {
      s.check_invariants();
      const std::string editor = "e" + std::to_string(rng() % 3);
      const auto a = s.next(editor, ++now);
      if (!a) break;
      if (rng() % 5 == 0) {
        s.release(a->segment_id);
        continue;
      }
      CHECK(completed.insert(a->segment_id).second);
      const auto& gold = s.corpus()[a->segment_id].gold_post_edits[a->hypothesis_index];
      s.complete(a->segment_id, *gold, editor, now);
    }
    const auto counts = s.counts();
    CHECK(counts.pending == 0);
    CHECK(counts.in_progress == 0);
    CHECK(counts.post_edited == completed.size());
    CHECK(counts.post_edited + counts.auto_closed == 40);
  }
}

TEST_CASE("random policy: same seed same order, different seeds differ") {
  auto order = [](std::uint64_t seed) {
    Scheduler s(small_synthetic(50), config(PolicyKind::Random, 0, seed));
    std::vector<SegmentId> out;
    while (auto a = s.next()) {
      out.push_back(a->segment_id);
      s.complete(a->segment_id, *s.corpus()[a->segment_id].reference, "ed", 0);
    }
    return out;
  };
  const auto a = order(1);
  CHECK(a.size() == 50);
  CHECK(a == order(1));
  CHECK(a != order(2));
  std::vector<SegmentId> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
}

TEST_CASE("estimator warmup draws exactly like the random policy") {
  Scheduler est(small_synthetic(50), config(PolicyKind::Estimator, 10, 42));
  Scheduler rnd(small_synthetic(50), config(PolicyKind::Random, 0, 42));
  for (int i = 0; i < 10; ++i) {
    CHECK(est.in_warmup());
    const auto a = est.next();
    const auto b = rnd.next();
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->segment_id == b->segment_id);
    est.complete(a->segment_id, "w", "ed", 0);
    rnd.complete(b->segment_id, "w", "ed", 0);
  }
  CHECK_FALSE(est.in_warmup());
}

TEST_CASE("queue order is invariant to a positive rescaling of the estimator") {
  Scheduler s(small_synthetic(80), config(PolicyKind::Estimator));
  const auto& names = s.layout().names();
  s.set_model(fixture::linear_model(names, {{"src.token_count", 0.01}, {"ratio.tokens", -0.05}}, 0.3));
  const auto before = s.queue_order();
  s.set_model(fixture::linear_model(names, {{"src.token_count", 0.02}, {"ratio.tokens", -0.10}}, 0.6));
  CHECK(s.queue_order() == before);
}

TEST_CASE("named editors get their claim back; anonymous callers do not") {
  Scheduler s(small_synthetic(10), config(PolicyKind::Estimator));
  const auto a = s.next("ann", 100);
  const auto again = s.next("ann", 200);
  REQUIRE(a);
  REQUIRE(again);
  CHECK(again->segment_id == a->segment_id);
  CHECK(s.claim_of(a->segment_id)->second == 100);
  const auto anon = s.next({}, 300);
  REQUIRE(anon);
  CHECK(anon->segment_id != a->segment_id);
  CHECK(s.counts().in_progress == 2);

  CHECK(s.release_expired(1000, 800) == std::vector<SegmentId>{a->segment_id});
  CHECK(s.corpus()[a->segment_id].state == SegmentState::Pending);
  CHECK(s.counts().in_progress == 1);
  s.check_invariants();
}

TEST_CASE("state errors") {
  Scheduler s(small_synthetic(5), config(PolicyKind::Estimator));
  CHECK_THROWS_AS(s.complete(0, "x", "ed", 0), StateError);
  CHECK_THROWS_AS(s.complete(99, "x", "ed", 0), NotFoundError);
  CHECK_THROWS_AS(s.claim(99, 0), NotFoundError);
  CHECK_THROWS_AS(s.claim(0, 3), Error);
  s.claim(0, 0);
  CHECK_THROWS_AS(s.claim(0, 0), StateError);
  CHECK_THROWS_AS(s.release(1), StateError);
  s.complete(0, "x", "ed", 0);
  CHECK_THROWS_AS(s.complete(0, "x", "ed", 0), StateError);
  CHECK_THROWS_AS(s.set_model(OnlineRegressor({"f"})), LayoutError);
}

TEST_CASE("cached corpus quality equals the direct computation") {
  Scheduler s(small_synthetic(40, 4, 2), config(PolicyKind::Estimator, 3));
  CHECK(s.corpus_quality() == metrics::corpus_quality(s.corpus()));
  for (int i = 0; i < 15; ++i) {
    drive(s, 1);
    CHECK(s.corpus_quality() == metrics::corpus_quality(s.corpus()));
  }
}

TEST_CASE("oracle policy requires references") {
  auto c = fixture::corpus({{"a", {"b"}, "b"}});
  Segment seg = c[0];
  seg.reference.reset();
  seg.gold_post_edits = {std::nullopt};
  CHECK_THROWS_AS(Scheduler(Corpus({seg}), config(PolicyKind::Oracle)), Error);
  Scheduler ok(Corpus({seg}), config(PolicyKind::Estimator));
  CHECK_FALSE(ok.has_references());
  CHECK_THROWS_AS(ok.corpus_quality(), Error);
}

TEST_CASE("journal replay reconstructs the exact model and queue") {
  fixture::TempDir dir;
  const auto path = dir / "journal";
  auto cfg = config(PolicyKind::Estimator, 25);
  {
    Scheduler s(small_synthetic(150, 8, 2), cfg);
    s.attach_journal(std::make_shared<Journal>(Journal::create(path)));
    drive(s, 100);

    Scheduler fresh(small_synthetic(150, 8, 2), cfg);
    const auto events = read_journal(path);
    CHECK(events.size() == 100);
    replay(fresh, events);
    CHECK(fresh.model().snapshot() == s.model().snapshot());
    CHECK(fresh.queue_order() == s.queue_order());
    CHECK(fresh.corpus_quality() == s.corpus_quality());
    CHECK(fresh.flags().size() == s.flags().size());
    for (std::size_t i = 0; i < events.size(); ++i)
      CHECK(events[i].blind_prediction == doctest::Approx(s.model().prequential_log()[i].blind_prediction).epsilon(1e-6));

    const auto a = s.next();
    const auto b = fresh.next();
    REQUIRE(a);
    REQUIRE(b);
    CHECK(a->segment_id == b->segment_id);
  }

  SUBCASE("a tampered blind prediction is detected") {
    auto events = read_journal(path);
    events[40].blind_prediction += 0.01;
    Scheduler fresh(small_synthetic(150, 8, 2), cfg);
    CHECK_THROWS_AS(replay(fresh, events), StateError);
  }
  SUBCASE("a journal can only be attached at its own position") {
    Scheduler fresh(small_synthetic(150, 8, 2), cfg);
    CHECK_THROWS_AS(fresh.attach_journal(std::make_shared<Journal>(Journal::open(path))), StateError);
  }
}
