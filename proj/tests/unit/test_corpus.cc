#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "pedal/corpus.h"
#include "pedal/error.h"
#include "pedal/journal.h"
#include "pedal/text.h"

using namespace pedal;
namespace fs = std::filesystem;

namespace {

Corpus parse(const std::string& tsv, IngestOptions opts = {}, IngestReport* rep = nullptr) {
  std::istringstream in(tsv);
  return parse_corpus(in, opts, rep);
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("pedal_test_" + name); }

PostEditEvent event(std::uint64_t seq) {
  PostEditEvent e;
  e.seq = seq;
  e.segment_id = seq * 3;
  e.hypothesis_index = 0;
  e.editor_id = "ed";
  e.blind_prediction = 0.25;
  e.realized_target = 0.5;
  e.edited_text = "text " + std::to_string(seq);
  e.wall_time_ms = 1700000000000 + static_cast<std::int64_t>(seq);
  return e;
}

}  // namespace

TEST_CASE("ingest a four-column corpus") {
  IngestOptions opts;
  opts.langs = LangPair::parse("de-en");
  IngestReport rep;
  const auto c = parse("s1\th1\tp1\tr1\ns2\th2\tp2\tr2\r\ns3\th3\tp3\tr3\n", opts, &rep);
  REQUIRE(c.size() == 3);
  CHECK(rep.segments == 3);
  CHECK(rep.rows == 3);
  for (const auto& s : c.segments()) {
    CHECK(s.state == SegmentState::Pending);
    CHECK(s.source_lang == "de");
    CHECK(s.target_lang == "en");
    CHECK(s.hypotheses.size() == 1);
  }
  CHECK(c[1].hypotheses[0].text == "h2");
  CHECK(c[1].reference == "r2");
  CHECK(c[2].gold_post_edits[0] == "p3");
  CHECK(c.has_references());
  CHECK(c.has_gold_post_edits());
}

TEST_CASE("texts are kept byte-exact") {
  const auto c = parse("  Grüße,  Welt \tHello  world.\t\t\n");
  CHECK(c[0].source_text == "  Grüße,  Welt ");
  CHECK(c[0].hypotheses[0].text == "Hello  world.");
  CHECK_FALSE(c[0].reference.has_value());
  CHECK_FALSE(c.has_references());
}

TEST_CASE("ingestion errors name the line") {
  try {
    parse("s1\th1\tp\tr\n\th2\tp\tr\n");
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse("s1\th1\tp\tr\ns2\th2\tp\n"), ParseError);
  CHECK_THROWS_AS(parse("s1\t\tp\tr\n"), ParseError);
  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_AS(parse("only-one-column\n"), ParseError);
}

TEST_CASE("skip flag drops malformed rows") {
  IngestOptions opts;
  opts.skip_malformed = true;
  IngestReport rep;
  const auto c = parse("s1\th1\tp\tr\nbad\n\th\tp\tr\ns4\th4\tp\tr\n", opts, &rep);
  CHECK(c.size() == 2);
  CHECK(rep.skipped == 2);
  CHECK(rep.errors.size() == 2);
  CHECK(c[1].id == 1);
  CHECK(c[1].source_text == "s4");
}

TEST_CASE("group key merges consecutive rows") {
  IngestOptions opts;
  opts.schema.group = 4;
  opts.schema.origin = 5;
  const auto c = parse(
      "src A\thyp 1\tpe 1\tref A\tg1\tsmt\n"
      "src A\thyp 2\tpe 2\t\tg1\tnmt\n"
      "src B\thyp 3\tpe 3\tref B\tg2\tsmt\n",
      opts);
  REQUIRE(c.size() == 2);
  CHECK(c[0].hypotheses.size() == 2);
  CHECK(c[0].hypotheses[1].origin == "nmt");
  CHECK(c[0].gold_post_edits[1] == "pe 2");
  CHECK(c[0].reference == "ref A");
  CHECK(c[1].id == 1);

  CHECK_THROWS_AS(parse("a\th\tp\tr\tg\tx\nb\th\tp\tr\tg\tx\n", opts), ParseError);
}

TEST_CASE("target language column and language pair checks") {
  IngestOptions opts;
  opts.langs = LangPair::parse("en-de");
  opts.schema.target_lang = 4;
  const auto c = parse("a\tb\tc\td\tlv\na\tb\tc\td\t\n", opts);
  CHECK(c[0].target_lang == "lv");
  CHECK(c[1].target_lang == "de");
  CHECK(c.target_languages() == std::vector<std::string>{"de", "lv"});
  CHECK_THROWS_AS(parse("a\tb\tc\td\ten\n", opts), ParseError);
  CHECK_THROWS(LangPair::parse("en-en"));
  CHECK_THROWS(LangPair::parse("english"));
}

TEST_CASE("segment invariants") {
  auto c = parse("s\th\tp\tr\n");
  Segment s = c[0];
  s.state = SegmentState::PostEdited;
  CHECK_THROWS_AS(s.check_invariants(), StateError);
  s.post_edit = PostEditRecord{0, "x", "ed", 0.1};
  CHECK_NOTHROW(s.check_invariants());
  s.state = SegmentState::AutoClosed;
  CHECK_THROWS_AS(s.check_invariants(), StateError);
  s.post_edit.reset();
  CHECK_NOTHROW(s.check_invariants());
  s.hypotheses.clear();
  CHECK_THROWS_AS(s.check_invariants(), StateError);
}

TEST_CASE("corpus file round trip") {
  const auto path = temp_file("corpus.tsv");
  IngestOptions opts;
  opts.schema.group = 4;
  const auto c = parse("a\th1\tp1\tr\t0\na\th2\tp2\tr\t0\nb\th3\tp3\tr2\t1\n", opts);
  write_corpus_tsv(c, path);
  const auto back = ingest_corpus(path, opts);
  REQUIRE(back.size() == 2);
  CHECK(back[0].hypotheses.size() == 2);
  CHECK(back[1].gold_post_edits[0] == "p3");
  fs::remove(path);
  CHECK_THROWS(ingest_corpus(path, opts));
}

TEST_CASE("journal append and read back") {
  const auto path = temp_file("journal.log");
  {
    auto j = Journal::create(path);
    j.append(event(1));
    j.append(event(2));
    CHECK_THROWS_AS(j.append(event(4)), StateError);
    CHECK_THROWS_AS(j.append(event(2)), StateError);
    CHECK(j.last_seq() == 2);
  }
  const auto events = read_journal(path);
  REQUIRE(events.size() == 2);
  CHECK(events[0] == event(1));
  CHECK(events[1] == event(2));

  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  CHECK(first == "pedal-journal v1");
}

TEST_CASE("journal reopen continues the sequence and drops a torn tail") {
  const auto path = temp_file("journal_torn.log");
  {
    auto j = Journal::create(path);
    j.append(event(1));
  }
  {
    std::ofstream out(path, std::ios::app);
    out << "2\t6\t0\ted\t0.1";  // crash mid-record
  }
  CHECK(read_journal(path).size() == 1);
  {
    auto j = Journal::open(path);
    CHECK(j.last_seq() == 1);
    j.append(event(2));
  }
  const auto events = read_journal(path);
  REQUIRE(events.size() == 2);
  CHECK(events[1] == event(2));
}

TEST_CASE("journal read rejects gaps and foreign files") {
  const auto path = temp_file("journal_bad.log");
  {
    std::ofstream out(path);
    out << "pedal-journal v1\n" << format_event(event(1)) << "\n" << format_event(event(3)) << "\n";
  }
  CHECK_THROWS_AS(read_journal(path), ParseError);
  {
    std::ofstream out(path);
    out << "something else\n";
  }
  CHECK_THROWS_AS(read_journal(path), ParseError);
  fs::remove(path);
}

TEST_CASE("event serialization is the identity up to six decimals") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 2);
  const std::string alphabet = "ab \t\n\\\rčž";
  for (int t = 0; t < 500; ++t) {
    PostEditEvent e;
    e.seq = rng() % 100000 + 1;
    e.segment_id = rng() % 5000;
    e.hypothesis_index = rng() % 3;
    for (int k = 0; k < 12; ++k) e.edited_text.push_back(alphabet[rng() % alphabet.size()]);
    e.editor_id = "ed\t" + std::to_string(rng() % 10);
    e.blind_prediction = std::stod(text::fixed(u(rng), 6));
    e.realized_target = std::stod(text::fixed(u(rng), 6));
    e.wall_time_ms = static_cast<std::int64_t>(rng() % 2000000000000ULL);
    const auto line = format_event(e);
    CHECK(line.find('\n') == std::string::npos);
    const auto back = parse_event(line);
    CHECK(back == e);
    CHECK(format_event(back) == line);
  }
}
