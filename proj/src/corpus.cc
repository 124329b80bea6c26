#include "pedal/corpus.h"

#include <algorithm>
#include <fstream>
#include <set>

#include "pedal/error.h"
#include "pedal/text.h"

namespace pedal {

std::string_view to_string(SegmentState state) {
  switch (state) {
    case SegmentState::Pending: return "Pending";
    case SegmentState::InProgress: return "InProgress";
    case SegmentState::PostEdited: return "PostEdited";
    case SegmentState::AutoClosed: return "AutoClosed";
  }
  return "?";
}

const std::string& Segment::current_text() const {
  if (post_edit) return post_edit->edited_text;
  return hypotheses.at(designated).text;
}

void Segment::check_invariants() const {
  const std::string where = "segment " + std::to_string(id) + ": ";
  if (hypotheses.empty()) throw StateError(where + "no hypotheses");
  if (designated >= hypotheses.size()) throw StateError(where + "designated hypothesis out of range");
  if ((state == SegmentState::PostEdited) != post_edit.has_value())
    throw StateError(where + "post-edit present iff state is PostEdited");
  if (post_edit && post_edit->hypothesis_index >= hypotheses.size())
    throw StateError(where + "post-edit refers to a missing hypothesis");
  if (post_edit && post_edit->realized_ter < 0) throw StateError(where + "negative realized TER");
  if (source_lang == target_lang) throw StateError(where + "source and target language are equal");
  if (!gold_post_edits.empty() && gold_post_edits.size() != hypotheses.size())
    throw StateError(where + "gold post-edits not parallel to hypotheses");
}

int TsvSchema::max_index() const {
  return std::max({source, hypothesis, post_edit, reference, group, target_lang, origin});
}

LangPair LangPair::parse(std::string_view codes) {
  const auto dash = codes.find('-');
  if (dash == std::string_view::npos || dash == 0 || dash + 1 == codes.size())
    throw Error("language pair must look like 'de-en', got '" + std::string(codes) + "'");
  LangPair p{std::string(codes.substr(0, dash)), std::string(codes.substr(dash + 1))};
  if (p.source == p.target) throw Error("source and target language must differ: " + std::string(codes));
  return p;
}

Corpus::Corpus(std::vector<Segment> segments) : segments_(std::move(segments)) {
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].id != i) throw Error("segment ids must be consecutive ordinals");
    segments_[i].check_invariants();
  }
}

bool Corpus::has_references() const {
  return std::all_of(segments_.begin(), segments_.end(), [](const Segment& s) { return s.reference.has_value(); });
}

bool Corpus::has_gold_post_edits() const {
  return std::all_of(segments_.begin(), segments_.end(), [](const Segment& s) {
    return !s.gold_post_edits.empty() &&
           std::all_of(s.gold_post_edits.begin(), s.gold_post_edits.end(), [](const auto& g) { return g.has_value(); });
  });
}

std::vector<std::string> Corpus::target_languages() const {
  std::set<std::string> langs;
  for (const auto& s : segments_) langs.insert(s.target_lang);
  return {langs.begin(), langs.end()};
}

namespace {

std::optional<std::string> optional_column(const std::vector<std::string_view>& cols, int index) {
  if (index < 0 || cols[index].empty()) return std::nullopt;
  return std::string(cols[index]);
}

}  // namespace

Corpus parse_corpus(std::istream& in, const IngestOptions& options, IngestReport* report) {
  const TsvSchema& schema = options.schema;
  if (schema.source < 0 || schema.hypothesis < 0) throw Error("schema needs source and hypothesis columns");

  IngestReport local;
  IngestReport& rep = report ? *report : local;
  rep = IngestReport{};

  std::vector<Segment> segments;
  std::optional<std::string> last_group;
  std::size_t expected_columns = 0;
  std::string line;
  std::size_t line_no = 0;
  bool saw_any = false;

  while (std::getline(in, line)) {
    ++line_no;
    saw_any = true;
    ++rep.rows;
    const std::string_view row = text::chomp(line);
    try {
      const auto cols = text::split(row, '\t');
      if (expected_columns == 0) {
        if (static_cast<int>(cols.size()) <= schema.max_index())
          throw ParseError("expected at least " + std::to_string(schema.max_index() + 1) + " columns, found " +
                               std::to_string(cols.size()),
                           line_no);
        expected_columns = cols.size();
      } else if (cols.size() != expected_columns) {
        throw ParseError("expected " + std::to_string(expected_columns) + " columns, found " +
                             std::to_string(cols.size()),
                         line_no);
      }
      if (cols[schema.source].empty()) throw ParseError("empty source column", line_no);
      if (cols[schema.hypothesis].empty()) throw ParseError("empty hypothesis column", line_no);

      Hypothesis hyp;
      hyp.text = std::string(cols[schema.hypothesis]);
      hyp.origin = schema.origin >= 0 ? std::string(cols[schema.origin]) : "mt";
      auto gold = optional_column(cols, schema.post_edit);
      auto reference = optional_column(cols, schema.reference);
      std::string target_lang = options.langs.target;
      if (schema.target_lang >= 0 && !cols[schema.target_lang].empty()) target_lang = cols[schema.target_lang];

      std::optional<std::string> group;
      if (schema.group >= 0) group = std::string(cols[schema.group]);

      if (group && last_group && *group == *last_group && !segments.empty()) {
        Segment& seg = segments.back();
        if (seg.source_text != cols[schema.source])
          throw ParseError("rows of group '" + *group + "' disagree on the source text", line_no);
        if (seg.target_lang != target_lang)
          throw ParseError("rows of group '" + *group + "' disagree on the target language", line_no);
        if (!seg.reference) seg.reference = std::move(reference);
        seg.hypotheses.push_back(std::move(hyp));
        seg.gold_post_edits.push_back(std::move(gold));
        continue;
      }

      Segment seg;
      seg.id = segments.size();
      seg.source_text = std::string(cols[schema.source]);
      seg.source_lang = options.langs.source;
      seg.target_lang = std::move(target_lang);
      if (seg.source_lang == seg.target_lang)
        throw ParseError("source and target language are both '" + seg.source_lang + "'", line_no);
      seg.hypotheses.push_back(std::move(hyp));
      seg.gold_post_edits.push_back(std::move(gold));
      seg.reference = std::move(reference);
      segments.push_back(std::move(seg));
      last_group = std::move(group);
    } catch (const ParseError& e) {
      if (!options.skip_malformed) throw;
      ++rep.skipped;
      rep.errors.push_back(e.what());
    }
  }
  if (!saw_any) throw ParseError("corpus file is empty");
  if (segments.empty()) throw ParseError("corpus has no valid rows");
  rep.segments = segments.size();
  return Corpus(std::move(segments));
}

Corpus ingest_corpus(const std::filesystem::path& path, const IngestOptions& options, IngestReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus file " + path.string());
  return parse_corpus(in, options, report);
}

void write_corpus_tsv(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  bool grouped = false;
  for (const auto& s : corpus.segments()) grouped = grouped || s.hypotheses.size() > 1;
  for (const auto& s : corpus.segments()) {
    for (std::size_t h = 0; h < s.hypotheses.size(); ++h) {
      const auto& gold = s.gold_post_edits.empty() ? std::nullopt : s.gold_post_edits[h];
      out << s.source_text << '\t' << s.hypotheses[h].text << '\t' << gold.value_or("") << '\t'
          << s.reference.value_or("");
      if (grouped) out << '\t' << s.id;
      out << '\n';
    }
  }
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace pedal
