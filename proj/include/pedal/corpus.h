#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pedal {

using SegmentId = std::size_t;

enum class SegmentState { Pending, InProgress, PostEdited, AutoClosed };

std::string_view to_string(SegmentState state);

struct Hypothesis {
  std::string origin;
  std::string text;
};

struct PostEditRecord {
  std::size_t hypothesis_index = 0;
  std::string edited_text;
  std::string editor_id;
  double realized_ter = 0.0;
};

struct Segment {
  SegmentId id = 0;
  std::string source_text;
  std::string source_lang;
  std::string target_lang;
  std::vector<Hypothesis> hypotheses;
  std::optional<std::string> reference;
  SegmentState state = SegmentState::Pending;
  std::optional<PostEditRecord> post_edit;
  // Hypothesis shown for editing, and kept as final text when not edited.
  std::size_t designated = 0;
  // Parallel to hypotheses. Read only by the simulator's virtual linguist.
  std::vector<std::optional<std::string>> gold_post_edits;

  /// Post-edit when present, otherwise the designated hypothesis.
  const std::string& current_text() const;
  /// Throws StateError when a lifecycle invariant is broken.
  void check_invariants() const;
};

/// Journal record of one accepted post-edit.
struct PostEditEvent {
  std::uint64_t seq = 0;
  SegmentId segment_id = 0;
  std::size_t hypothesis_index = 0;
  std::string editor_id;
  double blind_prediction = 0.0;
  double realized_target = 0.0;
  std::string edited_text;
  std::int64_t wall_time_ms = 0;

  bool operator==(const PostEditEvent&) const = default;
};

/// Column roles of an input TSV. Negative means the column is absent.
struct TsvSchema {
  int source = 0;
  int hypothesis = 1;
  int post_edit = 2;
  int reference = 3;
  int group = -1;
  int target_lang = -1;
  int origin = -1;

  int max_index() const;
};

struct LangPair {
  std::string source;
  std::string target;

  /// "de-en" -> {de, en}.
  static LangPair parse(std::string_view codes);
  std::string str() const { return source + "-" + target; }
};

struct IngestOptions {
  TsvSchema schema;
  LangPair langs{"src", "tgt"};
  bool skip_malformed = false;
};

struct IngestReport {
  std::size_t rows = 0;
  std::size_t segments = 0;
  std::size_t skipped = 0;
  std::vector<std::string> errors;
};

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Segment> segments);

  std::size_t size() const { return segments_.size(); }
  bool empty() const { return segments_.empty(); }
  const Segment& operator[](SegmentId id) const { return segments_.at(id); }
  Segment& operator[](SegmentId id) { return segments_.at(id); }
  std::span<const Segment> segments() const { return segments_; }

  bool has_references() const;
  bool has_gold_post_edits() const;
  /// Sorted, unique.
  std::vector<std::string> target_languages() const;

 private:
  std::vector<Segment> segments_;
};

/// Reads a UTF-8 TSV, one hypothesis per row. Consecutive rows sharing a
/// group key form one multi-hypothesis segment. Throws ParseError naming the
/// line unless skip_malformed is set, in which case bad rows are counted.
Corpus ingest_corpus(const std::filesystem::path& path, const IngestOptions& options,
                     IngestReport* report = nullptr);
Corpus parse_corpus(std::istream& in, const IngestOptions& options, IngestReport* report = nullptr);

/// Writes source, hypothesis, post-edit, reference columns (plus a group
/// column for multi-hypothesis segments) readable with the default schema.
void write_corpus_tsv(const Corpus& corpus, const std::filesystem::path& path);

}  // namespace pedal
