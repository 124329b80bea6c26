#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "pedal/corpus.h"

namespace pedal {

inline constexpr std::string_view kJournalHeader = "pedal-journal v1";

/// Tab-separated fields in fixed order: seq, segment_id, hypothesis_index,
/// editor_id, blind_prediction, realized_target, edited_text, wall_time.
/// Text fields are escaped; predictions carry six decimals.
std::string format_event(const PostEditEvent& event);
PostEditEvent parse_event(std::string_view line, std::size_t line_no = 0);

/// Append-only post-edit log. Single writer; every append is flushed and
/// synced before it returns.
class Journal {
 public:
  /// Starts a fresh journal, replacing any file at path.
  static Journal create(const std::filesystem::path& path);
  /// Opens for appending, validating existing content; creates it if missing.
  static Journal open(const std::filesystem::path& path);

  void append(const PostEditEvent& event);
  std::uint64_t last_seq() const { return last_seq_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  struct Closer {
    void operator()(std::FILE* f) const;
  };
  Journal(std::filesystem::path path, std::FILE* file, std::uint64_t last_seq);

  std::filesystem::path path_;
  std::unique_ptr<std::FILE, Closer> file_;
  std::uint64_t last_seq_ = 0;
};

/// Reads and validates a closed (or crashed) journal. A torn final line
/// without a newline is ignored, since it was never acknowledged.
std::vector<PostEditEvent> read_journal(const std::filesystem::path& path);

}  // namespace pedal
