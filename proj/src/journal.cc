#include "pedal/journal.h"

#include <charconv>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "pedal/error.h"
#include "pedal/text.h"

namespace pedal {

namespace {

template <typename T>
T parse_integer(std::string_view field, const char* name, std::size_t line_no) {
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError(std::string("bad ") + name + " '" + std::string(field) + "'", line_no);
  return value;
}

double parse_real(std::string_view field, const char* name, std::size_t line_no) {
  double value = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError(std::string("bad ") + name + " '" + std::string(field) + "'", line_no);
  return value;
}

}  // namespace

std::string format_event(const PostEditEvent& e) {
  std::string line;
  line += std::to_string(e.seq);
  line += '\t';
  line += std::to_string(e.segment_id);
  line += '\t';
  line += std::to_string(e.hypothesis_index);
  line += '\t';
  line += text::escape_field(e.editor_id);
  line += '\t';
  line += text::fixed(e.blind_prediction, 6);
  line += '\t';
  line += text::fixed(e.realized_target, 6);
  line += '\t';
  line += text::escape_field(e.edited_text);
  line += '\t';
  line += std::to_string(e.wall_time_ms);
  return line;
}

PostEditEvent parse_event(std::string_view line, std::size_t line_no) {
  const auto f = text::split(line, '\t');
  if (f.size() != 8) throw ParseError("journal record needs 8 fields, found " + std::to_string(f.size()), line_no);
  PostEditEvent e;
  e.seq = parse_integer<std::uint64_t>(f[0], "seq", line_no);
  e.segment_id = parse_integer<std::size_t>(f[1], "segment_id", line_no);
  e.hypothesis_index = parse_integer<std::size_t>(f[2], "hypothesis_index", line_no);
  try {
    e.editor_id = text::unescape_field(f[3]);
    e.edited_text = text::unescape_field(f[6]);
  } catch (const ParseError& err) {
    throw ParseError(err.what(), line_no);
  }
  e.blind_prediction = parse_real(f[4], "blind_prediction", line_no);
  e.realized_target = parse_real(f[5], "realized_target", line_no);
  e.wall_time_ms = parse_integer<std::int64_t>(f[7], "wall_time", line_no);
  return e;
}

void Journal::Closer::operator()(std::FILE* f) const {
  if (f) std::fclose(f);
}

Journal::Journal(std::filesystem::path path, std::FILE* file, std::uint64_t last_seq)
    : path_(std::move(path)), file_(file), last_seq_(last_seq) {}

Journal Journal::create(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw Error("cannot create journal " + path.string());
  Journal j(path, f, 0);
  const std::string header = std::string(kJournalHeader) + "\n";
  if (std::fwrite(header.data(), 1, header.size(), f) != header.size()) throw Error("journal write failed");
  std::fflush(f);
  ::fsync(::fileno(f));
  return j;
}

Journal Journal::open(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path) || std::filesystem::file_size(path) == 0) return create(path);
  const auto events = read_journal(path);

  // Drop a torn trailing record left by a crash mid-write.
  std::string content;
  {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    content = ss.str();
  }
  const auto keep = content.rfind('\n');
  if (keep + 1 != content.size()) std::filesystem::resize_file(path, keep + 1);

  std::FILE* f = std::fopen(path.c_str(), "ab");
  if (!f) throw Error("cannot open journal " + path.string());
  return Journal(path, f, events.empty() ? 0 : events.back().seq);
}

void Journal::append(const PostEditEvent& event) {
  if (event.seq != last_seq_ + 1)
    throw StateError("journal sequence gap: expected seq " + std::to_string(last_seq_ + 1) + ", got " +
                     std::to_string(event.seq));
  const std::string line = format_event(event) + "\n";
  if (std::fwrite(line.data(), 1, line.size(), file_.get()) != line.size() || std::fflush(file_.get()) != 0)
    throw Error("journal write failed: " + path_.string());
  ::fsync(::fileno(file_.get()));
  last_seq_ = event.seq;
}

std::vector<PostEditEvent> read_journal(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open journal " + path.string());
  std::string content;
  {
    std::ostringstream ss;
    ss << in.rdbuf();
    content = ss.str();
  }
  std::vector<PostEditEvent> events;
  std::size_t pos = 0, line_no = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    if (nl == std::string::npos) break;  // torn tail
    ++line_no;
    const std::string_view line(content.data() + pos, nl - pos);
    pos = nl + 1;
    if (line_no == 1) {
      if (line != kJournalHeader) throw ParseError("not a pedal journal (bad header)", 1);
      continue;
    }
    auto e = parse_event(line, line_no);
    const std::uint64_t expected = events.empty() ? 1 : events.back().seq + 1;
    if (e.seq != expected)
      throw ParseError("sequence gap: expected " + std::to_string(expected) + ", got " + std::to_string(e.seq),
                       line_no);
    events.push_back(std::move(e));
  }
  if (line_no == 0) throw ParseError("journal has no header");
  return events;
}

}  // namespace pedal
