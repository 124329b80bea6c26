#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "pedal/corpus.h"
#include "pedal/scheduler.h"

namespace pedal {

inline constexpr const char* kApiSchemaVersion = "1";

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path data_dir = "pedal-data";
  std::filesystem::path corpus_path;  // optional; else an uploaded corpus in data_dir
  IngestOptions ingest;
  std::filesystem::path embeddings_path;
  std::filesystem::path static_dir;  // served at / when set
  SchedulerConfig scheduler;
  std::string api_token;  // empty disables the check
  std::int64_t lease_ms = 30 * 60 * 1000;

  nlohmann::ordered_json to_json() const;
  static ServiceConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ServiceConfig load(const std::filesystem::path& path);
  /// PEDAL_HOST, PEDAL_PORT, PEDAL_DATA_DIR, PEDAL_CORPUS, PEDAL_EMBEDDINGS,
  /// PEDAL_STATIC_DIR, PEDAL_API_TOKEN.
  void apply_env(const std::function<const char*(const char*)>& lookup);

  std::filesystem::path journal_path() const { return data_dir / "journal.log"; }
  std::filesystem::path uploaded_corpus_path() const { return data_dir / "corpus.tsv"; }
  std::filesystem::path uploaded_options_path() const { return data_dir / "ingest.json"; }
};

struct ApiResponse {
  int status = 200;
  nlohmann::ordered_json body;
};

/// The live post-editing session behind the HTTP API. Every method takes the
/// session lock, so queue and model transitions are serialized and reads see
/// a consistent state. Responses carry `schema_version`; errors carry
/// `error.code` and `error.message`.
class Session {
 public:
  using Clock = std::function<std::int64_t()>;

  /// Loads the configured or previously uploaded corpus, if any, replays the
  /// journal in data_dir and attaches it for appending.
  explicit Session(ServiceConfig config, Clock clock = {});

  bool active() const;

  ApiResponse health() const;
  ApiResponse next(const std::string& editor_id);
  ApiResponse post_edit(const std::string& segment_id, const nlohmann::json& body);
  ApiResponse stats() const;
  ApiResponse snapshot() const;
  ApiResponse flags() const;
  /// Starts a session from uploaded TSV content. Conflict when one is active.
  ApiResponse ingest(const std::string& tsv, const IngestOptions& options);

  const ServiceConfig& config() const { return config_; }

  /// Runs f on the scheduler under the session lock. Throws StateError when
  /// no session is active.
  void with_scheduler(const std::function<void(Scheduler&)>& f);

  static ApiResponse error(int status, const std::string& code, const std::string& message);

 private:
  void start(Corpus corpus);
  std::optional<ApiResponse> require_session() const;
  nlohmann::ordered_json task_json(const Assignment& a) const;

  ServiceConfig config_;
  Clock clock_;
  std::shared_ptr<const EmbeddingTable> embeddings_;
  mutable std::mutex mu_;
  std::unique_ptr<Scheduler> scheduler_;
  std::shared_ptr<Journal> journal_;
};

/// HTTP front end. Routes:
///   GET  /health                      no token needed
///   GET  /queue/next?editor_id=
///   POST /segments/{id}/postedit      {"edited_text", "editor_id"}
///   GET  /stats, /model/snapshot, /flags
///   POST /ingest                      multipart: file "corpus", optional
///                                     fields langs, skip_malformed and
///                                     column indices source, hypothesis,
///                                     post_edit, reference, group,
///                                     target_lang, origin
class HttpService {
 public:
  explicit HttpService(ServiceConfig config, Session::Clock clock = {});
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds the configured host and port; returns the bound port.
  int bind();
  /// Blocks until stop().
  void run();
  void stop();

  Session& session() { return session_; }

 private:
  struct Impl;
  Session session_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pedal
