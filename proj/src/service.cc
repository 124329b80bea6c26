#include "pedal/service.h"

#include <chrono>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "pedal/config.h"
#include "pedal/error.h"
#include "pedal/journal.h"
#include "pedal/metrics.h"
#include "pedal/report.h"
#include "pedal/version.h"

namespace pedal {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::int64_t wall_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

ordered_json envelope() { return {{"schema_version", kApiSchemaVersion}}; }

ordered_json counts_json(const QueueCounts& c) {
  return {{"pending", c.pending},
          {"in_progress", c.in_progress},
          {"post_edited", c.post_edited},
          {"auto_closed", c.auto_closed},
          {"total", c.total()}};
}

double pct_post_edited(const QueueCounts& c) {
  return c.total() == 0 ? 0.0 : 100.0 * static_cast<double>(c.post_edited) / static_cast<double>(c.total());
}

ordered_json flag_json(const SanityFlag& f) {
  return {{"seq", f.seq},
          {"segment_id", f.segment_id},
          {"editor_id", f.editor_id},
          {"blind_prediction", f.blind_prediction},
          {"realized_ter", f.realized_ter},
          {"discrepancy", f.discrepancy},
          {"threshold", f.threshold}};
}

std::optional<SegmentId> parse_id(const std::string& s) {
  if (s.empty() || s.size() > 18) return std::nullopt;
  SegmentId id = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    id = id * 10 + static_cast<SegmentId>(c - '0');
  }
  return id;
}

}  // namespace

ordered_json ServiceConfig::to_json() const {
  return {{"host", host},
          {"port", port},
          {"data_dir", data_dir.string()},
          {"corpus", corpus_path.empty() ? json(nullptr) : json(corpus_path.string())},
          {"ingest", pedal::to_json(ingest)},
          {"embeddings", embeddings_path.empty() ? json(nullptr) : json(embeddings_path.string())},
          {"static_dir", static_dir.empty() ? json(nullptr) : json(static_dir.string())},
          {"policy", to_string(scheduler.policy.kind)},
          {"seed", scheduler.policy.seed},
          {"scheduler", pedal::to_json(scheduler.params)},
          {"learner", pedal::to_json(scheduler.learner)},
          {"api_token_set", !api_token.empty()},
          {"lease_minutes", static_cast<double>(lease_ms) / 60000.0}};
}

ServiceConfig ServiceConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ParseError("service configuration must be a JSON object");
  ServiceConfig c;
  auto path_of = [&](const char* key) -> std::filesystem::path {
    if (!j.contains(key) || j.at(key).is_null()) return {};
    return resolve(j.at(key).get<std::string>(), base_dir);
  };
  try {
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    if (j.contains("data_dir")) c.data_dir = path_of("data_dir");
    c.corpus_path = path_of("corpus");
    c.embeddings_path = path_of("embeddings");
    c.static_dir = path_of("static_dir");
    if (j.contains("ingest")) c.ingest = ingest_options_from_json(j.at("ingest"));
    if (j.contains("policy")) c.scheduler.policy.kind = Policy::parse_kind(j.at("policy").get<std::string>());
    c.scheduler.policy.seed = j.value("seed", c.scheduler.policy.seed);
    if (j.contains("scheduler")) c.scheduler.params = scheduler_params_from_json(j.at("scheduler"));
    if (j.contains("learner")) c.scheduler.learner = learner_params_from_json(j.at("learner"));
    c.api_token = j.value("api_token", c.api_token);
    if (j.contains("lease_minutes"))
      c.lease_ms = static_cast<std::int64_t>(j.at("lease_minutes").get<double>() * 60000.0);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad service configuration: ") + e.what());
  }
  if (c.port < 0 || c.port > 65535) throw ParseError("port out of range");
  if (c.lease_ms <= 0) throw ParseError("lease_minutes must be positive");
  return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

void ServiceConfig::apply_env(const std::function<const char*(const char*)>& lookup) {
  auto get = [&](const char* name) -> std::optional<std::string> {
    const char* v = lookup(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  if (auto v = get("PEDAL_HOST")) host = *v;
  if (auto v = get("PEDAL_PORT")) {
    try {
      std::size_t used = 0;
      port = std::stoi(*v, &used);
      if (used != v->size() || port < 0 || port > 65535) throw std::out_of_range(*v);
    } catch (const std::exception&) {
      throw ParseError("PEDAL_PORT is not a valid port: " + *v);
    }
  }
  if (auto v = get("PEDAL_DATA_DIR")) data_dir = *v;
  if (auto v = get("PEDAL_CORPUS")) corpus_path = *v;
  if (auto v = get("PEDAL_EMBEDDINGS")) embeddings_path = *v;
  if (auto v = get("PEDAL_STATIC_DIR")) static_dir = *v;
  if (auto v = get("PEDAL_API_TOKEN")) api_token = *v;
}

Session::Session(ServiceConfig config, Clock clock) : config_(std::move(config)), clock_(std::move(clock)) {
  if (!clock_) clock_ = wall_clock_ms;
  std::filesystem::create_directories(config_.data_dir);
  if (!config_.embeddings_path.empty())
    embeddings_ = std::make_shared<const EmbeddingTable>(EmbeddingTable::load(config_.embeddings_path));

  std::optional<Corpus> corpus;
  if (!config_.corpus_path.empty()) {
    corpus = ingest_corpus(config_.corpus_path, config_.ingest);
  } else if (std::filesystem::exists(config_.uploaded_corpus_path())) {
    IngestOptions opts = config_.ingest;
    if (std::ifstream in(config_.uploaded_options_path()); in) opts = ingest_options_from_json(json::parse(in), opts);
    corpus = ingest_corpus(config_.uploaded_corpus_path(), opts);
  }
  if (corpus) {
    start(std::move(*corpus));
  } else if (std::filesystem::exists(config_.journal_path()) && !read_journal(config_.journal_path()).empty()) {
    throw StateError("journal " + config_.journal_path().string() + " has events but no corpus is configured");
  }
}

void Session::start(Corpus corpus) {
  auto sched = std::make_unique<Scheduler>(std::move(corpus), config_.scheduler, embeddings_);
  auto journal = std::make_shared<Journal>(Journal::open(config_.journal_path()));
  const auto events = read_journal(config_.journal_path());
  replay(*sched, events);
  sched->attach_journal(journal);
  scheduler_ = std::move(sched);
  journal_ = std::move(journal);
}

bool Session::active() const {
  std::lock_guard lock(mu_);
  return scheduler_ != nullptr;
}

void Session::with_scheduler(const std::function<void(Scheduler&)>& f) {
  std::lock_guard lock(mu_);
  if (!scheduler_) throw StateError("no active session");
  f(*scheduler_);
}

ApiResponse Session::error(int status, const std::string& code, const std::string& message) {
  auto body = envelope();
  body["error"] = {{"code", code}, {"message", message}};
  return {status, std::move(body)};
}

std::optional<ApiResponse> Session::require_session() const {
  if (!scheduler_) return error(503, "no_session", "no corpus loaded; POST /ingest first");
  return std::nullopt;
}

ApiResponse Session::health() const {
  std::lock_guard lock(mu_);
  auto body = envelope();
  body["status"] = "ok";
  body["engine_version"] = kEngineVersion;
  body["session"] = scheduler_ != nullptr;
  return {200, std::move(body)};
}

ordered_json Session::task_json(const Assignment& a) const {
  const Segment& seg = scheduler_->corpus()[a.segment_id];
  const auto claim = scheduler_->claim_of(a.segment_id);
  const std::int64_t claimed_at = claim ? claim->second : 0;
  return {{"segment_id", a.segment_id},
          {"source_text", seg.source_text},
          {"source_lang", seg.source_lang},
          {"target_lang", seg.target_lang},
          {"hypothesis_index", a.hypothesis_index},
          {"hypothesis_text", seg.hypotheses[a.hypothesis_index].text},
          {"predicted_ter", a.predicted_ter},
          {"priority", a.priority},
          {"warmup", scheduler_->in_warmup()},
          {"editor_id", claim ? claim->first : std::string()},
          {"claimed_at_ms", claimed_at},
          {"lease_expires_at_ms", claimed_at + config_.lease_ms}};
}

ApiResponse Session::next(const std::string& editor_id) {
  std::lock_guard lock(mu_);
  if (auto e = require_session()) return *e;
  const std::int64_t now = clock_();
  scheduler_->release_expired(now, config_.lease_ms);
  const auto a = scheduler_->next(editor_id, now);
  auto body = envelope();
  body["status"] = a ? "ok" : "drained";
  body["task"] = a ? json(task_json(*a)) : json(nullptr);
  body["queue"] = counts_json(scheduler_->counts());
  return {200, std::move(body)};
}

ApiResponse Session::post_edit(const std::string& segment_id, const json& request) {
  if (!request.is_object() || !request.contains("edited_text") || !request.at("edited_text").is_string())
    return error(400, "bad_request", "body must be an object with string field edited_text");
  if (request.contains("editor_id") && !request.at("editor_id").is_string())
    return error(400, "bad_request", "editor_id must be a string");
  const auto text = request.at("edited_text").get<std::string>();
  const auto editor = request.value("editor_id", std::string());

  std::lock_guard lock(mu_);
  if (auto e = require_session()) return *e;
  const auto id = parse_id(segment_id);
  if (!id || *id >= scheduler_->corpus().size()) return error(404, "not_found", "no segment " + segment_id);

  scheduler_->release_expired(clock_(), config_.lease_ms);
  if (const auto claim = scheduler_->claim_of(*id); claim && !claim->first.empty() && claim->first != editor)
    return error(409, "conflict", "segment " + segment_id + " is claimed by another editor");

  Completion done;
  try {
    done = scheduler_->complete(*id, text, editor, clock_());
  } catch (const NotFoundError& e) {
    return error(404, "not_found", e.what());
  } catch (const StateError& e) {
    return error(409, "conflict", e.what());
  }

  const auto counts = scheduler_->counts();
  auto body = envelope();
  body["seq"] = done.event.seq;
  body["segment_id"] = done.event.segment_id;
  body["hypothesis_index"] = done.event.hypothesis_index;
  body["editor_id"] = done.event.editor_id;
  body["realized_ter"] = done.event.realized_target;
  body["blind_prediction"] = done.event.blind_prediction;
  body["discrepancy"] = std::abs(done.event.blind_prediction - done.event.realized_target);
  body["sanity_flag"] = done.flag ? json(flag_json(*done.flag)) : json(nullptr);
  body["auto_closed"] = done.auto_closed;
  body["queue"] = counts_json(counts);
  body["pct_post_edited"] = pct_post_edited(counts);
  return {200, std::move(body)};
}

ApiResponse Session::stats() const {
  std::lock_guard lock(mu_);
  if (auto e = require_session()) return *e;
  const auto counts = scheduler_->counts();
  auto body = envelope();
  body["counts"] = counts_json(counts);
  body["pct_post_edited"] = pct_post_edited(counts);
  body["mean_corpus_quality"] = scheduler_->has_references() ? json(scheduler_->corpus_quality()) : json(nullptr);
  const auto& log = scheduler_->model().prequential_log();
  body["prequential"] = to_json(log.empty() ? EvalStats{} : prequential_stats(log));
  body["model_step"] = scheduler_->model().step();
  body["warmup"] = scheduler_->in_warmup();
  body["policy"] = to_string(scheduler_->config().policy.kind);
  body["rescore_count"] = scheduler_->rescore_count();
  body["flag_count"] = scheduler_->flags().size();
  return {200, std::move(body)};
}

ApiResponse Session::snapshot() const {
  std::lock_guard lock(mu_);
  if (auto e = require_session()) return *e;
  auto body = envelope();
  body["step"] = scheduler_->model().step();
  body["snapshot"] = scheduler_->model().snapshot();
  return {200, std::move(body)};
}

ApiResponse Session::flags() const {
  std::lock_guard lock(mu_);
  if (auto e = require_session()) return *e;
  auto body = envelope();
  ordered_json list = ordered_json::array();
  for (const auto& f : scheduler_->flags()) list.push_back(flag_json(f));
  body["flags"] = list;
  return {200, std::move(body)};
}

ApiResponse Session::ingest(const std::string& tsv, const IngestOptions& options) {
  std::lock_guard lock(mu_);
  if (scheduler_) return error(409, "conflict", "a session is already active");
  if (std::filesystem::exists(config_.journal_path()) && !read_journal(config_.journal_path()).empty())
    return error(409, "conflict", "data directory holds a journal from an earlier session");

  IngestReport report;
  std::optional<Corpus> corpus;
  try {
    std::istringstream in(tsv);
    corpus = parse_corpus(in, options, &report);
  } catch (const ParseError& e) {
    return error(400, "bad_corpus", e.what());
  } catch (const Error& e) {
    return error(400, "bad_corpus", e.what());
  }
  {
    std::ofstream out(config_.uploaded_corpus_path(), std::ios::binary | std::ios::trunc);
    out << tsv;
    std::ofstream opts(config_.uploaded_options_path(), std::ios::trunc);
    opts << to_json(options).dump(2) << "\n";
    if (!out.flush() || !opts.flush()) return error(500, "io_error", "cannot store the uploaded corpus");
  }
  try {
    start(std::move(*corpus));
  } catch (const LayoutError& e) {
    return error(400, "bad_corpus", e.what());
  }

  auto body = envelope();
  body["status"] = "ok";
  body["rows"] = report.rows;
  body["segments"] = report.segments;
  body["skipped"] = report.skipped;
  body["queue"] = counts_json(scheduler_->counts());
  return {200, std::move(body)};
}

struct HttpService::Impl {
  httplib::Server server;
};

namespace {

void send(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

// Everything except /health and static assets needs the token.
bool is_api_path(const std::string& path) {
  for (const char* prefix : {"/queue/", "/segments/", "/stats", "/model/", "/flags", "/ingest"})
    if (path.rfind(prefix, 0) == 0) return true;
  return false;
}

std::optional<int> form_int(const httplib::Request& req, const std::string& key) {
  if (!req.has_file(key)) return std::nullopt;
  const auto v = req.get_file_value(key).content;
  std::size_t used = 0;
  const int n = std::stoi(v, &used);
  if (used != v.size()) throw std::invalid_argument(key);
  return n;
}

}  // namespace

HttpService::HttpService(ServiceConfig config, Session::Clock clock)
    : session_(std::move(config), std::move(clock)), impl_(std::make_unique<Impl>()) {
  auto& srv = impl_->server;
  const std::string token = session_.config().api_token;

  srv.set_pre_routing_handler([token](const httplib::Request& req, httplib::Response& res) {
    if (token.empty() || !is_api_path(req.path)) return httplib::Server::HandlerResponse::Unhandled;
    const auto auth = req.get_header_value("Authorization");
    if (auth == "Bearer " + token || req.get_header_value("X-API-Token") == token)
      return httplib::Server::HandlerResponse::Unhandled;
    send(res, Session::error(401, "unauthorized", "missing or wrong API token"));
    return httplib::Server::HandlerResponse::Handled;
  });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send(res, Session::error(500, "internal", what));
  });

  srv.Get("/health", [this](const httplib::Request&, httplib::Response& res) { send(res, session_.health()); });
  srv.Get("/queue/next", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, session_.next(req.get_param_value("editor_id")));
  });
  srv.Post("/segments/:id/postedit", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error& e) {
      send(res, Session::error(400, "bad_request", std::string("body is not JSON: ") + e.what()));
      return;
    }
    send(res, session_.post_edit(req.path_params.at("id"), body));
  });
  srv.Get("/stats", [this](const httplib::Request&, httplib::Response& res) { send(res, session_.stats()); });
  srv.Get("/model/snapshot", [this](const httplib::Request&, httplib::Response& res) {
    send(res, session_.snapshot());
  });
  srv.Get("/flags", [this](const httplib::Request&, httplib::Response& res) { send(res, session_.flags()); });
  srv.Post("/ingest", [this](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data() || !req.has_file("corpus")) {
      send(res, Session::error(400, "bad_request", "expected multipart form data with a 'corpus' file"));
      return;
    }
    IngestOptions opts = session_.config().ingest;
    try {
      auto& s = opts.schema;
      for (auto [key, field] : {std::pair{"source", &s.source}, {"hypothesis", &s.hypothesis},
                                {"post_edit", &s.post_edit}, {"reference", &s.reference}, {"group", &s.group},
                                {"target_lang", &s.target_lang}, {"origin", &s.origin}})
        if (auto v = form_int(req, key)) *field = *v;
      if (req.has_file("langs")) opts.langs = LangPair::parse(req.get_file_value("langs").content);
      if (req.has_file("skip_malformed")) {
        const auto v = req.get_file_value("skip_malformed").content;
        opts.skip_malformed = v == "1" || v == "true";
      }
    } catch (const std::exception& e) {
      send(res, Session::error(400, "bad_request", std::string("bad ingest option: ") + e.what()));
      return;
    }
    send(res, session_.ingest(req.get_file_value("corpus").content, opts));
  });
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.status == 404 && res.body.empty()) send(res, Session::error(404, "not_found", "no such endpoint"));
  });

  if (!session_.config().static_dir.empty() && !srv.set_mount_point("/", session_.config().static_dir.string()))
    throw Error("static directory does not exist: " + session_.config().static_dir.string());
}

HttpService::~HttpService() { stop(); }

int HttpService::bind() {
  const auto& c = session_.config();
  auto& srv = impl_->server;
  const int port = c.port == 0 ? srv.bind_to_any_port(c.host) : (srv.bind_to_port(c.host, c.port) ? c.port : -1);
  if (port < 0) throw Error("cannot bind " + c.host + ":" + std::to_string(c.port));
  return port;
}

void HttpService::run() {
  if (!impl_->server.listen_after_bind() && impl_->server.is_valid())
    throw Error("server stopped unexpectedly");
}

void HttpService::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace pedal
