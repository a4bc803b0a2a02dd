#include "avp/service.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>

#include <httplib.h>

#include "avp/error.hpp"
#include "avp/io.hpp"
#include "avp/json_views.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace avp::service {

namespace {

constexpr const char* kJson = "application/json";
constexpr std::size_t kMediaChunk = 64 * 1024;
constexpr std::size_t kWorkerThreads = 32;

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::string mime_type(const fs::path& p) {
  static const std::map<std::string, std::string> types = {
      {".wav", "audio/wav"},  {".mp3", "audio/mpeg"},       {".flac", "audio/flac"}, {".ogg", "audio/ogg"},
      {".mp4", "video/mp4"},  {".m4v", "video/mp4"},        {".webm", "video/webm"}, {".mov", "video/quicktime"},
      {".mkv", "video/x-matroska"}, {".m4a", "audio/mp4"}};
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  auto it = types.find(ext);
  return it == types.end() ? "application/octet-stream" : it->second;
}

void reply(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& detail) {
  reply(res, json{{"error", code}, {"detail", detail}}, status);
}

std::string required_param(const httplib::Request& req, const std::string& key) {
  if (!req.has_param(key) || req.get_param_value(key).empty()) {
    throw Error(ErrorCode::InvalidArgument, "missing query parameter '" + key + "'");
  }
  return req.get_param_value(key);
}

long long int_param(const httplib::Request& req, const std::string& key, long long fallback) {
  if (!req.has_param(key)) return fallback;
  const auto text = req.get_param_value(key);
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used == text.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw Error(ErrorCode::InvalidArgument, "parameter '" + key + "' must be an integer");
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed JSON body: ") + e.what());
  }
}

json event_view(const events::DetectionEvent& e) {
  auto j = events::to_json(e);
  j["asset_id"] = e.asset_id;
  j["generator"] = {{"name", e.generator.name}, {"version", e.generator.version},
                    {"kind", events::to_string(e.generator.kind)}};
  return j;
}

std::optional<std::vector<events::TrackBox>> track_from_json(const json& j) {
  if (!j.contains("track") || j["track"].is_null()) return std::nullopt;
  std::vector<events::TrackBox> out;
  for (const auto& b : j["track"]) {
    out.push_back({b.at("t_s").get<double>(), b.at("x").get<double>(), b.at("y").get<double>(),
                   b.at("w").get<double>(), b.at("h").get<double>(), b.at("track_id").get<std::int64_t>()});
  }
  return out;
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::EmptyQuery:
    case ErrorCode::InvalidSpan:
    case ErrorCode::SyncPointOutOfRange:
      return 400;
    case ErrorCode::UnknownAsset:
    case ErrorCode::UnknownSegment:
    case ErrorCode::UnknownEvent:
    case ErrorCode::UnknownDashboard:
    case ErrorCode::NotIndexed:
      return 404;
    case ErrorCode::DuplicateMember:
    case ErrorCode::AlreadyIndexed:
      return 409;
    case ErrorCode::SchemaViolation:
    case ErrorCode::NoAcousticMatch:
    case ErrorCode::TooShort:
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::CorruptMedia:
      return 422;
    case ErrorCode::ConfigError:
    case ErrorCode::IoError:
      return 500;
  }
  return 500;
}

ApiConfig parse_config(const json& j, const fs::path& base_dir) {
  ApiConfig cfg;
  try {
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
    cfg.listen_address = j.value("listen_address", cfg.listen_address);
    cfg.port = j.value("port", cfg.port);
    cfg.corpus_root = resolve(j.at("corpus_root").get<std::string>(), base_dir);
    if (j.contains("artifact_dir")) cfg.artifact_dir = resolve(j["artifact_dir"].get<std::string>(), base_dir);
    cfg.transcoder = j.value("transcoder", std::string{});
    cfg.fingerprint_tau = j.value("fingerprint_tau", cfg.fingerprint_tau);
    if (j.contains("similarity_weights_path") && !j["similarity_weights_path"].is_null()) {
      cfg.similarity_weights_path = resolve(j["similarity_weights_path"].get<std::string>(), base_dir);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("invalid config: ") + e.what());
  }
  return cfg;
}

void check_config(const ApiConfig& cfg) {
  if (cfg.port < 0 || cfg.port > 65535) throw Error(ErrorCode::ConfigError, "port out of range");
  if (!(cfg.fingerprint_tau > 0)) throw Error(ErrorCode::ConfigError, "fingerprint_tau must be positive");
  if (!fs::is_directory(cfg.corpus_root)) {
    throw Error(ErrorCode::ConfigError, "corpus_root is not a directory: " + cfg.corpus_root.string());
  }
  // An unset artifact_dir defaults to <corpus_root>/artifacts, created on start.
  if (!cfg.artifact_dir.empty() && !fs::is_directory(cfg.artifact_dir)) {
    throw Error(ErrorCode::ConfigError, "artifact_dir is not a directory: " + cfg.artifact_dir.string());
  }
  if (cfg.similarity_weights_path && !fs::is_regular_file(*cfg.similarity_weights_path)) {
    throw Error(ErrorCode::ConfigError, "similarity weights not found: " + cfg.similarity_weights_path->string());
  }
}

ApiConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, "config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(j, fs::absolute(path).parent_path());
}

fs::path resolve_config_path(const std::optional<fs::path>& explicit_path) {
  if (explicit_path && !explicit_path->empty()) return *explicit_path;
  if (const char* env = std::getenv("AVP_CONFIG"); env && *env) return env;
  throw Error(ErrorCode::ConfigError, "no config given: pass --config or set AVP_CONFIG");
}

std::vector<std::pair<float, float>> waveform_peaks(std::span<const float> samples, int px) {
  if (px < kMinWaveformPx || px > kMaxWaveformPx) {
    throw Error(ErrorCode::InvalidArgument, "px must lie in [100, 20000]");
  }
  std::vector<std::pair<float, float>> out(static_cast<std::size_t>(px), {0.0f, 0.0f});
  const std::size_t n = samples.size();
  if (n == 0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t lo = i * n / out.size();
    std::size_t hi = std::max(lo + 1, (i + 1) * n / out.size());
    lo = std::min(lo, n - 1);
    hi = std::min(hi, n);
    const auto [mn, mx] = std::minmax_element(samples.begin() + static_cast<std::ptrdiff_t>(lo),
                                              samples.begin() + static_cast<std::ptrdiff_t>(hi));
    out[i] = {*mn, *mx};
  }
  return out;
}

Server::Server(ApiConfig config) : config_(std::move(config)) {
  check_config(config_);
  if (config_.artifact_dir.empty()) {
    config_.artifact_dir = config_.corpus_root / "artifacts";
    fs::create_directories(config_.artifact_dir);
  }
  WorkspaceConfig wc;
  wc.corpus_root = config_.corpus_root;
  wc.artifact_dir = config_.artifact_dir;
  wc.catalog.transcoder = config_.transcoder;
  wc.fingerprint.tau = config_.fingerprint_tau;
  wc.similarity_weights_path = config_.similarity_weights_path;
  workspace_ = std::make_unique<Workspace>(std::move(wc));
  workspace_->fingerprints().set_tau(config_.fingerprint_tau);
  artifact_report_ = workspace_->load_artifacts();

  {
    std::lock_guard lock(progress_mutex_);
    progress_.running = true;
  }
  index_thread_ = std::thread([this] { index_pending(); });

  http_ = std::make_unique<httplib::Server>();
  http_->new_task_queue = [] { return new httplib::ThreadPool(kWorkerThreads); };
  routes();
}

Server::~Server() { stop(); }

void Server::index_pending() {
  const auto pending = workspace_->pending();
  {
    std::lock_guard lock(progress_mutex_);
    progress_.total = pending.size();
  }
  for (const auto& id : pending) {
    std::string failure;
    try {
      workspace_->analyze(id);
    } catch (const std::exception& e) {
      failure = e.what();
    }
    std::lock_guard lock(progress_mutex_);
    ++progress_.done;
    if (!failure.empty()) progress_.failed.emplace_back(id, failure);
  }
  // Freeze similarity statistics now rather than on the first query.
  if (workspace_->features().stale()) workspace_->features().rebuild_stats();
  std::lock_guard lock(progress_mutex_);
  progress_.running = false;
}

void Server::wait_for_indexing() {
  if (index_thread_.joinable()) index_thread_.join();
}

IndexingProgress Server::progress() const {
  std::lock_guard lock(progress_mutex_);
  return progress_;
}

bool Server::listen() { return http_->listen(config_.listen_address, config_.port); }

int Server::start() {
  int port = config_.port;
  if (port == 0) {
    port = http_->bind_to_any_port(config_.listen_address);
  } else if (!http_->bind_to_port(config_.listen_address, port)) {
    port = -1;
  }
  if (port < 0) return -1;
  serve_thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return port;
}

void Server::stop() {
  if (http_) http_->stop();
  if (serve_thread_.joinable()) serve_thread_.join();
  wait_for_indexing();
}

void Server::routes() {
  auto& http = *http_;
  auto& ws = *workspace_;

  http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      reply_error(res, http_status(e.code()), to_string(e.code()), e.what());
    } catch (const json::exception& e) {
      reply_error(res, 400, to_string(ErrorCode::InvalidArgument), e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, "InternalError", e.what());
    }
  });
  http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty() && res.status == 404) reply_error(res, 404, "NotFound", "no route " + req.path);
  });

  http.Get("/health", [this, &ws](const httplib::Request&, httplib::Response& res) {
    const auto p = progress();
    json failed = json::array();
    for (const auto& [id, why] : p.failed) failed.push_back({{"asset_id", id}, {"reason", why}});
    const auto pending = ws.pending();
    reply(res, json{{"status", "ok"},
                    {"assets", ws.catalog().size()},
                    {"fingerprinted", ws.fingerprints().asset_ids().size()},
                    {"feature_assets", ws.features().asset_count()},
                    {"segments", ws.features().segment_count()},
                    {"events", ws.events().size()},
                    {"dashboards", ws.dashboards().list().size()},
                    {"index_fresh", pending.empty() && !ws.features().stale()},
                    {"indexing",
                     {{"running", p.running}, {"total", p.total}, {"done", p.done},
                      {"pending", pending.size()}, {"failed", failed}}},
                    {"artifacts", to_json(artifact_report_)}});
  });

  http.Get("/assets", [&ws](const httplib::Request& req, httplib::Response& res) {
    MetadataFilter filter;
    for (const auto& [k, v] : req.params) filter[k] = v;
    json out = json::array();
    for (const auto& a : ws.catalog().list_assets(filter)) out.push_back(to_json(a));
    reply(res, out);
  });

  http.Get("/assets/:id", [&ws](const httplib::Request& req, httplib::Response& res) {
    const auto& id = req.path_params.at("id");
    auto j = to_json(ws.catalog().get(id));
    j["fingerprinted"] = ws.fingerprints().contains(id);
    j["segments"] = ws.features().contains(id) ? ws.features().features(id).size() : 0;
    json evs = json::array();
    for (const auto& e : ws.events().events_for_asset(id)) evs.push_back(event_view(e));
    j["events"] = std::move(evs);
    reply(res, j);
  });

  http.Get("/assets/:id/media", [&ws](const httplib::Request& req, httplib::Response& res) {
    const auto path = ws.catalog().media_path(ws.catalog().get(req.path_params.at("id")));
    const auto size = static_cast<std::size_t>(fs::file_size(path));
    // httplib answers 416 when a range ends past EOF; clamp it to the last byte
    // as RFC 9110 requires. The request object is owned (non-const) by the server.
    for (auto& r : const_cast<httplib::Request&>(req).ranges) {
      if (r.second >= static_cast<ssize_t>(size)) r.second = static_cast<ssize_t>(size) - 1;
    }
    res.set_header("Accept-Ranges", "bytes");
    // Status stays unset so the server applies any Range header (206 + Content-Range).
    res.set_content_provider(size, mime_type(path),
                             [path](std::size_t offset, std::size_t length, httplib::DataSink& sink) {
                               std::ifstream in(path, std::ios::binary);
                               in.seekg(static_cast<std::streamoff>(offset));
                               std::vector<char> buf(std::min(length, kMediaChunk));
                               in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
                               const auto got = static_cast<std::size_t>(in.gcount());
                               return got > 0 && sink.write(buf.data(), got);
                             });
  });

  http.Get("/assets/:id/waveform", [&ws](const httplib::Request& req, httplib::Response& res) {
    const auto& id = req.path_params.at("id");
    const auto pcm = ws.catalog().get_audio(id);
    const auto px = int_param(req, "px", 1000);
    if (px < kMinWaveformPx || px > kMaxWaveformPx) {
      throw Error(ErrorCode::InvalidArgument, "px must lie in [100, 20000]");
    }
    json peaks = json::array();
    for (const auto& [mn, mx] : waveform_peaks(pcm->samples, static_cast<int>(px))) peaks.push_back({mn, mx});
    reply(res, json{{"asset_id", id}, {"px", px}, {"duration_s", pcm->duration_s()}, {"peaks", std::move(peaks)}});
  });

  http.Post("/search", [&ws](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto q = query_from_json(body);
    const double gap = body.value("gap_s", events::kDefaultMergeGap);
    events::EventIndex::AssetFilter filter;
    if (!q.metadata.empty()) {
      filter = [&](const std::string& id) {
        const auto a = ws.catalog().find(id);
        return a && matches(a->metadata, q.metadata);
      };
    }
    json results = json::array();
    for (const auto& hit : ws.events().query(q, filter)) {
      json evs = json::array();
      std::set<std::string> labels;
      for (const auto& e : hit.events) {
        evs.push_back(event_view(e));
        labels.insert(e.label);
      }
      json spans = json::object();
      for (const auto& label : labels) {
        json list = json::array();
        for (const auto& s : ws.events().aggregate_spans(hit.asset_id, label, gap)) list.push_back(to_json(s));
        spans[label] = std::move(list);
      }
      results.push_back({{"asset_id", hit.asset_id},
                         {"rank_score", hit.rank_score},
                         {"events", std::move(evs)},
                         {"spans", std::move(spans)}});
    }
    reply(res, json{{"results", std::move(results)}});
  });

  http.Get("/similar", [&ws](const httplib::Request& req, httplib::Response& res) {
    const auto asset = required_param(req, "asset");
    const auto k = int_param(req, "k", 10);
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    if (!req.has_param("segment")) {
      if (!ws.catalog().find(asset)) throw Error(ErrorCode::UnknownAsset, "unknown asset " + asset);
      json hits = json::array();
      for (const auto& h : ws.features().similar_assets(asset, static_cast<int>(k), ws.weights())) {
        hits.push_back(to_json(h));
      }
      reply(res, json{{"asset_id", asset}, {"assets", std::move(hits)}});
      return;
    }
    const auto segment = int_param(req, "segment", 0);
    if (segment < 0) throw Error(ErrorCode::UnknownSegment, "segment must be non-negative");
    const auto scope_text = req.has_param("scope") ? req.get_param_value("scope") : "all";
    similarity::Scope scope;
    if (scope_text == "all") {
      scope = similarity::Scope::All;
    } else if (scope_text == "exclude_same_asset") {
      scope = similarity::Scope::ExcludeSameAsset;
    } else {
      throw Error(ErrorCode::InvalidArgument, "scope must be all or exclude_same_asset");
    }
    json hits = json::array();
    for (const auto& h :
         ws.features().knn(asset, static_cast<std::uint32_t>(segment), static_cast<int>(k), scope, ws.weights())) {
      hits.push_back(to_json(h));
    }
    reply(res, json{{"asset_id", asset}, {"segment_idx", segment}, {"hits", std::move(hits)}});
  });

  http.Get("/match", [&ws](const httplib::Request& req, httplib::Response& res) {
    reply(res, to_json(ws.fingerprints().match_pair(required_param(req, "a"), required_param(req, "b"))));
  });

  http.Get("/match-all", [&ws](const httplib::Request& req, httplib::Response& res) {
    json out = json::array();
    for (const auto& r : ws.fingerprints().match_all(required_param(req, "asset"))) out.push_back(to_json(r));
    reply(res, out);
  });

  http.Get("/dashboards", [&ws](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& d : ws.dashboards().list()) out.push_back(dashboards::to_json(d));
    reply(res, out);
  });

  http.Post("/dashboards", [&ws](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto d = ws.dashboards().create(body.at("master_asset_id").get<std::string>(),
                                          body.at("sync_point_s").get<double>(), body.value("title", std::string{}),
                                          body.value("created_by", std::string{}));
    reply(res, dashboards::to_json(d), 201);
  });

  http.Get("/dashboards/:id", [&ws](const httplib::Request& req, httplib::Response& res) {
    reply(res, dashboards::to_json(ws.dashboards().get(req.path_params.at("id"))));
  });

  http.Post("/dashboards/:id/members", [&ws](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto d = ws.dashboards().add_member(req.path_params.at("id"), body.at("asset_id").get<std::string>());
    reply(res, dashboards::to_json(d));
  });

  http.Get("/dashboards/:id/recommendations", [&ws](const httplib::Request& req, httplib::Response& res) {
    const auto k = int_param(req, "k", 10);
    if (k < 1 || k > 100000) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    json out = json::array();
    for (const auto& r : ws.dashboards().recommend_members(req.path_params.at("id"), static_cast<int>(k))) {
      out.push_back(to_json(r));
    }
    reply(res, out);
  });

  http.Get("/dashboards/:id/timeline", [&ws](const httplib::Request& req, httplib::Response& res) {
    reply(res, to_json(ws.dashboards().timeline(req.path_params.at("id"))));
  });

  http.Post("/annotations", [&ws](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    events::Annotation a;
    a.asset_id = body.at("asset_id").get<std::string>();
    a.label = body.at("label").get<std::string>();
    a.start_s = body.at("start_s").get<double>();
    a.end_s = body.at("end_s").get<double>();
    a.track = track_from_json(body);
    a.author = body.value("author", std::string{});
    const auto id = ws.events().add_annotation(a, ws.artifact_dir(), ws.durations());
    reply(res, json{{"event_id", id}}, 201);
  });

  http.Delete("/annotations/:id", [&ws](const httplib::Request& req, httplib::Response& res) {
    const auto& id = req.path_params.at("id");
    ws.events().delete_annotation(id, ws.artifact_dir());
    reply(res, json{{"deleted", id}});
  });
}

}  // namespace avp::service
