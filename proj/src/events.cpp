#include "avp/events.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>

#include "avp/error.hpp"
#include "avp/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace avp::events {

namespace {

constexpr double kBoxEpsilon = 1e-9;

bool is_unit(double v) { return v >= 0.0 && v <= 1.0; }

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += "; ";
    out += p;
  }
  return out;
}

void validate_track(const json& track, const std::string& where, std::vector<std::string>& errors) {
  if (!track.is_array()) {
    errors.push_back(where + ".track must be an array");
    return;
  }
  std::map<std::int64_t, double> last_t;
  for (std::size_t i = 0; i < track.size(); ++i) {
    const auto& b = track[i];
    const std::string at = where + ".track[" + std::to_string(i) + "]";
    if (!b.is_object()) {
      errors.push_back(at + " must be an object");
      continue;
    }
    bool ok = true;
    for (const char* key : {"t_s", "x", "y", "w", "h"}) {
      if (!b.contains(key) || !b[key].is_number()) {
        errors.push_back(at + "." + key + " must be a number");
        ok = false;
      }
    }
    if (!b.contains("track_id") || !b["track_id"].is_number_integer()) {
      errors.push_back(at + ".track_id must be an integer");
      ok = false;
    }
    if (!ok) continue;
    const double x = b["x"].get<double>(), y = b["y"].get<double>();
    const double w = b["w"].get<double>(), h = b["h"].get<double>();
    if (!is_unit(x) || !is_unit(y) || !is_unit(w) || !is_unit(h)) {
      errors.push_back(at + " coordinates must lie in [0, 1]");
    } else if (x + w > 1.0 + kBoxEpsilon || y + h > 1.0 + kBoxEpsilon) {
      errors.push_back(at + " box exceeds the frame");
    }
    const double t = b["t_s"].get<double>();
    const auto id = b["track_id"].get<std::int64_t>();
    if (auto it = last_t.find(id); it != last_t.end() && !(t > it->second)) {
      errors.push_back(at + ".t_s not strictly increasing within track " + std::to_string(id));
    }
    last_t[id] = t;
  }
}

std::vector<TrackBox> parse_track(const json& track) {
  std::vector<TrackBox> out;
  for (const auto& b : track) {
    out.push_back({b["t_s"].get<double>(), b["x"].get<double>(), b["y"].get<double>(), b["w"].get<double>(),
                   b["h"].get<double>(), b["track_id"].get<std::int64_t>()});
  }
  return out;
}

json generator_json(const Generator& g) {
  return json{{"name", g.name}, {"version", g.version}, {"kind", to_string(g.kind)}};
}

}  // namespace

const char* to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::Audio: return "audio";
    case GeneratorKind::Video: return "video";
    case GeneratorKind::User: return "user";
  }
  return "audio";
}

std::optional<GeneratorKind> parse_kind(const std::string& s) {
  if (s == "audio") return GeneratorKind::Audio;
  if (s == "video") return GeneratorKind::Video;
  if (s == "user") return GeneratorKind::User;
  return std::nullopt;
}

std::string compute_event_id(const std::string& asset_id, const Generator& generator, const std::string& label,
                             double start_s, double end_s) {
  const json key = json::array(
      {asset_id, generator.name, generator.version, to_string(generator.kind), label, start_s, end_s});
  return "ev-" + io::sha256_hex(key.dump()).substr(0, 24);
}

std::vector<std::string> validate(const json& j, const DurationLookup& durations) {
  std::vector<std::string> errors;
  if (!j.is_object()) return {"artifact must be a JSON object"};

  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
      j["schema_version"].get<int>() != kSchemaVersion) {
    errors.push_back("schema_version must be " + std::to_string(kSchemaVersion));
  }
  std::optional<double> duration;
  if (!j.contains("asset_id") || !j["asset_id"].is_string() || j["asset_id"].get<std::string>().empty()) {
    errors.push_back("asset_id must be a non-empty string");
  } else if (durations) {
    duration = durations(j["asset_id"].get<std::string>());
  }

  std::optional<GeneratorKind> kind;
  if (!j.contains("generator") || !j["generator"].is_object()) {
    errors.push_back("generator must be an object");
  } else {
    const auto& g = j["generator"];
    for (const char* key : {"name", "version"}) {
      if (!g.contains(key) || !g[key].is_string()) errors.push_back(std::string("generator.") + key + " must be a string");
    }
    if (!g.contains("kind") || !g["kind"].is_string() || !(kind = parse_kind(g["kind"].get<std::string>()))) {
      errors.push_back("generator.kind must be one of audio, video, user");
    }
  }

  if (!j.contains("events") || !j["events"].is_array()) {
    errors.push_back("events must be an array");
    return errors;
  }
  std::set<std::string> ids;
  const auto& events = j["events"];
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    const std::string at = "events[" + std::to_string(i) + "]";
    if (!e.is_object()) {
      errors.push_back(at + " must be an object");
      continue;
    }
    if (e.contains("id")) {
      if (!e["id"].is_string() || e["id"].get<std::string>().empty()) {
        errors.push_back(at + ".id must be a non-empty string");
      } else if (!ids.insert(e["id"].get<std::string>()).second) {
        errors.push_back(at + ".id duplicated within artifact");
      }
    }
    if (!e.contains("label") || !e["label"].is_string() || e["label"].get<std::string>().empty()) {
      errors.push_back(at + ".label must be a non-empty string");
    }
    bool times_ok = true;
    for (const char* key : {"start_s", "end_s", "confidence"}) {
      if (!e.contains(key) || !e[key].is_number()) {
        errors.push_back(at + "." + key + " must be a number");
        times_ok = false;
      }
    }
    if (times_ok) {
      const double start = e["start_s"].get<double>(), end = e["end_s"].get<double>();
      const double conf = e["confidence"].get<double>();
      if (!(start >= 0.0 && start < end)) errors.push_back(at + " requires 0 <= start_s < end_s");
      if (duration && end > *duration + kDurationTolerance) {
        errors.push_back(at + ".end_s beyond asset duration");
      }
      if (!is_unit(conf)) errors.push_back(at + ".confidence must lie in [0, 1]");
    }
    for (const char* key : {"author", "created_at"}) {
      if (e.contains(key) && !e[key].is_string()) errors.push_back(at + "." + key + " must be a string");
    }
    if (e.contains("track")) {
      if (kind == GeneratorKind::Audio) errors.push_back(at + ".track not allowed for audio generators");
      validate_track(e["track"], at, errors);
    }
  }
  return errors;
}

Artifact parse_artifact(const json& j, const DurationLookup& durations) {
  if (auto errors = validate(j, durations); !errors.empty()) throw Error(ErrorCode::SchemaViolation, join(errors));
  Artifact a;
  a.asset_id = j["asset_id"].get<std::string>();
  const auto& g = j["generator"];
  a.generator = {g["name"].get<std::string>(), g["version"].get<std::string>(),
                 *parse_kind(g["kind"].get<std::string>())};
  for (const auto& e : j["events"]) {
    DetectionEvent ev;
    ev.asset_id = a.asset_id;
    ev.generator = a.generator;
    ev.label = e["label"].get<std::string>();
    ev.start_s = e["start_s"].get<double>();
    ev.end_s = e["end_s"].get<double>();
    ev.confidence = e["confidence"].get<double>();
    ev.event_id = e.contains("id") ? e["id"].get<std::string>()
                                   : compute_event_id(ev.asset_id, ev.generator, ev.label, ev.start_s, ev.end_s);
    if (e.contains("track")) ev.track = parse_track(e["track"]);
    if (e.contains("author")) ev.author = e["author"].get<std::string>();
    if (e.contains("created_at")) ev.created_at = e["created_at"].get<std::string>();
    a.events.push_back(std::move(ev));
  }
  return a;
}

json to_json(const DetectionEvent& e) {
  json j{{"id", e.event_id},
         {"label", e.label},
         {"start_s", e.start_s},
         {"end_s", e.end_s},
         {"confidence", e.confidence}};
  if (e.track) {
    json track = json::array();
    for (const auto& b : *e.track) {
      track.push_back({{"t_s", b.t_s}, {"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}, {"track_id", b.track_id}});
    }
    j["track"] = std::move(track);
  }
  if (e.author) j["author"] = *e.author;
  if (e.created_at) j["created_at"] = *e.created_at;
  return j;
}

json to_json(const Artifact& a) {
  json events = json::array();
  for (const auto& e : a.events) events.push_back(to_json(e));
  return json{{"schema_version", kSchemaVersion},
              {"asset_id", a.asset_id},
              {"generator", generator_json(a.generator)},
              {"events", std::move(events)}};
}

std::vector<Span> merge_spans(std::vector<Span> spans, double gap_s) {
  std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) {
    return std::tie(a.start_s, a.end_s) < std::tie(b.start_s, b.end_s);
  });
  std::vector<Span> out;
  for (const auto& s : spans) {
    if (!out.empty() && s.start_s - out.back().end_s <= gap_s) {
      out.back().end_s = std::max(out.back().end_s, s.end_s);
      out.back().max_confidence = std::max(out.back().max_confidence, s.max_confidence);
    } else {
      out.push_back(s);
    }
  }
  return out;
}

EventIndex::EventIndex(fs::path snapshot_path) : snapshot_path_(std::move(snapshot_path)) {
  if (fs::exists(snapshot_path_)) load_snapshot();
}

void EventIndex::insert_locked(const DetectionEvent& e) {
  auto [it, inserted] = events_.insert_or_assign(e.event_id, e);
  if (inserted) by_asset_[e.asset_id].push_back(e.event_id);
}

void EventIndex::add_artifact(const Artifact& artifact) {
  std::unique_lock lock(mutex_);
  for (const auto& e : artifact.events) insert_locked(e);
  save_locked();
}

LoadReport EventIndex::load_artifacts(const fs::path& dir, const DurationLookup& durations) {
  LoadReport report;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<Artifact> parsed;
  for (const auto& file : files) {
    ++report.files_scanned;
    try {
      parsed.push_back(parse_artifact(json::parse(io::read_text(file)), durations));
      ++report.files_loaded;
      report.events_loaded += parsed.back().events.size();
    } catch (const json::exception& e) {
      report.violations.push_back({file.filename().string(), {std::string("malformed JSON: ") + e.what()}});
    } catch (const Error& e) {
      report.violations.push_back({file.filename().string(), {e.what()}});
    }
  }

  std::unique_lock lock(mutex_);
  for (const auto& a : parsed) {
    for (const auto& e : a.events) insert_locked(e);
  }
  report.events_total = events_.size();
  save_locked();
  return report;
}

std::vector<QueryHit> EventIndex::query(const EventQuery& q, const AssetFilter& asset_filter) const {
  if (q.clauses.empty()) throw Error(ErrorCode::EmptyQuery, "query needs at least one clause");
  for (const auto& c : q.clauses) {
    if (!is_unit(c.min_confidence)) throw Error(ErrorCode::InvalidArgument, "min_confidence must lie in [0, 1]");
  }

  std::shared_lock lock(mutex_);
  std::vector<QueryHit> hits;
  for (const auto& [asset_id, ids] : by_asset_) {
    if (asset_filter && !asset_filter(asset_id)) continue;
    std::vector<bool> satisfied(q.clauses.size(), false);
    QueryHit hit{asset_id, {}, 0.0};
    for (const auto& id : ids) {
      const auto& e = events_.at(id);
      bool matched = false;
      for (std::size_t c = 0; c < q.clauses.size(); ++c) {
        if (e.label == q.clauses[c].label && e.confidence >= q.clauses[c].min_confidence) {
          satisfied[c] = true;
          matched = true;
        }
      }
      if (matched) {
        hit.events.push_back(e);
        hit.rank_score = std::max(hit.rank_score, e.confidence);
      }
    }
    const bool qualifies = q.combine == Combine::And
                               ? std::all_of(satisfied.begin(), satisfied.end(), [](bool b) { return b; })
                               : std::any_of(satisfied.begin(), satisfied.end(), [](bool b) { return b; });
    if (!qualifies) continue;
    std::sort(hit.events.begin(), hit.events.end(), [](const DetectionEvent& a, const DetectionEvent& b) {
      return std::tie(a.start_s, a.event_id) < std::tie(b.start_s, b.event_id);
    });
    hits.push_back(std::move(hit));
  }

  if (q.sort == SortOrder::Confidence) {
    std::sort(hits.begin(), hits.end(), [](const QueryHit& a, const QueryHit& b) {
      if (a.rank_score != b.rank_score) return a.rank_score > b.rank_score;
      return a.asset_id < b.asset_id;
    });
  } else {
    std::sort(hits.begin(), hits.end(), [](const QueryHit& a, const QueryHit& b) {
      const double ta = a.events.front().start_s, tb = b.events.front().start_s;
      if (ta != tb) return ta < tb;
      return a.asset_id < b.asset_id;
    });
  }
  return hits;
}

std::vector<Span> EventIndex::aggregate_spans(const std::string& asset_id, const std::string& label,
                                              double gap_s) const {
  std::shared_lock lock(mutex_);
  auto it = by_asset_.find(asset_id);
  if (it == by_asset_.end()) throw Error(ErrorCode::UnknownAsset, "no events for asset " + asset_id);
  std::vector<Span> spans;
  for (const auto& id : it->second) {
    const auto& e = events_.at(id);
    if (e.label == label) spans.push_back({e.start_s, e.end_s, e.confidence});
  }
  return merge_spans(std::move(spans), gap_s);
}

std::string EventIndex::add_annotation(const Annotation& a, const fs::path& artifact_dir,
                                       const DurationLookup& durations) {
  const auto duration = durations ? durations(a.asset_id) : std::nullopt;
  if (!duration) throw Error(ErrorCode::UnknownAsset, "unknown asset " + a.asset_id);
  if (!(a.start_s >= 0.0 && a.start_s < a.end_s) || a.end_s > *duration + kDurationTolerance) {
    throw Error(ErrorCode::InvalidSpan, "annotation span must satisfy 0 <= start < end <= duration");
  }
  if (a.label.empty()) throw Error(ErrorCode::InvalidArgument, "annotation label must not be empty");

  Artifact artifact;
  artifact.asset_id = a.asset_id;
  artifact.generator = {"annotation", "1", GeneratorKind::User};
  DetectionEvent e;
  e.asset_id = a.asset_id;
  e.generator = artifact.generator;
  e.label = a.label;
  e.start_s = a.start_s;
  e.end_s = a.end_s;
  e.confidence = 1.0;
  e.track = a.track;
  e.author = a.author;
  e.created_at = io::utc_now_iso8601();
  e.event_id = compute_event_id(e.asset_id, e.generator, e.label, e.start_s, e.end_s);
  artifact.events.push_back(e);

  // Same validation path as any other artifact.
  const auto j = to_json(artifact);
  if (auto errors = validate(j, durations); !errors.empty()) throw Error(ErrorCode::SchemaViolation, join(errors));

  std::unique_lock lock(mutex_);
  io::write_text_atomic(artifact_dir / ("annotation-" + e.event_id + ".json"), j.dump(2));
  insert_locked(e);
  save_locked();
  return e.event_id;
}

void EventIndex::delete_annotation(const std::string& event_id, const fs::path& artifact_dir) {
  std::unique_lock lock(mutex_);
  auto it = events_.find(event_id);
  if (it == events_.end() || it->second.generator.kind != GeneratorKind::User) {
    throw Error(ErrorCode::UnknownEvent, "no annotation " + event_id);
  }
  fs::remove(artifact_dir / ("annotation-" + event_id + ".json"));
  auto& ids = by_asset_[it->second.asset_id];
  std::erase(ids, event_id);
  if (ids.empty()) by_asset_.erase(it->second.asset_id);
  events_.erase(it);
  save_locked();
}

std::vector<DetectionEvent> EventIndex::events_for_asset(const std::string& asset_id) const {
  std::shared_lock lock(mutex_);
  std::vector<DetectionEvent> out;
  if (auto it = by_asset_.find(asset_id); it != by_asset_.end()) {
    for (const auto& id : it->second) out.push_back(events_.at(id));
  }
  std::sort(out.begin(), out.end(), [](const DetectionEvent& a, const DetectionEvent& b) {
    return std::tie(a.start_s, a.event_id) < std::tie(b.start_s, b.event_id);
  });
  return out;
}

std::vector<Artifact> EventIndex::artifacts_for_asset(const std::string& asset_id) const {
  std::map<std::tuple<std::string, std::string, int>, Artifact> grouped;
  for (auto& e : events_for_asset(asset_id)) {
    auto key = std::make_tuple(e.generator.name, e.generator.version, static_cast<int>(e.generator.kind));
    auto& a = grouped[key];
    a.asset_id = asset_id;
    a.generator = e.generator;
    a.events.push_back(std::move(e));
  }
  std::vector<Artifact> out;
  for (auto& [key, a] : grouped) out.push_back(std::move(a));
  return out;
}

std::optional<DetectionEvent> EventIndex::find(const std::string& event_id) const {
  std::shared_lock lock(mutex_);
  if (auto it = events_.find(event_id); it != events_.end()) return it->second;
  return std::nullopt;
}

bool EventIndex::has_asset(const std::string& asset_id) const {
  std::shared_lock lock(mutex_);
  return by_asset_.contains(asset_id);
}

std::size_t EventIndex::size() const {
  std::shared_lock lock(mutex_);
  return events_.size();
}

std::vector<std::string> EventIndex::labels() const {
  std::shared_lock lock(mutex_);
  std::set<std::string> labels;
  for (const auto& [id, e] : events_) labels.insert(e.label);
  return {labels.begin(), labels.end()};
}

void EventIndex::save_locked() const {
  if (snapshot_path_.empty()) return;
  std::map<std::tuple<std::string, std::string, std::string, int>, Artifact> grouped;
  for (const auto& [id, e] : events_) {
    auto& a = grouped[{e.asset_id, e.generator.name, e.generator.version, static_cast<int>(e.generator.kind)}];
    a.asset_id = e.asset_id;
    a.generator = e.generator;
    a.events.push_back(e);
  }
  json artifacts = json::array();
  for (const auto& [key, a] : grouped) artifacts.push_back(to_json(a));
  io::write_text_atomic(snapshot_path_, json{{"schema_version", kSchemaVersion}, {"artifacts", artifacts}}.dump());
}

void EventIndex::load_snapshot() {
  const auto j = json::parse(io::read_text(snapshot_path_));
  for (const auto& a : j.at("artifacts")) {
    for (const auto& e : parse_artifact(a).events) insert_locked(e);
  }
}

}  // namespace avp::events
