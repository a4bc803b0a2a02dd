#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "avp/catalog.hpp"

namespace avp::events {

inline constexpr int kSchemaVersion = 1;
inline constexpr double kDurationTolerance = 0.5;
inline constexpr double kDefaultMergeGap = 0.5;

// Canonical sound-event labels; the vocabulary itself is open.
inline const std::vector<std::string> kCanonicalAudioLabels = {"gunshot", "explosion", "speech",
                                                               "emergency_vehicle", "alarm"};

enum class GeneratorKind { Audio, Video, User };

const char* to_string(GeneratorKind kind);
std::optional<GeneratorKind> parse_kind(const std::string& s);

struct Generator {
  std::string name;
  std::string version;
  GeneratorKind kind = GeneratorKind::Audio;

  friend bool operator==(const Generator&, const Generator&) = default;
};

// Fractional frame coordinates.
struct TrackBox {
  double t_s = 0.0;
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
  std::int64_t track_id = 0;

  friend bool operator==(const TrackBox&, const TrackBox&) = default;
};

struct DetectionEvent {
  std::string event_id;
  std::string asset_id;
  std::string label;
  double start_s = 0.0;
  double end_s = 0.0;
  double confidence = 0.0;
  Generator generator;
  std::optional<std::vector<TrackBox>> track;
  // Set on user annotations only.
  std::optional<std::string> author;
  std::optional<std::string> created_at;

  friend bool operator==(const DetectionEvent&, const DetectionEvent&) = default;
};

// One generator's events for one asset: the on-disk integration unit.
struct Artifact {
  std::string asset_id;
  Generator generator;
  std::vector<DetectionEvent> events;
};

// Returns the asset duration, or nullopt when the asset is not known.
using DurationLookup = std::function<std::optional<double>(const std::string& asset_id)>;

std::string compute_event_id(const std::string& asset_id, const Generator& generator, const std::string& label,
                             double start_s, double end_s);

// All schema violations in `j`; empty means valid.
std::vector<std::string> validate(const nlohmann::json& j, const DurationLookup& durations = {});

// Throws SchemaViolation listing every problem.
Artifact parse_artifact(const nlohmann::json& j, const DurationLookup& durations = {});
nlohmann::json to_json(const Artifact& artifact);
nlohmann::json to_json(const DetectionEvent& event);

struct Clause {
  std::string label;
  double min_confidence = 0.0;
};

enum class Combine { And, Or };
enum class SortOrder { Confidence, Time };

struct EventQuery {
  std::vector<Clause> clauses;
  Combine combine = Combine::And;
  MetadataFilter metadata;
  SortOrder sort = SortOrder::Confidence;
};

struct QueryHit {
  std::string asset_id;
  std::vector<DetectionEvent> events;  // by (start_s, event_id)
  double rank_score = 0.0;
};

struct Span {
  double start_s = 0.0;
  double end_s = 0.0;
  double max_confidence = 0.0;

  friend bool operator==(const Span&, const Span&) = default;
};

// Merges overlapping or <= gap-separated spans; sorted by start.
std::vector<Span> merge_spans(std::vector<Span> spans, double gap_s = kDefaultMergeGap);

struct FileReport {
  std::string file;
  std::vector<std::string> errors;
};

struct LoadReport {
  std::size_t files_scanned = 0;
  std::size_t files_loaded = 0;
  std::size_t events_loaded = 0;
  std::size_t events_total = 0;
  std::vector<FileReport> violations;
};

struct Annotation {
  std::string asset_id;
  std::string label;
  double start_s = 0.0;
  double end_s = 0.0;
  std::optional<std::vector<TrackBox>> track;
  std::string author;
};

// Keyed by event_id so reloading the same artifacts is idempotent.
// Persisted as a single JSON snapshot when constructed with a path.
class EventIndex {
 public:
  using AssetFilter = std::function<bool(const std::string& asset_id)>;

  EventIndex() = default;
  explicit EventIndex(std::filesystem::path snapshot_path);

  EventIndex(const EventIndex&) = delete;
  EventIndex& operator=(const EventIndex&) = delete;

  LoadReport load_artifacts(const std::filesystem::path& dir, const DurationLookup& durations = {});
  void add_artifact(const Artifact& artifact);

  // `asset_filter` implements the query's metadata clauses (the index only
  // knows asset ids); pass {} to accept every asset.
  std::vector<QueryHit> query(const EventQuery& q, const AssetFilter& asset_filter = {}) const;

  std::vector<Span> aggregate_spans(const std::string& asset_id, const std::string& label,
                                    double gap_s = kDefaultMergeGap) const;

  // Writes annotation-<event_id>.json into `artifact_dir` and indexes it.
  std::string add_annotation(const Annotation& a, const std::filesystem::path& artifact_dir,
                             const DurationLookup& durations);
  void delete_annotation(const std::string& event_id, const std::filesystem::path& artifact_dir);

  std::vector<DetectionEvent> events_for_asset(const std::string& asset_id) const;
  std::vector<Artifact> artifacts_for_asset(const std::string& asset_id) const;
  std::optional<DetectionEvent> find(const std::string& event_id) const;
  bool has_asset(const std::string& asset_id) const;
  std::size_t size() const;
  std::vector<std::string> labels() const;

 private:
  void insert_locked(const DetectionEvent& e);
  void save_locked() const;
  void load_snapshot();

  std::filesystem::path snapshot_path_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, DetectionEvent> events_;
  // asset -> event ids
  std::map<std::string, std::vector<std::string>> by_asset_;
};

}  // namespace avp::events
