#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

namespace avp {
class Catalog;
}
namespace avp::fingerprint {
class FingerprintIndex;
}
namespace avp::similarity {
class FeatureStore;
}

namespace avp::dashboards {

inline constexpr int kSchemaVersion = 1;
// Two 50 ms histogram bins.
inline constexpr double kTransitivityTolerance = 0.1;

struct Member {
  std::string asset_id;
  double offset_s = 0.0;  // member start on the master timeline
  double z_score = 0.0;

  friend bool operator==(const Member&, const Member&) = default;
};

struct Dashboard {
  std::string dashboard_id;
  std::string title;
  std::string master_asset_id;
  double sync_point_s = 0.0;
  std::vector<Member> members;
  std::string created_by;
  std::string created_at;

  friend bool operator==(const Dashboard&, const Dashboard&) = default;
};

nlohmann::json to_json(const Dashboard& d);
Dashboard from_json(const nlohmann::json& j);

struct Recommendation {
  std::string asset_id;
  double score = 0.0;                 // mean z over master and members, 0 where no match
  std::optional<double> distance;     // sync-point segment to candidate
};

struct TimelineSpan {
  std::string asset_id;
  double start_s = 0.0;
  double end_s = 0.0;
  bool master = false;
};

// For members B, C: |offset(M,C) - offset(M,B) - offset(B,C)|.
struct TransitivityCheck {
  std::string asset_b;
  std::string asset_c;
  bool matched = false;  // B and C match each other
  double residual_s = 0.0;
  bool clean = false;
};

struct Timeline {
  std::vector<TimelineSpan> spans;
  std::vector<TransitivityCheck> audit;
};

// Dashboards persisted one JSON file each under `dir`.
class DashboardStore {
 public:
  DashboardStore(std::filesystem::path dir, const Catalog& catalog, const fingerprint::FingerprintIndex& index,
                 const similarity::FeatureStore& features);

  Dashboard create(const std::string& master_asset_id, double sync_point_s, const std::string& title,
                   const std::string& created_by = {});
  Dashboard get(const std::string& dashboard_id) const;
  std::vector<Dashboard> list() const;
  Dashboard add_member(const std::string& dashboard_id, const std::string& asset_id);
  std::vector<Recommendation> recommend_members(const std::string& dashboard_id, int k) const;
  Timeline timeline(const std::string& dashboard_id) const;

 private:
  void persist(const Dashboard& d) const;
  void load();

  std::filesystem::path dir_;
  const Catalog& catalog_;
  const fingerprint::FingerprintIndex& index_;
  const similarity::FeatureStore& features_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Dashboard> dashboards_;
};

}  // namespace avp::dashboards
