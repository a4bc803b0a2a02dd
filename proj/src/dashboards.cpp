#include "avp/dashboards.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "avp/catalog.hpp"
#include "avp/error.hpp"
#include "avp/fingerprint.hpp"
#include "avp/io.hpp"
#include "avp/similarity.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace avp::dashboards {

namespace {

std::string new_dashboard_id() {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  char buf[24];
  std::snprintf(buf, sizeof buf, "db-%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

}  // namespace

json to_json(const Dashboard& d) {
  json members = json::array();
  for (const auto& m : d.members) {
    members.push_back({{"asset_id", m.asset_id}, {"offset_s", m.offset_s}, {"z_score", m.z_score}});
  }
  return json{{"schema_version", kSchemaVersion},
              {"dashboard_id", d.dashboard_id},
              {"title", d.title},
              {"master_asset_id", d.master_asset_id},
              {"sync_point_s", d.sync_point_s},
              {"members", std::move(members)},
              {"created_by", d.created_by},
              {"created_at", d.created_at}};
}

Dashboard from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw Error(ErrorCode::SchemaViolation, "unsupported dashboard schema_version");
    }
    Dashboard d;
    d.dashboard_id = j.at("dashboard_id").get<std::string>();
    d.title = j.at("title").get<std::string>();
    d.master_asset_id = j.at("master_asset_id").get<std::string>();
    d.sync_point_s = j.at("sync_point_s").get<double>();
    for (const auto& m : j.at("members")) {
      d.members.push_back(
          {m.at("asset_id").get<std::string>(), m.at("offset_s").get<double>(), m.at("z_score").get<double>()});
    }
    d.created_by = j.value("created_by", "");
    d.created_at = j.value("created_at", "");
    return d;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("malformed dashboard: ") + e.what());
  }
}

DashboardStore::DashboardStore(fs::path dir, const Catalog& catalog, const fingerprint::FingerprintIndex& index,
                               const similarity::FeatureStore& features)
    : dir_(std::move(dir)), catalog_(catalog), index_(index), features_(features) {
  fs::create_directories(dir_);
  load();
}

void DashboardStore::load() {
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.path().extension() != ".json") continue;
    auto d = from_json(json::parse(io::read_text(entry.path())));
    dashboards_[d.dashboard_id] = std::move(d);
  }
}

void DashboardStore::persist(const Dashboard& d) const {
  io::write_text_atomic(dir_ / (d.dashboard_id + ".json"), to_json(d).dump(2));
}

Dashboard DashboardStore::create(const std::string& master_asset_id, double sync_point_s, const std::string& title,
                                 const std::string& created_by) {
  const auto master = catalog_.find(master_asset_id);
  if (!master || !index_.contains(master_asset_id)) {
    throw Error(ErrorCode::UnknownAsset, "master must be ingested and fingerprinted: " + master_asset_id);
  }
  if (!(sync_point_s >= 0.0 && sync_point_s <= master->duration_s)) {
    throw Error(ErrorCode::SyncPointOutOfRange, "sync point outside [0, duration]");
  }
  Dashboard d;
  d.dashboard_id = new_dashboard_id();
  d.title = title;
  d.master_asset_id = master_asset_id;
  d.sync_point_s = sync_point_s;
  d.created_by = created_by;
  d.created_at = io::utc_now_iso8601();

  std::unique_lock lock(mutex_);
  persist(d);
  dashboards_[d.dashboard_id] = d;
  return d;
}

Dashboard DashboardStore::get(const std::string& dashboard_id) const {
  std::shared_lock lock(mutex_);
  auto it = dashboards_.find(dashboard_id);
  if (it == dashboards_.end()) throw Error(ErrorCode::UnknownDashboard, "no dashboard " + dashboard_id);
  return it->second;
}

std::vector<Dashboard> DashboardStore::list() const {
  std::shared_lock lock(mutex_);
  std::vector<Dashboard> out;
  for (const auto& [id, d] : dashboards_) out.push_back(d);
  return out;
}

Dashboard DashboardStore::add_member(const std::string& dashboard_id, const std::string& asset_id) {
  const auto d = get(dashboard_id);
  const auto is_present = [&](const Dashboard& x) {
    return asset_id == x.master_asset_id ||
           std::any_of(x.members.begin(), x.members.end(), [&](const Member& m) { return m.asset_id == asset_id; });
  };
  if (is_present(d)) throw Error(ErrorCode::DuplicateMember, asset_id + " is already on the dashboard");
  if (!catalog_.find(asset_id)) throw Error(ErrorCode::UnknownAsset, "unknown asset " + asset_id);

  // The match runs without holding the store lock.
  const auto result = index_.match_pair(d.master_asset_id, asset_id);
  if (!result.is_match) {
    throw Error(ErrorCode::NoAcousticMatch,
                "no acoustic match with master (z=" + std::to_string(result.z_score) +
                    ", bin_count=" + std::to_string(result.bin_count) + ")");
  }

  std::unique_lock lock(mutex_);
  auto& current = dashboards_.at(dashboard_id);
  if (is_present(current)) throw Error(ErrorCode::DuplicateMember, asset_id + " is already on the dashboard");
  auto updated = current;
  updated.members.push_back({asset_id, result.offset_s, result.z_score});
  persist(updated);
  current = updated;
  return updated;
}

std::vector<Recommendation> DashboardStore::recommend_members(const std::string& dashboard_id, int k) const {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  const auto d = get(dashboard_id);

  std::vector<std::string> refs{d.master_asset_id};
  for (const auto& m : d.members) refs.push_back(m.asset_id);
  const std::set<std::string> excluded(refs.begin(), refs.end());

  const auto sync_segment = static_cast<std::uint32_t>(std::floor(d.sync_point_s / similarity::kSegmentSeconds));
  std::vector<Recommendation> out;
  for (const auto& candidate : index_.asset_ids()) {
    if (excluded.contains(candidate)) continue;
    double total = 0.0;
    for (const auto& ref : refs) {
      if (!index_.contains(ref)) continue;
      const auto r = index_.match_pair(ref, candidate);
      if (r.is_match) total += r.z_score;
    }
    Recommendation rec{candidate, total / static_cast<double>(refs.size()), std::nullopt};
    if (features_.contains(d.master_asset_id) && features_.contains(candidate)) {
      rec.distance = features_.segment_to_asset(d.master_asset_id, sync_segment, candidate);
    }
    out.push_back(std::move(rec));
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::sort(out.begin(), out.end(), [&](const Recommendation& a, const Recommendation& b) {
    if (a.score != b.score) return a.score > b.score;
    const double da = a.distance.value_or(kInf), db = b.distance.value_or(kInf);
    if (da != db) return da < db;
    return a.asset_id < b.asset_id;
  });
  if (out.size() > static_cast<std::size_t>(k)) out.resize(static_cast<std::size_t>(k));
  return out;
}

Timeline DashboardStore::timeline(const std::string& dashboard_id) const {
  const auto d = get(dashboard_id);
  Timeline t;
  const auto duration = [&](const std::string& id) {
    const auto a = catalog_.find(id);
    return a ? a->duration_s : 0.0;
  };
  t.spans.push_back({d.master_asset_id, 0.0, duration(d.master_asset_id), true});
  for (const auto& m : d.members) t.spans.push_back({m.asset_id, m.offset_s, m.offset_s + duration(m.asset_id), false});

  for (std::size_t i = 0; i < d.members.size(); ++i) {
    for (std::size_t j = i + 1; j < d.members.size(); ++j) {
      const auto& b = d.members[i];
      const auto& c = d.members[j];
      TransitivityCheck check{b.asset_id, c.asset_id, false, 0.0, false};
      if (index_.contains(b.asset_id) && index_.contains(c.asset_id)) {
        const auto r = index_.match_pair(b.asset_id, c.asset_id);
        if (r.is_match) {
          check.matched = true;
          check.residual_s = std::abs(c.offset_s - b.offset_s - r.offset_s);
          check.clean = check.residual_s <= kTransitivityTolerance;
        }
      }
      t.audit.push_back(check);
    }
  }
  return t;
}

}  // namespace avp::dashboards
