#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "avp/catalog.hpp"
#include "avp/dashboards.hpp"
#include "avp/events.hpp"
#include "avp/fingerprint.hpp"
#include "avp/quickdetect.hpp"
#include "avp/similarity.hpp"

namespace avp {

struct WorkspaceConfig {
  std::filesystem::path corpus_root;
  // Defaults to <corpus_root>/artifacts.
  std::filesystem::path artifact_dir;
  CatalogOptions catalog;
  fingerprint::Config fingerprint;
  std::optional<std::filesystem::path> similarity_weights_path;
};

// Every store of one corpus, rooted at corpus_root:
//   catalog/ pcm/ media/          the catalog
//   index/fingerprints.avpf(.json)
//   index/features.avfe(.json)
//   index/events.json             event index snapshot
// Dashboards live under <artifact_dir>/dashboards/.
class Workspace {
 public:
  explicit Workspace(WorkspaceConfig config);

  const WorkspaceConfig& config() const { return config_; }
  const std::filesystem::path& artifact_dir() const { return config_.artifact_dir; }

  Catalog& catalog() { return catalog_; }
  const Catalog& catalog() const { return catalog_; }
  fingerprint::FingerprintIndex& fingerprints() { return fingerprints_; }
  const fingerprint::FingerprintIndex& fingerprints() const { return fingerprints_; }
  similarity::FeatureStore& features() { return features_; }
  const similarity::FeatureStore& features() const { return features_; }
  events::EventIndex& events() { return events_; }
  const events::EventIndex& events() const { return events_; }
  dashboards::DashboardStore& dashboards() { return *dashboards_; }
  const dashboards::DashboardStore& dashboards() const { return *dashboards_; }
  const similarity::Weights& weights() const { return weights_; }

  // Ingests and, when `analyze` is set, fingerprints and extracts features.
  MediaAsset ingest(const std::filesystem::path& path, const Metadata& metadata = {}, bool analyze = true);
  // Builds whichever of fingerprint / features is missing for the asset.
  void analyze(const std::string& asset_id);
  // Assets lacking a fingerprint or a feature entry.
  std::vector<std::string> pending() const;

  events::DurationLookup durations() const;
  events::LoadReport load_artifacts();

  // Runs the heuristic detectors; writes quickdetect-<asset>.json into `out_dir`
  // (default artifact_dir) and indexes the result.
  events::Artifact quickdetect(const std::string& asset_id, const quickdetect::DetectorConfig& cfg = {},
                               std::optional<std::filesystem::path> out_dir = std::nullopt);

 private:
  static WorkspaceConfig normalized(WorkspaceConfig config);

  WorkspaceConfig config_;
  Catalog catalog_;
  fingerprint::FingerprintIndex fingerprints_;
  similarity::FeatureStore features_;
  events::EventIndex events_;
  std::unique_ptr<dashboards::DashboardStore> dashboards_;
  similarity::Weights weights_;
};

}  // namespace avp
