#include "avp/workspace.hpp"

#include "avp/error.hpp"
#include "avp/io.hpp"

namespace fs = std::filesystem;

namespace avp {

WorkspaceConfig Workspace::normalized(WorkspaceConfig config) {
  if (config.corpus_root.empty()) throw Error(ErrorCode::ConfigError, "corpus_root is required");
  if (config.artifact_dir.empty()) config.artifact_dir = config.corpus_root / "artifacts";
  fs::create_directories(config.corpus_root / "index");
  fs::create_directories(config.artifact_dir);
  return config;
}

Workspace::Workspace(WorkspaceConfig config)
    : config_(normalized(std::move(config))),
      catalog_(config_.corpus_root, config_.catalog),
      fingerprints_(config_.corpus_root / "index" / "fingerprints.avpf", config_.fingerprint),
      features_(config_.corpus_root / "index" / "features.avfe"),
      events_(config_.corpus_root / "index" / "events.json"),
      weights_(config_.similarity_weights_path ? similarity::load_weights(*config_.similarity_weights_path)
                                               : similarity::uniform_weights()) {
  dashboards_ = std::make_unique<dashboards::DashboardStore>(config_.artifact_dir / "dashboards", catalog_,
                                                             fingerprints_, features_);
}

MediaAsset Workspace::ingest(const fs::path& path, const Metadata& metadata, bool analyze_now) {
  auto asset = catalog_.ingest(path, metadata);
  if (analyze_now) analyze(asset.asset_id);
  return asset;
}

void Workspace::analyze(const std::string& asset_id) {
  const auto pcm = catalog_.get_audio(asset_id);
  if (!fingerprints_.contains(asset_id)) {
    std::vector<fingerprint::LandmarkHash> hashes;
    if (pcm->samples.size() >= static_cast<std::size_t>(dsp::kWindowSize)) {
      hashes = fingerprint::fingerprint_audio(*pcm, fingerprints_.config());
    }
    fingerprints_.index_asset(asset_id, pcm->duration_s(), hashes);
  }
  if (!features_.contains(asset_id)) {
    std::vector<similarity::SegmentFeature> segments;
    if (pcm->samples.size() >= static_cast<std::size_t>(dsp::kWindowSize)) {
      segments = similarity::extract_segment_features(*pcm);
    }
    features_.add_asset(asset_id, std::move(segments));
  }
}

std::vector<std::string> Workspace::pending() const {
  std::vector<std::string> out;
  for (const auto& a : catalog_.list_assets()) {
    if (!fingerprints_.contains(a.asset_id) || !features_.contains(a.asset_id)) out.push_back(a.asset_id);
  }
  return out;
}

events::DurationLookup Workspace::durations() const {
  return [this](const std::string& id) -> std::optional<double> {
    if (auto a = catalog_.find(id)) return a->duration_s;
    return std::nullopt;
  };
}

events::LoadReport Workspace::load_artifacts() { return events_.load_artifacts(config_.artifact_dir, durations()); }

events::Artifact Workspace::quickdetect(const std::string& asset_id, const quickdetect::DetectorConfig& cfg,
                                        std::optional<fs::path> out_dir) {
  const auto pcm = catalog_.get_audio(asset_id);
  auto artifact = quickdetect::detect_all(*pcm, cfg);
  const auto dir = out_dir.value_or(config_.artifact_dir);
  io::write_text_atomic(dir / ("quickdetect-" + asset_id + ".json"), events::to_json(artifact).dump(2));
  events_.add_artifact(artifact);
  return artifact;
}

}  // namespace avp
