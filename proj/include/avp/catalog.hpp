#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "avp/audio.hpp"

namespace avp {

using Metadata = std::map<std::string, std::string>;

struct MediaAsset {
  std::string asset_id;
  std::filesystem::path source_path;
  double duration_s = 0.0;
  int sample_rate_hz = 0;
  int channels = 0;
  std::string content_hash;
  Metadata metadata;
  std::string ingest_time;
  std::string media_file;  // file name under media/
};

// Canonical analysis audio: mono float at 44.1 kHz. Immutable once built.
struct PcmAudio {
  std::string asset_id;
  std::vector<float> samples;
  int sample_rate_hz = kAnalysisRate;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

using PcmHandle = std::shared_ptr<const PcmAudio>;

// Conjunction of key == value clauses.
using MetadataFilter = std::map<std::string, std::string>;

bool matches(const Metadata& metadata, const MetadataFilter& filter);

nlohmann::json to_json(const MediaAsset& asset);
MediaAsset asset_from_json(const nlohmann::json& j);

struct CatalogOptions {
  // Shell template for non-WAV inputs; {input} and {output} are substituted,
  // the command must write a WAV file to {output}. Empty disables transcoding.
  std::string transcoder;
  bool symlink_media = false;
};

// Directory-rooted store:
//   catalog/<id>.json   asset records
//   pcm/<id>.f32        raw little-endian float32 mono, 44100 Hz, no header
//   media/<id><ext>     original bytes (or a symlink to them)
class Catalog {
 public:
  explicit Catalog(std::filesystem::path root, CatalogOptions options = {});

  const std::filesystem::path& root() const { return root_; }

  MediaAsset ingest(const std::filesystem::path& path, const Metadata& metadata = {});
  PcmHandle get_audio(const std::string& asset_id) const;
  std::optional<MediaAsset> find(const std::string& asset_id) const;
  MediaAsset get(const std::string& asset_id) const;
  std::vector<MediaAsset> list_assets(const MetadataFilter& filter = {}) const;
  std::size_t size() const;

  std::filesystem::path media_path(const MediaAsset& asset) const;

  static std::string pcm_checksum(const PcmAudio& pcm);

 private:
  void load();
  void persist_record(const MediaAsset& asset) const;
  DecodedAudio decode_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) const;

  std::filesystem::path root_;
  CatalogOptions options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, MediaAsset> assets_;
  std::map<std::string, std::string> by_hash_;
  mutable std::map<std::string, PcmHandle> pcm_cache_;
};

}  // namespace avp
