#include "avp/catalog.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <json.hpp>

#include <unistd.h>

#include "avp/error.hpp"
#include "avp/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace avp {

json to_json(const MediaAsset& a) {
  return json{{"asset_id", a.asset_id},
              {"source_path", a.source_path.string()},
              {"duration_s", a.duration_s},
              {"sample_rate_hz", a.sample_rate_hz},
              {"channels", a.channels},
              {"content_hash", a.content_hash},
              {"metadata", a.metadata},
              {"ingest_time", a.ingest_time},
              {"media_file", a.media_file}};
}

MediaAsset asset_from_json(const json& j) {
  MediaAsset a;
  a.asset_id = j.at("asset_id").get<std::string>();
  a.source_path = j.at("source_path").get<std::string>();
  a.duration_s = j.at("duration_s").get<double>();
  a.sample_rate_hz = j.at("sample_rate_hz").get<int>();
  a.channels = j.at("channels").get<int>();
  a.content_hash = j.at("content_hash").get<std::string>();
  a.metadata = j.at("metadata").get<Metadata>();
  a.ingest_time = j.at("ingest_time").get<std::string>();
  a.media_file = j.value("media_file", std::string{});
  return a;
}

namespace {

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) s.replace(pos, from.size(), to);
  return s;
}

std::string shell_quote(const std::string& s) { return "'" + replace_all(s, "'", "'\\''") + "'"; }

std::vector<std::uint8_t> pcm_bytes(std::span<const float> samples) {
  io::ByteWriter w;
  for (float s : samples) w.put_f32(s);
  return w.take();
}

}  // namespace

bool matches(const Metadata& metadata, const MetadataFilter& filter) {
  for (const auto& [k, v] : filter) {
    auto it = metadata.find(k);
    if (it == metadata.end() || it->second != v) return false;
  }
  return true;
}

Catalog::Catalog(fs::path root, CatalogOptions options) : root_(std::move(root)), options_(std::move(options)) {
  fs::create_directories(root_ / "catalog");
  fs::create_directories(root_ / "pcm");
  fs::create_directories(root_ / "media");
  load();
}

void Catalog::load() {
  for (const auto& entry : fs::directory_iterator(root_ / "catalog")) {
    if (entry.path().extension() != ".json") continue;
    auto asset = asset_from_json(json::parse(io::read_text(entry.path())));
    by_hash_[asset.content_hash] = asset.asset_id;
    assets_[asset.asset_id] = std::move(asset);
  }
}

void Catalog::persist_record(const MediaAsset& asset) const {
  io::write_text_atomic(root_ / "catalog" / (asset.asset_id + ".json"), to_json(asset).dump(2));
}

DecodedAudio Catalog::decode_file(const fs::path& path, std::span<const std::uint8_t> bytes) const {
  if (wav::looks_like_wav(bytes)) return wav::decode(bytes);
  if (options_.transcoder.empty()) {
    throw Error(ErrorCode::UnsupportedFormat, path.string() + ": not WAV and no transcoder configured");
  }
  // Unique per call: concurrent ingests of identical bytes must not share it.
  static std::atomic<unsigned> counter{0};
  auto tmp = fs::temp_directory_path() / ("avp-transcode-" + io::sha256_hex(bytes).substr(0, 16) + "-" +
                                          std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".wav");
  auto cmd = replace_all(options_.transcoder, "{input}", shell_quote(fs::absolute(path).string()));
  cmd = replace_all(cmd, "{output}", shell_quote(tmp.string()));
  int rc = std::system(cmd.c_str());
  if (rc != 0 || !fs::exists(tmp)) {
    fs::remove(tmp);
    throw Error(ErrorCode::CorruptMedia, path.string() + ": transcoder failed (exit " + std::to_string(rc) + ")");
  }
  auto out_bytes = io::read_file(tmp);
  fs::remove(tmp);
  try {
    return wav::decode(out_bytes);
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptMedia, path.string() + ": transcoder output unreadable: " + e.what());
  }
}

MediaAsset Catalog::ingest(const fs::path& path, const Metadata& metadata) {
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::IoError, "no such file: " + path.string());
  const auto bytes = io::read_file(path);
  const auto hash = io::sha256_hex(bytes);

  {
    std::unique_lock lock(mutex_);
    if (auto it = by_hash_.find(hash); it != by_hash_.end()) {
      auto& existing = assets_.at(it->second);
      for (const auto& [k, v] : metadata) existing.metadata[k] = v;
      persist_record(existing);
      return existing;
    }
  }

  // Decode and resample outside the lock so distinct files ingest in parallel.
  auto decoded = decode_file(path, bytes);
  if (decoded.frames() == 0) throw Error(ErrorCode::CorruptMedia, path.string() + ": no audio frames");
  auto mono = mixdown_mono(decoded);
  auto pcm = std::make_shared<PcmAudio>();
  pcm->samples = resample(mono, decoded.sample_rate_hz, kAnalysisRate);

  MediaAsset asset;
  asset.asset_id = hash.substr(0, 16);
  asset.source_path = fs::absolute(path);
  asset.duration_s = static_cast<double>(decoded.frames()) / decoded.sample_rate_hz;
  asset.sample_rate_hz = decoded.sample_rate_hz;
  asset.channels = decoded.channels;
  asset.content_hash = hash;
  asset.metadata = metadata;
  asset.media_file = asset.asset_id + path.extension().string();
  pcm->asset_id = asset.asset_id;

  io::write_file_atomic(root_ / "pcm" / (asset.asset_id + ".f32"), pcm_bytes(pcm->samples));
  const auto media = root_ / "media" / asset.media_file;
  if (!fs::exists(media)) {
    if (options_.symlink_media) {
      fs::create_symlink(asset.source_path, media);
    } else {
      io::write_file_atomic(media, bytes);
    }
  }

  std::unique_lock lock(mutex_);
  if (auto it = by_hash_.find(hash); it != by_hash_.end()) {
    // Lost a race with an identical ingest.
    auto& existing = assets_.at(it->second);
    for (const auto& [k, v] : metadata) existing.metadata[k] = v;
    persist_record(existing);
    return existing;
  }
  asset.ingest_time = io::utc_now_iso8601();
  persist_record(asset);
  by_hash_[hash] = asset.asset_id;
  pcm_cache_[asset.asset_id] = std::move(pcm);
  assets_[asset.asset_id] = asset;
  return asset;
}

PcmHandle Catalog::get_audio(const std::string& asset_id) const {
  {
    std::shared_lock lock(mutex_);
    if (!assets_.contains(asset_id)) throw Error(ErrorCode::UnknownAsset, "unknown asset " + asset_id);
    if (auto it = pcm_cache_.find(asset_id); it != pcm_cache_.end()) return it->second;
  }
  const auto bytes = io::read_file(root_ / "pcm" / (asset_id + ".f32"));
  if (bytes.size() % 4 != 0) throw Error(ErrorCode::CorruptMedia, "pcm cache for " + asset_id + " is truncated");
  auto pcm = std::make_shared<PcmAudio>();
  pcm->asset_id = asset_id;
  pcm->samples.resize(bytes.size() / 4);
  io::ByteReader r(bytes);
  for (auto& s : pcm->samples) s = r.get_f32();

  std::unique_lock lock(mutex_);
  auto [it, inserted] = pcm_cache_.emplace(asset_id, std::move(pcm));
  return it->second;
}

std::optional<MediaAsset> Catalog::find(const std::string& asset_id) const {
  std::shared_lock lock(mutex_);
  if (auto it = assets_.find(asset_id); it != assets_.end()) return it->second;
  return std::nullopt;
}

MediaAsset Catalog::get(const std::string& asset_id) const {
  auto a = find(asset_id);
  if (!a) throw Error(ErrorCode::UnknownAsset, "unknown asset " + asset_id);
  return *a;
}

std::vector<MediaAsset> Catalog::list_assets(const MetadataFilter& filter) const {
  std::vector<MediaAsset> out;
  {
    std::shared_lock lock(mutex_);
    for (const auto& [id, a] : assets_) {
      if (matches(a.metadata, filter)) out.push_back(a);
    }
  }
  std::sort(out.begin(), out.end(), [](const MediaAsset& x, const MediaAsset& y) {
    return std::tie(x.ingest_time, x.asset_id) < std::tie(y.ingest_time, y.asset_id);
  });
  return out;
}

std::size_t Catalog::size() const {
  std::shared_lock lock(mutex_);
  return assets_.size();
}

fs::path Catalog::media_path(const MediaAsset& asset) const { return root_ / "media" / asset.media_file; }

std::string Catalog::pcm_checksum(const PcmAudio& pcm) { return io::sha256_hex(pcm_bytes(pcm.samples)); }

}  // namespace avp
