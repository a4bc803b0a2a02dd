#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "avp/dsp.hpp"

namespace avp {
struct PcmAudio;
}

namespace avp::fingerprint {

struct Peak {
  int frame_idx = 0;
  int bin_idx = 0;
  float magnitude_db = 0.0f;

  friend bool operator==(const Peak&, const Peak&) = default;
};

// Landmark hash bit layout, most significant first:
//   anchor bin (10 bits) | delta bin + 255 (9 bits) | delta frames (13 bits)
struct HashFields {
  int anchor_bin = 0;    // [0, 1023]
  int delta_bin = 0;     // [-255, 255]
  int delta_frames = 0;  // [0, 8191]

  friend bool operator==(const HashFields&, const HashFields&) = default;
};

std::uint32_t pack(const HashFields& fields);
HashFields unpack(std::uint32_t hash);

struct LandmarkHash {
  std::uint32_t hash = 0;
  double anchor_offset_s = 0.0;

  friend bool operator==(const LandmarkHash&, const LandmarkHash&) = default;
};

enum class Decision { MaxBin, BinsAbove };

struct Config {
  // Peak picking
  int neighborhood_frames = 31;
  int neighborhood_bins = 31;
  double floor_above_median_db = 10.0;
  // Absolute floor on 20*log10(magnitude); keeps numerical noise and
  // 16-bit quantization noise out of the landmark set.
  double min_magnitude_db = -60.0;
  double peaks_per_second = 30.0;
  // Target zone
  int fan_out = 8;
  double min_dt_s = 0.1;
  double max_dt_s = 2.0;
  int max_delta_bin = 255;
  // Matching
  double bin_width_s = 0.05;
  double tau = 4.0;
  int min_matches = 10;
  Decision decision = Decision::MaxBin;
  // Only used with Decision::BinsAbove.
  int min_bins_above = 1;
};

// Strict local maxima of the dB surface within the configured neighborhood,
// at least `floor_above_median_db` over the frame median and above
// `min_magnitude_db`, capped per one-second
// block by magnitude. Sorted by (frame, bin).
std::vector<Peak> extract_peaks(const dsp::Spectrogram& spec, const Config& cfg = {});

// Pairs each anchor with up to `fan_out` later peaks inside the target zone.
std::vector<LandmarkHash> hash_landmarks(std::span<const Peak> peaks, double hop_s, const Config& cfg = {});

// stft -> extract_peaks -> hash_landmarks
std::vector<LandmarkHash> fingerprint_audio(const PcmAudio& audio, const Config& cfg = {});

struct MatchResult {
  std::string asset_a;
  std::string asset_b;
  double offset_s = 0.0;   // start of B on A's timeline
  int bin_count = 0;       // raw hashes in the winning bin
  double z_score = 0.0;
  bool is_match = false;
  int matched_hashes = 0;  // all hash co-occurrences
  double normalized_peak = 0.0;
  double threshold = 0.0;  // mu + tau * sigma on normalized counts
};

// Histograms offset differences (in ms) into fixed bins spanning [-dur_b, dur_a]
// and applies the decision rule. Exposed for tests and for match_all.
MatchResult decide(std::vector<std::int64_t> deltas_ms, double dur_a, double dur_b, const Config& cfg);

// Inverted index hash -> postings (asset, anchor offset), plus per-asset hash
// lists. Reader-writer locked: concurrent matches or one writer.
class FingerprintIndex {
 public:
  struct PostingEntry {
    std::string asset_id;
    double anchor_offset_s;
  };

  FingerprintIndex() = default;
  // Opens (or creates on first save) the index persisted at `path`
  // (<path> binary postings, <path>.json ordinal side table).
  explicit FingerprintIndex(std::filesystem::path path, Config cfg = {});

  FingerprintIndex(const FingerprintIndex&) = delete;
  FingerprintIndex& operator=(const FingerprintIndex&) = delete;

  const Config& config() const { return cfg_; }
  void set_tau(double tau);

  void index_asset(const std::string& asset_id, double duration_s, std::span<const LandmarkHash> hashes,
                   bool reindex = false);
  // Bulk variant that persists once at the end.
  void index_assets(
      const std::vector<std::tuple<std::string, double, std::vector<LandmarkHash>>>& batch, bool reindex = false);
  bool remove_asset(const std::string& asset_id);

  bool contains(const std::string& asset_id) const;
  std::vector<std::string> asset_ids() const;
  std::size_t posting_count() const;
  std::vector<PostingEntry> postings(std::uint32_t hash) const;

  MatchResult match_pair(const std::string& asset_a, const std::string& asset_b) const;
  // One result per other indexed asset, z_score descending.
  std::vector<MatchResult> match_all(const std::string& asset_id) const;

  void save() const;
  std::vector<std::uint8_t> serialize_postings() const;
  std::string serialize_side_table() const;

 private:
  struct Posting {
    const std::string* asset_id;  // points at the key in assets_
    std::uint32_t offset_ms;
  };
  struct Entry {
    double duration_s = 0.0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> hashes;  // (hash, offset_ms), sorted
  };

  void insert_locked(const std::string& asset_id, double duration_s, std::span<const LandmarkHash> hashes,
                     bool reindex);
  void remove_locked(const std::string& asset_id);
  void save_locked() const;
  std::pair<std::vector<std::uint8_t>, std::string> encode_locked() const;
  void load();
  const Entry& entry_locked(const std::string& asset_id) const;

  std::filesystem::path path_;
  Config cfg_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry> assets_;
  std::unordered_map<std::uint32_t, std::vector<Posting>> postings_;
};

}  // namespace avp::fingerprint
