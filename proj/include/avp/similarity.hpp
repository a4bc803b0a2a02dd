#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

namespace avp {
struct PcmAudio;
}

namespace avp::similarity {

inline constexpr std::size_t kDim = 50;
inline constexpr double kSegmentSeconds = 6.0;
inline constexpr int kMfccCount = 20;

// Layout of SegmentFeature::vector.
namespace feature {
inline constexpr std::size_t kMfccMean = 0;    // 20 values
inline constexpr std::size_t kMfccStd = 20;    // 20 values
inline constexpr std::size_t kCentroid = 40;   // mean, std
inline constexpr std::size_t kRolloff = 42;    // mean, std
inline constexpr std::size_t kFlux = 44;       // mean, std
inline constexpr std::size_t kZcr = 46;        // mean, std
inline constexpr std::size_t kRms = 48;        // mean, std
}  // namespace feature

using FeatureVector = std::array<float, kDim>;
using Weights = std::array<double, kDim>;

Weights uniform_weights();

struct SegmentFeature {
  std::string asset_id;
  std::uint32_t segment_idx = 0;  // covers [6*idx, 6*idx + 6) seconds
  FeatureVector vector{};
};

struct SimilarityHit {
  std::string asset_id;
  std::uint32_t segment_idx = 0;
  double distance = 0.0;
};

struct AssetHit {
  std::string asset_id;
  double best_distance = 0.0;
};

enum class Scope { All, ExcludeSameAsset };

// Features of one segment-length block of samples.
FeatureVector segment_vector(std::span<const float> samples, int sample_rate_hz);

// floor(duration / 6) contiguous segments; the trailing partial segment is
// dropped. Throws TooShort when the audio is shorter than one STFT window.
std::vector<SegmentFeature> extract_segment_features(const PcmAudio& audio);

struct Stats {
  std::vector<double> means;
  std::vector<double> stds;
};

// Weighted z-normalized Euclidean distance; dimensions with zero corpus
// deviation contribute nothing.
double distance(const FeatureVector& x, const FeatureVector& y, const Stats& stats, const Weights& weights);

// Per-asset segment features plus frozen z-normalization statistics.
// Adding or removing assets marks the statistics stale; the next query
// rebuilds them. Persisted as <path> (AVFE records) and <path>.json (stats).
class FeatureStore {
 public:
  FeatureStore() = default;
  explicit FeatureStore(std::filesystem::path path);

  FeatureStore(const FeatureStore&) = delete;
  FeatureStore& operator=(const FeatureStore&) = delete;

  void add_asset(const std::string& asset_id, std::vector<SegmentFeature> features);
  void add_assets(std::vector<std::pair<std::string, std::vector<SegmentFeature>>> batch);
  bool remove_asset(const std::string& asset_id);
  bool contains(const std::string& asset_id) const;
  std::vector<SegmentFeature> features(const std::string& asset_id) const;
  std::size_t segment_count() const;
  std::size_t asset_count() const;

  bool stale() const;
  void rebuild_stats();
  Stats stats() const;

  std::vector<SimilarityHit> knn(const std::string& asset_id, std::uint32_t segment_idx, int k,
                                 Scope scope = Scope::All, const Weights& weights = uniform_weights()) const;

  // Per foreign asset, the minimum distance over all segment pairs.
  std::vector<AssetHit> similar_assets(const std::string& asset_id, int k,
                                       const Weights& weights = uniform_weights()) const;

  // Minimum distance from one query segment to any segment of `other`;
  // nullopt if either side has no such segment.
  std::optional<double> segment_to_asset(const std::string& asset_id, std::uint32_t segment_idx,
                                         const std::string& other, const Weights& weights = uniform_weights()) const;

  // Row-major all-pairs distance matrix over every segment, in store order.
  std::vector<double> all_pairs(const Weights& weights = uniform_weights()) const;
  std::vector<std::pair<std::string, std::uint32_t>> segment_keys() const;

  void save() const;

 private:
  void ensure_fresh() const;
  void rebuild_locked() const;
  void save_locked() const;
  void load();
  const FeatureVector* find_locked(const std::string& asset_id, std::uint32_t segment_idx) const;

  std::filesystem::path path_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::vector<SegmentFeature>> assets_;
  mutable Stats stats_;
  mutable bool stale_ = true;
};

Weights load_weights(const std::filesystem::path& path);

}  // namespace avp::similarity
