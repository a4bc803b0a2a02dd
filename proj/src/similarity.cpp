#include "avp/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <mutex>

#include "avp/catalog.hpp"
#include "avp/dsp.hpp"
#include "avp/error.hpp"
#include "avp/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace avp::similarity {

namespace {

constexpr double kRolloffFraction = 0.85;

void mean_std(const std::vector<double>& values, float& mean_out, float& std_out) {
  if (values.empty()) {
    mean_out = std_out = 0.0f;
    return;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  mean_out = static_cast<float>(mean);
  std_out = static_cast<float>(std::sqrt(sq / static_cast<double>(values.size())));
}

bool hit_less(const SimilarityHit& a, const SimilarityHit& b) {
  if (a.distance != b.distance) return a.distance < b.distance;
  return std::tie(a.asset_id, a.segment_idx) < std::tie(b.asset_id, b.segment_idx);
}

}  // namespace

Weights uniform_weights() {
  Weights w;
  w.fill(1.0);
  return w;
}

FeatureVector segment_vector(std::span<const float> samples, int sample_rate_hz) {
  const auto spec = dsp::stft(samples, sample_rate_hz);
  const auto mfcc = dsp::mfcc(dsp::mel(spec), kMfccCount);
  const std::size_t n_frames = spec.n_frames();
  const std::size_t n_bins = spec.n_bins();
  const double bin_hz = spec.bin_hz();

  FeatureVector v{};
  std::vector<double> column(n_frames);
  for (std::size_t c = 0; c < static_cast<std::size_t>(kMfccCount); ++c) {
    for (std::size_t f = 0; f < n_frames; ++f) column[f] = mfcc(f, c);
    mean_std(column, v[feature::kMfccMean + c], v[feature::kMfccStd + c]);
  }

  std::vector<double> centroid(n_frames), rolloff(n_frames), zcr(n_frames), rms(n_frames);
  std::vector<double> flux;
  std::vector<double> prev(n_bins, 0.0), cur(n_bins);
  for (std::size_t f = 0; f < n_frames; ++f) {
    auto mags = spec.frames.row(f);
    double mag_sum = 0.0, weighted = 0.0, power_sum = 0.0;
    for (std::size_t k = 0; k < n_bins; ++k) {
      mag_sum += mags[k];
      weighted += mags[k] * (k * bin_hz);
      power_sum += static_cast<double>(mags[k]) * mags[k];
    }
    centroid[f] = mag_sum > 0.0 ? weighted / mag_sum : 0.0;

    double roll = 0.0;
    if (power_sum > 0.0) {
      double cum = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) {
        cum += static_cast<double>(mags[k]) * mags[k];
        if (cum >= kRolloffFraction * power_sum) {
          roll = k * bin_hz;
          break;
        }
      }
    }
    rolloff[f] = roll;

    // Flux on L1-normalized spectra so it does not track loudness.
    for (std::size_t k = 0; k < n_bins; ++k) cur[k] = mag_sum > 0.0 ? mags[k] / mag_sum : 0.0;
    if (f > 0) {
      double d = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) d += (cur[k] - prev[k]) * (cur[k] - prev[k]);
      flux.push_back(std::sqrt(d));
    }
    std::swap(prev, cur);

    const float* x = samples.data() + f * dsp::kHopSize;
    int crossings = 0;
    double energy = 0.0;
    for (int i = 0; i < dsp::kWindowSize; ++i) {
      energy += static_cast<double>(x[i]) * x[i];
      if (i > 0 && ((x[i] >= 0.0f) != (x[i - 1] >= 0.0f))) ++crossings;
    }
    zcr[f] = static_cast<double>(crossings) / (dsp::kWindowSize - 1);
    rms[f] = std::sqrt(energy / dsp::kWindowSize);
  }

  mean_std(centroid, v[feature::kCentroid], v[feature::kCentroid + 1]);
  mean_std(rolloff, v[feature::kRolloff], v[feature::kRolloff + 1]);
  mean_std(flux, v[feature::kFlux], v[feature::kFlux + 1]);
  mean_std(zcr, v[feature::kZcr], v[feature::kZcr + 1]);
  mean_std(rms, v[feature::kRms], v[feature::kRms + 1]);
  return v;
}

std::vector<SegmentFeature> extract_segment_features(const PcmAudio& audio) {
  if (audio.samples.size() < static_cast<std::size_t>(dsp::kWindowSize)) {
    throw Error(ErrorCode::TooShort, "asset " + audio.asset_id + " shorter than one STFT window");
  }
  const auto seg_len = static_cast<std::size_t>(std::llround(kSegmentSeconds * audio.sample_rate_hz));
  const std::size_t n_segments = audio.samples.size() / seg_len;
  std::vector<SegmentFeature> out;
  out.reserve(n_segments);
  for (std::size_t s = 0; s < n_segments; ++s) {
    std::span<const float> block(audio.samples.data() + s * seg_len, seg_len);
    out.push_back({audio.asset_id, static_cast<std::uint32_t>(s), segment_vector(block, audio.sample_rate_hz)});
  }
  return out;
}

double distance(const FeatureVector& x, const FeatureVector& y, const Stats& stats, const Weights& weights) {
  double acc = 0.0;
  for (std::size_t i = 0; i < kDim; ++i) {
    const double s = stats.stds[i];
    if (s <= 0.0) continue;
    const double d = (static_cast<double>(x[i]) - static_cast<double>(y[i])) / s;
    acc += weights[i] * d * d;
  }
  return std::sqrt(acc);
}

FeatureStore::FeatureStore(fs::path path) : path_(std::move(path)) {
  if (fs::exists(path_)) load();
}

void FeatureStore::add_asset(const std::string& asset_id, std::vector<SegmentFeature> features) {
  std::unique_lock lock(mutex_);
  for (auto& f : features) f.asset_id = asset_id;
  assets_[asset_id] = std::move(features);
  stale_ = true;
  save_locked();
}

void FeatureStore::add_assets(std::vector<std::pair<std::string, std::vector<SegmentFeature>>> batch) {
  std::unique_lock lock(mutex_);
  for (auto& [id, features] : batch) {
    for (auto& f : features) f.asset_id = id;
    assets_[id] = std::move(features);
  }
  stale_ = true;
  save_locked();
}

bool FeatureStore::remove_asset(const std::string& asset_id) {
  std::unique_lock lock(mutex_);
  if (assets_.erase(asset_id) == 0) return false;
  stale_ = true;
  save_locked();
  return true;
}

bool FeatureStore::contains(const std::string& asset_id) const {
  std::shared_lock lock(mutex_);
  return assets_.contains(asset_id);
}

std::vector<SegmentFeature> FeatureStore::features(const std::string& asset_id) const {
  std::shared_lock lock(mutex_);
  auto it = assets_.find(asset_id);
  if (it == assets_.end()) throw Error(ErrorCode::UnknownAsset, "no features for asset " + asset_id);
  return it->second;
}

std::size_t FeatureStore::segment_count() const {
  std::shared_lock lock(mutex_);
  std::size_t n = 0;
  for (const auto& [id, segs] : assets_) n += segs.size();
  return n;
}

std::size_t FeatureStore::asset_count() const {
  std::shared_lock lock(mutex_);
  return assets_.size();
}

bool FeatureStore::stale() const {
  std::shared_lock lock(mutex_);
  return stale_;
}

void FeatureStore::rebuild_stats() {
  std::unique_lock lock(mutex_);
  rebuild_locked();
  save_locked();
}

Stats FeatureStore::stats() const {
  ensure_fresh();
  std::shared_lock lock(mutex_);
  return stats_;
}

void FeatureStore::rebuild_locked() const {
  std::vector<double> sum(kDim, 0.0), sq(kDim, 0.0);
  std::size_t n = 0;
  for (const auto& [id, segs] : assets_) {
    for (const auto& s : segs) {
      for (std::size_t i = 0; i < kDim; ++i) sum[i] += s.vector[i];
      ++n;
    }
  }
  stats_.means.assign(kDim, 0.0);
  stats_.stds.assign(kDim, 0.0);
  if (n > 0) {
    for (std::size_t i = 0; i < kDim; ++i) stats_.means[i] = sum[i] / static_cast<double>(n);
    for (const auto& [id, segs] : assets_) {
      for (const auto& s : segs) {
        for (std::size_t i = 0; i < kDim; ++i) {
          const double d = s.vector[i] - stats_.means[i];
          sq[i] += d * d;
        }
      }
    }
    for (std::size_t i = 0; i < kDim; ++i) stats_.stds[i] = std::sqrt(sq[i] / static_cast<double>(n));
  }
  stale_ = false;
}

void FeatureStore::ensure_fresh() const {
  {
    std::shared_lock lock(mutex_);
    if (!stale_) return;
  }
  std::unique_lock lock(mutex_);
  if (stale_) {
    rebuild_locked();
    save_locked();
  }
}

const FeatureVector* FeatureStore::find_locked(const std::string& asset_id, std::uint32_t segment_idx) const {
  auto it = assets_.find(asset_id);
  if (it == assets_.end()) return nullptr;
  const auto& segs = it->second;
  if (segment_idx < segs.size() && segs[segment_idx].segment_idx == segment_idx) return &segs[segment_idx].vector;
  auto sit = std::find_if(segs.begin(), segs.end(), [&](const SegmentFeature& f) { return f.segment_idx == segment_idx; });
  return sit == segs.end() ? nullptr : &sit->vector;
}

namespace {

void check_weights(const Weights& weights) {
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::InvalidArgument, "weights must be finite and >= 0");
  }
}

}  // namespace

std::vector<SimilarityHit> FeatureStore::knn(const std::string& asset_id, std::uint32_t segment_idx, int k,
                                             Scope scope, const Weights& weights) const {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  check_weights(weights);
  ensure_fresh();
  std::shared_lock lock(mutex_);
  const FeatureVector* query = find_locked(asset_id, segment_idx);
  if (!query) {
    throw Error(ErrorCode::UnknownSegment, "no segment " + std::to_string(segment_idx) + " for asset " + asset_id);
  }
  std::vector<SimilarityHit> hits;
  for (const auto& [id, segs] : assets_) {
    if (scope == Scope::ExcludeSameAsset && id == asset_id) continue;
    for (const auto& s : segs) {
      if (id == asset_id && s.segment_idx == segment_idx) continue;
      hits.push_back({id, s.segment_idx, distance(*query, s.vector, stats_, weights)});
    }
  }
  const auto keep = std::min(hits.size(), static_cast<std::size_t>(k));
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), hit_less);
  hits.resize(keep);
  return hits;
}

std::vector<AssetHit> FeatureStore::similar_assets(const std::string& asset_id, int k, const Weights& weights) const {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  check_weights(weights);
  ensure_fresh();
  std::shared_lock lock(mutex_);
  auto qit = assets_.find(asset_id);
  if (qit == assets_.end()) throw Error(ErrorCode::UnknownAsset, "no features for asset " + asset_id);

  std::vector<AssetHit> out;
  for (const auto& [id, segs] : assets_) {
    if (id == asset_id || segs.empty() || qit->second.empty()) continue;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : qit->second) {
      for (const auto& s : segs) best = std::min(best, distance(q.vector, s.vector, stats_, weights));
    }
    out.push_back({id, best});
  }
  std::sort(out.begin(), out.end(), [](const AssetHit& a, const AssetHit& b) {
    if (a.best_distance != b.best_distance) return a.best_distance < b.best_distance;
    return a.asset_id < b.asset_id;
  });
  if (out.size() > static_cast<std::size_t>(k)) out.resize(static_cast<std::size_t>(k));
  return out;
}

std::optional<double> FeatureStore::segment_to_asset(const std::string& asset_id, std::uint32_t segment_idx,
                                                     const std::string& other, const Weights& weights) const {
  ensure_fresh();
  std::shared_lock lock(mutex_);
  const FeatureVector* query = find_locked(asset_id, segment_idx);
  auto it = assets_.find(other);
  if (!query || it == assets_.end() || it->second.empty()) return std::nullopt;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : it->second) best = std::min(best, distance(*query, s.vector, stats_, weights));
  return best;
}

std::vector<double> FeatureStore::all_pairs(const Weights& weights) const {
  check_weights(weights);
  ensure_fresh();
  std::shared_lock lock(mutex_);
  std::vector<const FeatureVector*> rows;
  for (const auto& [id, segs] : assets_) {
    for (const auto& s : segs) rows.push_back(&s.vector);
  }
  const std::size_t n = rows.size();
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m[i * n + j] = distance(*rows[i], *rows[j], stats_, weights);
  }
  return m;
}

std::vector<std::pair<std::string, std::uint32_t>> FeatureStore::segment_keys() const {
  std::shared_lock lock(mutex_);
  std::vector<std::pair<std::string, std::uint32_t>> keys;
  for (const auto& [id, segs] : assets_) {
    for (const auto& s : segs) keys.emplace_back(id, s.segment_idx);
  }
  return keys;
}

void FeatureStore::save() const {
  std::shared_lock lock(mutex_);
  save_locked();
}

void FeatureStore::save_locked() const {
  if (path_.empty()) return;
  io::ByteWriter w;
  w.put_bytes("AVFE");
  w.put_u32(static_cast<std::uint32_t>(kDim));
  json ids = json::array();
  std::uint32_t ordinal = 0;
  for (const auto& [id, segs] : assets_) {
    ids.push_back(id);
    for (const auto& s : segs) {
      w.put_u32(ordinal);
      w.put_u32(s.segment_idx);
      for (float x : s.vector) w.put_f32(x);
    }
    ++ordinal;
  }
  json side{{"dim", kDim}, {"assets", ids}, {"stale", stale_}, {"means", stats_.means}, {"stds", stats_.stds}};
  auto side_path = path_;
  side_path += ".json";
  io::write_text_atomic(side_path, side.dump(2));
  io::write_file_atomic(path_, w.bytes());
}

void FeatureStore::load() {
  auto side_path = path_;
  side_path += ".json";
  const auto side = json::parse(io::read_text(side_path));
  const auto ids = side.at("assets").get<std::vector<std::string>>();
  stats_.means = side.at("means").get<std::vector<double>>();
  stats_.stds = side.at("stds").get<std::vector<double>>();
  stale_ = side.at("stale").get<bool>() || stats_.means.size() != kDim;

  const auto bytes = io::read_file(path_);
  io::ByteReader r(bytes);
  if (!r.expect_bytes("AVFE")) throw Error(ErrorCode::CorruptMedia, "bad feature store magic");
  if (r.get_u32() != kDim) throw Error(ErrorCode::CorruptMedia, "feature store dimension mismatch");
  assets_.clear();
  for (const auto& id : ids) assets_[id];
  constexpr std::size_t kRecord = 8 + 4 * kDim;
  if (r.remaining() % kRecord != 0) throw Error(ErrorCode::CorruptMedia, "truncated feature store");
  while (r.remaining() > 0) {
    SegmentFeature f;
    const auto ordinal = r.get_u32();
    if (ordinal >= ids.size()) throw Error(ErrorCode::CorruptMedia, "feature record references unknown ordinal");
    f.asset_id = ids[ordinal];
    f.segment_idx = r.get_u32();
    for (auto& x : f.vector) x = r.get_f32();
    assets_[f.asset_id].push_back(std::move(f));
  }
}

Weights load_weights(const fs::path& path) {
  const auto j = json::parse(io::read_text(path));
  const auto& arr = j.is_object() ? j.at("weights") : j;
  const auto values = arr.get<std::vector<double>>();
  if (values.size() != kDim) {
    throw Error(ErrorCode::ConfigError, "weights file must hold " + std::to_string(kDim) + " values");
  }
  Weights w;
  std::copy(values.begin(), values.end(), w.begin());
  return w;
}

}  // namespace avp::similarity
