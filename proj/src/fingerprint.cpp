#include "avp/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <json.hpp>
#include <mutex>
#include <tuple>

#include "avp/catalog.hpp"
#include "avp/error.hpp"
#include "avp/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace avp::fingerprint {

namespace {

constexpr int kAnchorBits = 10;
constexpr int kDeltaBinBits = 9;
constexpr int kDeltaFrameBits = 13;
constexpr int kMaxAnchorBin = (1 << kAnchorBits) - 1;
constexpr int kDeltaBinBias = 255;
constexpr int kMaxDeltaFrames = (1 << kDeltaFrameBits) - 1;
constexpr std::uint16_t kIndexVersion = 1;

// Sliding maximum over `n` elements spaced `stride` apart, radius `r`.
void sliding_max(const float* src, float* dst, std::size_t n, std::size_t stride, int r) {
  std::deque<std::size_t> q;
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t hi = std::min(n - 1, i + static_cast<std::size_t>(r));
    for (; next <= hi; ++next) {
      while (!q.empty() && src[q.back() * stride] <= src[next * stride]) q.pop_back();
      q.push_back(next);
    }
    const std::size_t lo = i >= static_cast<std::size_t>(r) ? i - r : 0;
    while (q.front() < lo) q.pop_front();
    dst[i * stride] = src[q.front() * stride];
  }
}

}  // namespace

std::uint32_t pack(const HashFields& f) {
  if (f.anchor_bin < 0 || f.anchor_bin > kMaxAnchorBin || f.delta_bin < -kDeltaBinBias ||
      f.delta_bin > kDeltaBinBias || f.delta_frames < 0 || f.delta_frames > kMaxDeltaFrames) {
    throw Error(ErrorCode::InvalidArgument, "landmark fields out of packable range");
  }
  return (static_cast<std::uint32_t>(f.anchor_bin) << (kDeltaBinBits + kDeltaFrameBits)) |
         (static_cast<std::uint32_t>(f.delta_bin + kDeltaBinBias) << kDeltaFrameBits) |
         static_cast<std::uint32_t>(f.delta_frames);
}

HashFields unpack(std::uint32_t hash) {
  HashFields f;
  f.anchor_bin = static_cast<int>(hash >> (kDeltaBinBits + kDeltaFrameBits));
  f.delta_bin = static_cast<int>((hash >> kDeltaFrameBits) & ((1u << kDeltaBinBits) - 1)) - kDeltaBinBias;
  f.delta_frames = static_cast<int>(hash & kMaxDeltaFrames);
  return f;
}

std::vector<Peak> extract_peaks(const dsp::Spectrogram& spec, const Config& cfg) {
  const std::size_t n_frames = spec.n_frames();
  const std::size_t n_bins = spec.n_bins();
  if (n_frames == 0 || n_bins == 0) return {};

  dsp::Matrix db(n_frames, n_bins);
  std::vector<float> medians(n_frames);
  std::vector<float> scratch(n_bins);
  for (std::size_t f = 0; f < n_frames; ++f) {
    auto src = spec.frames.row(f);
    auto dst = db.row(f);
    for (std::size_t k = 0; k < n_bins; ++k) dst[k] = 20.0f * std::log10(src[k] + 1e-10f);
    std::copy(dst.begin(), dst.end(), scratch.begin());
    auto mid = scratch.begin() + static_cast<std::ptrdiff_t>(n_bins / 2);
    std::nth_element(scratch.begin(), mid, scratch.end());
    medians[f] = *mid;
  }

  // Separable 2-D max filter.
  const int rf = cfg.neighborhood_frames / 2;
  const int rb = cfg.neighborhood_bins / 2;
  dsp::Matrix tmp(n_frames, n_bins);
  dsp::Matrix local_max(n_frames, n_bins);
  for (std::size_t f = 0; f < n_frames; ++f) sliding_max(&db(f, 0), &tmp(f, 0), n_bins, 1, rb);
  for (std::size_t k = 0; k < n_bins; ++k) sliding_max(&tmp(0, k), &local_max(0, k), n_frames, n_bins, rf);

  std::vector<Peak> candidates;
  for (std::size_t f = 0; f < n_frames; ++f) {
    const float floor_db = std::max(medians[f] + static_cast<float>(cfg.floor_above_median_db),
                                    static_cast<float>(cfg.min_magnitude_db));
    for (std::size_t k = 0; k < n_bins; ++k) {
      const float v = db(f, k);
      if (v != local_max(f, k) || v < floor_db) continue;
      // Strictness: no other cell in the neighborhood attains the maximum.
      bool strict = true;
      const std::size_t f0 = f >= static_cast<std::size_t>(rf) ? f - rf : 0;
      const std::size_t f1 = std::min(n_frames - 1, f + rf);
      const std::size_t k0 = k >= static_cast<std::size_t>(rb) ? k - rb : 0;
      const std::size_t k1 = std::min(n_bins - 1, k + rb);
      for (std::size_t ff = f0; ff <= f1 && strict; ++ff) {
        for (std::size_t kk = k0; kk <= k1; ++kk) {
          if ((ff != f || kk != k) && db(ff, kk) == v) {
            strict = false;
            break;
          }
        }
      }
      if (strict) candidates.push_back({static_cast<int>(f), static_cast<int>(k), v});
    }
  }

  // Density cap per block of frames spanning ~1 s.
  const auto block = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(1.0 / spec.hop_s())));
  const auto cap = static_cast<std::size_t>(std::lround(cfg.peaks_per_second * block * spec.hop_s()));
  std::vector<Peak> out;
  std::size_t begin = 0;
  while (begin < candidates.size()) {
    const auto block_id = static_cast<std::size_t>(candidates[begin].frame_idx) / block;
    std::size_t end = begin;
    while (end < candidates.size() && static_cast<std::size_t>(candidates[end].frame_idx) / block == block_id) ++end;
    if (end - begin > cap) {
      std::vector<Peak> group(candidates.begin() + static_cast<std::ptrdiff_t>(begin),
                              candidates.begin() + static_cast<std::ptrdiff_t>(end));
      std::stable_sort(group.begin(), group.end(),
                       [](const Peak& a, const Peak& b) { return a.magnitude_db > b.magnitude_db; });
      group.resize(cap);
      std::sort(group.begin(), group.end(), [](const Peak& a, const Peak& b) {
        return std::tie(a.frame_idx, a.bin_idx) < std::tie(b.frame_idx, b.bin_idx);
      });
      out.insert(out.end(), group.begin(), group.end());
    } else {
      out.insert(out.end(), candidates.begin() + static_cast<std::ptrdiff_t>(begin),
                 candidates.begin() + static_cast<std::ptrdiff_t>(end));
    }
    begin = end;
  }
  return out;
}

std::vector<LandmarkHash> hash_landmarks(std::span<const Peak> peaks, double hop_s, const Config& cfg) {
  const int min_dt = static_cast<int>(std::ceil(cfg.min_dt_s / hop_s - 1e-9));
  const int max_dt = std::min(kMaxDeltaFrames, static_cast<int>(std::floor(cfg.max_dt_s / hop_s + 1e-9)));
  const int max_df = std::min(cfg.max_delta_bin, kDeltaBinBias);

  std::vector<LandmarkHash> out;
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    const Peak& anchor = peaks[i];
    if (anchor.bin_idx > kMaxAnchorBin) continue;
    int paired = 0;
    for (std::size_t j = i + 1; j < peaks.size() && paired < cfg.fan_out; ++j) {
      const int dt = peaks[j].frame_idx - anchor.frame_idx;
      if (dt > max_dt) break;
      if (dt < min_dt) continue;
      const int df = peaks[j].bin_idx - anchor.bin_idx;
      if (std::abs(df) > max_df) continue;
      out.push_back({pack({anchor.bin_idx, df, dt}), anchor.frame_idx * hop_s});
      ++paired;
    }
  }
  return out;
}

std::vector<LandmarkHash> fingerprint_audio(const PcmAudio& audio, const Config& cfg) {
  const auto spec = dsp::stft(audio);
  const auto peaks = extract_peaks(spec, cfg);
  return hash_landmarks(peaks, spec.hop_s(), cfg);
}

MatchResult decide(std::vector<std::int64_t> deltas_ms, double dur_a, double dur_b, const Config& cfg) {
  MatchResult r;
  r.matched_hashes = static_cast<int>(deltas_ms.size());
  if (deltas_ms.empty()) return r;
  std::sort(deltas_ms.begin(), deltas_ms.end());

  const double width_ms = cfg.bin_width_s * 1000.0;
  const double lo_ms = -dur_b * 1000.0;
  const auto n_bins =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((dur_a + dur_b) / cfg.bin_width_s - 1e-9)));
  auto bin_of = [&](std::int64_t d) {
    const double idx = std::floor((static_cast<double>(d) - lo_ms) / width_ms);
    return static_cast<std::size_t>(std::clamp(idx, 0.0, static_cast<double>(n_bins - 1)));
  };

  std::vector<int> counts(n_bins, 0);
  for (auto d : deltas_ms) ++counts[bin_of(d)];

  const double total = static_cast<double>(deltas_ms.size());
  const double mean = 1.0 / static_cast<double>(n_bins);
  double sum_sq = 0.0;
  for (int c : counts) {
    const double p = c / total;
    sum_sq += (p - mean) * (p - mean);
  }
  const double sigma = std::sqrt(sum_sq / static_cast<double>(n_bins));

  std::size_t best = 0;
  auto center_abs = [&](std::size_t i) { return std::abs(lo_ms + (static_cast<double>(i) + 0.5) * width_ms); };
  for (std::size_t i = 1; i < n_bins; ++i) {
    if (counts[i] > counts[best] || (counts[i] == counts[best] && center_abs(i) < center_abs(best))) best = i;
  }

  r.bin_count = counts[best];
  r.normalized_peak = counts[best] / total;
  r.threshold = mean + cfg.tau * sigma;
  r.z_score = sigma > 0.0 ? (r.normalized_peak - mean) / sigma : 0.0;

  if (cfg.decision == Decision::MaxBin) {
    r.is_match = sigma > 0.0 && r.bin_count >= cfg.min_matches && r.normalized_peak >= r.threshold;
  } else {
    int above = 0;
    if (sigma > 0.0) {
      for (int c : counts) above += (c / total >= r.threshold) ? 1 : 0;
    }
    r.is_match = above >= cfg.min_bins_above && r.bin_count >= cfg.min_matches;
  }

  std::vector<std::int64_t> in_bin;
  for (auto d : deltas_ms) {
    if (bin_of(d) == best) in_bin.push_back(d);
  }
  const std::size_t m = in_bin.size();
  const double median = m % 2 ? static_cast<double>(in_bin[m / 2])
                              : 0.5 * static_cast<double>(in_bin[m / 2 - 1] + in_bin[m / 2]);
  r.offset_s = median / 1000.0;
  return r;
}

FingerprintIndex::FingerprintIndex(fs::path path, Config cfg) : path_(std::move(path)), cfg_(cfg) {
  if (fs::exists(path_)) load();
}

void FingerprintIndex::set_tau(double tau) {
  std::unique_lock lock(mutex_);
  cfg_.tau = tau;
}

void FingerprintIndex::insert_locked(const std::string& asset_id, double duration_s,
                                     std::span<const LandmarkHash> hashes, bool reindex) {
  if (assets_.contains(asset_id)) {
    if (!reindex) throw Error(ErrorCode::AlreadyIndexed, "asset " + asset_id + " already indexed");
    remove_locked(asset_id);
  }
  Entry entry;
  entry.duration_s = duration_s;
  entry.hashes.reserve(hashes.size());
  for (const auto& h : hashes) {
    entry.hashes.emplace_back(h.hash, static_cast<std::uint32_t>(std::llround(h.anchor_offset_s * 1000.0)));
  }
  std::sort(entry.hashes.begin(), entry.hashes.end());
  auto [it, inserted] = assets_.emplace(asset_id, std::move(entry));
  const std::string* key = &it->first;
  for (const auto& [hash, offset] : it->second.hashes) {
    auto& list = postings_[hash];
    auto pos = std::upper_bound(list.begin(), list.end(), std::make_pair(key, offset),
                                [](const auto& value, const Posting& p) {
                                  return std::tie(*value.first, value.second) < std::tie(*p.asset_id, p.offset_ms);
                                });
    list.insert(pos, Posting{key, offset});
  }
}

void FingerprintIndex::remove_locked(const std::string& asset_id) {
  auto it = assets_.find(asset_id);
  if (it == assets_.end()) return;
  const std::string* key = &it->first;
  for (const auto& [hash, offset] : it->second.hashes) {
    auto pit = postings_.find(hash);
    if (pit == postings_.end()) continue;
    std::erase_if(pit->second, [key](const Posting& p) { return p.asset_id == key; });
    if (pit->second.empty()) postings_.erase(pit);
  }
  assets_.erase(it);
}

void FingerprintIndex::index_asset(const std::string& asset_id, double duration_s,
                                   std::span<const LandmarkHash> hashes, bool reindex) {
  std::unique_lock lock(mutex_);
  insert_locked(asset_id, duration_s, hashes, reindex);
  save_locked();
}

void FingerprintIndex::index_assets(
    const std::vector<std::tuple<std::string, double, std::vector<LandmarkHash>>>& batch, bool reindex) {
  std::unique_lock lock(mutex_);
  for (const auto& [id, duration, hashes] : batch) insert_locked(id, duration, hashes, reindex);
  save_locked();
}

bool FingerprintIndex::remove_asset(const std::string& asset_id) {
  std::unique_lock lock(mutex_);
  if (!assets_.contains(asset_id)) return false;
  remove_locked(asset_id);
  save_locked();
  return true;
}

bool FingerprintIndex::contains(const std::string& asset_id) const {
  std::shared_lock lock(mutex_);
  return assets_.contains(asset_id);
}

std::vector<std::string> FingerprintIndex::asset_ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, e] : assets_) ids.push_back(id);
  return ids;
}

std::size_t FingerprintIndex::posting_count() const {
  std::shared_lock lock(mutex_);
  std::size_t n = 0;
  for (const auto& [hash, list] : postings_) n += list.size();
  return n;
}

std::vector<FingerprintIndex::PostingEntry> FingerprintIndex::postings(std::uint32_t hash) const {
  std::shared_lock lock(mutex_);
  std::vector<PostingEntry> out;
  if (auto it = postings_.find(hash); it != postings_.end()) {
    for (const auto& p : it->second) out.push_back({*p.asset_id, p.offset_ms / 1000.0});
  }
  return out;
}

const FingerprintIndex::Entry& FingerprintIndex::entry_locked(const std::string& asset_id) const {
  auto it = assets_.find(asset_id);
  if (it == assets_.end()) throw Error(ErrorCode::NotIndexed, "asset " + asset_id + " is not fingerprinted");
  return it->second;
}

MatchResult FingerprintIndex::match_pair(const std::string& asset_a, const std::string& asset_b) const {
  std::shared_lock lock(mutex_);
  const Entry& a = entry_locked(asset_a);
  const Entry& b = entry_locked(asset_b);

  std::vector<std::int64_t> deltas;
  std::size_t i = 0, j = 0;
  while (i < a.hashes.size() && j < b.hashes.size()) {
    const auto ha = a.hashes[i].first, hb = b.hashes[j].first;
    if (ha < hb) {
      ++i;
    } else if (hb < ha) {
      ++j;
    } else {
      std::size_t i_end = i, j_end = j;
      while (i_end < a.hashes.size() && a.hashes[i_end].first == ha) ++i_end;
      while (j_end < b.hashes.size() && b.hashes[j_end].first == ha) ++j_end;
      for (std::size_t x = i; x < i_end; ++x) {
        for (std::size_t y = j; y < j_end; ++y) {
          deltas.push_back(static_cast<std::int64_t>(a.hashes[x].second) - b.hashes[y].second);
        }
      }
      i = i_end;
      j = j_end;
    }
  }
  auto r = decide(std::move(deltas), a.duration_s, b.duration_s, cfg_);
  r.asset_a = asset_a;
  r.asset_b = asset_b;
  return r;
}

std::vector<MatchResult> FingerprintIndex::match_all(const std::string& asset_id) const {
  std::shared_lock lock(mutex_);
  const Entry& query = entry_locked(asset_id);
  const std::string* self = &assets_.find(asset_id)->first;

  std::map<const std::string*, std::vector<std::int64_t>> deltas;
  for (const auto& [hash, offset] : query.hashes) {
    auto it = postings_.find(hash);
    if (it == postings_.end()) continue;
    for (const auto& p : it->second) {
      if (p.asset_id == self) continue;
      deltas[p.asset_id].push_back(static_cast<std::int64_t>(offset) - p.offset_ms);
    }
  }

  std::vector<MatchResult> out;
  for (const auto& [id, entry] : assets_) {
    if (&id == self) continue;
    auto it = deltas.find(&id);
    auto r = decide(it == deltas.end() ? std::vector<std::int64_t>{} : std::move(it->second), query.duration_s,
                    entry.duration_s, cfg_);
    r.asset_a = asset_id;
    r.asset_b = id;
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(), [](const MatchResult& x, const MatchResult& y) {
    if (x.z_score != y.z_score) return x.z_score > y.z_score;
    return x.asset_b < y.asset_b;
  });
  return out;
}

std::pair<std::vector<std::uint8_t>, std::string> FingerprintIndex::encode_locked() const {
  std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> triples;
  json assets = json::array();
  std::uint32_t ordinal = 0;
  for (const auto& [id, entry] : assets_) {
    for (const auto& [hash, offset] : entry.hashes) triples.emplace_back(hash, ordinal, offset);
    assets.push_back({{"ordinal", ordinal}, {"asset_id", id}, {"duration_s", entry.duration_s}});
    ++ordinal;
  }
  std::sort(triples.begin(), triples.end());
  io::ByteWriter w;
  w.put_bytes("AVPF");
  w.put_u16(kIndexVersion);
  for (const auto& [hash, ord, offset] : triples) {
    w.put_u32(hash);
    w.put_u32(ord);
    w.put_u32(offset);
  }
  return {w.take(), json{{"version", kIndexVersion}, {"assets", assets}}.dump(2)};
}

std::vector<std::uint8_t> FingerprintIndex::serialize_postings() const {
  std::shared_lock lock(mutex_);
  return encode_locked().first;
}

std::string FingerprintIndex::serialize_side_table() const {
  std::shared_lock lock(mutex_);
  return encode_locked().second;
}

void FingerprintIndex::save() const {
  std::shared_lock lock(mutex_);
  save_locked();
}

void FingerprintIndex::save_locked() const {
  if (path_.empty()) return;
  auto [postings, side_table] = encode_locked();
  auto side = path_;
  side += ".json";
  io::write_text_atomic(side, side_table);
  io::write_file_atomic(path_, postings);
}

void FingerprintIndex::load() {
  auto side = path_;
  side += ".json";
  const auto table = json::parse(io::read_text(side));
  std::vector<std::string> ids;
  std::map<std::string, Entry> loaded;
  for (const auto& a : table.at("assets")) {
    const auto ord = a.at("ordinal").get<std::size_t>();
    if (ord != ids.size()) throw Error(ErrorCode::CorruptMedia, "fingerprint side table ordinals not dense");
    ids.push_back(a.at("asset_id").get<std::string>());
    loaded[ids.back()].duration_s = a.at("duration_s").get<double>();
  }

  const auto bytes = io::read_file(path_);
  io::ByteReader r(bytes);
  if (!r.expect_bytes("AVPF")) throw Error(ErrorCode::CorruptMedia, "bad fingerprint index magic");
  if (r.get_u16() != kIndexVersion) throw Error(ErrorCode::CorruptMedia, "unsupported fingerprint index version");
  if (r.remaining() % 12 != 0) throw Error(ErrorCode::CorruptMedia, "truncated fingerprint index");
  while (r.remaining() > 0) {
    const auto hash = r.get_u32();
    const auto ord = r.get_u32();
    const auto offset = r.get_u32();
    if (ord >= ids.size()) throw Error(ErrorCode::CorruptMedia, "posting references unknown ordinal");
    loaded[ids[ord]].hashes.emplace_back(hash, offset);
  }

  assets_.clear();
  postings_.clear();
  for (auto& [id, entry] : loaded) {
    std::sort(entry.hashes.begin(), entry.hashes.end());
    assets_.emplace(id, std::move(entry));
  }
  // assets_ iterates in id order and hashes are offset-sorted, so appending keeps postings sorted.
  for (const auto& [id, entry] : assets_) {
    for (const auto& [hash, offset] : entry.hashes) postings_[hash].push_back(Posting{&id, offset});
  }
}

}  // namespace avp::fingerprint
