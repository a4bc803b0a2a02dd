#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <numbers>
#include <set>

namespace avp::oracle {

std::vector<double> dft_magnitudes(const std::vector<float>& frame) {
  const std::size_t n = frame.size();
  std::vector<long double> w(n), c(n), s(n);
  for (std::size_t i = 0; i < n; ++i) {
    const long double a = 2.0L * std::numbers::pi_v<long double> * static_cast<long double>(i) / n;
    w[i] = (0.5L - 0.5L * std::cos(a)) * frame[i];
    c[i] = std::cos(a);
    s[i] = std::sin(a);
  }
  std::vector<double> mags(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    long double re = 0, im = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = (k * i) % n;
      re += w[i] * c[idx];
      im -= w[i] * s[idx];
    }
    mags[k] = static_cast<double>(std::sqrt(re * re + im * im));
  }
  return mags;
}

std::size_t dominant_bin(const std::vector<float>& x, std::size_t n) {
  std::size_t best = 0;
  double best_mag = -1.0;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    double re = 0, im = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>((k * i) % n) / static_cast<double>(n);
      re += x[i] * std::cos(a);
      im -= x[i] * std::sin(a);
    }
    const double m = re * re + im * im;
    if (m > best_mag) {
      best_mag = m;
      best = k;
    }
  }
  return best;
}

std::vector<double> mel_edges_hz(int bands, double sample_rate_hz) {
  const auto to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  const auto to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const double top = to_mel(sample_rate_hz / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(bands) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) edges[i] = to_hz(top * static_cast<double>(i) / (bands + 1));
  return edges;
}

std::vector<int> mel_bands_covering(double hz, int bands, double sample_rate_hz) {
  const auto e = mel_edges_hz(bands, sample_rate_hz);
  std::vector<int> out;
  for (int m = 0; m < bands; ++m) {
    if (e[static_cast<std::size_t>(m)] < hz && hz < e[static_cast<std::size_t>(m) + 2]) out.push_back(m);
  }
  return out;
}

similarity::Stats feature_stats(const std::vector<Keyed>& all) {
  similarity::Stats st;
  st.means.assign(similarity::kDim, 0.0);
  st.stds.assign(similarity::kDim, 0.0);
  if (all.empty()) return st;
  for (std::size_t i = 0; i < similarity::kDim; ++i) {
    long double sum = 0;
    for (const auto& k : all) sum += k.vector[i];
    const long double mean = sum / all.size();
    long double sq = 0;
    for (const auto& k : all) sq += (k.vector[i] - mean) * (k.vector[i] - mean);
    st.means[i] = static_cast<double>(mean);
    st.stds[i] = static_cast<double>(std::sqrt(sq / all.size()));
  }
  return st;
}

double weighted_distance(const similarity::FeatureVector& x, const similarity::FeatureVector& y,
                         const similarity::Stats& stats, const similarity::Weights& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < similarity::kDim; ++i) {
    if (stats.stds[i] <= 0.0) continue;
    const double d = (static_cast<double>(x[i]) - static_cast<double>(y[i])) / stats.stds[i];
    acc += w[i] * d * d;
  }
  return std::sqrt(acc);
}

namespace {

const Keyed* find(const std::vector<Keyed>& all, const std::string& id, std::uint32_t seg) {
  for (const auto& k : all) {
    if (k.asset_id == id && k.segment_idx == seg) return &k;
  }
  return nullptr;
}

}  // namespace

std::vector<similarity::SimilarityHit> knn(const std::vector<Keyed>& all, const std::string& asset_id,
                                           std::uint32_t segment_idx, int k, bool exclude_same_asset,
                                           const similarity::Stats& stats, const similarity::Weights& w) {
  const Keyed* q = find(all, asset_id, segment_idx);
  if (!q) return {};
  std::vector<similarity::SimilarityHit> hits;
  for (const auto& c : all) {
    if (c.asset_id == asset_id && (exclude_same_asset || c.segment_idx == segment_idx)) continue;
    hits.push_back({c.asset_id, c.segment_idx, weighted_distance(q->vector, c.vector, stats, w)});
  }
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.asset_id != b.asset_id) return a.asset_id < b.asset_id;
    return a.segment_idx < b.segment_idx;
  });
  if (hits.size() > static_cast<std::size_t>(k)) hits.resize(static_cast<std::size_t>(k));
  return hits;
}

std::vector<similarity::AssetHit> similar_assets(const std::vector<Keyed>& all, const std::string& asset_id, int k,
                                                 const similarity::Stats& stats, const similarity::Weights& w) {
  std::map<std::string, double> best;
  for (const auto& q : all) {
    if (q.asset_id != asset_id) continue;
    for (const auto& c : all) {
      if (c.asset_id == asset_id) continue;
      const double d = weighted_distance(q.vector, c.vector, stats, w);
      auto [it, inserted] = best.emplace(c.asset_id, d);
      if (!inserted) it->second = std::min(it->second, d);
    }
  }
  std::vector<similarity::AssetHit> out;
  for (const auto& [id, d] : best) out.push_back({id, d});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.best_distance < b.best_distance; });
  if (out.size() > static_cast<std::size_t>(k)) out.resize(static_cast<std::size_t>(k));
  return out;
}

std::vector<RankedAsset> event_query(const std::vector<events::DetectionEvent>& all,
                                     const std::vector<events::Clause>& clauses, bool all_clauses) {
  std::set<std::string> assets;
  for (const auto& e : all) assets.insert(e.asset_id);
  std::vector<RankedAsset> out;
  for (const auto& a : assets) {
    std::size_t satisfied = 0;
    for (const auto& c : clauses) {
      const bool hit = std::any_of(all.begin(), all.end(), [&](const auto& e) {
        return e.asset_id == a && e.label == c.label && e.confidence >= c.min_confidence;
      });
      if (hit) ++satisfied;
    }
    const bool ok = all_clauses ? satisfied == clauses.size() : satisfied > 0;
    if (!ok) continue;
    RankedAsset r{a, 0.0, {}};
    for (const auto& e : all) {
      if (e.asset_id != a) continue;
      for (const auto& c : clauses) {
        if (e.label == c.label && e.confidence >= c.min_confidence) {
          r.rank_score = std::max(r.rank_score, e.confidence);
          r.event_ids.push_back(e.event_id);
          break;
        }
      }
    }
    std::sort(r.event_ids.begin(), r.event_ids.end());
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.rank_score > y.rank_score; });
  return out;
}

}  // namespace avp::oracle
