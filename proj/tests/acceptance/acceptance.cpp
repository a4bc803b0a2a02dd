// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include <httplib.h>

#include "avp/dsp.hpp"
#include "avp/events.hpp"
#include "avp/fingerprint.hpp"
#include "avp/json_views.hpp"
#include "avp/quickdetect.hpp"
#include "avp/service.hpp"
#include "avp/similarity.hpp"
#include "avp/workspace.hpp"
#include "oracles.hpp"
#include "synth.hpp"

using namespace avp;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first few reasons a criterion failed.
class Findings {
 public:
  void fail(const std::string& why) {
    ++failures_;
    if (failures_ <= 5) notes_ << (failures_ > 1 ? "; " : "") << why;
  }
  bool ok() const { return failures_ == 0; }
  Outcome outcome(const std::string& summary) const {
    if (ok()) return {true, summary};
    return {false, summary + " | " + std::to_string(failures_) + " failure(s): " + notes_.str()};
  }

 private:
  int failures_ = 0;
  std::ostringstream notes_;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

void index_pcm(fingerprint::FingerprintIndex& idx, const std::string& id, const std::vector<float>& x) {
  const auto pcm = synth::as_pcm(id, x);
  idx.index_asset(id, pcm.duration_s(), fingerprint::fingerprint_audio(pcm));
}

// B = A[d:], expected offset +d.
fingerprint::MatchResult shifted_pair(double d, double overlap_s, double snr_db, std::uint64_t seed) {
  const auto src = synth::scene(d + overlap_s, seed);
  auto b = synth::slice(src, d, overlap_s);
  synth::add_noise(b, snr_db, seed + 1);
  fingerprint::FingerprintIndex idx;
  index_pcm(idx, "a", src);
  index_pcm(idx, "b", b);
  return idx.match_pair("a", "b");
}

Outcome sync_recovery() {
  Findings f;
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> shift(0.5, 30.0), dur(10.0, 20.0);
  int recovered = 0;
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double d = shift(rng), len = dur(rng), snr = i % 2 ? 10.0 : 20.0;
    const auto r = shifted_pair(d, len, snr, 1000 + static_cast<std::uint64_t>(i) * 7);
    const double err = std::abs(r.offset_s - d);
    if (r.is_match && err <= 0.05) {
      ++recovered;
      worst = std::max(worst, err);
    }
  }
  if (recovered < 19) f.fail(fmt("recovered %.0f/20 (need >= 19)", recovered));

  int false_matches = 0;
  for (int i = 0; i < 50; ++i) {
    fingerprint::FingerprintIndex idx;
    const double la = dur(rng), lb = dur(rng);
    index_pcm(idx, "a", synth::scene(la, 5000 + static_cast<std::uint64_t>(i) * 2));
    index_pcm(idx, "b", synth::scene(lb, 5001 + static_cast<std::uint64_t>(i) * 2));
    if (idx.match_pair("a", "b").is_match) ++false_matches;
  }
  if (false_matches > 0) f.fail(fmt("%.0f false matches among 50 unrelated pairs", false_matches));
  return f.outcome(fmt("recovered %.0f/20 within 50 ms (worst %.1f ms), false matches %.0f/50", recovered,
                       worst * 1000, false_matches));
}

Outcome duration_monotonicity() {
  Findings f;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> shift(0.5, 5.0);
  std::vector<int> hits;
  for (double len : {3.0, 10.0, 30.0}) {
    int n = 0;
    for (int t = 0; t < 30; ++t) {
      const double d = shift(rng);
      const auto r = shifted_pair(d, len, 10.0, 9000 + static_cast<std::uint64_t>(t) * 13);
      if (r.is_match && std::abs(r.offset_s - d) <= 0.05) ++n;
    }
    hits.push_back(n);
  }
  if (!(hits[0] <= hits[1] && hits[1] <= hits[2])) f.fail("recall decreased with duration");
  return f.outcome(fmt("recall 3s %.0f/30, 10s %.0f/30, 30s %.0f/30", hits[0], hits[1], hits[2]));
}

Outcome dsp_oracle() {
  Findings f;
  std::mt19937_64 rng(50);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    // Frames are taken from inside a longer random signal so hop placement is exercised.
    std::vector<float> x(2048 + 1024 * 3);
    for (auto& v : x) v = u(rng) * (t % 3 == 0 ? 0.01f : 1.0f);
    const auto spec = dsp::stft(x);
    const std::size_t frame = static_cast<std::size_t>(t) % spec.n_frames();
    const std::vector<float> slice(x.begin() + static_cast<std::ptrdiff_t>(frame * 1024),
                                   x.begin() + static_cast<std::ptrdiff_t>(frame * 1024 + 2048));
    const auto ref = oracle::dft_magnitudes(slice);
    const auto row = spec.frames.row(frame);
    if (row.size() != ref.size()) {
      f.fail("bin count");
      continue;
    }
    for (std::size_t k = 0; k < ref.size(); ++k) worst = std::max(worst, std::abs(row[k] - ref[k]));
  }
  if (worst > 1e-4) f.fail(fmt("max |STFT - DFT| = %.3g", worst));

  for (std::size_t n : {2048u, 2049u, 3071u, 3072u, 3073u, 44100u, 441000u, 1000003u}) {
    const std::size_t expected = 1 + (n - 2048) / 1024;
    const auto spec = dsp::stft(std::vector<float>(n, 0.25f));
    if (spec.n_frames() != expected || dsp::frame_count(n) != expected) f.fail("frame count for n=" + std::to_string(n));
  }

  std::size_t nonfinite = 0, cells = 0;
  const std::vector<std::vector<float>> inputs = {synth::silence(3.0), synth::white_noise(3.0, 0.3, 1),
                                                  synth::sine(1000.0, 3.0, 1.0), synth::scene(3.0, 2),
                                                  std::vector<float>(44100, 1.0f)};
  for (const auto& x : inputs) {
    const auto m = dsp::mel(dsp::stft(x));
    for (float v : m.frames.data()) {
      ++cells;
      if (!std::isfinite(v)) ++nonfinite;
    }
  }
  if (nonfinite) f.fail(std::to_string(nonfinite) + " non-finite mel cells");
  return f.outcome(fmt("max |STFT - DFT| = %.2g over 50 frames, 8 frame counts exact, %.0f mel cells finite", worst,
                       static_cast<double>(cells)));
}

std::vector<similarity::SegmentFeature> random_segments(const std::string& id, int n, std::mt19937& rng) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<similarity::SegmentFeature> out;
  for (int s = 0; s < n; ++s) {
    similarity::SegmentFeature seg{id, static_cast<std::uint32_t>(s), {}};
    for (std::size_t i = 0; i < similarity::kDim; ++i) seg.vector[i] = g(rng) * static_cast<float>(1 + i % 5);
    out.push_back(seg);
  }
  return out;
}

std::vector<oracle::Keyed> flatten(const similarity::FeatureStore& store) {
  std::vector<oracle::Keyed> out;
  for (const auto& [id, seg] : store.segment_keys()) out.push_back({id, seg, store.features(id)[seg].vector});
  return out;
}

Outcome similarity_oracle() {
  Findings f;
  std::mt19937 rng(64);
  std::uniform_real_distribution<double> wd(0.1, 3.0);
  int queries = 0;
  for (int corpus_segments : {40, 250, 1000}) {
    similarity::FeatureStore store;
    int made = 0, a = 0;
    while (made < corpus_segments) {
      const int n = std::min(corpus_segments - made, 1 + a % 11);
      const std::string id = "c" + std::to_string(a++);
      store.add_asset(id, random_segments(id, n, rng));
      made += n;
    }
    // A byte-identical copy of one asset.
    auto dup = store.features("c3");
    for (auto& s : dup) s.asset_id = "c3-copy";
    store.add_asset("c3-copy", dup);

    const auto all = flatten(store);
    const auto stats = store.stats();
    std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
    for (int q = 0; q < 40; ++q, ++queries) {
      const auto& key = all[pick(rng)];
      similarity::Weights w;
      for (auto& x : w) x = q % 4 == 0 ? 1.0 : wd(rng);
      const int k = 1 + q % 25;
      const bool exclude = q % 3 == 0;
      const auto got = store.knn(key.asset_id, key.segment_idx, k,
                                 exclude ? similarity::Scope::ExcludeSameAsset : similarity::Scope::All, w);
      const auto want = oracle::knn(all, key.asset_id, key.segment_idx, k, exclude, stats, w);
      bool same = got.size() == want.size();
      for (std::size_t i = 0; same && i < got.size(); ++i) {
        same = got[i].asset_id == want[i].asset_id && got[i].segment_idx == want[i].segment_idx &&
               got[i].distance == want[i].distance;
      }
      if (!same) f.fail("knn differs from linear scan (corpus " + std::to_string(corpus_segments) + ")");
    }
    for (std::uint32_t s = 0; s < dup.size(); ++s) {
      const auto hits = store.knn("c3", s, 1);
      if (hits.empty() || hits[0].asset_id != "c3-copy" || hits[0].segment_idx != s || hits[0].distance != 0.0) {
        f.fail("duplicate not rank 1 at distance 0");
      }
    }
  }

  // Duplicate detection on real features.
  similarity::FeatureStore audio;
  const auto x = synth::scene(18.0, 77);
  auto feats = similarity::extract_segment_features(synth::as_pcm("orig", x));
  audio.add_asset("orig", feats);
  for (auto& s : feats) s.asset_id = "copy";
  audio.add_asset("copy", feats);
  for (int i = 0; i < 8; ++i) {
    const std::string id = "other" + std::to_string(i);
    audio.add_asset(id, similarity::extract_segment_features(synth::as_pcm(id, synth::scene(12.0, 200 + i))));
  }
  for (std::uint32_t s = 0; s < 3; ++s) {
    const auto hits = audio.knn("orig", s, 1);
    if (hits.empty() || hits[0].asset_id != "copy" || hits[0].distance != 0.0) f.fail("audio duplicate not rank 1");
  }

  // Weight-scaling invariance.
  similarity::FeatureStore store;
  for (int a = 0; a < 20; ++a) {
    const std::string id = "w" + std::to_string(a);
    store.add_asset(id, random_segments(id, 5, rng));
  }
  const auto keys = store.segment_keys();
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  int invariant = 0;
  for (int q = 0; q < 100; ++q) {
    const auto& key = keys[static_cast<std::size_t>(q) % keys.size()];
    similarity::Weights w;
    for (auto& x : w) x = wd(rng);
    auto scaled = w;
    const double c = scale(rng);
    for (auto& x : scaled) x *= c;
    const auto a = store.knn(key.first, key.second, 99, similarity::Scope::All, w);
    const auto b = store.knn(key.first, key.second, 99, similarity::Scope::All, scaled);
    bool same = a.size() == b.size();
    for (std::size_t i = 0; same && i < a.size(); ++i) {
      same = a[i].asset_id == b[i].asset_id && a[i].segment_idx == b[i].segment_idx;
    }
    if (same) ++invariant;
    else f.fail("argsort changed under weight scaling");
  }
  return f.outcome(fmt("%.0f knn queries equal linear scan (corpora 40/250/1000 segments), duplicates rank 1, "
                       "%.0f/100 scaled queries invariant",
                       queries, invariant));
}

const std::vector<std::string> kLabels = {"gunshot", "explosion", "speech", "emergency_vehicle", "alarm", "blue_car"};

Outcome event_index_oracle() {
  Findings f;
  std::mt19937 rng(1000);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> li(0, kLabels.size() - 1);
  std::uniform_int_distribution<int> nc(1, 3);
  int queries = 0, monotone = 0;
  for (int corpus = 0; corpus < 4; ++corpus) {
    events::EventIndex idx;
    std::vector<events::DetectionEvent> all;
    std::set<std::string> seen;
    const events::Generator g{"sed", "1", events::GeneratorKind::Audio};
    int a = 0;
    while (all.size() < 1000) {
      const std::string asset = "asset" + std::to_string(a++);
      events::Artifact art{asset, g, {}};
      for (int k = 0; k < 20 && all.size() < 1000; ++k) {
        events::DetectionEvent e;
        e.asset_id = asset;
        e.generator = g;
        e.label = kLabels[li(rng)];
        e.start_s = std::floor(u(rng) * 6000) / 10;
        e.end_s = e.start_s + 0.1 + std::floor(u(rng) * 100) / 10;
        e.confidence = std::round(u(rng) * 100) / 100;
        e.event_id = events::compute_event_id(asset, g, e.label, e.start_s, e.end_s);
        if (!seen.insert(e.event_id).second) continue;
        art.events.push_back(e);
        all.push_back(e);
      }
      idx.add_artifact(art);
    }
    for (int t = 0; t < 25; ++t, ++queries) {
      events::EventQuery q;
      const int n = nc(rng);
      for (int c = 0; c < n; ++c) q.clauses.push_back({kLabels[li(rng)], std::round(u(rng) * 100) / 100});
      q.combine = u(rng) < 0.5 ? events::Combine::And : events::Combine::Or;
      const auto got = idx.query(q);
      const auto want = oracle::event_query(all, q.clauses, q.combine == events::Combine::And);
      bool same = got.size() == want.size();
      for (std::size_t i = 0; same && i < got.size(); ++i) {
        std::vector<std::string> ids;
        for (const auto& e : got[i].events) ids.push_back(e.event_id);
        std::sort(ids.begin(), ids.end());
        same = got[i].asset_id == want[i].asset_id && got[i].rank_score == want[i].rank_score &&
               ids == want[i].event_ids;
      }
      if (!same) f.fail("query differs from brute force");

      auto raised = q;
      for (auto& c : raised.clauses) c.min_confidence = std::min(1.0, c.min_confidence + u(rng) * 0.3);
      std::set<std::string> before;
      for (const auto& h : got) before.insert(h.asset_id);
      bool ok = true;
      for (const auto& h : idx.query(raised)) ok = ok && before.count(h.asset_id);
      if (ok) ++monotone;
      else f.fail("raising a threshold added an asset");
    }
  }
  return f.outcome(fmt("%.0f queries over 4 corpora of 1000 events equal brute force; monotone on %.0f/%.0f",
                       queries, monotone, queries));
}

events::Artifact random_artifact(std::mt19937& rng, int i) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto kind = static_cast<events::GeneratorKind>(i % 3);
  events::Artifact art{"asset" + std::to_string(i % 17), {"gen" + std::to_string(i % 5), "v" + std::to_string(i), kind},
                       {}};
  const int n = 1 + static_cast<int>(u(rng) * 8);
  for (int k = 0; k < n; ++k) {
    events::DetectionEvent e;
    e.asset_id = art.asset_id;
    e.generator = art.generator;
    e.label = kLabels[static_cast<std::size_t>(u(rng) * kLabels.size()) % kLabels.size()];
    e.start_s = u(rng) * 300;
    e.end_s = e.start_s + 1e-3 + u(rng) * 20;
    e.confidence = kind == events::GeneratorKind::User ? 1.0 : u(rng);
    if (kind != events::GeneratorKind::Audio && u(rng) < 0.7) {
      std::vector<events::TrackBox> track;
      double t = e.start_s;
      for (int b = 0; b < 1 + static_cast<int>(u(rng) * 6); ++b) {
        const double w = 0.01 + u(rng) * 0.5, h = 0.01 + u(rng) * 0.5;
        track.push_back({t, u(rng) * (1 - w), u(rng) * (1 - h), w, h, b % 2});
        t += 0.04 + u(rng);
      }
      e.track = track;
    }
    if (kind == events::GeneratorKind::User) {
      e.author = "analyst" + std::to_string(k);
      e.created_at = "2026-01-0" + std::to_string(1 + k % 9) + "T10:00:00Z";
    }
    e.event_id = events::compute_event_id(e.asset_id, e.generator, e.label, e.start_s, e.end_s);
    art.events.push_back(e);
  }
  return art;
}

Outcome schema_round_trip() {
  Findings f;
  std::mt19937 rng(100);
  for (int i = 0; i < 100; ++i) {
    const auto art = random_artifact(rng, i);
    const std::string first = events::to_json(art).dump();
    try {
      const auto reparsed = events::parse_artifact(json::parse(first));
      if (events::to_json(reparsed).dump() != first) f.fail("artifact " + std::to_string(i) + " changed");
    } catch (const std::exception& e) {
      f.fail("artifact " + std::to_string(i) + ": " + e.what());
    }
  }

  synth::TempDir dir;
  std::map<std::string, double> durations;
  std::size_t qd_events = 0;
  for (int i = 0; i < 12; ++i) {
    std::vector<float> x;
    switch (i % 4) {
      case 0: x = synth::scene(8.0 + i, static_cast<std::uint64_t>(i)); break;
      case 1: x = synth::white_noise(6.0, 0.01, static_cast<std::uint64_t>(i)); synth::add_clicks(x, {1, 2.2, 4}); break;
      case 2: x = synth::sine(1000.0, 7.0, 0.4); break;
      default: x = synth::silence(3.0); break;
    }
    const std::string id = "qd" + std::to_string(i);
    const auto pcm = synth::as_pcm(id, x);
    durations[id] = pcm.duration_s();
    const auto art = quickdetect::detect_all(pcm);
    qd_events += art.events.size();
    std::ofstream(dir.path() / (id + ".json")) << events::to_json(art).dump(2);
  }
  events::EventIndex idx;
  const auto report = idx.load_artifacts(dir.path(), [&](const std::string& id) -> std::optional<double> {
    auto it = durations.find(id);
    if (it == durations.end()) return std::nullopt;
    return it->second;
  });
  if (!report.violations.empty()) f.fail(report.violations[0].file + ": " + report.violations[0].errors[0]);
  if (report.events_loaded != qd_events) f.fail("quickdetect events not all loaded");
  return f.outcome(fmt("100 artifacts round-trip byte-identical; 12 quickdetect artifacts (%.0f events), %.0f violations",
                       static_cast<double>(qd_events), static_cast<double>(report.violations.size())));
}

Outcome dashboard_transitivity() {
  Findings f;
  synth::TempDir dir;
  Workspace ws(WorkspaceConfig{dir.path() / "corpus", {}, {}, {}, std::nullopt});
  const auto src = synth::scene(25.0, 2026);
  auto add = [&](const std::string& name, std::vector<float> x, std::uint64_t seed) {
    if (seed) synth::add_noise(x, 20.0, seed);
    synth::write_wav(dir.path() / name, x);
    return ws.ingest(dir.path() / name).asset_id;
  };
  const auto a = add("a.wav", src, 0);
  const auto b = add("b.wav", synth::slice(src, 2.0, 15.0), 1);
  const auto c = add("c.wav", synth::slice(src, 5.0, 15.0), 2);

  const auto& idx = ws.fingerprints();
  const std::pair<std::string, std::string> pairs[] = {{a, b}, {a, c}, {b, c}};
  for (const auto& [x, y] : pairs) {
    if (!idx.match_pair(x, y).is_match) f.fail("pair not matched");
  }
  const auto id = ws.dashboards().create(a, 6.0, "triple").dashboard_id;
  ws.dashboards().add_member(id, b);
  ws.dashboards().add_member(id, c);
  const auto t = ws.dashboards().timeline(id);
  double residual = -1.0;
  if (t.audit.size() != 1 || !t.audit[0].matched) {
    f.fail("member pair not audited as matched");
  } else {
    residual = t.audit[0].residual_s;
    if (residual > 0.1 || !t.audit[0].clean) f.fail(fmt("residual %.3f s", residual));
  }
  const double expected[3][2] = {{0, 25}, {2, 17}, {5, 20}};
  double worst = 0.0;
  if (t.spans.size() != 3) {
    f.fail("timeline span count");
  } else {
    for (int i = 0; i < 3; ++i) {
      worst = std::max({worst, std::abs(t.spans[static_cast<std::size_t>(i)].start_s - expected[i][0]),
                        std::abs(t.spans[static_cast<std::size_t>(i)].end_s - expected[i][1])});
    }
    if (worst > 0.05) f.fail(fmt("span error %.3f s", worst));
  }
  return f.outcome(fmt("3/3 pairs matched, residual %.4f s, worst span error %.4f s", residual, worst));
}

Outcome service_contract() {
  Findings f;
  synth::TempDir dir;
  const auto root = dir.path() / "corpus";
  std::string master, twin;
  {
    Workspace ws(WorkspaceConfig{root, {}, {}, {}, std::nullopt});
    const auto src = synth::scene(20.0, 8);
    synth::write_wav(dir.path() / "m.wav", src);
    auto t = synth::slice(src, 3.0, 12.0);
    synth::add_noise(t, 20.0, 9);
    synth::write_wav(dir.path() / "t.wav", t);
    master = ws.ingest(dir.path() / "m.wav", {}, false).asset_id;
    twin = ws.ingest(dir.path() / "t.wav", {}, false).asset_id;
  }
  std::filesystem::create_directories(root / "artifacts");
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& id : {master, twin}) {
    json art = {{"schema_version", 1},
                {"asset_id", id},
                {"generator", {{"name", "sed"}, {"version", "1"}, {"kind", "audio"}}},
                {"events", json::array()}};
    for (int k = 0; k < 30; ++k) {
      const double s = std::floor(u(rng) * 100) / 10;
      art["events"].push_back({{"label", kLabels[static_cast<std::size_t>(k) % 5]},
                               {"start_s", s},
                               {"end_s", s + 0.5},
                               {"confidence", std::round(u(rng) * 100) / 100}});
    }
    std::ofstream(root / "artifacts" / (id + ".json")) << art.dump();
  }

  service::ApiConfig cfg;
  cfg.port = 0;
  cfg.corpus_root = root;
  service::Server server(cfg);
  const int port = server.start();
  if (port <= 0) return {false, "server failed to bind"};
  server.wait_for_indexing();

  const auto media = server.workspace().catalog().media_path(server.workspace().catalog().get(master));
  std::ifstream in(media, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), {});
  httplib::Client client("127.0.0.1", port);
  const std::size_t size = bytes.size();
  int windows = 0;
  const std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> ranges = {
      {"bytes=0-1023", {0, 1024}},
      {"bytes=1000-1999", {1000, 1000}},
      {"bytes=65530-200000", {65530, 200000 - 65530 + 1}},
      {"bytes=" + std::to_string(size - 100) + "-", {size - 100, 100}},
      {"bytes=-777", {size - 777, 777}},
      {"bytes=0-" + std::to_string(size + 5000), {0, size}}};
  for (const auto& [header, window] : ranges) {
    auto res = client.Get("/assets/" + master + "/media", {{"Range", header}});
    if (!res || res->status != 206 || res->body != bytes.substr(window.first, window.second)) {
      f.fail("range " + header);
      continue;
    }
    const std::string cr = "bytes " + std::to_string(window.first) + "-" +
                           std::to_string(window.first + window.second - 1) + "/" + std::to_string(size);
    if (res->get_header_value("Content-Range") != cr) f.fail("Content-Range for " + header);
    else ++windows;
  }
  auto full = client.Get("/assets/" + master + "/media");
  if (!full || full->status != 200 || full->body != bytes) f.fail("full body");
  auto unsatisfiable = client.Get("/assets/" + master + "/media", {{"Range", "bytes=" + std::to_string(size) + "-"}});
  if (!unsatisfiable || unsatisfiable->status != 416) f.fail("unsatisfiable range not 416");

  int equal = 0;
  for (int q = 0; q < 20; ++q) {
    json body = {{"clauses", json::array()}, {"combine", q % 2 ? "or" : "and"}, {"sort", q % 3 ? "confidence" : "time"}};
    for (int c = 0; c < 1 + q % 3; ++c) {
      body["clauses"].push_back({{"label", kLabels[static_cast<std::size_t>(q + c) % 5]},
                                 {"min_confidence", std::round(u(rng) * 100) / 100}});
    }
    auto res = client.Post("/search", body.dump(), "application/json");
    if (!res || res->status != 200) {
      f.fail("/search status");
      continue;
    }
    const auto got = json::parse(res->body)["results"];
    const auto want = server.workspace().events().query(query_from_json(body));
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < want.size(); ++i) {
      same = got[i]["asset_id"] == want[i].asset_id && got[i]["rank_score"].get<double>() == want[i].rank_score &&
             got[i]["events"].size() == want[i].events.size();
      for (std::size_t k = 0; same && k < want[i].events.size(); ++k) {
        const auto& e = want[i].events[k];
        const auto& j = got[i]["events"][k];
        same = j["id"] == e.event_id && j["start_s"].get<double>() == e.start_s &&
               j["end_s"].get<double>() == e.end_s && j["confidence"].get<double>() == e.confidence;
      }
    }
    if (same) ++equal;
    else f.fail("/search differs from direct query");
  }

  std::atomic<int> errors{0}, done{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < 50; ++t) {
    pool.emplace_back([&, t] {
      httplib::Client c("127.0.0.1", port);
      c.set_read_timeout(60);
      for (int i = 0; i < 8; ++i) {
        httplib::Result res;
        switch ((t + i) % 5) {
          case 0: res = c.Post("/search", R"({"clauses":[{"label":"gunshot","min_confidence":0.3}]})", "application/json"); break;
          case 1: res = c.Get("/assets/" + master + "/media", {{"Range", "bytes=4096-65535"}}); break;
          case 2: res = c.Get("/similar?asset=" + master + "&segment=0&k=3"); break;
          case 3: res = c.Get("/match?a=" + master + "&b=" + twin); break;
          default: res = c.Get("/assets/" + twin + "/waveform?px=400"); break;
        }
        if (!res || (res->status != 200 && res->status != 206)) ++errors;
        ++done;
      }
    });
  }
  for (auto& th : pool) th.join();
  if (errors) f.fail(std::to_string(errors.load()) + " errors in soak");
  server.stop();
  return f.outcome(fmt("%.0f/6 range windows exact, %.0f/20 /search bodies equal direct query, ", windows, equal) +
                   fmt("soak 50 clients x 8 requests: %.0f errors of %.0f", errors.load(), done.load()));
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"sync recovery", sync_recovery},
      {"duration monotonicity", duration_monotonicity},
      {"dsp oracle", dsp_oracle},
      {"similarity oracle", similarity_oracle},
      {"event index oracle", event_index_oracle},
      {"schema round-trip", schema_round_trip},
      {"dashboard transitivity", dashboard_transitivity},
      {"service contract", service_contract},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
