#include "avp/quickdetect.hpp"

#include <algorithm>
#include <cmath>

#include "avp/catalog.hpp"
#include "avp/dsp.hpp"
#include "avp/error.hpp"

namespace avp::quickdetect {

namespace {

constexpr double kDbFloor = 1e-10;
constexpr double kFullScaleRiseDb = 30.0;
// Frames quieter than this carry no usable band-energy ratio.
constexpr double kMinFramePower = 1e-10;

struct RawEvent {
  double start_s;
  double end_s;
  double confidence;
};

std::vector<RawEvent> merge_gapped(std::vector<RawEvent> raw, double gap_s) {
  std::vector<RawEvent> out;
  for (const auto& e : raw) {
    if (!out.empty() && e.start_s - out.back().end_s < gap_s) {
      out.back().end_s = std::max(out.back().end_s, e.end_s);
      out.back().confidence = std::max(out.back().confidence, e.confidence);
    } else {
      out.push_back(e);
    }
  }
  return out;
}

events::Artifact make_artifact(const PcmAudio& audio, const char* label, const std::vector<RawEvent>& raw) {
  events::Artifact a;
  a.asset_id = audio.asset_id;
  a.generator = generator();
  const double duration = audio.duration_s();
  for (const auto& r : raw) {
    events::DetectionEvent e;
    e.asset_id = a.asset_id;
    e.generator = a.generator;
    e.label = label;
    e.start_s = r.start_s;
    e.end_s = std::min(r.end_s, duration);
    e.confidence = std::clamp(r.confidence, 0.0, 1.0);
    if (!(e.end_s > e.start_s)) continue;
    e.event_id = events::compute_event_id(e.asset_id, e.generator, e.label, e.start_s, e.end_s);
    a.events.push_back(std::move(e));
  }
  return a;
}

}  // namespace

void validate(const DetectorConfig& cfg, int sample_rate_hz) {
  const double nyquist = sample_rate_hz / 2.0;
  if (cfg.impulse_db_threshold <= 0 || cfg.frame_s <= 0 || cfg.median_window_s < cfg.frame_s ||
      cfg.sustain_min_fraction <= 0 || cfg.sustain_min_fraction > 1 || cfg.sustain_min_s <= 0 ||
      cfg.min_event_gap_s < 0) {
    throw Error(ErrorCode::InvalidArgument, "detector thresholds must be positive");
  }
  if (!(cfg.sustain_band_lo_hz >= 0 && cfg.sustain_band_lo_hz < cfg.sustain_band_hi_hz &&
        cfg.sustain_band_hi_hz <= nyquist)) {
    throw Error(ErrorCode::InvalidArgument, "sustain band must lie within [0, Nyquist]");
  }
}

events::Generator generator() { return {kGeneratorName, kGeneratorVersion, events::GeneratorKind::Audio}; }

events::Artifact detect_impulses(const PcmAudio& audio, const DetectorConfig& cfg) {
  validate(cfg, audio.sample_rate_hz);
  const auto frame_len = static_cast<std::size_t>(std::llround(cfg.frame_s * audio.sample_rate_hz));
  const std::size_t n_frames = audio.samples.size() / frame_len;
  const auto history = static_cast<std::size_t>(std::llround(cfg.median_window_s / cfg.frame_s));

  std::vector<double> db(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    double acc = 0.0;
    for (std::size_t i = 0; i < frame_len; ++i) {
      const double v = audio.samples[f * frame_len + i];
      acc += v * v;
    }
    db[f] = 20.0 * std::log10(std::sqrt(acc / static_cast<double>(frame_len)) + kDbFloor);
  }

  std::vector<RawEvent> raw;
  std::vector<double> window;
  for (std::size_t f = 1; f < n_frames; ++f) {
    const std::size_t from = f > history ? f - history : 0;
    window.assign(db.begin() + static_cast<std::ptrdiff_t>(from), db.begin() + static_cast<std::ptrdiff_t>(f));
    auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
    std::nth_element(window.begin(), mid, window.end());
    const double rise = db[f] - *mid;
    if (rise < cfg.impulse_db_threshold) continue;
    const double start = static_cast<double>(f * frame_len) / audio.sample_rate_hz;
    const double end = static_cast<double>((f + 1) * frame_len) / audio.sample_rate_hz;
    raw.push_back({start, end, std::min(1.0, rise / kFullScaleRiseDb)});
  }
  return make_artifact(audio, kImpulseLabel, merge_gapped(std::move(raw), cfg.min_event_gap_s));
}

events::Artifact detect_sustained(const PcmAudio& audio, const DetectorConfig& cfg) {
  validate(cfg, audio.sample_rate_hz);
  if (audio.samples.size() < static_cast<std::size_t>(dsp::kWindowSize)) {
    return make_artifact(audio, kSustainedLabel, {});
  }
  const auto spec = dsp::stft(audio);
  const double bin_hz = spec.bin_hz();
  const double hop_s = spec.hop_s();
  const double window_s = static_cast<double>(spec.window_size) / spec.sample_rate_hz;

  std::vector<double> fraction(spec.n_frames(), 0.0);
  for (std::size_t f = 0; f < spec.n_frames(); ++f) {
    double total = 0.0, band = 0.0;
    const auto row = spec.frames.row(f);
    for (std::size_t b = 0; b < row.size(); ++b) {
      const double p = static_cast<double>(row[b]) * row[b];
      total += p;
      const double hz = static_cast<double>(b) * bin_hz;
      if (hz >= cfg.sustain_band_lo_hz && hz <= cfg.sustain_band_hi_hz) band += p;
    }
    fraction[f] = total > kMinFramePower ? band / total : 0.0;
  }

  std::vector<RawEvent> raw;
  for (std::size_t f = 0; f < fraction.size();) {
    if (fraction[f] < cfg.sustain_min_fraction) {
      ++f;
      continue;
    }
    std::size_t g = f;
    double sum = 0.0;
    while (g < fraction.size() && fraction[g] >= cfg.sustain_min_fraction) sum += fraction[g++];
    const double start = static_cast<double>(f) * hop_s;
    const double end = static_cast<double>(g - 1) * hop_s + window_s;
    if (end - start >= cfg.sustain_min_s) raw.push_back({start, end, sum / static_cast<double>(g - f)});
    f = g;
  }
  return make_artifact(audio, kSustainedLabel, merge_gapped(std::move(raw), cfg.min_event_gap_s));
}

events::Artifact detect_all(const PcmAudio& audio, const DetectorConfig& cfg) {
  auto a = detect_impulses(audio, cfg);
  auto s = detect_sustained(audio, cfg);
  a.events.insert(a.events.end(), s.events.begin(), s.events.end());
  return a;
}

}  // namespace avp::quickdetect
