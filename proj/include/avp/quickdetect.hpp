#pragma once

#include "avp/events.hpp"

namespace avp {
struct PcmAudio;
}

namespace avp::quickdetect {

inline constexpr const char* kGeneratorName = "quickdetect";
inline constexpr const char* kGeneratorVersion = "1.0";
inline constexpr const char* kImpulseLabel = "impulse";
inline constexpr const char* kSustainedLabel = "sustained_tone";

struct DetectorConfig {
  double impulse_db_threshold = 15.0;  // rise over the local median
  double frame_s = 0.02;               // RMS frame length
  double median_window_s = 0.2;        // preceding frames used for the local median
  double sustain_band_lo_hz = 500.0;
  double sustain_band_hi_hz = 2000.0;
  double sustain_min_fraction = 0.6;
  double sustain_min_s = 2.0;
  double min_event_gap_s = 0.5;
};

// Throws InvalidArgument for non-positive thresholds or a band beyond Nyquist.
void validate(const DetectorConfig& cfg, int sample_rate_hz);

events::Generator generator();

// Label "impulse": 20 ms frames whose RMS rises above the median of the
// preceding 200 ms by the threshold. confidence = min(1, rise_db / 30).
events::Artifact detect_impulses(const PcmAudio& audio, const DetectorConfig& cfg = {});

// Label "sustained_tone": runs of STFT frames with at least 60 % of their
// energy inside the band, lasting at least sustain_min_s.
// confidence = mean band fraction over the run.
events::Artifact detect_sustained(const PcmAudio& audio, const DetectorConfig& cfg = {});

// Both detectors merged into one artifact.
events::Artifact detect_all(const PcmAudio& audio, const DetectorConfig& cfg = {});

}  // namespace avp::quickdetect
