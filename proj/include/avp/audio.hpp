#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace avp {

inline constexpr int kAnalysisRate = 44100;

// Interleaved float samples as decoded from a container.
struct DecodedAudio {
  int sample_rate_hz = 0;
  int channels = 0;
  std::vector<float> interleaved;

  std::size_t frames() const { return channels > 0 ? interleaved.size() / static_cast<std::size_t>(channels) : 0; }
};

namespace wav {

bool looks_like_wav(std::span<const std::uint8_t> bytes);

// Supports PCM 8/16/24/32-bit, IEEE float 32/64 and WAVE_FORMAT_EXTENSIBLE.
// Throws CorruptMedia on malformed RIFF data, UnsupportedFormat on other encodings.
DecodedAudio decode(std::span<const std::uint8_t> bytes);

enum class SampleFormat { Pcm16, Float32 };

std::vector<std::uint8_t> encode(const DecodedAudio& audio, SampleFormat format = SampleFormat::Pcm16);
void write(const std::filesystem::path& path, const DecodedAudio& audio, SampleFormat format = SampleFormat::Pcm16);

}  // namespace wav

std::vector<float> mixdown_mono(const DecodedAudio& audio);

// Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel
// (stopband >= 80 dB by design, passband edge at 0.95 of the lower Nyquist).
// Output length is round(n_in * out_rate / in_rate).
std::vector<float> resample(std::span<const float> input, int in_rate, int out_rate);

}  // namespace avp
