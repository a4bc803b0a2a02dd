#include "synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include <unistd.h>

namespace avp::synth {

std::vector<float> sine(double freq_hz, double seconds, double amplitude, int rate) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / rate));
  }
  return x;
}

std::vector<float> white_noise(double seconds, double rms_level, std::uint64_t seed, int rate) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, rms_level);
  std::vector<float> x(static_cast<std::size_t>(std::llround(seconds * rate)));
  for (auto& v : x) v = static_cast<float>(std::clamp(dist(rng), -1.0, 1.0));
  return x;
}

std::vector<float> silence(double seconds, int rate) {
  return std::vector<float>(static_cast<std::size_t>(std::llround(seconds * rate)), 0.0f);
}

std::vector<float> scene(double seconds, std::uint64_t seed, int rate) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  std::vector<double> acc(n, 0.0);

  double t = 0.0;
  while (t < seconds) {
    const double dur = 0.08 + 0.32 * unit(rng);
    const int partials = 1 + static_cast<int>(unit(rng) * 3.0);
    const auto start = static_cast<std::size_t>(t * rate);
    const auto len = static_cast<std::size_t>(dur * rate);
    for (int p = 0; p < partials; ++p) {
      // log-uniform frequency
      const double f = 150.0 * std::pow(6000.0 / 150.0, unit(rng));
      const double amp = 0.1 + 0.25 * unit(rng);
      const double phase = 2.0 * std::numbers::pi * unit(rng);
      for (std::size_t i = 0; i < len && start + i < n; ++i) {
        const double tt = static_cast<double>(i) / rate;
        const double env = std::min(1.0, tt / 0.005) * std::exp(-2.0 * tt / dur);
        acc[start + i] += amp * env * std::sin(2.0 * std::numbers::pi * f * tt + phase);
      }
    }
    t += dur * (0.6 + 0.6 * unit(rng));
  }

  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<float>(std::clamp(acc[i], -1.0, 1.0));

  std::vector<double> clicks;
  for (double c = 0.3 + unit(rng); c < seconds; c += 0.5 + 2.0 * unit(rng)) clicks.push_back(c);
  add_clicks(x, clicks, 0.5, rate);
  return x;
}

void add_noise(std::vector<float>& signal, double snr_db, std::uint64_t seed) {
  const double noise_rms = rms(signal) / std::pow(10.0, snr_db / 20.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, noise_rms);
  for (auto& v : signal) v = static_cast<float>(std::clamp(v + dist(rng), -1.0, 1.0));
}

void add_clicks(std::vector<float>& signal, const std::vector<double>& times_s, double amplitude, int rate) {
  const auto len = static_cast<std::size_t>(0.005 * rate);
  for (double t : times_s) {
    const auto start = static_cast<std::size_t>(std::llround(t * rate));
    for (std::size_t i = 0; i < len && start + i < signal.size(); ++i) {
      const double env = std::exp(-static_cast<double>(i) / (0.0015 * rate));
      const double sign = (i % 2 == 0) ? 1.0 : -1.0;
      signal[start + i] = static_cast<float>(std::clamp(signal[start + i] + sign * amplitude * env, -1.0, 1.0));
    }
  }
}

double rms(const std::vector<float>& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

std::vector<float> slice(const std::vector<float>& x, double start_s, double seconds, int rate) {
  const auto start = static_cast<std::size_t>(std::llround(start_s * rate));
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  std::vector<float> out(n, 0.0f);
  for (std::size_t i = 0; i < n && start + i < x.size(); ++i) out[i] = x[start + i];
  return out;
}

PcmAudio as_pcm(std::string id, std::vector<float> samples) {
  PcmAudio pcm;
  pcm.asset_id = std::move(id);
  pcm.samples = std::move(samples);
  return pcm;
}

void write_wav(const std::filesystem::path& path, const std::vector<float>& mono, int rate) {
  DecodedAudio a;
  a.sample_rate_hz = rate;
  a.channels = 1;
  a.interleaved = mono;
  wav::write(path, a, wav::SampleFormat::Float32);
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("avp-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + std::to_string(rd()));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace avp::synth
