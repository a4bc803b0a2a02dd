#include "avp/dsp.hpp"

#include <cmath>
#include <mutex>
#include <numbers>

#include "avp/catalog.hpp"
#include "avp/error.hpp"

namespace avp::dsp {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace

void fft(std::span<std::complex<double>> data) {
  const std::size_t n = data.size();
  if (!is_pow2(n)) throw Error(ErrorCode::InvalidArgument, "fft size must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      // Direct twiddles; a running product drifts past 1e-4 on long transforms.
      const std::complex<double> w(std::cos(angle * k), std::sin(angle * k));
      for (std::size_t i = k; i < n; i += len) {
        const auto u = data[i];
        const auto v = data[i + half] * w;
        data[i] = u + v;
        data[i + half] = u - v;
      }
    }
  }
}

std::vector<double> hann_window(int size) {
  std::vector<double> w(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / size);
  return w;
}

std::size_t frame_count(std::size_t n_samples) {
  if (n_samples < static_cast<std::size_t>(kWindowSize)) return 0;
  return (n_samples - kWindowSize) / kHopSize + 1;
}

Spectrogram stft(std::span<const float> samples, int sample_rate_hz) {
  if (samples.size() < static_cast<std::size_t>(kWindowSize)) {
    throw Error(ErrorCode::TooShort, "audio shorter than one 2048-sample window");
  }
  static const std::vector<double> window = hann_window(kWindowSize);

  Spectrogram spec;
  spec.sample_rate_hz = sample_rate_hz;
  const std::size_t n_frames = frame_count(samples.size());
  spec.frames = Matrix(n_frames, kNumBins);

  std::vector<std::complex<double>> buf(kWindowSize);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const float* x = samples.data() + f * kHopSize;
    for (int i = 0; i < kWindowSize; ++i) buf[i] = {x[i] * window[i], 0.0};
    fft(buf);
    auto row = spec.frames.row(f);
    for (int k = 0; k < kNumBins; ++k) row[k] = static_cast<float>(std::abs(buf[k]));
  }
  return spec;
}

Spectrogram stft(const PcmAudio& audio) { return stft(audio.samples, audio.sample_rate_hz); }

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(int sample_rate_hz, int n_fft, int bands) {
  const int n_bins = n_fft / 2 + 1;
  const double fmax = sample_rate_hz / 2.0;
  const double mel_max = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(bands) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(bands + 1));
  }
  Matrix fb(static_cast<std::size_t>(bands), static_cast<std::size_t>(n_bins));
  const double bin_hz = static_cast<double>(sample_rate_hz) / n_fft;
  for (int b = 0; b < bands; ++b) {
    const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
    const double area_norm = 2.0 / (hi - lo);
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > lo && f < mid) {
        w = (f - lo) / (mid - lo);
      } else if (f >= mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      fb(b, k) = static_cast<float>(w * area_norm);
    }
  }
  return fb;
}

MelSpectrogram mel(const Spectrogram& spec) {
  static std::once_flag once;
  static Matrix default_fb;
  std::call_once(once, [] { default_fb = mel_filterbank(); });

  Matrix local_fb;
  const Matrix* fb = &default_fb;
  if (spec.sample_rate_hz != kAnalysisRate || spec.window_size != kWindowSize) {
    local_fb = mel_filterbank(spec.sample_rate_hz, spec.window_size);
    fb = &local_fb;
  }

  // Triangles are sparse; only visit each band's support.
  std::vector<std::pair<std::size_t, std::size_t>> support(fb->rows());
  for (std::size_t b = 0; b < fb->rows(); ++b) {
    auto w = fb->row(b);
    std::size_t lo = 0, hi = w.size();
    while (lo < hi && w[lo] == 0.0f) ++lo;
    while (hi > lo && w[hi - 1] == 0.0f) --hi;
    support[b] = {lo, hi};
  }

  MelSpectrogram out;
  out.fmax_hz = spec.sample_rate_hz / 2.0;
  out.frames = Matrix(spec.n_frames(), fb->rows());
  std::vector<double> power(spec.n_bins());
  for (std::size_t f = 0; f < spec.n_frames(); ++f) {
    auto mags = spec.frames.row(f);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = static_cast<double>(mags[k]) * mags[k];
    auto dst = out.frames.row(f);
    for (std::size_t b = 0; b < fb->rows(); ++b) {
      auto w = fb->row(b);
      double acc = 0.0;
      for (std::size_t k = support[b].first; k < support[b].second; ++k) acc += w[k] * power[k];
      dst[b] = static_cast<float>(std::log(acc + kLogFloor));
    }
  }
  return out;
}

Matrix mfcc(const MelSpectrogram& mel_spec, int count) {
  const std::size_t bands = mel_spec.frames.cols();
  const auto n_coef = static_cast<std::size_t>(count);
  std::vector<double> basis(n_coef * bands);
  for (std::size_t c = 0; c < n_coef; ++c) {
    const double scale = std::sqrt((c == 0 ? 1.0 : 2.0) / static_cast<double>(bands));
    for (std::size_t b = 0; b < bands; ++b) {
      basis[c * bands + b] = scale * std::cos(std::numbers::pi * static_cast<double>(c) * (2.0 * b + 1.0) /
                                              (2.0 * static_cast<double>(bands)));
    }
  }
  Matrix out(mel_spec.n_frames(), n_coef);
  for (std::size_t f = 0; f < mel_spec.n_frames(); ++f) {
    auto x = mel_spec.frames.row(f);
    for (std::size_t c = 0; c < n_coef; ++c) {
      double acc = 0.0;
      for (std::size_t b = 0; b < bands; ++b) acc += basis[c * bands + b] * x[b];
      out(f, c) = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace avp::dsp
