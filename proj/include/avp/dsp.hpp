#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "avp/audio.hpp"

namespace avp {
struct PcmAudio;
}

namespace avp::dsp {

inline constexpr int kWindowSize = 2048;
inline constexpr int kHopSize = 1024;
inline constexpr int kNumBins = kWindowSize / 2 + 1;
inline constexpr int kMelBands = 80;
inline constexpr double kLogFloor = 1e-10;

// Dense row-major float matrix, one row per frame.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

struct Spectrogram {
  Matrix frames;  // [n_frames x 1025] magnitudes
  int sample_rate_hz = kAnalysisRate;
  int window_size = kWindowSize;
  int hop_size = kHopSize;

  std::size_t n_frames() const { return frames.rows(); }
  std::size_t n_bins() const { return frames.cols(); }
  double hop_s() const { return static_cast<double>(hop_size) / sample_rate_hz; }
  double bin_hz() const { return static_cast<double>(sample_rate_hz) / window_size; }
};

struct MelSpectrogram {
  Matrix frames;  // [n_frames x 80] natural-log power
  double fmin_hz = 0.0;
  double fmax_hz = kAnalysisRate / 2.0;

  std::size_t n_frames() const { return frames.rows(); }
};

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::span<std::complex<double>> data);

// Periodic Hann window of the given length.
std::vector<double> hann_window(int size);

// floor((n - 2048) / 1024) + 1 for n >= 2048, else 0.
std::size_t frame_count(std::size_t n_samples);

// Hann-windowed one-sided magnitude STFT, 2048 window, 1024 hop.
// The trailing partial window is dropped. Throws TooShort below one window.
Spectrogram stft(std::span<const float> samples, int sample_rate_hz = kAnalysisRate);
Spectrogram stft(const PcmAudio& audio);

// 80 triangular filters on the HTK mel scale over [0, sr/2], area-normalized,
// as a [80 x n_bins] weight matrix.
Matrix mel_filterbank(int sample_rate_hz = kAnalysisRate, int n_fft = kWindowSize, int bands = kMelBands);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// ln(filterbank * magnitude^2 + 1e-10) per frame.
MelSpectrogram mel(const Spectrogram& spec);

// First `count` DCT-II (orthonormal) coefficients of each log-mel frame.
Matrix mfcc(const MelSpectrogram& mel_spec, int count = 20);

}  // namespace avp::dsp
