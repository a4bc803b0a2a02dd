#include "avp/audio.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "avp/error.hpp"
#include "avp/io.hpp"

namespace avp {

namespace wav {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorCode::CorruptMedia, "wav: " + what); }

std::int32_t read_i24(const std::uint8_t* p) {
  std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
  if (v & 0x800000) v |= ~0xFFFFFF;
  return v;
}

}  // namespace

bool looks_like_wav(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 12 && std::equal(bytes.begin(), bytes.begin() + 4, "RIFF") &&
         std::equal(bytes.begin() + 8, bytes.begin() + 12, "WAVE");
}

DecodedAudio decode(std::span<const std::uint8_t> bytes) {
  if (!looks_like_wav(bytes)) throw Error(ErrorCode::UnsupportedFormat, "not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    io::ByteReader hdr(bytes.subspan(pos, 8));
    std::string id(reinterpret_cast<const char*>(bytes.data() + pos), 4);
    hdr.expect_bytes(id);
    std::uint32_t size = hdr.get_u32();
    pos += 8;
    if (size > bytes.size() - pos) corrupt("chunk '" + id + "' overruns file");
    auto body = bytes.subspan(pos, size);
    if (id == "fmt ") {
      if (size < 16) corrupt("fmt chunk too small");
      io::ByteReader r(body);
      format = r.get_u16();
      channels = r.get_u16();
      rate = r.get_u32();
      r.get_u32();  // byte rate
      block_align = r.get_u16();
      bits = r.get_u16();
      if (format == kFormatExtensible) {
        if (size < 40) corrupt("extensible fmt chunk too small");
        io::ByteReader ext(body.subspan(24));
        format = ext.get_u16();  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (id == "data") {
      data = body;
      have_data = true;
    }
    pos += size + (size & 1);
  }

  if (!have_fmt) corrupt("missing fmt chunk");
  if (!have_data) corrupt("missing data chunk");
  if (channels == 0 || rate == 0) corrupt("zero channels or sample rate");

  const bool pcm = format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool flt = format == kFormatFloat && (bits == 32 || bits == 64);
  if (!pcm && !flt) {
    throw Error(ErrorCode::UnsupportedFormat,
                "wav encoding " + std::to_string(format) + "/" + std::to_string(bits) + "-bit not supported");
  }
  const std::size_t bytes_per_sample = bits / 8;
  if (block_align != bytes_per_sample * channels) corrupt("inconsistent block alignment");

  DecodedAudio out;
  out.sample_rate_hz = static_cast<int>(rate);
  out.channels = channels;
  const std::size_t n = data.size() / bytes_per_sample;
  const std::size_t whole = n - n % channels;
  out.interleaved.resize(whole);
  const std::uint8_t* p = data.data();
  for (std::size_t i = 0; i < whole; ++i, p += bytes_per_sample) {
    float v = 0.0f;
    if (pcm) {
      switch (bits) {
        case 8: v = (static_cast<int>(p[0]) - 128) / 128.0f; break;
        case 16: v = static_cast<std::int16_t>(p[0] | (p[1] << 8)) / 32768.0f; break;
        case 24: v = static_cast<float>(read_i24(p) / 8388608.0); break;
        case 32: {
          std::uint32_t u = p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
          v = static_cast<float>(static_cast<std::int32_t>(u) / 2147483648.0);
          break;
        }
      }
    } else if (bits == 32) {
      std::memcpy(&v, p, 4);
    } else {
      double d;
      std::memcpy(&d, p, 8);
      v = static_cast<float>(d);
    }
    if (!std::isfinite(v)) corrupt("non-finite sample");
    out.interleaved[i] = std::clamp(v, -1.0f, 1.0f);
  }
  return out;
}

std::vector<std::uint8_t> encode(const DecodedAudio& audio, SampleFormat format) {
  const std::uint16_t bits = format == SampleFormat::Pcm16 ? 16 : 32;
  const std::uint16_t tag = format == SampleFormat::Pcm16 ? kFormatPcm : kFormatFloat;
  const auto channels = static_cast<std::uint16_t>(audio.channels);
  const std::uint16_t align = static_cast<std::uint16_t>(channels * bits / 8);
  const auto data_size = static_cast<std::uint32_t>(audio.interleaved.size() * (bits / 8));

  io::ByteWriter w;
  w.put_bytes("RIFF");
  w.put_u32(36 + data_size);
  w.put_bytes("WAVE");
  w.put_bytes("fmt ");
  w.put_u32(16);
  w.put_u16(tag);
  w.put_u16(channels);
  w.put_u32(static_cast<std::uint32_t>(audio.sample_rate_hz));
  w.put_u32(static_cast<std::uint32_t>(audio.sample_rate_hz) * align);
  w.put_u16(align);
  w.put_u16(bits);
  w.put_bytes("data");
  w.put_u32(data_size);
  for (float s : audio.interleaved) {
    if (format == SampleFormat::Pcm16) {
      auto q = static_cast<std::int16_t>(std::clamp(std::lrint(static_cast<double>(s) * 32768.0), -32768L, 32767L));
      w.put_u16(static_cast<std::uint16_t>(q));
    } else {
      w.put_f32(s);
    }
  }
  return w.take();
}

void write(const std::filesystem::path& path, const DecodedAudio& audio, SampleFormat format) {
  io::write_file_atomic(path, encode(audio, format));
}

}  // namespace wav

std::vector<float> mixdown_mono(const DecodedAudio& audio) {
  const std::size_t frames = audio.frames();
  const auto ch = static_cast<std::size_t>(audio.channels);
  std::vector<float> mono(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < ch; ++c) acc += audio.interleaved[i * ch + c];
    mono[i] = static_cast<float>(acc / static_cast<double>(ch));
  }
  return mono;
}

namespace {

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

class SincKernel {
 public:
  SincKernel(double ratio, int half_width)
      : cutoff_(0.475 * ratio), half_width_(half_width), beta_(0.1102 * (80.0 - 8.7)), norm_(bessel_i0(beta_)) {}

  // tau in input-sample units.
  double operator()(double tau) const {
    const double r = tau / half_width_;
    if (r <= -1.0 || r >= 1.0) return 0.0;
    const double x = 2.0 * cutoff_ * tau;
    const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    return 2.0 * cutoff_ * sinc * bessel_i0(beta_ * std::sqrt(1.0 - r * r)) / norm_;
  }

 private:
  double cutoff_;
  double half_width_;
  double beta_;
  double norm_;
};

}  // namespace

std::vector<float> resample(std::span<const float> input, int in_rate, int out_rate) {
  if (in_rate <= 0 || out_rate <= 0) throw Error(ErrorCode::InvalidArgument, "sample rates must be positive");
  if (in_rate == out_rate) return {input.begin(), input.end()};

  const long g = std::gcd(in_rate, out_rate);
  const long up = out_rate / g;    // L
  const long down = in_rate / g;   // M
  const double ratio = std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
  // Kaiser estimate for 80 dB over a transition of 0.05 * ratio cycles/sample.
  const int half_width = static_cast<int>(std::ceil((80.0 - 7.95) / (14.36 * 0.05 * ratio) / 2.0)) + 1;
  const int taps = 2 * half_width;
  const SincKernel kernel(ratio, half_width);

  const auto n_in = static_cast<long long>(input.size());
  const auto n_out = static_cast<long long>(std::llround(static_cast<double>(n_in) * out_rate / in_rate));

  auto phase_taps = [&](long phase, std::vector<double>& dst) {
    const double frac = static_cast<double>(phase) / static_cast<double>(up);
    double sum = 0.0;
    for (int j = 0; j < taps; ++j) {
      dst[j] = kernel(frac + (half_width - 1) - j);
      sum += dst[j];
    }
    if (sum != 0.0) {
      for (double& t : dst) t /= sum;
    }
  };

  constexpr long kMaxTablePhases = 4096;
  std::vector<double> table;
  if (up <= kMaxTablePhases) {
    table.resize(static_cast<std::size_t>(up) * taps);
    std::vector<double> row(taps);
    for (long p = 0; p < up; ++p) {
      phase_taps(p, row);
      std::copy(row.begin(), row.end(), table.begin() + p * taps);
    }
  }

  std::vector<float> out(static_cast<std::size_t>(n_out));
  std::vector<double> scratch(taps);
  for (long long n = 0; n < n_out; ++n) {
    const long long pos = n * down;
    const long long base = pos / up;
    const long phase = static_cast<long>(pos % up);
    const double* h;
    if (!table.empty()) {
      h = table.data() + static_cast<std::size_t>(phase) * taps;
    } else {
      phase_taps(phase, scratch);
      h = scratch.data();
    }
    const long long first = base - half_width + 1;
    double acc = 0.0;
    const int j0 = static_cast<int>(std::max<long long>(0, -first));
    const int j1 = static_cast<int>(std::min<long long>(taps, n_in - first));
    for (int j = j0; j < j1; ++j) acc += h[j] * input[static_cast<std::size_t>(first + j)];
    out[static_cast<std::size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace avp
