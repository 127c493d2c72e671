#include "lpwn/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include "lpwn/error.hpp"

namespace lpwn {
namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());

  auto malformed = [&](const std::string& why) {
    return Error(ErrorCode::kFormat, path.string() + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw malformed("not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  int channels = 0, bits = 0, sample_rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::size_t size = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Tolerate a truncated data chunk, nothing else.
      if (std::memcmp(chunk, "data", 4) != 0) throw malformed("truncated chunk");
      size = bytes.size() - body;
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw malformed("short fmt chunk");
      std::uint16_t tag = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      sample_rate = static_cast<int>(read_u32(bytes.data() + body + 4));
      bits = read_u16(bytes.data() + body + 14);
      if (tag != 1 && tag != 0xfffe) {
        throw Error(ErrorCode::kUnsupportedFormat,
                    path.string() + ": only PCM is supported");
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw malformed("missing fmt chunk");
  if (data == nullptr) throw malformed("missing data chunk");
  if (channels != 1 || bits != 16) {
    throw Error(ErrorCode::kUnsupportedFormat,
                path.string() + ": need 16-bit mono, got " +
                    std::to_string(channels) + " ch / " +
                    std::to_string(bits) + " bit");
  }
  if (sample_rate <= 0) throw malformed("sample rate must be positive");

  AudioBuffer buf;
  buf.sample_rate = sample_rate;
  buf.samples.resize(data_size / 2);
  for (std::size_t i = 0; i < buf.samples.size(); ++i) {
    auto v = static_cast<std::int16_t>(read_u16(data + 2 * i));
    buf.samples[i] = static_cast<double>(v) / 32768.0;
  }
  return buf;
}

std::int16_t to_pcm16(double x) {
  double v = std::nearbyint(x * 32768.0);
  v = std::clamp(v, -32768.0, 32767.0);
  return static_cast<std::int16_t>(v);
}

WavWriteSummary write_wav(const AudioBuffer& buf,
                          const std::filesystem::path& path) {
  if (buf.sample_rate <= 0) {
    throw Error(ErrorCode::kDomain, "sample rate must be positive");
  }
  WavWriteSummary summary;
  const auto data_bytes = static_cast<std::uint32_t>(buf.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (double x : buf.samples) {
    if (!(x >= -1.0 && x <= 1.0)) ++summary.clamped;
    double v = std::isnan(x) ? 0.0 : x;
    put_u16(out, static_cast<std::uint16_t>(to_pcm16(v)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorCode::kIo, "short write to " + path.string());
  summary.samples_written = buf.samples.size();
  return summary;
}

MuLawCode mulaw_encode(double x) {
  if (!(std::abs(x) <= 1.0)) {
    throw Error(ErrorCode::kDomain, "mu-law input outside [-1, 1]");
  }
  constexpr double kMu = 255.0;
  const double y = std::copysign(std::log1p(kMu * std::abs(x)) /
                                     std::log1p(kMu),
                                 x);
  const double bin = std::floor((y + 1.0) / 2.0 * kMuLawClasses);
  const int c = std::clamp(static_cast<int>(bin), 0, kMuLawClasses - 1);
  return MuLawCode{static_cast<std::uint8_t>(c)};
}

double mulaw_decode(MuLawCode code) {
  constexpr double kMu = 255.0;
  const double y = (2.0 * code.class_index + 1.0) / kMuLawClasses - 1.0;
  const double mag = (std::pow(1.0 + kMu, std::abs(y)) - 1.0) / kMu;
  return std::copysign(mag, y);
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) /
                                double(n - 1));
  }
  w.front() = 0.0;
  w.back() = 0.0;
  return w;
}

std::size_t ms_to_samples(double ms, int sample_rate) {
  if (!(ms > 0.0) || sample_rate <= 0) {
    throw Error(ErrorCode::kConfig, "duration and sample rate must be positive");
  }
  return static_cast<std::size_t>(std::lround(ms * sample_rate / 1000.0));
}

std::vector<std::vector<double>> frame_signal(std::span<const double> x,
                                              std::size_t win_samples,
                                              std::size_t hop_samples,
                                              Window window) {
  if (hop_samples == 0 || win_samples < hop_samples) {
    throw Error(ErrorCode::kConfig, "framing needs win >= hop > 0");
  }
  std::vector<std::vector<double>> frames;
  if (x.empty()) return frames;
  const std::size_t count = (x.size() + hop_samples - 1) / hop_samples;
  const std::vector<double> w = window == Window::kHann
                                    ? hann_window(win_samples)
                                    : std::vector<double>(win_samples, 1.0);
  frames.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    std::vector<double> frame(win_samples, 0.0);
    const std::size_t start = t * hop_samples;
    const std::size_t n = std::min(win_samples, x.size() - start);
    for (std::size_t i = 0; i < n; ++i) frame[i] = x[start + i] * w[i];
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::vector<std::vector<double>> frame_signal(const AudioBuffer& buf,
                                              double win_ms, double hop_ms,
                                              Window window) {
  if (!(hop_ms > 0.0) || win_ms < hop_ms) {
    throw Error(ErrorCode::kConfig, "framing needs win_ms >= hop_ms > 0");
  }
  return frame_signal(buf.samples, ms_to_samples(win_ms, buf.sample_rate),
                      ms_to_samples(hop_ms, buf.sample_rate), window);
}

std::vector<std::vector<double>> frame_signal_centered(
    std::span<const double> x, std::size_t win_samples,
    std::size_t hop_samples, Window window) {
  if (hop_samples == 0 || win_samples < hop_samples) {
    throw Error(ErrorCode::kConfig, "framing needs win >= hop > 0");
  }
  if (x.empty()) return {};
  const std::size_t lead = (win_samples - hop_samples) / 2;
  std::vector<double> padded(lead + x.size(), 0.0);
  std::copy(x.begin(), x.end(), padded.begin() + lead);
  auto frames = frame_signal(padded, win_samples, hop_samples, window);
  frames.resize((x.size() + hop_samples - 1) / hop_samples);
  return frames;
}

}  // namespace lpwn
