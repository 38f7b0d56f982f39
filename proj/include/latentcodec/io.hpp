#pragma once

// NetPBM (P5/P6, maxval 255) and WAV (PCM16, mono, 16 kHz) containers.

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "latentcodec/bytes.hpp"
#include "latentcodec/pipelines.hpp"

namespace latentcodec {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, std::span<const std::uint8_t> bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

// ---- NetPBM ---------------------------------------------------------------

inline Image8 decode_pnm(std::span<const std::uint8_t> b) {
  if (b.size() < 2 || b[0] != 'P' || (b[1] != '5' && b[1] != '6')) throw FormatError("bad magic: expected P5 or P6");
  std::size_t pos = 2;
  auto next_int = [&]() -> std::size_t {
    while (pos < b.size()) {
      if (b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else if (std::isspace(b[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError("truncated input");
    std::size_t v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) {
      v = v * 10 + static_cast<std::size_t>(b[pos++] - '0');
      if (v > (1u << 24)) throw FormatError("pnm header value too large");
    }
    return v;
  };
  Image8 im;
  im.channels = b[1] == '5' ? 1 : 3;
  im.width = next_int();
  im.height = next_int();
  std::size_t maxval = next_int();
  if (maxval != 255) throw FormatError("unsupported bit depth: maxval " + std::to_string(maxval));
  if (im.width == 0 || im.height == 0) throw FormatError("empty image");
  if (pos >= b.size() || !std::isspace(b[pos])) throw FormatError("truncated input");
  ++pos;
  const std::size_t n = im.width * im.height * im.channels;
  if (b.size() - pos < n) throw FormatError("truncated input");
  im.pixels.assign(b.begin() + static_cast<std::ptrdiff_t>(pos), b.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return im;
}

inline std::vector<std::uint8_t> encode_pnm(const Image8& im) {
  if (im.channels != 1 && im.channels != 3) throw FormatError("pnm needs 1 or 3 channels");
  if (im.pixels.size() != im.width * im.height * im.channels) throw FormatError("pixel count mismatch");
  std::string header = (im.channels == 1 ? "P5\n" : "P6\n") + std::to_string(im.width) + " " +
                       std::to_string(im.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), im.pixels.begin(), im.pixels.end());
  return out;
}

inline Image8 load_image(const std::filesystem::path& p) { return decode_pnm(read_file(p)); }
inline void save_image(const std::filesystem::path& p, const Image8& im) { write_file(p, encode_pnm(im)); }

// ---- WAV ------------------------------------------------------------------

inline Waveform decode_wav(std::span<const std::uint8_t> b) {
  ByteReader r(b);
  auto tag = [&] {
    auto t = r.bytes(4);
    return std::string(t.begin(), t.end());
  };
  if (b.size() < 12 || tag() != "RIFF") throw FormatError("bad magic: expected RIFF");
  r.u32();
  if (tag() != "WAVE") throw FormatError("bad magic: expected WAVE");
  bool have_fmt = false;
  while (true) {
    std::string id = tag();
    std::uint32_t size = r.u32();
    if (id == "fmt ") {
      if (size < 16) throw FormatError("truncated input");
      std::uint16_t format = r.u16(), channels = r.u16();
      std::uint32_t rate = r.u32();
      r.u32();
      r.u16();
      std::uint16_t bits = r.u16();
      r.bytes(size - 16 + (size & 1));
      if (format != 1) throw FormatError("unsupported wav format: only PCM");
      if (bits != 16) throw FormatError("unsupported bit depth: " + std::to_string(bits));
      if (channels != 1) throw FormatError("unsupported channel count: " + std::to_string(channels));
      if (rate != static_cast<std::uint32_t>(kSampleRate)) throw FormatError("unsupported sample rate: " + std::to_string(rate));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError("wav data chunk before fmt");
      auto raw = r.bytes(size);
      Waveform w;
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        auto s = static_cast<std::int16_t>(static_cast<std::uint16_t>(raw[2 * i] | (raw[2 * i + 1] << 8)));
        w.samples[i] = static_cast<double>(s) / 32768.0;
      }
      return w;
    } else {
      r.bytes(size + (size & 1));
    }
  }
}

inline std::int16_t to_pcm16(double v) {
  double s = std::round(v * 32768.0);
  return static_cast<std::int16_t>(std::clamp(s, -32768.0, 32767.0));
}

inline std::vector<std::uint8_t> encode_wav(const Waveform& w) {
  if (w.sample_rate != kSampleRate) throw FormatError("unsupported sample rate: " + std::to_string(w.sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  ByteWriter o;
  auto tag = [&](const char* t) { o.bytes(std::span(reinterpret_cast<const std::uint8_t*>(t), 4)); };
  tag("RIFF");
  o.u32(36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  o.u32(16);
  o.u16(1);
  o.u16(1);
  o.u32(kSampleRate);
  o.u32(kSampleRate * 2);
  o.u16(2);
  o.u16(16);
  tag("data");
  o.u32(data_bytes);
  for (double s : w.samples) o.u16(static_cast<std::uint16_t>(to_pcm16(s)));
  return o.take();
}

inline Waveform load_wav(const std::filesystem::path& p) { return decode_wav(read_file(p)); }
inline void save_wav(const std::filesystem::path& p, const Waveform& w) { write_file(p, encode_wav(w)); }

inline bool is_image_path(const std::filesystem::path& p) {
  auto e = p.extension().string();
  return e == ".pgm" || e == ".ppm" || e == ".pnm";
}
inline bool is_wav_path(const std::filesystem::path& p) { return p.extension() == ".wav"; }

}  // namespace latentcodec
