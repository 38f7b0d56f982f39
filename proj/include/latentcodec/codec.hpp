#pragma once

// Compress/decompress orchestration and the BPGC blob:
//
//   "BPGC" | u16 version | u8 signal | u64 model_id | u32 latent_dim |
//   u16 k | k x f32 centers | k x u8 code lengths | u64 payload bits |
//   payload bytes | u32 CRC-32 of everything before it
//
// All integers little-endian; the payload is MSB-first canonical Huffman.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latentcodec/admm.hpp"
#include "latentcodec/bytes.hpp"
#include "latentcodec/entropy.hpp"
#include "latentcodec/pipelines.hpp"

namespace latentcodec {

inline constexpr std::uint16_t kBlobVersion = 1;
inline constexpr std::size_t kBlobFixedBytes = 4 + 2 + 1 + 8 + 4 + 2 + 8 + 4;  // 33

class ModelMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

struct CompressedBlob {
  std::uint16_t version = kBlobVersion;
  SignalKind signal = SignalKind::image;
  std::uint64_t model_id = 0;
  std::uint32_t latent_dim = 0;
  std::vector<float> centers;
  std::vector<std::uint8_t> lengths;
  std::uint64_t payload_bits = 0;
  std::vector<std::uint8_t> payload;

  std::size_t k() const { return centers.size(); }
  Codebook codebook() const {
    Codebook cb{std::vector<double>(centers.begin(), centers.end()), {}};
    cb.validate();
    return cb;
  }
  std::size_t header_bytes() const { return kBlobFixedBytes + 5 * centers.size(); }
  std::size_t packed_bytes() const { return header_bytes() + payload.size(); }
  bool operator==(const CompressedBlob&) const = default;
};

inline std::vector<std::uint8_t> pack(const CompressedBlob& b) {
  if (b.centers.size() != b.lengths.size()) throw FormatError("codebook and length table sizes differ");
  if (b.centers.size() > 256) throw FormatError("latent alphabet exceeds 256 symbols");
  if (b.payload.size() != (b.payload_bits + 7) / 8) throw FormatError("payload size does not match bit count");
  ByteWriter w;
  w.str("BPGC");
  w.u16(b.version);
  w.u8(static_cast<std::uint8_t>(b.signal));
  w.u64(b.model_id);
  w.u32(b.latent_dim);
  w.u16(static_cast<std::uint16_t>(b.centers.size()));
  for (float c : b.centers) w.f32(c);
  w.bytes(b.lengths);
  w.u64(b.payload_bits);
  w.bytes(b.payload);
  w.u32(crc32(w.data()));
  return w.take();
}

/// Parses one blob from the front of `bytes`; `consumed` receives its size.
inline CompressedBlob unpack(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.str(4) != "BPGC") throw FormatError("bad magic: not a BPGC blob");
  CompressedBlob b;
  b.version = r.u16();
  if (b.version != kBlobVersion) throw FormatError("unsupported blob version " + std::to_string(b.version));
  std::uint8_t kind = r.u8();
  if (kind > 1) throw FormatError("unknown signal kind " + std::to_string(kind));
  b.signal = static_cast<SignalKind>(kind);
  b.model_id = r.u64();
  b.latent_dim = r.u32();
  std::uint16_t k = r.u16();
  if (k > 256) throw FormatError("latent alphabet exceeds 256 symbols");
  for (std::uint16_t i = 0; i < k; ++i) b.centers.push_back(r.f32());
  auto len = r.bytes(k);
  b.lengths.assign(len.begin(), len.end());
  b.payload_bits = r.u64();
  if (b.payload_bits > static_cast<std::uint64_t>(r.remaining()) * 8) throw FormatError("truncated input");
  auto p = r.bytes(static_cast<std::size_t>((b.payload_bits + 7) / 8));
  b.payload.assign(p.begin(), p.end());
  const std::size_t body = r.position();
  std::uint32_t stored = r.u32();
  if (stored != crc32(bytes.first(body))) throw ChecksumError("blob checksum mismatch");
  if (consumed) *consumed = r.position();
  return b;
}

/// A file of one or more concatenated blobs (speech: one per segment).
inline std::vector<std::uint8_t> pack_stream(std::span<const CompressedBlob> blobs) {
  std::vector<std::uint8_t> out;
  for (const auto& b : blobs) {
    auto p = pack(b);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

inline std::vector<CompressedBlob> unpack_stream(std::span<const std::uint8_t> bytes) {
  std::vector<CompressedBlob> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    std::size_t n = 0;
    out.push_back(unpack(bytes.subspan(pos), &n));
    pos += n;
  }
  if (out.empty()) throw FormatError("empty blob stream");
  return out;
}

/// Huffman-codes quantization indices into a blob.
inline CompressedBlob make_blob(const ModelBundle& bundle, const Codebook& cb, std::span<const std::uint8_t> indices) {
  cb.validate();
  if (indices.size() != bundle.latent_dim()) throw ShapeError("index count does not match latent_dim");
  CompressedBlob b;
  b.signal = bundle.signal();
  b.model_id = bundle.model_id;
  b.latent_dim = static_cast<std::uint32_t>(indices.size());
  for (double c : cb.centers) b.centers.push_back(static_cast<float>(c));
  auto freqs = symbol_frequencies(indices, cb.k());
  CodeTable table = build_table(freqs);
  b.lengths = table.lengths;
  BitWriter w;
  b.payload_bits = encode(indices, table, w);
  b.payload = w.take();
  return b;
}

/// Indices decoded from the payload; rejects short or over-long streams.
inline std::vector<std::uint8_t> decode_indices(const CompressedBlob& b) {
  CodeTable table = CodeTable::from_lengths(b.lengths);
  BitReader r(b.payload, b.payload_bits);
  auto idx = decode(r, table, b.latent_dim);
  if (!r.exhausted()) throw FormatError("payload has trailing bits");
  return idx;
}

struct CompressResult {
  CompressedBlob blob;
  AdmmResult search;
  Codebook codebook;  // float32-rounded codebook the search ran with
};

/// ADMM search against `codebook` (default: the bundle's), rounded to
/// float32 first so the transmitted centers reproduce u_final exactly.
inline CompressResult compress(const Tensor& x, const ModelBundle& bundle, const LossSpec& spec,
                               const AdmmConfig& config, const std::optional<Codebook>& codebook = std::nullopt) {
  const Codebook* src = codebook ? &*codebook : (bundle.codebook ? &*bundle.codebook : nullptr);
  if (!src) throw std::invalid_argument("no codebook: the bundle has none and none was given");
  Codebook cb = src->to_float32();
  if (spec.kind != bundle.signal()) throw std::invalid_argument("loss spec does not match the bundle signal");
  AdmmResult r = admm_quantized_search(bundle, x, spec, cb, config);
  CompressedBlob blob = make_blob(bundle, cb, r.indices);
  return {std::move(blob), std::move(r), std::move(cb)};
}

struct Decompressed {
  std::vector<double> latent;
  Tensor signal;
};

inline Decompressed decompress(const CompressedBlob& blob, const ModelBundle& bundle) {
  if (blob.model_id != bundle.model_id)
    throw ModelMismatchError("blob was made with model " + std::to_string(blob.model_id) + ", bundle is " +
                             std::to_string(bundle.model_id));
  if (blob.signal != bundle.signal()) throw ModelMismatchError("blob signal kind does not match the bundle");
  if (blob.latent_dim != bundle.latent_dim()) throw ModelMismatchError("blob latent_dim does not match the bundle");
  Codebook cb = blob.codebook();
  Decompressed d;
  d.latent = dequantize(decode_indices(blob), cb);
  d.signal = generator_forward(bundle, Tensor::vector(d.latent)).detach();
  return d;
}

// ---- rate accounting --------------------------------------------------------

/// Pixels (images) or samples at 16 kHz (speech).
struct SignalExtent {
  SignalKind signal = SignalKind::image;
  std::uint64_t units = 0;

  static SignalExtent pixels(std::uint64_t n) { return {SignalKind::image, n}; }
  static SignalExtent samples(std::uint64_t n) { return {SignalKind::speech, n}; }
  static SignalExtent of(const ModelBundle& b) {
    if (b.signal() == SignalKind::speech) return samples(kSegmentSamples);
    Shape s = b.signal_shape();
    return pixels(s[1] * s[2]);
  }
  const char* unit() const { return signal == SignalKind::image ? "bpp" : "bps"; }
  /// bits per pixel, or bits per second.
  double rate(std::uint64_t bits) const {
    if (units == 0) throw std::invalid_argument("empty signal extent");
    return signal == SignalKind::image ? static_cast<double>(bits) / static_cast<double>(units)
                                       : static_cast<double>(bits) * kSampleRate / static_cast<double>(units);
  }
};

struct RateReport {
  std::uint64_t header_bits = 0;
  std::uint64_t payload_bits = 0;  // sum of codeword lengths
  std::uint64_t total_bits = 0;    // whole packed blob, payload padded to bytes
  double rate = 0;                 // total_bits over the extent
  double payload_rate = 0;
  double pre_huffman_rate = 0;  // latent_dim * log2(k) over the extent
  const char* unit = "bpp";
};

inline double pre_huffman_rate(std::size_t latent_dim, std::size_t levels, const SignalExtent& e) {
  if (levels < 2 || (levels & (levels - 1)) != 0) throw std::invalid_argument("levels must be a power of two");
  return e.rate(static_cast<std::uint64_t>(latent_dim) * static_cast<std::uint64_t>(std::countr_zero(levels)));
}

inline RateReport measure_rate(const CompressedBlob& b, const SignalExtent& e) {
  RateReport r;
  r.header_bits = 8 * b.header_bytes();
  r.payload_bits = b.payload_bits;
  r.total_bits = 8 * b.packed_bytes();
  r.rate = e.rate(r.total_bits);
  r.payload_rate = e.rate(r.payload_bits);
  r.pre_huffman_rate = b.k() >= 2 ? pre_huffman_rate(b.latent_dim, b.k(), e) : 0.0;
  r.unit = e.unit();
  return r;
}

// ---- whole signals --------------------------------------------------------

/// Model input for an image file, checked against the bundle.
inline Tensor image_input(const Image8& im, const ModelBundle& b) {
  Tensor t = image_to_tensor(im);
  if (t.shape() != b.signal_shape())
    throw ShapeError("image is " + to_string(t.shape()) + ", model expects " + to_string(b.signal_shape()));
  return t;
}

/// Speech: one feature tensor per 16384-sample segment.
inline std::vector<Tensor> speech_inputs(const Waveform& w, const ModelBundle& b) {
  if (b.signal() != SignalKind::speech) throw std::invalid_argument("model is not a speech model");
  if (w.samples.empty()) throw std::invalid_argument("empty waveform");
  std::vector<Tensor> out;
  for (const auto& seg : split_segments(w.samples)) out.push_back(speech_features(seg, b.norm));
  return out;
}

inline Waveform speech_output(const std::vector<Tensor>& features, const ModelBundle& b) {
  Waveform w;
  for (const auto& f : features) {
    auto seg = invert_speech(f, b.norm);
    w.samples.insert(w.samples.end(), seg.begin(), seg.end());
  }
  for (double& s : w.samples) s = std::clamp(s, -1.0, 1.0);
  return w;
}

}  // namespace latentcodec
