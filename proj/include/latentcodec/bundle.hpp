#pragma once

// ModelBundle: generator, encoder and optional discriminator plus the
// constants needed to decode, with the bit-exact BPGW weight file.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "latentcodec/bytes.hpp"
#include "latentcodec/nn.hpp"
#include "latentcodec/quant.hpp"

namespace latentcodec {

/// Log-domain (floor, ceiling) for speech; the 8-bit pixel range for images.
struct NormConstants {
  double floor = 0.0;
  double ceiling = 255.0;
  bool operator==(const NormConstants&) const = default;
};

struct ModelBundle {
  ArchConfig arch;
  Network generator;
  Network encoder;
  std::optional<Network> discriminator;
  NormConstants norm;
  std::optional<Codebook> codebook;
  std::uint64_t model_id = 0;

  std::size_t latent_dim() const { return arch.latent_dim; }
  SignalKind signal() const { return arch.signal; }
  Shape signal_shape() const { return arch.signal_shape(); }

  void validate() const {
    if (generator.empty() || encoder.empty()) throw GraphError("bundle has uninitialized networks");
    if (generator.input_shape() != Shape{arch.latent_dim})
      throw ShapeError("generator input does not match latent_dim");
    if (encoder.output_shape() != Shape{arch.latent_dim})
      throw ShapeError("encoder output does not match latent_dim");
    if (generator.output_shape() != signal_shape() || encoder.input_shape() != signal_shape())
      throw ShapeError("networks do not match the signal shape");
    const auto& last = generator.layers().back().spec;
    if (last.kind != LayerKind::activation || last.activation != Activation::tanh)
      throw ShapeError("generator must end in tanh");
  }

  /// Deep copy with independent parameter storage.
  ModelBundle clone() const {
    ModelBundle b = *this;
    b.generator = generator.clone();
    b.encoder = encoder.clone();
    if (discriminator) b.discriminator = discriminator->clone();
    return b;
  }

  std::vector<Tensor> all_parameters() const {
    auto p = generator.parameters();
    auto e = encoder.parameters();
    p.insert(p.end(), e.begin(), e.end());
    if (discriminator) {
      auto d = discriminator->parameters();
      p.insert(p.end(), d.begin(), d.end());
    }
    return p;
  }

  /// Rounds every parameter and the codebook to float32 and stamps model_id.
  void freeze();
};

inline ModelBundle make_bundle(const ArchConfig& arch, std::uint64_t seed, bool with_discriminator = true) {
  std::mt19937_64 rng(seed);
  ModelBundle b;
  b.arch = arch;
  b.generator = build_generator(arch, rng);
  b.encoder = build_encoder(arch, rng);
  if (with_discriminator) b.discriminator = build_discriminator(arch, rng);
  b.validate();
  return b;
}

inline constexpr std::uint16_t kWeightVersion = 1;

namespace detail {

inline void write_tensor(ByteWriter& w, const std::string& name, const Shape& shape,
                         std::span<const double> values) {
  if (name.size() > 255) throw FormatError("tensor name too long");
  w.u8(static_cast<std::uint8_t>(name.size()));
  w.str(name);
  w.u8(static_cast<std::uint8_t>(shape.size()));
  for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
  for (double v : values) w.f32(static_cast<float>(v));
}

inline void for_each_record(const ModelBundle& b, const auto& fn) {
  const auto& a = b.arch;
  fn("meta.arch", Shape{6},
     std::vector<double>{1.0, static_cast<double>(a.signal), static_cast<double>(a.latent_dim),
                         static_cast<double>(a.channels), static_cast<double>(a.image_channels),
                         static_cast<double>(a.base)});
  fn("meta.norm", Shape{2}, std::vector<double>{b.norm.floor, b.norm.ceiling});
  auto net = [&](const std::string& prefix, const Network& n) {
    const auto& layers = n.layers();
    for (std::size_t i = 0; i < layers.size(); ++i)
      for (std::size_t j = 0; j < layers[i].params.size(); ++j)
        fn(prefix + "." + std::to_string(i) + "." + layers[i].param_names[j], layers[i].params[j].shape(),
           layers[i].params[j].to_vector());
  };
  net("generator", b.generator);
  net("encoder", b.encoder);
  if (b.discriminator) net("discriminator", *b.discriminator);
  if (b.codebook) fn("codebook", Shape{b.codebook->k()}, b.codebook->centers);
}

}  // namespace detail

/// BPGW: magic, u16 version, u16 record count, records, u64 FNV-1a trailer
/// over every preceding byte.
inline std::vector<std::uint8_t> save_weights(const ModelBundle& b) {
  b.validate();
  std::size_t count = 0;
  detail::for_each_record(b, [&](const std::string&, const Shape&, const std::vector<double>&) { ++count; });
  if (count > 0xFFFF) throw FormatError("too many tensors");
  ByteWriter w;
  w.str("BPGW");
  w.u16(kWeightVersion);
  w.u16(static_cast<std::uint16_t>(count));
  detail::for_each_record(b, [&](const std::string& name, const Shape& shape, const std::vector<double>& v) {
    detail::write_tensor(w, name, shape, v);
  });
  w.u64(fnv1a64(w.data()));
  return w.take();
}

inline void ModelBundle::freeze() {
  for (Tensor& t : all_parameters())
    for (double& v : t.mutable_data()) v = static_cast<double>(static_cast<float>(v));
  norm.floor = static_cast<double>(static_cast<float>(norm.floor));
  norm.ceiling = static_cast<double>(static_cast<float>(norm.ceiling));
  if (codebook) {
    SourceStats stats = codebook->source_stats;
    codebook = codebook->to_float32();
    codebook->source_stats = stats;
  }
  auto bytes = save_weights(*this);
  model_id = fnv1a64(std::span<const std::uint8_t>(bytes).first(bytes.size() - 8));
}

inline ModelBundle load_weights(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.str(4) != "BPGW") throw FormatError("bad magic: not a BPGW weight file");
  std::uint16_t version = r.u16();
  if (version != kWeightVersion) throw FormatError("unsupported weight file version " + std::to_string(version));
  std::uint16_t count = r.u16();

  struct Record {
    std::string name;
    Shape shape;
    std::vector<double> values;
  };
  std::vector<Record> records;
  for (std::uint16_t i = 0; i < count; ++i) {
    Record rec;
    rec.name = r.str(r.u8());
    std::uint8_t rank = r.u8();
    for (std::uint8_t d = 0; d < rank; ++d) rec.shape.push_back(r.u32());
    std::size_t n = numel(rec.shape);
    if (n > r.remaining() / 4) throw FormatError("truncated input");
    rec.values.resize(n);
    for (double& v : rec.values) v = static_cast<double>(r.f32());
    records.push_back(std::move(rec));
  }
  std::size_t body = r.position();
  std::uint64_t stored = r.u64();
  if (r.remaining() != 0) throw FormatError("trailing bytes after weight file");
  std::uint64_t hash = fnv1a64(bytes.first(body));
  if (stored != hash) throw FormatError("hash mismatch: weight file is corrupt");

  std::size_t next = 0;
  auto take = [&](const std::string& name) -> const Record& {
    if (next >= records.size() || records[next].name != name)
      throw FormatError("unexpected tensor record, wanted " + name);
    return records[next++];
  };
  const Record& arch = take("meta.arch");
  if (arch.values.size() != 6 || arch.values[0] != 1.0) throw FormatError("bad architecture record");
  ModelBundle b;
  b.arch.signal = arch.values[1] == 0.0 ? SignalKind::image : SignalKind::speech;
  b.arch.latent_dim = static_cast<std::size_t>(arch.values[2]);
  b.arch.channels = static_cast<std::size_t>(arch.values[3]);
  b.arch.image_channels = static_cast<std::size_t>(arch.values[4]);
  b.arch.base = static_cast<std::size_t>(arch.values[5]);
  const Record& norm = take("meta.norm");
  if (norm.values.size() != 2) throw FormatError("bad norm record");
  b.norm = {norm.values[0], norm.values[1]};

  bool has_disc = false;
  for (const Record& rec : records) has_disc |= rec.name.rfind("discriminator.", 0) == 0;
  std::mt19937_64 rng(0);
  b.generator = build_generator(b.arch, rng);
  b.encoder = build_encoder(b.arch, rng);
  if (has_disc) b.discriminator = build_discriminator(b.arch, rng);
  auto fill = [&](const std::string& prefix, Network& n) {
    auto& layers = n.layers();
    for (std::size_t i = 0; i < layers.size(); ++i)
      for (std::size_t j = 0; j < layers[i].params.size(); ++j) {
        const Record& rec = take(prefix + "." + std::to_string(i) + "." + layers[i].param_names[j]);
        if (rec.shape != layers[i].params[j].shape()) throw FormatError("tensor shape mismatch for " + rec.name);
        layers[i].params[j] = Tensor::variable(rec.shape, rec.values);
      }
  };
  fill("generator", b.generator);
  fill("encoder", b.encoder);
  if (b.discriminator) fill("discriminator", *b.discriminator);
  if (next < records.size()) {
    Codebook cb;
    cb.centers = take("codebook").values;
    try {
      cb.validate();
    } catch (const QuantError& e) {
      throw FormatError(std::string("bad codebook: ") + e.what());
    }
    b.codebook = std::move(cb);
  }
  if (next != records.size()) throw FormatError("unexpected extra tensor records");
  b.validate();
  b.model_id = hash;
  return b;
}

/// G(z) with frozen weights.
inline Tensor generator_forward(const ModelBundle& b, const Tensor& z) {
  if (b.generator.empty()) throw GraphError("generator weights are uninitialized");
  if (z.shape() != Shape{b.latent_dim()})
    throw ShapeError("latent has shape " + to_string(z.shape()) + ", expected [" + std::to_string(b.latent_dim()) + "]");
  return b.generator.forward(z, ParamMode::frozen);
}

inline Tensor encoder_forward(const ModelBundle& b, const Tensor& x) {
  if (b.encoder.empty()) throw GraphError("encoder weights are uninitialized");
  return b.encoder.forward(x.detach(), ParamMode::frozen);
}

}  // namespace latentcodec
