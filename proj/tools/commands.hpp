#pragma once

// Subcommands of the latentcodec tool. run_cli() is the whole program so
// tests can drive it in-process.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "latentcodec/codec.hpp"
#include "latentcodec/io.hpp"
#include "latentcodec/training.hpp"

namespace latentcodec::cli {

namespace fs = std::filesystem;

// ---- worker pool ----------------------------------------------------------

/// LATENTCODEC_THREADS, else the hardware concurrency.
inline std::size_t worker_threads() {
  if (const char* env = std::getenv("LATENTCODEC_THREADS")) {
    try {
      long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw std::invalid_argument(std::string("LATENTCODEC_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs f(i) for i in [0, n) on the worker pool. Results are written by
/// index, so output order never depends on scheduling; the lowest-index
/// failure is rethrown.
template <class F>
void parallel_for(std::size_t n, const F& f) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(n, worker_threads());
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---- config files -------------------------------------------------------

/// Reads `key = value` lines ('#' comments, optional [subcommand] sections)
/// and appends `--key=value` for every key not already on the command line.
inline std::vector<std::string> apply_config(std::vector<std::string> args, const std::string& subcommand) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file " + path);
  std::set<std::string> given;
  for (const auto& a : args)
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  auto trim = [](std::string s) {
    auto b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  std::string section, line;
  for (int n = 1; std::getline(in, line); ++n) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(path + ":" + std::to_string(n) + ": expected key = value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (!section.empty() && section != subcommand) continue;
    if (given.count(key)) continue;
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

// ---- shared helpers -------------------------------------------------------

inline ModelBundle load_model(const std::string& path) {
  ModelBundle b = load_weights(read_file(path));
  b.validate();
  return b;
}

inline SignalKind parse_signal(const std::string& s) {
  if (s == "image") return SignalKind::image;
  if (s == "speech") return SignalKind::speech;
  throw std::invalid_argument("unknown signal '" + s + "'");
}

inline std::string hex_id(std::uint64_t id) {
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << id;
  return o.str();
}

struct SearchFlags {
  double alpha = -1;  // < 0: signal default
  double mu = AdmmConfig{}.mu;
  std::size_t iters = AdmmConfig{}.admm_iters;
  std::size_t inner_steps = AdmmConfig{}.inner_steps;
  std::string init = "encoder";

  void add_to(CLI::App* app) {
    app->add_option("--alpha", alpha, "weight of the MSE term in the loss (default: per signal)");
    app->add_option("--mu", mu, "initial ADMM penalty")->check(CLI::PositiveNumber);
    app->add_option("--iters", iters, "ADMM iterations")->check(CLI::PositiveNumber);
    app->add_option("--inner-steps", inner_steps, "gradient steps per z-update")->check(CLI::PositiveNumber);
    app->add_option("--init", init, "initial latent")->check(CLI::IsMember({"encoder", "zeros"}));
  }
  AdmmConfig admm() const {
    AdmmConfig c;
    c.mu = mu;
    c.admm_iters = iters;
    c.inner_steps = inner_steps;
    c.init = init == "zeros" ? InitKind::zeros : InitKind::encoder;
    c.validate();
    return c;
  }
  LossSpec loss(SignalKind k) const {
    LossSpec s = LossSpec::for_signal(k);
    if (alpha >= 0) s.alpha = alpha;
    s.validate();
    return s;
  }
};

/// Model inputs of a file: one image, or one tensor per speech segment.
inline std::vector<Tensor> load_inputs(const std::string& path, const ModelBundle& b) {
  if (is_image_path(path)) {
    if (b.signal() != SignalKind::image) throw std::invalid_argument("image input but the model is a speech model");
    return {image_input(load_image(path), b)};
  }
  if (is_wav_path(path)) return speech_inputs(load_wav(path), b);
  throw std::invalid_argument("unsupported input " + path + " (expected .pgm, .ppm or .wav)");
}

/// Codebook fitted to one signal's unconstrained search result.
inline Codebook per_signal_codebook(const ModelBundle& b, const Tensor& x, const LossSpec& spec, const AdmmConfig& cfg,
                                    std::size_t levels, std::uint64_t seed) {
  auto z = latent_search(b, x, spec, cfg).z;
  return fit_codebook(z, levels, seed);
}

inline void write_csv_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << content;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  TrainConfig config;
  std::string out, log, signal;
  bool stage2 = false, generator_only = false;
};

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
  TrainConfig c = a.config;
  if (a.generator_only) c.stage2_update_all = false;
  Dataset d = load_dataset(c.data, c.train_samples, c.heldout_samples, c.seed);
  if (!a.signal.empty() && parse_signal(a.signal) != d.signal)
    throw std::invalid_argument("--signal " + a.signal + " does not match dataset " + c.data);
  TrainResult r = train_pipeline(c, d, a.stage2);
  write_file(a.out, save_weights(r.bundle));
  std::string log = a.log.empty() ? fs::path(a.out).replace_extension(".csv").string() : a.log;
  std::ostringstream csv;
  write_log_csv(csv, r.log);
  write_csv_file(log, csv.str());
  out << "model: " << a.out << " (id " << hex_id(r.bundle.model_id) << ", " << signal_name(r.bundle.signal())
      << ", latent_dim " << r.bundle.latent_dim() << ", " << r.bundle.codebook->k() << " levels)\n";
  out << "log: " << log << "\n";
  out << "held-out mse: " << r.log.front().heldout_mse << " -> " << r.log.back().heldout_mse << "\n";
  return 0;
}

// ---- compress / decompress ------------------------------------------------

struct CompressArgs {
  std::string model, in, out, signal;
  std::size_t latent_dim = 0, levels = 0;
  std::uint64_t seed = 1;
  SearchFlags search;
};

struct CompressSummary {
  std::vector<CompressedBlob> blobs;
  RateReport rate;
  double pre_huffman_rate = 0;
  double mean_final_loss = 0;
};

inline CompressSummary compress_file(const CompressArgs& a, const ModelBundle& b) {
  if (a.latent_dim && a.latent_dim != b.latent_dim())
    throw std::invalid_argument("--latent-dim " + std::to_string(a.latent_dim) + " but the model has " +
                                std::to_string(b.latent_dim()));
  if (!a.signal.empty() && parse_signal(a.signal) != b.signal())
    throw std::invalid_argument("--signal " + a.signal + " does not match the model");
  if (!b.codebook && !a.levels) throw std::invalid_argument("model has no codebook; pass --levels");
  const LossSpec spec = a.search.loss(b.signal());
  const AdmmConfig cfg = a.search.admm();
  auto inputs = load_inputs(a.in, b);
  const bool own_codebook = a.levels && (!b.codebook || b.codebook->k() != a.levels);
  CompressSummary s;
  s.blobs.resize(inputs.size());
  std::vector<double> losses(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) {
    std::optional<Codebook> cb;
    if (own_codebook) cb = per_signal_codebook(b, inputs[i], spec, cfg, a.levels, a.seed);
    auto r = compress(inputs[i], b, spec, cfg, cb);
    s.blobs[i] = std::move(r.blob);
    losses[i] = r.search.report.final_loss;
  });
  SignalExtent one = SignalExtent::of(b), all = one;
  all.units *= inputs.size();
  for (const auto& blob : s.blobs) {
    auto r = measure_rate(blob, one);
    s.rate.header_bits += r.header_bits;
    s.rate.payload_bits += r.payload_bits;
    s.rate.total_bits += r.total_bits;
  }
  s.rate.rate = all.rate(s.rate.total_bits);
  s.rate.payload_rate = all.rate(s.rate.payload_bits);
  s.rate.unit = all.unit();
  s.pre_huffman_rate = pre_huffman_rate(b.latent_dim(), s.blobs.front().k(), one);
  s.mean_final_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
  return s;
}

inline int cmd_compress(const CompressArgs& a, std::ostream& out) {
  ModelBundle b = load_model(a.model);
  CompressSummary s = compress_file(a, b);
  write_file(a.out, pack_stream(s.blobs));
  const char* u = s.rate.unit;
  out << std::setprecision(10);
  out << "blobs: " << s.blobs.size() << "\n";
  out << "pre-huffman rate: " << s.pre_huffman_rate << " " << u << "\n";
  out << "payload rate: " << s.rate.payload_rate << " " << u << " (" << s.rate.payload_bits << " bits)\n";
  out << "rate: " << s.rate.rate << " " << u << " (" << s.rate.total_bits << " bits, header " << s.rate.header_bits
      << " bits)\n";
  out << "final loss: " << s.mean_final_loss << "\n";
  return 0;
}

struct DecompressArgs {
  std::string model, in, out;
};

inline int cmd_decompress(const DecompressArgs& a, std::ostream& out) {
  ModelBundle b = load_model(a.model);
  auto blobs = unpack_stream(read_file(a.in));
  std::vector<Tensor> signals(blobs.size());
  parallel_for(blobs.size(), [&](std::size_t i) { signals[i] = decompress(blobs[i], b).signal; });
  if (b.signal() == SignalKind::image) {
    if (blobs.size() != 1) throw FormatError("image blob file holds " + std::to_string(blobs.size()) + " blobs");
    if (!is_image_path(a.out)) throw std::invalid_argument("image output needs a .pgm/.ppm path");
    save_image(a.out, tensor_to_image(signals[0]));
  } else {
    if (!is_wav_path(a.out)) throw std::invalid_argument("speech output needs a .wav path");
    save_wav(a.out, speech_output(signals, b));
  }
  out << "decoded " << blobs.size() << " blob(s) to " << a.out << "\n";
  return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalRow {
  std::string name;
  double a = 0, b = 0;  // images: psnr, ms_ssim; speech: mel relative L2, waveform mse
};

inline std::size_t ms_ssim_scales_for(std::size_t h, std::size_t w) {
  std::size_t s = 1;
  while (s < 5 && std::min(h, w) >> s >= kMsSsimMinExtent) ++s;
  return s;
}

inline EvalRow eval_pair(const fs::path& original, const fs::path& reconstructed) {
  EvalRow row{original.filename().string()};
  if (is_image_path(original)) {
    Image8 x = load_image(original), y = load_image(reconstructed);
    if (x.width != y.width || x.height != y.height || x.channels != y.channels)
      throw ShapeError("image sizes differ: " + original.string() + " vs " + reconstructed.string());
    row.a = psnr(x.pixels, y.pixels);
    row.b = ms_ssim(image_to_tensor(x), image_to_tensor(y), ms_ssim_scales_for(x.height, x.width)).item();
    return row;
  }
  Waveform x = load_wav(original), y = load_wav(reconstructed);
  // A decompressed file may carry the zero padding of its last segment.
  if (y.samples.size() < x.samples.size() || y.samples.size() - x.samples.size() >= kSegmentSamples)
    throw ShapeError("waveform lengths differ: " + std::to_string(x.samples.size()) + " vs " +
                     std::to_string(y.samples.size()));
  y.samples.resize(x.samples.size());
  auto mx = mel_energies(x.samples), my = mel_energies(y.samples);
  double num = 0, den = 0, se = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    num += (mx[i] - my[i]) * (mx[i] - my[i]);
    den += mx[i] * mx[i];
  }
  for (std::size_t i = 0; i < x.samples.size(); ++i) se += (x.samples[i] - y.samples[i]) * (x.samples[i] - y.samples[i]);
  row.a = den > 0 ? std::sqrt(num / den) : std::sqrt(num);
  row.b = se / static_cast<double>(x.samples.size());
  return row;
}

struct EvalArgs {
  std::string original, reconstructed, out;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (fs::is_directory(a.original)) {
    if (!fs::is_directory(a.reconstructed)) throw std::invalid_argument("batch mode needs two directories");
    std::vector<fs::path> names;
    for (const auto& e : fs::directory_iterator(a.original))
      if (e.is_regular_file() && (is_image_path(e.path()) || is_wav_path(e.path()))) names.push_back(e.path().filename());
    std::sort(names.begin(), names.end());
    for (const auto& n : names)
      if (fs::exists(fs::path(a.reconstructed) / n)) pairs.emplace_back(fs::path(a.original) / n, fs::path(a.reconstructed) / n);
    if (pairs.empty()) throw std::invalid_argument("no files with matching names in the two directories");
  } else {
    pairs.emplace_back(a.original, a.reconstructed);
  }
  const bool images = is_image_path(pairs.front().first);
  for (const auto& p : pairs)
    if (is_image_path(p.first) != images) throw std::invalid_argument("batch mixes images and audio");
  std::vector<EvalRow> rows(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) { rows[i] = eval_pair(pairs[i].first, pairs[i].second); });

  std::ostringstream csv;
  csv << std::setprecision(10) << (images ? "file,psnr,ms_ssim\n" : "file,mel_rel_l2,mse\n");
  for (const auto& r : rows) csv << r.name << ',' << r.a << ',' << r.b << '\n';
  out << std::setprecision(10);
  if (rows.size() == 1) {
    if (images) out << "psnr: " << rows[0].a << "\nms_ssim: " << rows[0].b << "\n";
    else out << "mel_rel_l2: " << rows[0].a << "\nmse: " << rows[0].b << "\n";
  } else {
    out << csv.str();
  }
  if (!a.out.empty()) write_csv_file(a.out, csv.str());
  return 0;
}

// ---- sweep ----------------------------------------------------------------

struct SweepArgs {
  std::vector<std::string> models;
  std::vector<std::size_t> dims, levels{4, 16, 64};
  std::string data = "synthetic:shapes", out;
  std::size_t samples = 8, pool_samples = 16;
  std::uint64_t seed = 1;
  SearchFlags search;
};

struct SweepCell {
  std::size_t latent_dim = 0, levels = 0, samples = 0;
  double pre_huffman_rate = 0, post_huffman_rate = 0, total_rate = 0, mean_final_loss = 0;
};

inline std::string sweep_csv(const std::vector<SweepCell>& cells) {
  std::ostringstream o;
  o << std::setprecision(12);
  o << "latent_dim,levels,pre_huffman_rate,post_huffman_rate,total_rate,mean_final_loss,samples\n";
  for (const auto& c : cells)
    o << c.latent_dim << ',' << c.levels << ',' << c.pre_huffman_rate << ',' << c.post_huffman_rate << ','
      << c.total_rate << ',' << c.mean_final_loss << ',' << c.samples << '\n';
  return o.str();
}

/// Grid over the bundles' latent dims x levels. Each cell fits a codebook
/// on latents pooled from the training split, then compresses the held-out
/// samples.
inline std::vector<SweepCell> run_sweep(const SweepArgs& a) {
  std::vector<ModelBundle> bundles;
  for (const auto& m : a.models) bundles.push_back(load_model(m));
  std::sort(bundles.begin(), bundles.end(),
            [](const ModelBundle& x, const ModelBundle& y) { return x.latent_dim() < y.latent_dim(); });
  for (std::size_t d : a.dims) {
    bool found = std::any_of(bundles.begin(), bundles.end(), [&](const ModelBundle& b) { return b.latent_dim() == d; });
    if (!found) throw std::invalid_argument("missing bundle for latent_dim " + std::to_string(d));
  }
  if (!a.dims.empty())
    std::erase_if(bundles, [&](const ModelBundle& b) {
      return std::find(a.dims.begin(), a.dims.end(), b.latent_dim()) == a.dims.end();
    });
  if (bundles.empty()) throw std::invalid_argument("sweep needs at least one --model");
  if (a.levels.empty()) throw std::invalid_argument("sweep needs at least one level count");

  std::vector<SweepCell> cells;
  const AdmmConfig cfg = a.search.admm();
  for (const auto& b : bundles) {
    Dataset d = load_dataset(a.data, a.pool_samples, a.samples, a.seed, &b.norm);
    if (d.shape != b.signal_shape()) throw ShapeError("dataset " + a.data + " does not match the model shape");
    const LossSpec spec = a.search.loss(b.signal());
    TrainConfig pool_cfg;
    pool_cfg.codebook_samples = a.pool_samples;
    auto pool = pool_latents(b, d.train, pool_cfg);
    const SignalExtent extent = SignalExtent::of(b);
    for (std::size_t k : a.levels) {
      Codebook cb = fit_codebook(pool, k, a.seed);
      std::vector<double> loss(d.heldout.size());
      std::vector<std::uint64_t> payload(d.heldout.size()), total(d.heldout.size());
      parallel_for(d.heldout.size(), [&](std::size_t i) {
        auto r = compress(d.heldout[i], b, spec, cfg, cb);
        loss[i] = r.search.report.final_loss;
        payload[i] = r.blob.payload_bits;
        total[i] = 8 * r.blob.packed_bytes();
      });
      const double n = static_cast<double>(d.heldout.size());
      SweepCell c;
      c.latent_dim = b.latent_dim();
      c.levels = k;
      c.samples = d.heldout.size();
      c.pre_huffman_rate = pre_huffman_rate(b.latent_dim(), k, extent);
      c.post_huffman_rate = extent.rate(std::accumulate(payload.begin(), payload.end(), std::uint64_t{0})) / n;
      c.total_rate = extent.rate(std::accumulate(total.begin(), total.end(), std::uint64_t{0})) / n;
      c.mean_final_loss = std::accumulate(loss.begin(), loss.end(), 0.0) / n;
      cells.push_back(c);
    }
  }
  return cells;
}

inline int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  auto csv = sweep_csv(run_sweep(a));
  out << csv;
  if (!a.out.empty()) write_csv_file(a.out, csv);
  return 0;
}

// ---- entry point ----------------------------------------------------------

inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Generative latent-search codec: train, compress, decompress, eval, sweep", "latentcodec"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "latentcodec 1.0");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a model bundle on a dataset");
  t->add_option("--data", train.config.data, "synthetic:shapes[:N], synthetic:tones[:N] or a directory")->required();
  t->add_option("--out", train.out, "output weight file (.bpgw)")->required();
  t->add_option("--log", train.log, "training log CSV (default: --out with .csv)");
  t->add_option("--signal", train.signal, "expected signal kind")->check(CLI::IsMember({"image", "speech"}));
  t->add_option("--epochs", train.config.epochs, "stage-one epochs");
  t->add_option("--batch-size", train.config.batch_size, "batch size")->check(CLI::PositiveNumber);
  t->add_option("--latent-dim", train.config.latent_dim, "latent dimension (default 64 image, 512 speech)");
  t->add_option("--levels", train.config.levels, "codebook levels (power of two, 2-256)");
  t->add_option("--lambda-adv", train.config.lambda_adv, "adversarial loss weight");
  t->add_option("--seed", train.config.seed, "random seed");
  t->add_option("--train-samples", train.config.train_samples, "synthetic training samples");
  t->add_option("--heldout-samples", train.config.heldout_samples, "synthetic held-out samples");
  t->add_option("--codebook-samples", train.config.codebook_samples, "samples searched for the codebook fit");
  t->add_option("--stage2-epochs", train.config.stage2_epochs, "stage-two epochs");
  t->add_flag("--stage2", train.stage2, "fine-tune on quantized latents after the codebook fit");
  t->add_flag("--generator-only", train.generator_only, "stage two updates only the generator");

  CompressArgs comp;
  auto* c = app.add_subcommand("compress", "compress a .pgm/.ppm/.wav file to .bpgc");
  c->add_option("--model", comp.model, "weight file")->required()->check(CLI::ExistingFile);
  c->add_option("--in", comp.in, "input signal")->required()->check(CLI::ExistingFile);
  c->add_option("--out", comp.out, "output blob (.bpgc)")->required();
  c->add_option("--latent-dim", comp.latent_dim, "expected latent dimension");
  c->add_option("--levels", comp.levels, "levels; differs from the model's -> per-signal codebook");
  c->add_option("--signal", comp.signal, "expected signal kind")->check(CLI::IsMember({"image", "speech"}));
  c->add_option("--seed", comp.seed, "seed for per-signal codebooks");
  comp.search.add_to(c);

  DecompressArgs dec;
  auto* d = app.add_subcommand("decompress", "decompress a .bpgc blob");
  d->add_option("--model", dec.model, "weight file")->required()->check(CLI::ExistingFile);
  d->add_option("--in", dec.in, "input blob")->required()->check(CLI::ExistingFile);
  d->add_option("--out", dec.out, "output .pgm/.ppm/.wav")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "quality metrics of reconstructed files");
  e->add_option("original", ev.original, "original file or directory")->required()->check(CLI::ExistingPath);
  e->add_option("reconstructed", ev.reconstructed, "reconstructed file or directory")->required()->check(CLI::ExistingPath);
  e->add_option("--out", ev.out, "metrics CSV");

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "rate-quality grid over latent dims and levels");
  s->add_option("--model", sw.models, "weight file (repeat per latent dim)")->required()->check(CLI::ExistingFile);
  s->add_option("--dims", sw.dims, "latent dims to include (each needs a model)")->delimiter(',');
  s->add_option("--levels", sw.levels, "level counts")->delimiter(',');
  s->add_option("--data", sw.data, "dataset for held-out signals and codebook pools");
  s->add_option("--samples", sw.samples, "held-out signals per cell")->check(CLI::PositiveNumber);
  s->add_option("--pool-samples", sw.pool_samples, "training signals pooled for codebooks")->check(CLI::PositiveNumber);
  s->add_option("--seed", sw.seed, "random seed");
  s->add_option("--out", sw.out, "output CSV");
  sw.search.add_to(s);

  try {
    std::string sub = args.empty() ? "" : args.front();
    args = apply_config(std::move(args), sub);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 2;
  }

  try {
    if (*t) return cmd_train(train, out);
    if (*c) return cmd_compress(comp, out);
    if (*d) return cmd_decompress(dec, out);
    if (*e) return cmd_eval(ev, out);
    if (*s) return cmd_sweep(sw, out);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace latentcodec::cli
