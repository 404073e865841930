// az3d: train, code and inspect anchor scenes from the command line.

#include "az3d/bitstream.hpp"
#include "az3d/checkpoint.hpp"
#include "az3d/ply.hpp"
#include "az3d/render.hpp"
#include "az3d/selfcheck.hpp"
#include "az3d/trainer.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace {

using namespace az3d;

constexpr const char* kToolVersion = "1.0.0";

enum ExitCode { kOk = 0, kConfig = 2, kDivergence = 3, kCorrupt = 4, kInternal = 5 };

enum class Format { Text, Csv };

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// Key/value lines and tables, as aligned text or CSV.
class Report {
 public:
  explicit Report(Format f) : format_(f) {}

  void banner(const std::string& command, uint64_t seed) {
    if (format_ == Format::Csv) {
      kv("tool", std::string("az3d ") + kToolVersion);
      kv("stream_version", std::to_string(kStreamVersion));
      kv("command", command);
      kv("seed", std::to_string(seed));
    } else {
      std::cout << "az3d " << kToolVersion << " (stream v" << kStreamVersion << ") " << command << ", seed " << seed
                << "\n";
    }
  }

  void kv(const std::string& key, const std::string& value) {
    if (format_ == Format::Csv) {
      std::cout << key << "," << value << "\n";
    } else {
      std::cout << "  " << std::left << std::setw(26) << key << value << "\n";
    }
  }

  void table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    if (format_ == Format::Csv) {
      std::cout << "\n";
      auto line = [](const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) std::cout << (i ? "," : "") << cells[i];
        std::cout << "\n";
      };
      line(header);
      for (const auto& r : rows) line(r);
      return;
    }
    std::vector<size_t> width(header.size());
    for (size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
    for (const auto& r : rows) {
      for (size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
      std::cout << " ";
      for (size_t i = 0; i < cells.size(); ++i) std::cout << " " << std::left << std::setw(static_cast<int>(width[i])) << cells[i];
      std::cout << "\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
  }

 private:
  Format format_;
};

TargetAnchorSet load_scene(const std::string& source) {
  if (source.rfind("synth:", 0) == 0) return synth_targets(parse_synth_spec(source.substr(6)));
  if (source.rfind("ply:", 0) == 0) return load_targets(source.substr(4));
  throw ContractViolation("--scene: expected synth:<spec> or ply:<path>, got '" + source + "'");
}

bool has_magic(const std::vector<uint8_t>& bytes, const char* magic) {
  return bytes.size() >= 4 && std::equal(magic, magic + 4, bytes.begin());
}

// A checkpoint or a bitstream, told apart by the magic.
SceneModel load_model(const std::string& path) {
  const auto bytes = read_file(path);
  if (has_magic(bytes, "AZCK")) return deserialize_checkpoint(bytes);
  return decode_scene(bytes);
}

// Flags shared by train and ablate. Pointers let explicit flags win over the config file.
struct TrainFlags {
  std::string scene;
  std::string config;
  double lambda_e = 0.0, lambda_m = 0.0, lr = 0.0;
  int iters = 0, threads = 1;
  uint64_t seed = 0;
  std::string variant;
  CLI::Option *o_lambda_e = nullptr, *o_lambda_m = nullptr, *o_lr = nullptr, *o_iters = nullptr,
              *o_seed = nullptr, *o_variant = nullptr, *o_threads = nullptr;

  void add(CLI::App* cmd, bool with_variant) {
    cmd->add_option("--scene", scene, "synth:<key=value,...> or ply:<path>")->required();
    cmd->add_option("--config", config, "flat key=value training config")->check(CLI::ExistingFile);
    o_lambda_e = cmd->add_option("--lambda-e", lambda_e, "rate weight")->check(CLI::NonNegativeNumber);
    o_lambda_m = cmd->add_option("--lambda-m", lambda_m, "mask weight")->check(CLI::NonNegativeNumber);
    o_lr = cmd->add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber);
    o_iters = cmd->add_option("--iters", iters, "training iterations")->check(CLI::PositiveNumber);
    o_seed = cmd->add_option("--seed", seed, "model and noise seed");
    o_threads = cmd->add_option("--threads", threads, "worker threads (1 is the reference)")->check(CLI::PositiveNumber);
    if (with_variant) {
      o_variant = cmd->add_option("--variant", variant, "baseline | predict | predict_hyper")
                      ->check(CLI::IsMember({"baseline", "predict", "predict_hyper"}));
    }
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config.empty()) cfg = load_train_config(config);
    if (o_lambda_e->count()) cfg.lambda_e = lambda_e;
    if (o_lambda_m->count()) cfg.lambda_m = lambda_m;
    if (o_lr->count()) cfg.lr = lr;
    if (o_iters->count()) cfg.iters = iters;
    if (o_seed->count()) cfg.seed = seed;
    if (o_threads->count()) cfg.threads = threads;
    if (o_variant && o_variant->count()) cfg.variant = parse_variant(variant);
    cfg.validate();
    return cfg;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_curve(const std::string& path, const TrainResult& result) {
  std::ostringstream s;
  s << "iter,distortion,bits_per_anchor,loss,lambda_e\n" << std::setprecision(10);
  for (const CurvePoint& p : result.curve) {
    s << p.iter << "," << p.distortion << "," << p.rate << "," << p.total << "," << p.lambda_e << "\n";
  }
  const std::string text = s.str();
  write_file(path, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

int cmd_train(const TrainFlags& flags, const std::string& out, std::string curve, Format format) {
  const TrainConfig cfg = flags.resolve();
  const TargetAnchorSet targets = load_scene(flags.scene);
  const auto t0 = std::chrono::steady_clock::now();
  SceneModel model = init_scene_model(targets, cfg.variant, cfg.seed);
  const TrainResult result = train(model, targets, cfg);
  save_checkpoint(out, model);
  if (curve.empty()) curve = out + ".curve.csv";
  write_curve(curve, result);

  const LossTerms final_terms = evaluate(model, targets, cfg);
  Report r(format);
  r.banner("train", cfg.seed);
  r.kv("variant", std::string(variant_name(cfg.variant)));
  r.kv("anchors", std::to_string(targets.size()));
  r.kv("iterations", std::to_string(cfg.iters));
  r.kv("lambda_e", fmt(cfg.lambda_e));
  r.kv("distortion", fmt(final_terms.distortion));
  r.kv("estimated_bits", fmt(final_terms.rate.total(), 10));
  r.kv("loss", fmt(final_terms.total));
  r.kv("checkpoint", out);
  r.kv("curve", curve);
  r.kv("seconds", fmt(seconds_since(t0), 4));
  return kOk;
}

int cmd_encode(const std::string& in, const std::string& out, Format format) {
  const SceneModel model = load_model(in);
  EncodeReport report;
  const auto stream = encode_scene(model, &report);
  write_file(out, stream);
  Report r(format);
  r.banner("encode", model.seed);
  r.kv("variant", std::string(variant_name(model.layout.variant)));
  r.kv("anchors", std::to_string(model.size()));
  r.kv("bytes", std::to_string(stream.size()));
  r.kv("clamped_symbols", std::to_string(report.clamped));
  r.kv("output", out);
  return kOk;
}

int cmd_decode(const std::string& in, const std::string& out, Format format) {
  const auto bytes = read_file(in);
  const SceneModel model = decode_scene(bytes);
  save_checkpoint(out, model);
  Report r(format);
  r.banner("decode", model.seed);
  r.kv("variant", std::string(variant_name(model.layout.variant)));
  r.kv("anchors", std::to_string(model.size()));
  r.kv("output", out);
  return kOk;
}

int cmd_stats(const std::string& in, Format format) {
  auto bytes = read_file(in);
  if (has_magic(bytes, "AZCK")) bytes = encode_scene(deserialize_checkpoint(bytes));
  const StreamHeader h = read_header(bytes);
  const SceneModel model = decode_scene(bytes);
  const RateBreakdown est = total_rate(model);

  Report r(format);
  r.banner("stats", h.seed);
  r.kv("variant", std::string(variant_name(h.variant)));
  r.kv("anchors", std::to_string(h.anchors));
  std::vector<std::vector<std::string>> rows;
  uint64_t sum = h.header_bytes();
  rows.push_back({"header", std::to_string(h.header_bytes()), fmt(100.0 * h.header_bytes() / bytes.size(), 4)});
  for (int s = 0; s < kSectionCount; ++s) {
    const uint64_t b = h.section_bytes[s];
    sum += b;
    rows.push_back({std::string(section_name(static_cast<Section>(s))), std::to_string(b),
                    fmt(100.0 * static_cast<double>(b) / bytes.size(), 4)});
  }
  rows.push_back({"total", std::to_string(sum), fmt(100.0 * sum / bytes.size(), 4)});
  r.table({"section", "bytes", "percent"}, rows);

  // Estimated bits of each entropy-coded attribute against its payload section.
  auto gap_row = [&](const std::string& name, double est_bits, Section s) {
    const double actual = 8.0 * static_cast<double>(h.section_bytes[static_cast<int>(s)]);
    return std::vector<std::string>{name, fmt(est_bits, 10), fmt(actual, 10),
                                    fmt(est_bits > 0 ? 100.0 * (actual - est_bits) / est_bits : 0.0, 4)};
  };
  std::vector<std::vector<std::string>> attr{gap_row("latent", est.latent, Section::LatentPayload),
                                             gap_row("scale", est.scale, Section::ScalePayload),
                                             gap_row("offset", est.offset, Section::OffsetPayload)};
  if (model.layout.uses_hyperprior()) attr.push_back(gap_row("hyperprior", est.hyper, Section::HyperPayload));
  const double est_total = est.entropy();
  double act_total = 0.0;
  for (Section s : {Section::LatentPayload, Section::ScalePayload, Section::OffsetPayload, Section::HyperPayload}) {
    act_total += 8.0 * static_cast<double>(h.section_bytes[static_cast<int>(s)]);
  }
  attr.push_back({"entropy total", fmt(est_total, 10), fmt(act_total, 10),
                  fmt(est_total > 0 ? 100.0 * (act_total - est_total) / est_total : 0.0, 4)});
  r.table({"attribute", "estimated_bits", "actual_bits", "gap_percent"}, attr);
  r.kv("file_bytes", std::to_string(bytes.size()));
  r.kv("sections_sum_to_file", sum == bytes.size() ? "yes" : "no");
  return sum == bytes.size() ? kOk : kInternal;
}

int cmd_ablate(const TrainFlags& flags, Format format) {
  const TrainConfig cfg = flags.resolve();
  const TargetAnchorSet targets = load_scene(flags.scene);
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = ablate(targets, cfg);
  Report r(format);
  r.banner("ablate", cfg.seed);
  r.kv("anchors", std::to_string(targets.size()));
  r.kv("iterations", std::to_string(cfg.iters));
  std::vector<std::vector<std::string>> table;
  for (const AblationRow& row : rows) {
    table.push_back({row.label, fmt(row.lambda_e), fmt(row.distortion), fmt(row.psnr, 5), fmt(row.bits.latent, 8),
                     std::to_string(row.latent_bytes), std::to_string(row.coded_bytes),
                     fmt(100.0 * static_cast<double>(row.latent_bytes) / static_cast<double>(row.coded_bytes), 4)});
  }
  r.table({"variant", "lambda_e", "distortion", "psnr_db", "latent_bits", "latent_bytes", "coded_bytes",
           "latent_share_percent"},
          table);
  r.kv("seconds", fmt(seconds_since(t0), 4));
  return kOk;
}

int cmd_render(const std::string& in, const std::string& scene, const std::string& prefix, int size, Format format) {
  const SceneModel model = load_model(in);
  const TargetAnchorSet targets = load_scene(scene);
  const RenderPair pair = render_pair(model, targets, size);
  write_ppm(prefix + "_original.ppm", pair.original);
  write_ppm(prefix + "_decoded.ppm", pair.decoded);
  Report r(format);
  r.banner("render", model.seed);
  r.kv("size", std::to_string(size));
  r.kv("psnr_db", fmt(pair.psnr, 6));
  r.kv("original", prefix + "_original.ppm");
  r.kv("decoded", prefix + "_decoded.ppm");
  return kOk;
}

int cmd_check(uint64_t seed, Format format) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_self_checks(seed);
  Report r(format);
  r.banner("check", seed);
  std::vector<std::vector<std::string>> rows;
  bool all = true;
  for (const CheckResult& c : results) {
    all = all && c.pass;
    rows.push_back({c.pass ? "PASS" : "FAIL", c.name, fmt(c.error, 3), fmt(c.tolerance, 3), c.detail});
  }
  r.table({"status", "check", "error", "tolerance", "detail"}, rows);
  r.kv("seconds", fmt(seconds_since(t0), 4));
  return all ? kOk : kInternal;
}

int run(int argc, char** argv) {
  CLI::App app{"Anchor scene compression: hash-grid feature prediction with a hyperprior entropy model"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  std::string format_name = "text";
  app.add_option("--format", format_name, "report format")->check(CLI::IsMember({"text", "csv"}));

  TrainFlags train_flags, ablate_flags;
  std::string in, out, curve, scene, prefix = "render";
  int size = 64;
  uint64_t check_seed = 0;

  CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
  train_flags.add(train, true);
  train->add_option("-o,--output", out, "checkpoint path")->required();
  train->add_option("--curve", curve, "curve CSV path (default <output>.curve.csv)");

  CLI::App* encode = app.add_subcommand("encode", "checkpoint to bitstream");
  encode->add_option("-i,--input", in, "checkpoint")->required()->check(CLI::ExistingFile);
  encode->add_option("-o,--output", out, "bitstream path")->required();

  CLI::App* decode = app.add_subcommand("decode", "bitstream to checkpoint");
  decode->add_option("-i,--input", in, "bitstream")->required()->check(CLI::ExistingFile);
  decode->add_option("-o,--output", out, "checkpoint path")->required();

  CLI::App* stats = app.add_subcommand("stats", "section sizes and estimated vs actual bits");
  stats->add_option("-i,--input", in, "bitstream or checkpoint")->required()->check(CLI::ExistingFile);

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "train and code all three variants");
  ablate_flags.add(ablate_cmd, false);

  CLI::App* render = app.add_subcommand("render", "render target and decoded attributes to PPM");
  render->add_option("-i,--input", in, "bitstream or checkpoint")->required()->check(CLI::ExistingFile);
  render->add_option("--scene", scene, "scene the model was trained on")->required();
  render->add_option("-o,--output", prefix, "output prefix");
  render->add_option("--size", size, "image width and height")->check(CLI::Range(8, 4096));

  CLI::App* check = app.add_subcommand("check", "run the invariant suite");
  check->add_option("--seed", check_seed, "seed for the randomized checks");

  // Every subcommand also accepts --format after its name.
  for (CLI::App* sub : {train, encode, decode, stats, ablate_cmd, render, check}) {
    sub->add_option("--format", format_name, "report format")->check(CLI::IsMember({"text", "csv"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  const Format format = format_name == "csv" ? Format::Csv : Format::Text;

  try {
    if (*train) return cmd_train(train_flags, out, curve, format);
    if (*encode) return cmd_encode(in, out, format);
    if (*decode) return cmd_decode(in, out, format);
    if (*stats) return cmd_stats(in, format);
    if (*ablate_cmd) return cmd_ablate(ablate_flags, format);
    if (*render) return cmd_render(in, scene, prefix, size, format);
    if (*check) return cmd_check(check_seed, format);
  } catch (const DivergenceError& e) {
    std::cerr << "error: training diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const CodecError& e) {
    std::cerr << "error: corrupt stream in section '" << e.section() << "': " << e.what() << "\n";
    return kCorrupt;
  } catch (const CheckpointError& e) {
    std::cerr << "error: corrupt checkpoint: " << e.what() << "\n";
    return kCorrupt;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const PlyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training allocates and frees large temporaries every iteration; keep them on the heap
  // instead of returning pages to the kernel each time.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return run(argc, argv);
}
