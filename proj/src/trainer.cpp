#include "az3d/trainer.hpp"

#include "az3d/bitstream.hpp"
#include "az3d/pipeline.hpp"
#include "az3d/render.hpp"
#include "az3d/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace az3d {

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  auto check = [](bool ok, const char* key, const char* rule) {
    if (!ok) throw ContractViolation(std::string(key) + " " + rule);
  };
  check(std::isfinite(lambda_e) && lambda_e >= 0.0, "lambda_e", "must be a finite value >= 0");
  check(std::isfinite(lambda_m) && lambda_m >= 0.0, "lambda_m", "must be a finite value >= 0");
  check(iters >= 0, "iters", "must be >= 0");
  check(std::isfinite(lr) && lr > 0.0, "lr", "must be > 0");
  check(log_every >= 1, "log_every", "must be >= 1");
  check(threads >= 1, "threads", "must be >= 1");
  for (double s : {latent_lr_scale, scale_lr_scale, offset_lr_scale, mask_lr_scale, grid_lr_scale}) {
    check(std::isfinite(s) && s >= 0.0, "lr scale", "must be a finite value >= 0");
  }
  check(std::isfinite(lr_final_scale) && lr_final_scale > 0.0 && lr_final_scale <= 1.0, "lr_final_scale",
        "must be in (0, 1]");
  check(std::isfinite(target_distortion) && target_distortion >= 0.0, "target_distortion", "must be >= 0");
  check(controller_every >= 1, "controller_every", "must be >= 1");
  check(std::isfinite(controller_gain) && controller_gain >= 0.0, "controller_gain", "must be a finite value >= 0");
}

TrainConfig parse_train_config(const std::string& text, TrainConfig cfg) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) {
      throw ContractViolation("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      size_t used = 0;
      auto num = [&] {
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
      };
      auto integer = [&] {
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
      };
      if (key == "lambda_e") cfg.lambda_e = num();
      else if (key == "lambda_m") cfg.lambda_m = num();
      else if (key == "iters") cfg.iters = static_cast<int>(integer());
      else if (key == "lr") cfg.lr = num();
      else if (key == "seed") cfg.seed = static_cast<uint64_t>(integer());
      else if (key == "variant") cfg.variant = parse_variant(value);
      else if (key == "log_every") cfg.log_every = static_cast<int>(integer());
      else if (key == "threads") cfg.threads = static_cast<int>(integer());
      else if (key == "latent_lr_scale") cfg.latent_lr_scale = num();
      else if (key == "scale_lr_scale") cfg.scale_lr_scale = num();
      else if (key == "offset_lr_scale") cfg.offset_lr_scale = num();
      else if (key == "mask_lr_scale") cfg.mask_lr_scale = num();
      else if (key == "grid_lr_scale") cfg.grid_lr_scale = num();
      else if (key == "lr_final_scale") cfg.lr_final_scale = num();
      else if (key == "target_distortion") cfg.target_distortion = num();
      else if (key == "controller_every") cfg.controller_every = static_cast<int>(integer());
      else if (key == "controller_gain") cfg.controller_gain = num();
      else throw ContractViolation("config: unknown key '" + key + "'");
    } catch (const ContractViolation&) {
      throw;
    } catch (const std::exception&) {
      throw ContractViolation("config: bad value '" + value + "' for " + key);
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ContractViolation("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), base);
}

// ---------------------------------------------------------------------------
// Loss

namespace {

constexpr uint64_t kHyperStream = 0;
constexpr uint64_t kAttributeStream = 1;

void check_model(const SceneModel& m, const TargetAnchorSet* t) {
  const AnchorLayout& L = m.layout;
  const auto n = static_cast<Eigen::Index>(m.size());
  require(m.latent.rows() == n && m.latent.cols() == L.latent_dim(),
          "rd_loss: latent shape does not match the variant");
  require(m.scales.rows() == n && m.offsets.rows() == n && m.offsets.cols() == 3 * L.offsets &&
              m.mask_logits.rows() == n && m.mask_logits.cols() == L.offsets,
          "rd_loss: anchor tensor shapes are inconsistent");
  require(m.fp.has_value() == L.uses_prediction(), "rd_loss: FP-Net presence does not match the variant");
  require(L.uses_hyperprior() ? (m.ic.has_value() || m.decoded_hyper.has_value()) : !m.ic.has_value(),
          "rd_loss: IC-Encoder presence does not match the variant");
  if (t) {
    require(t->size() == m.size() && t->offset_count == L.offsets && t->features.cols() == L.feature_dim,
            "rd_loss: targets do not match the model");
  }
}

// One pass over all anchors. With `g` set the model's gradients are overwritten. A null
// `targets` skips the distortion terms.
LossTerms run_pass(SceneModel& m, const TargetAnchorSet* targets, const PassOptions& opt, AnchorGrads* g) {
  check_model(m, targets);
  const AnchorLayout& L = m.layout;
  const auto n = static_cast<Eigen::Index>(m.size());
  const bool train = opt.mode == QuantMode::Train;
  const bool back = g != nullptr;
  require(!back || targets, "rd_loss: gradients need targets");
  require(!back || !m.decoded_hyper, "rd_loss: a decoded model cannot be trained");
  const int C = L.channel_count();
  const int Ld = L.latent_dim();
  const int oc = L.offset_channel();
  const int hd = L.uses_hyperprior() ? L.hyper_dim : 0;
  const int k = L.offsets;
  const double w = n ? opt.lambda_e / static_cast<double>(n) : 0.0;
  const uint64_t key = mix64(opt.noise_seed ^ 0x6e6f697365ULL);
  const auto iter = static_cast<uint64_t>(opt.iteration);

  if (back) {
    m.grid.zero_grad();
    if (m.fp) m.fp->net.zero_grad();
    if (m.ic) m.ic->net.zero_grad();
    m.pe.net.zero_grad();
    m.hyper_prior.zero_grad();
    g->latent = RowMat::Zero(n, Ld);
    g->scales = RowMat::Zero(n, 3);
    g->offsets = RowMat::Zero(n, 3 * k);
    g->mask_logits = RowMat::Zero(n, k);
  }

  LossTerms out;
  GridStencil local_stencil;
  const GridStencil* stencil = opt.stencil;
  if (!stencil) {
    local_stencil = m.grid.stencil(m.positions);
    stencil = &local_stencil;
  }
  require(stencil->count == n, "rd_loss: grid stencil does not match the anchor count");
  RowMat fc;
  m.grid.query_batch(*stencil, GridView::Binarized, fc);

  // Hyperprior.
  RowMat z_hat(n, hd), uz, dz_hat = RowMat::Zero(n, hd);
  Mlp2BatchCache ic_cache;
  if (hd > 0) {
    if (train) {
      const RowMat z = m.ic->encode_batch(m.latent, back ? &ic_cache : nullptr);
      uz.resize(n, hd);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int c = 0; c < hd; ++c) {
          uz(i, c) = counter_centered(key, 2 * iter + kHyperStream, static_cast<uint64_t>(i * hd + c));
          z_hat(i, c) = z(i, c) + m.hyper_prior.step(c) * uz(i, c);
        }
      }
    } else {
      const SymbolMat sym = hyper_symbols(m, hyper_tables(m.hyper_prior));
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int c = 0; c < hd; ++c) z_hat(i, c) = m.hyper_prior.step(c) * static_cast<double>(sym(i, c));
      }
    }
    std::vector<double> col(static_cast<size_t>(n)), dcol(back ? static_cast<size_t>(n) : 0);
    for (int c = 0; c < hd; ++c) {
      for (Eigen::Index i = 0; i < n; ++i) col[i] = z_hat(i, c);
      out.rate.hyper += m.hyper_prior.bits_batch(c, col, dcol, w);
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(dcol.size()); ++i) dz_hat(i, c) += w * dcol[i];
    }
  }

  // Entropy parameters.
  Mlp2BatchCache pe_cache;
  const EntropyParamsBatch params =
      m.pe.estimate_batch(m.pe.input_batch(hd ? z_hat : RowMat(), fc), back ? &pe_cache : nullptr);
  const MaskResult mr = offset_mask_apply(m.mask_logits);

  RowMat v_hat(n, C), u;
  RowMat dv, dmu, dsig, dq, dmask;
  if (train) u.resize(n, C);
  if (back) {
    dv = RowMat::Zero(n, C);
    dmu = RowMat::Zero(n, C);
    dsig = RowMat::Zero(n, C);
    dq = RowMat::Zero(n, C);
    dmask = RowMat::Zero(n, k);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < C; ++c) {
      const double v = c < Ld ? m.latent(i, c) : c < oc ? m.scales(i, c - Ld) : m.offsets(i, c - oc);
      if (train) {
        u(i, c) = counter_centered(key, 2 * iter + kAttributeStream, static_cast<uint64_t>(i * C + c));
        v_hat(i, c) = v + params.step(i, c) * u(i, c);
      } else {
        const double mu = params.mu(i, c), q = params.step(i, c);
        v_hat(i, c) = mu + q * static_cast<double>(quantize_symbol(v, {q, mu}));
      }
    }
  }
  // Bit costs in row blocks so the temporaries stay in cache.
  constexpr Eigen::Index kBlock = 256;
  GaussianBitsBatch gb;
  for (Eigen::Index i0 = 0; i0 < n; i0 += kBlock) {
    const Eigen::Index rows = std::min(kBlock, n - i0);
    const Eigen::Index len = rows * C;
    auto flat = [&](const RowMat& mat) { return Eigen::Map<const Eigen::ArrayXd>(mat.row(i0).data(), len); };
    gaussian_bits_batch(flat(v_hat), flat(params.mu), flat(params.sigma), flat(params.step), back, gb);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::Index i = i0 + r;
      for (int c = 0; c < C; ++c) {
        const Eigen::Index e = r * C + c;
        const bool is_offset = c >= oc;
        const bool kept = !is_offset || mr.mask(i, (c - oc) / 3) != 0.0;
        if (kept) {
          if (c < Ld) out.rate.latent += gb.bits[e];
          else if (c < oc) out.rate.scale += gb.bits[e];
          else out.rate.offset += gb.bits[e];
        }
        if (back) {
          if (is_offset) dmask(i, (c - oc) / 3) += w * gb.bits[e];  // rate = mask * bits
          if (kept) {
            dv(i, c) += w * gb.d_value[e];
            dmu(i, c) -= w * gb.d_value[e];
            dsig(i, c) += w * gb.d_sigma[e];
            dq(i, c) += w * gb.d_step[e] + (train ? w * gb.d_value[e] * u(i, c) : 0.0);
          }
        }
      }
    }
  }
  out.rate.grid = m.grid.rate_bits();
  out.mask_loss = mr.loss;

  // Distortion.
  Mlp2BatchCache fp_cache;
  RowMat d_vhat;
  RowMat dfc = RowMat::Zero(n, fc.cols());
  if (targets && n > 0) {
    const RowMat latent_hat = v_hat.leftCols(Ld);
    const RowMat features =
        L.uses_prediction() ? m.fp->predict_batch(fc, latent_hat, back ? &fp_cache : nullptr) : latent_hat;
    const RowMat df = features - targets->features;
    const RowMat dl = v_hat.middleCols(Ld, 3) - targets->scales;
    RowMat o_eff = v_hat.rightCols(3 * k);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int j = 0; j < 3 * k; ++j) o_eff(i, j) *= mr.mask(i, j / 3);
    }
    const RowMat d_o = o_eff - targets->offsets;
    const double nf = static_cast<double>(df.size());
    const double nl = static_cast<double>(dl.size());
    const double no = static_cast<double>(d_o.size());
    out.d_feature = df.squaredNorm() / nf;
    out.d_scale = dl.squaredNorm() / nl;
    out.d_offset = d_o.squaredNorm() / no;

    if (back) {
      d_vhat = RowMat::Zero(n, C);
      const RowMat dfeat = (2.0 / nf) * df;
      if (L.uses_prediction()) {
        const RowMat din = m.fp->net.backward_batch(fp_cache, dfeat);
        dfc += din.leftCols(fc.cols());
        d_vhat.leftCols(Ld) += din.rightCols(Ld);
      } else {
        d_vhat.leftCols(Ld) += dfeat;
      }
      d_vhat.middleCols(Ld, 3) += (2.0 / nl) * dl;
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < 3 * k; ++j) {
          const double gd = 2.0 / no * d_o(i, j);
          d_vhat(i, oc + j) += mr.mask(i, j / 3) * gd;
          dmask(i, j / 3) += v_hat(i, oc + j) * gd;
        }
      }
    }
  }
  out.distortion = out.d_feature + out.d_scale + out.d_offset;
  out.total = out.distortion + (n ? opt.lambda_e * out.rate.total() / static_cast<double>(n) : 0.0) +
              opt.lambda_m * out.mask_loss;
  if (!back) return out;

  // Straight-through quantization: v_hat moves with v; in train mode also with q through the noise.
  dv += d_vhat;
  if (train) dq += d_vhat.cwiseProduct(u);

  const RowMat d_raw = m.pe.raw_gradient(params, dmu, dsig, dq);
  const RowMat d_pe_in = m.pe.net.backward_batch(pe_cache, d_raw);
  if (hd > 0) {
    dz_hat += d_pe_in.leftCols(hd);
    dfc += d_pe_in.rightCols(fc.cols());
    if (train) {
      for (int c = 0; c < hd; ++c) {
        m.hyper_prior.grad_raw_step[c] += m.hyper_prior.step(c) * dz_hat.col(c).dot(uz.col(c));
      }
      dv.leftCols(Ld) += m.ic->net.backward_batch(ic_cache, dz_hat);
    }
  } else {
    dfc += d_pe_in;
  }
  m.grid.backward_batch(*stencil, dfc, GridView::Binarized);
  m.grid.rate_backward(w);
  offset_mask_backward(m.mask_logits, dmask, opt.lambda_m, g->mask_logits);

  g->latent = dv.leftCols(Ld);
  g->scales = dv.middleCols(Ld, 3);
  g->offsets = dv.rightCols(3 * k);
  return out;
}

}  // namespace

RateBreakdown total_rate(const SceneModel& model) {
  // Without gradients the pass only reads the model.
  return run_pass(const_cast<SceneModel&>(model), nullptr, PassOptions{}, nullptr).rate;
}

LossTerms rd_loss(SceneModel& model, const TargetAnchorSet& targets, const PassOptions& options,
                  AnchorGrads* grads) {
  return run_pass(model, &targets, options, grads);
}

LossTerms evaluate(const SceneModel& model, const TargetAnchorSet& targets, const TrainConfig& cfg) {
  PassOptions opt;
  opt.mode = QuantMode::Infer;
  opt.lambda_e = cfg.lambda_e;
  opt.lambda_m = cfg.lambda_m;
  return run_pass(const_cast<SceneModel&>(model), &targets, opt, nullptr);
}

// ---------------------------------------------------------------------------
// Training

AnchorGrads make_anchor_grads(const SceneModel& model) {
  AnchorGrads g;
  g.latent = RowMat::Zero(model.latent.rows(), model.latent.cols());
  g.scales = RowMat::Zero(model.scales.rows(), model.scales.cols());
  g.offsets = RowMat::Zero(model.offsets.rows(), model.offsets.cols());
  g.mask_logits = RowMat::Zero(model.mask_logits.rows(), model.mask_logits.cols());
  return g;
}

std::vector<ParamBlock> trainable_blocks(SceneModel& m, AnchorGrads& g, const TrainConfig& cfg) {
  std::vector<ParamBlock> blocks;
  blocks.push_back({"anchor.latent", flat(m.latent), flat(g.latent), cfg.latent_lr_scale});
  blocks.push_back({"anchor.scales", flat(m.scales), flat(g.scales), cfg.scale_lr_scale});
  blocks.push_back({"anchor.offsets", flat(m.offsets), flat(g.offsets), cfg.offset_lr_scale});
  blocks.push_back({"anchor.mask_logits", flat(m.mask_logits), flat(g.mask_logits), cfg.mask_lr_scale});
  m.grid.append_blocks(blocks, cfg.grid_lr_scale);
  if (m.fp) append_blocks(m.fp->net, "fp", blocks);
  if (m.ic) append_blocks(m.ic->net, "ic", blocks);
  append_blocks(m.pe.net, "pe", blocks);
  if (m.hyper_prior.channels() > 0) m.hyper_prior.append_blocks(blocks);
  return blocks;
}

TrainResult train(SceneModel& model, const TargetAnchorSet& targets, const TrainConfig& cfg) {
  cfg.validate();
  require(model.layout.variant == cfg.variant, "train: model variant does not match the config");
  require(!model.decoded_hyper, "train: a decoded model cannot be trained");
  check_model(model, &targets);

  AnchorGrads grads = make_anchor_grads(model);
  std::vector<ParamBlock> blocks = trainable_blocks(model, grads, cfg);
  std::vector<AdamState> states;
  for (const auto& b : blocks) {
    AdamConfig ac;
    ac.lr = cfg.lr * b.lr_scale;
    states.push_back(AdamState::make(b.value.size(), ac));
  }

  const GridStencil stencil = model.grid.stencil(model.positions);
  TrainResult result;
  double lambda = cfg.lambda_e;
  const int warmup = cfg.iters / 5;
  for (int it = 0; it < cfg.iters; ++it) {
    PassOptions opt;
    opt.mode = QuantMode::Train;
    opt.noise_seed = cfg.seed;
    opt.iteration = it;
    opt.lambda_e = lambda;
    opt.lambda_m = cfg.lambda_m;
    opt.stencil = &stencil;
    const LossTerms terms = rd_loss(model, targets, opt, &grads);
    if (!std::isfinite(terms.total)) throw DivergenceError(it, "non-finite loss");

    if (it % cfg.log_every == 0 || it + 1 == cfg.iters) {
      const double per_anchor = targets.size() ? terms.rate.total() / static_cast<double>(targets.size()) : 0.0;
      result.curve.push_back({it, terms.distortion, per_anchor, terms.total, lambda});
    }
    const int half = cfg.iters / 2;
    const double decay = it < half ? 1.0
                                   : cfg.lr_final_scale + (1.0 - cfg.lr_final_scale) * 0.5 *
                                                              (1.0 + std::cos(std::numbers::pi * (it - half) /
                                                                              std::max(1, cfg.iters - half - 1)));
    for (size_t b = 0; b < blocks.size(); ++b) {
      states[b].lr = cfg.lr * blocks[b].lr_scale * decay;
      try {
        adam_step(blocks[b].value, blocks[b].grad, states[b], blocks[b].name);
      } catch (const NumericError& e) {
        throw DivergenceError(it, e.what());
      }
    }
    for (double& d : model.grid.level_scale) d = std::max(d, 1e-4);
    if (!model.all_finite()) throw DivergenceError(it, "non-finite parameter after the update");

    // Distortion controller: multiplicative steps on lambda_e toward the target.
    const bool steer = cfg.target_distortion > 0.0 || !cfg.distortion_schedule.empty();
    if ((steer || cfg.record_probes) && it >= warmup && (it + 1) % cfg.controller_every == 0) {
      PassOptions probe;
      probe.lambda_e = lambda;
      probe.lambda_m = cfg.lambda_m;
      probe.stencil = &stencil;
      const double d = rd_loss(model, targets, probe).distortion;
      const size_t j = result.probes.size();
      result.probes.push_back(d);
      const double target = j < cfg.distortion_schedule.size() ? cfg.distortion_schedule[j] : cfg.target_distortion;
      if (target > 0.0) {
        const double err = (target - d) / target;
        lambda *= std::exp(std::clamp(cfg.controller_gain * err, -0.3, 0.3));
      }
    }
  }
  result.final_lambda_e = lambda;
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation and ablation

RenderPair render_pair(const SceneModel& model, const TargetAnchorSet& targets, int size) {
  require(model.size() == targets.size(), "render: model and scene differ in anchor count");
  const ToyCamera cam = ToyCamera::fit(targets.bbox, size, size);
  const RowMat all = RowMat::Ones(static_cast<Eigen::Index>(targets.size()), targets.offset_count);
  RenderPair out;
  out.original = render_image(
      derive_scene_gaussians(targets.positions, targets.features, targets.scales, targets.offsets, all,
                             model.heads, cam),
      cam);
  const QuantizedScene q = quantize_scene(model);
  const int Ld = model.layout.latent_dim();
  out.decoded = render_image(
      derive_scene_gaussians(model.positions, q.features, q.values.middleCols(Ld, 3),
                             q.values.rightCols(3 * model.layout.offsets), q.mask, model.heads, cam),
      cam);
  out.psnr = psnr(out.original, out.decoded);
  return out;
}

double render_psnr(const SceneModel& model, const TargetAnchorSet& targets, int size) {
  return render_pair(model, targets, size).psnr;
}

std::string ablation_label(Variant v) {
  switch (v) {
    case Variant::Baseline:
      return "Baseline";
    case Variant::Predict:
      return "W/ predict";
    case Variant::PredictHyper:
      return "W/ predict & hyper";
  }
  return "unknown";
}

std::vector<AblationRow> ablate(const TargetAnchorSet& targets, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<AblationRow> rows;
  double reference = 0.0;
  std::vector<double> schedule;
  for (Variant v : {Variant::Baseline, Variant::Predict, Variant::PredictHyper}) {
    TrainConfig c = cfg;
    c.variant = v;
    c.record_probes = v == Variant::Baseline;
    c.target_distortion = v == Variant::Baseline ? 0.0 : reference;
    c.distortion_schedule = v == Variant::Baseline ? std::vector<double>{} : schedule;
    SceneModel model = init_scene_model(targets, v, cfg.seed);
    const TrainResult tr = train(model, targets, c);
    c.lambda_e = tr.final_lambda_e;

    AblationRow row;
    row.label = ablation_label(v);
    row.variant = v;
    row.lambda_e = tr.final_lambda_e;
    row.distortion = evaluate(model, targets, c).distortion;
    row.bits = total_rate(model);
    EncodeReport report;
    const auto stream = encode_scene(model, &report);
    row.coded_bytes = stream.size();
    row.latent_bytes = report.header.section_bytes[static_cast<int>(Section::LatentPayload)];
    row.psnr = render_psnr(model, targets);
    if (v == Variant::Baseline) {
      reference = row.distortion;
      schedule = tr.probes;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace az3d
