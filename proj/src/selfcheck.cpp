#include "az3d/selfcheck.hpp"

#include "az3d/bitstream.hpp"
#include "az3d/pipeline.hpp"
#include "az3d/range_coder.hpp"
#include "az3d/rng.hpp"
#include "az3d/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace az3d {

namespace {

CheckResult tolerance_result(std::string name, double error, double tolerance, std::string detail = {}) {
  CheckResult r;
  r.name = std::move(name);
  r.error = error;
  r.tolerance = tolerance;
  r.pass = std::isfinite(error) && error < tolerance;
  r.detail = std::move(detail);
  return r;
}

CheckResult exact_result(std::string name, bool pass, std::string detail = {}) {
  CheckResult r;
  r.name = std::move(name);
  r.pass = pass;
  r.error = pass ? 0.0 : 1.0;
  r.detail = std::move(detail);
  return r;
}

Vec random_vec(CounterRng& rng, Eigen::Index n, double scale = 1.0) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

RowMat random_mat(CounterRng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  RowMat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Views a list of spans as one flat parameter vector.
struct FlatParams {
  std::vector<std::span<double>> parts;

  Eigen::Index size() const {
    Eigen::Index n = 0;
    for (const auto& p : parts) n += static_cast<Eigen::Index>(p.size());
    return n;
  }
  Vec get() const {
    Vec v(size());
    Eigen::Index k = 0;
    for (const auto& p : parts) {
      for (double x : p) v[k++] = x;
    }
    return v;
  }
  void set(const Vec& v) {
    Eigen::Index k = 0;
    for (auto& p : parts) {
      for (double& x : p) x = v[k++];
    }
  }
};

FlatParams mlp_values(Mlp2& net) { return {{flat(net.W1), flat(net.b1), flat(net.W2), flat(net.b2)}}; }
FlatParams mlp_grads(Mlp2& net) { return {{flat(net.gW1), flat(net.gb1), flat(net.gW2), flat(net.gb2)}}; }

// ---------------------------------------------------------------------------
// Gradient checks, one per component.

CheckResult grad_mlp(uint64_t seed) {
  CounterRng rng(seed, 1);
  Mlp2 net = Mlp2::random(6, 9, 4, seed);
  const Vec x0 = random_vec(rng, 6);
  const Vec r = random_vec(rng, 4);

  const double e_in = grad_check(
      [&](const Vec& x, Vec* g) {
        Mlp2Cache cache;
        const double f = net.forward(x, &cache).dot(r);
        if (g) {
          net.zero_grad();
          *g = net.backward(cache, r);
        }
        return f;
      },
      x0, 1e-6);

  FlatParams values = mlp_values(net);
  FlatParams grads = mlp_grads(net);
  const double e_par = grad_check(
      [&](const Vec& p, Vec* g) {
        values.set(p);
        Mlp2Cache cache;
        const double f = net.forward(x0, &cache).dot(r);
        if (g) {
          net.zero_grad();
          net.backward(cache, r);
          *g = grads.get();
        }
        return f;
      },
      values.get(), 1e-6);

  // Batched path against the same function summed over rows.
  Mlp2 batch_net = Mlp2::random(6, 9, 4, seed + 1);
  FlatParams bvalues = mlp_values(batch_net);
  FlatParams bgrads = mlp_grads(batch_net);
  const RowMat X = random_mat(rng, 5, 6);
  const RowMat R = random_mat(rng, 5, 4);
  const double e_batch = grad_check(
      [&](const Vec& p, Vec* g) {
        bvalues.set(p);
        Mlp2BatchCache cache;
        const double f = batch_net.forward_batch(X, &cache).cwiseProduct(R).sum();
        if (g) {
          batch_net.zero_grad();
          batch_net.backward_batch(cache, R);
          *g = bgrads.get();
        }
        return f;
      },
      bvalues.get(), 1e-6);
  const double worst = std::max({e_in, e_par, e_batch});
  std::ostringstream d;
  d << "input " << e_in << ", params " << e_par << ", batch " << e_batch;
  return tolerance_result("gradient: mlp", worst, 1e-3, d.str());
}

CheckResult grad_grid(uint64_t seed) {
  CounterRng rng(seed, 2);
  HashGridConfig cfg;
  cfg.levels = 3;
  cfg.table_size_log2 = 5;
  cfg.feat_per_level = 2;
  cfg.base_resolution = 2;
  cfg.max_resolution = 8;
  HashGrid grid = HashGrid::random(cfg, seed, 0.5, 0.3);
  std::vector<Vec3> xs;
  std::vector<Vec> rs;
  for (int i = 0; i < 12; ++i) {
    xs.push_back(Vec3(rng.uniform(), rng.uniform(), rng.uniform()));
    rs.push_back(random_vec(rng, cfg.dim()));
  }
  auto objective = [&](GridView view, Vec* g, FlatParams& grads) {
    double f = 0.0;
    if (g) grid.zero_grad();
    for (size_t i = 0; i < xs.size(); ++i) {
      f += grid.query(xs[i], view).dot(rs[i]);
      if (g) grid.backward(xs[i], rs[i], view);
    }
    if (g) *g = grads.get();
    return f;
  };

  FlatParams tables, table_grads;
  for (int l = 0; l < cfg.levels; ++l) {
    tables.parts.push_back(grid.tables[l]);
    table_grads.parts.push_back(grid.table_grads[l]);
  }
  const double e_tables = grad_check(
      [&](const Vec& p, Vec* g) {
        tables.set(p);
        return objective(GridView::Raw, g, table_grads);
      },
      tables.get(), 1e-6);

  FlatParams scale{{grid.level_scale}}, scale_grads{{grid.level_scale_grads}};
  const double e_scale = grad_check(
      [&](const Vec& p, Vec* g) {
        scale.set(p);
        return objective(GridView::Binarized, g, scale_grads);
      },
      scale.get(), 1e-6);

  FlatParams logits{{grid.bernoulli_logit}}, logit_grads{{grid.bernoulli_logit_grads}};
  const double e_rate = grad_check(
      [&](const Vec& p, Vec* g) {
        logits.set(p);
        if (g) {
          grid.zero_grad();
          grid.rate_backward(1.0);
          *g = logit_grads.get();
        }
        return grid.rate_bits();
      },
      logits.get(), 1e-6);
  const double worst = std::max({e_tables, e_scale, e_rate});
  std::ostringstream d;
  d << "tables " << e_tables << ", level scale " << e_scale << ", sign rate " << e_rate;
  return tolerance_result("gradient: hash grid", worst, 1e-3, d.str());
}

CheckResult grad_density(uint64_t seed) {
  CounterRng rng(seed, 3);
  FactorizedDensity density = FactorizedDensity::symmetric(3);
  for (Eigen::Index i = 0; i < density.params.size(); ++i) density.params.data()[i] += 0.3 * rng.normal();
  for (int c = 0; c < 3; ++c) density.raw_step[c] = 0.2 * rng.normal();

  double worst = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (double zhat : {-2.0, -0.4, 0.0, 0.7, 1.9}) {
      // Parameters of the channel, then raw_step, then the value itself.
      const int P = kDensityParamCount;
      Vec x0(P + 2);
      x0.head(P) = density.params.row(c).transpose();
      x0[P] = density.raw_step[c];
      x0[P + 1] = zhat;
      const double e = grad_check(
          [&](const Vec& x, Vec* g) {
            density.params.row(c) = x.head(P).transpose();
            density.raw_step[c] = x[P];
            if (!g) return density.bits(c, x[P + 1]).bits;
            density.zero_grad();
            const FactorizedBits fb = density.bits_backward(c, x[P + 1], 1.0);
            g->resize(P + 2);
            g->head(P) = density.grad_params.row(c).transpose();
            (*g)[P] = density.grad_raw_step[c];
            (*g)[P + 1] = fb.d_value;
            return fb.bits;
          },
          x0, 1e-6);
      worst = std::max(worst, e);
      density.params.row(c) = x0.head(P).transpose();
      density.raw_step[c] = x0[P];
    }
  }

  // The batched evaluation must agree with the scalar one.
  std::vector<double> zs, dz(40);
  for (int i = 0; i < 40; ++i) zs.push_back(1.5 * rng.normal());
  FactorizedDensity a = density, b = density;
  a.zero_grad();
  b.zero_grad();
  double batch_err = 0.0;
  const double total = a.bits_batch(1, zs, dz, 0.5);
  double expect = 0.0;
  for (size_t i = 0; i < zs.size(); ++i) {
    const FactorizedBits fb = b.bits_backward(1, zs[i], 0.5);
    expect += fb.bits;
    batch_err = std::max(batch_err, relative_error(dz[i], fb.d_value));
  }
  batch_err = std::max(batch_err, relative_error(total, expect));
  for (Eigen::Index i = 0; i < a.grad_params.size(); ++i) {
    batch_err = std::max(batch_err, std::abs(a.grad_params.data()[i] - b.grad_params.data()[i]) /
                                        std::max(1e-9, std::abs(b.grad_params.data()[i])));
  }
  std::ostringstream d;
  d << "finite differences " << worst << ", batch vs scalar " << batch_err;
  return tolerance_result("gradient: factorized density", std::max(worst, batch_err), 1e-3, d.str());
}

CheckResult grad_gaussian_bits(uint64_t seed) {
  CounterRng rng(seed, 4);
  double worst = 0.0;
  std::vector<std::array<double, 4>> points;
  for (int i = 0; i < 40; ++i) {
    // Bins much wider than sigma leave p within rounding of 1, where the bit cost has no
    // resolvable slope; stay below step = 3.3 sigma.
    const double sigma = std::exp(rng.uniform(-2.0, 1.5));
    const double step = sigma * std::exp(rng.uniform(-3.0, 1.2));
    const double mu = rng.normal();
    const double value = mu + sigma * rng.uniform(-4.0, 4.0);
    points.push_back({value, mu, sigma, step});
  }
  for (const auto& pt : points) {
    const Vec x0 = Eigen::Map<const Vec>(pt.data(), 4);
    const double e = grad_check(
        [](const Vec& x, Vec* g) {
          const GaussianBits gb = gaussian_bits(x[0], x[1], x[2], x[3]);
          if (g) *g = (Vec(4) << gb.d_value, gb.d_mu, gb.d_sigma, gb.d_step).finished();
          return gb.bits;
        },
        x0, 1e-7);
    worst = std::max(worst, e);
  }

  // Vectorized form against the scalar one.
  Eigen::ArrayXd v(points.size()), mu(points.size()), sg(points.size()), q(points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    v[i] = points[i][0];
    mu[i] = points[i][1];
    sg[i] = points[i][2];
    q[i] = points[i][3];
  }
  GaussianBitsBatch batch;
  gaussian_bits_batch(v, mu, sg, q, true, batch);
  double batch_err = 0.0;
  for (size_t i = 0; i < points.size(); ++i) {
    const GaussianBits gb = gaussian_bits(v[i], mu[i], sg[i], q[i]);
    batch_err = std::max({batch_err, relative_error(batch.bits[i], gb.bits),
                          relative_error(batch.d_value[i], gb.d_value),
                          relative_error(batch.d_sigma[i], gb.d_sigma), relative_error(batch.d_step[i], gb.d_step)});
  }
  std::ostringstream d;
  d << "finite differences " << worst << ", batch vs scalar " << batch_err;
  return tolerance_result("gradient: gaussian bits", std::max(worst, batch_err), 1e-3, d.str());
}

CheckResult grad_mask(uint64_t seed) {
  CounterRng rng(seed, 5);
  const RowMat logits0 = random_mat(rng, 6, 4, 2.0);
  const RowMat d_mask = random_mat(rng, 6, 4);
  const double d_loss = 0.37;
  // Straight-through: the hard mask is replaced by sigmoid(m) in the backward pass, so
  // the gradient is that of sum(d_mask * sigmoid(m)) + d_loss * mean(sigmoid(m)).
  const double e = grad_check(
      [&](const Vec& x, Vec* g) {
        const RowMat m = Eigen::Map<const RowMat>(x.data(), 6, 4);
        const RowMat s = m.unaryExpr([](double v) { return sigmoid(v); });
        const double f = d_mask.cwiseProduct(s).sum() + d_loss * offset_mask_apply(m).loss;
        if (g) {
          RowMat dm = RowMat::Zero(6, 4);
          offset_mask_backward(m, d_mask, d_loss, dm);
          *g = Eigen::Map<const Vec>(dm.data(), dm.size());
        }
        return f;
      },
      Eigen::Map<const Vec>(logits0.data(), logits0.size()), 1e-6);
  return tolerance_result("gradient: mask straight-through", e, 1e-3);
}

CheckResult grad_estimator(uint64_t seed) {
  CounterRng rng(seed, 6);
  AnchorLayout layout;
  layout.residual_dim = 3;
  layout.hyper_dim = 2;
  layout.offsets = 2;
  layout.condition_dim = 4;
  PENet pe = PENet::random(layout, seed);
  const int C = layout.channel_count();
  const RowMat input = random_mat(rng, 5, layout.entropy_input_dim());
  const RowMat A = random_mat(rng, 5, C), B = random_mat(rng, 5, C), Q = random_mat(rng, 5, C);
  FlatParams values = mlp_values(pe.net);
  FlatParams grads = mlp_grads(pe.net);
  const double e = grad_check(
      [&](const Vec& p, Vec* g) {
        values.set(p);
        Mlp2BatchCache cache;
        const EntropyParamsBatch ep = pe.estimate_batch(input, &cache);
        const double f = ep.mu.cwiseProduct(A).sum() + ep.sigma.cwiseProduct(B).sum() + ep.step.cwiseProduct(Q).sum();
        if (g) {
          pe.net.zero_grad();
          pe.net.backward_batch(cache, pe.raw_gradient(ep, A, B, Q));
          *g = grads.get();
        }
        return f;
      },
      values.get(), 1e-6);
  return tolerance_result("gradient: entropy parameter head", e, 1e-3);
}

// Frozen-noise probe of the whole training loss over sampled coordinates of every
// continuous parameter. Grid tables and mask logits only have straight-through
// gradients and are covered by their own checks.
CheckResult grad_full_loss(uint64_t seed, Variant variant) {
  SynthSpec spec;
  spec.n = 30;
  spec.seed = seed;
  const TargetAnchorSet targets = synth_targets(spec);
  SceneModel model = init_scene_model(targets, variant, seed);
  TrainConfig cfg;
  cfg.variant = variant;
  cfg.iters = 15;
  cfg.seed = seed;
  train(model, targets, cfg);

  PassOptions opt;
  opt.mode = QuantMode::Train;
  opt.noise_seed = seed;
  opt.iteration = 7;
  opt.lambda_e = 0.004;
  opt.lambda_m = 5e-4;
  AnchorGrads grads = make_anchor_grads(model);
  std::vector<ParamBlock> blocks = trainable_blocks(model, grads, cfg);
  rd_loss(model, targets, opt, &grads);
  // The probe passes below run without gradients; keep a copy anyway.
  std::vector<std::vector<double>> analytic;
  for (const auto& b : blocks) analytic.emplace_back(b.grad.begin(), b.grad.end());

  CounterRng rng(seed, 7);
  double worst = 0.0;
  std::string worst_at;
  int probes = 0;
  for (size_t bi = 0; bi < blocks.size(); ++bi) {
    const ParamBlock& b = blocks[bi];
    if (b.name == "anchor.mask_logits" || b.name.rfind("grid.table", 0) == 0) continue;
    const size_t count = std::min<size_t>(b.value.size(), 12);
    for (size_t s = 0; s < count; ++s) {
      const size_t idx = b.value.size() <= 12 ? s : static_cast<size_t>(rng.uniform() * b.value.size());
      const double x = b.value[idx];
      const double h = 1e-6 * std::max(1.0, std::abs(x));
      b.value[idx] = x + h;
      const double fp = rd_loss(model, targets, opt).total;
      b.value[idx] = x - h;
      const double fm = rd_loss(model, targets, opt).total;
      b.value[idx] = x;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[bi][idx];
      // Below about 1e-6 the central difference of an O(1) loss is rounding noise.
      const double err = std::abs(a - numeric) / std::max(1e-6, std::abs(a) + std::abs(numeric));
      ++probes;
      if (err > worst) {
        worst = err;
        worst_at = b.name + "[" + std::to_string(idx) + "]";
      }
    }
  }
  std::ostringstream d;
  d << probes << " coordinates, worst at " << (worst_at.empty() ? "-" : worst_at);
  return tolerance_result("gradient: full loss, " + std::string(variant_name(variant)), worst, 1e-2, d.str());
}

}  // namespace

// ---------------------------------------------------------------------------

CheckResult check_symbol_roundtrip(uint64_t seed, int table_count, size_t symbol_count) {
  CounterRng rng(seed, 10);
  std::vector<CdfTable> tables;
  std::vector<double> sigmas;
  for (int t = 0; t < table_count; ++t) {
    const double sigma = std::exp(rng.uniform(std::log(0.05), std::log(200.0)));
    sigmas.push_back(sigma);
    tables.push_back(build_gaussian_table(sigma, 1.0));
  }
  std::vector<int32_t> symbols(symbol_count);
  std::vector<CdfTable> per_symbol;
  per_symbol.reserve(symbol_count);
  for (size_t i = 0; i < symbol_count; ++i) {
    const auto t = static_cast<size_t>(rng.uniform() * table_count);
    // Mostly in-distribution, occasionally the extremes of the table.
    double draw = sigmas[t] * rng.normal();
    if (rng.uniform() < 0.01) draw = rng.uniform() < 0.5 ? -1e9 : 1e9;
    symbols[i] = tables[t].clamp(static_cast<int32_t>(std::clamp(std::lround(draw), -(1L << 30), 1L << 30)));
    per_symbol.push_back(tables[t]);
  }
  const auto bytes = rc_encode(symbols, per_symbol);
  const auto back = rc_decode(bytes, per_symbol, symbols.size());
  size_t mismatches = 0;
  for (size_t i = 0; i < symbols.size(); ++i) mismatches += back[i] != symbols[i];
  std::ostringstream d;
  d << symbol_count << " symbols, " << table_count << " tables, " << bytes.size() << " bytes, " << mismatches
    << " mismatches";
  return exact_result("round trip: symbols", mismatches == 0, d.str());
}

CheckResult check_scene_roundtrip(uint64_t seed, size_t anchors, int iters) {
  SynthSpec spec;
  spec.n = anchors;
  spec.seed = seed;
  const TargetAnchorSet targets = synth_targets(spec);
  std::ostringstream d;
  bool all = true;
  for (Variant v : {Variant::Baseline, Variant::Predict, Variant::PredictHyper}) {
    SceneModel model = init_scene_model(targets, v, seed);
    TrainConfig cfg;
    cfg.variant = v;
    cfg.iters = iters;
    cfg.seed = seed;
    train(model, targets, cfg);
    const auto first = encode_scene(model);
    const auto second = encode_scene(decode_scene(first));
    const bool same = first == second;
    all = all && same;
    if (v != Variant::Baseline) d << "; ";
    d << variant_name(v) << " " << first.size() << (same ? " bytes identical" : " bytes DIFFER");
  }
  return exact_result("round trip: scene", all, d.str());
}

CheckResult check_corrupt_streams(uint64_t seed, int trials) {
  SynthSpec spec;
  spec.n = 200;
  spec.seed = seed;
  const TargetAnchorSet targets = synth_targets(spec);
  SceneModel model = init_scene_model(targets, Variant::PredictHyper, seed);
  TrainConfig cfg;
  cfg.iters = 10;
  cfg.seed = seed;
  train(model, targets, cfg);
  const auto stream = encode_scene(model);

  auto outcome = [](const std::vector<uint8_t>& bytes) -> std::string {
    try {
      return "ok " + std::to_string(encode_scene(decode_scene(bytes)).size());
    } catch (const CodecError& e) {
      return std::string("codec ") + e.what();
    } catch (const std::exception& e) {
      return std::string("UNEXPECTED ") + e.what();
    }
  };

  CounterRng rng(seed, 11);
  int rejected = 0, unexpected = 0, unstable = 0;
  std::string first_bad;
  for (int t = 0; t < trials; ++t) {
    std::vector<uint8_t> bytes = stream;
    if (t % 2 == 0) {
      bytes.resize(static_cast<size_t>(rng.uniform() * stream.size()));
    } else {
      const auto pos = static_cast<size_t>(rng.uniform() * stream.size());
      bytes[pos] ^= static_cast<uint8_t>(1u << static_cast<int>(rng.uniform() * 8));
    }
    const std::string a = outcome(bytes);
    const std::string b = outcome(bytes);
    if (a != b) ++unstable;
    if (a.rfind("UNEXPECTED", 0) == 0) {
      ++unexpected;
      if (first_bad.empty()) first_bad = a;
    }
    if (a.rfind("codec", 0) == 0) ++rejected;
  }
  std::ostringstream d;
  d << trials << " damaged streams, " << rejected << " rejected, " << unexpected << " unexpected errors, "
    << unstable << " unstable";
  if (!first_bad.empty()) d << " (" << first_bad << ")";
  return exact_result("corrupt streams", unexpected == 0 && unstable == 0, d.str());
}

CheckResult check_cdf_monotone(uint64_t seed) {
  CounterRng rng(seed, 12);
  int bad = 0, checked = 0;
  for (int trial = 0; trial < 8; ++trial) {
    FactorizedDensity density = FactorizedDensity::symmetric(4);
    for (Eigen::Index i = 0; i < density.params.size(); ++i) density.params.data()[i] += 0.6 * rng.normal();
    for (int c = 0; c < 4; ++c) density.raw_step[c] = 0.5 * rng.normal();
    for (const CdfTable& t : hyper_tables(density)) {
      ++checked;
      bad += !t.valid();
    }
    for (int c = 0; c < 4; ++c) {
      double prev = -1.0;
      for (double x = -30.0; x <= 30.0; x += 0.05) {
        const double v = density.cdf(c, x);
        if (v < prev) ++bad;
        prev = v;
      }
    }
  }
  for (double sigma : {kMinSigma, 1e-3, 0.1, 1.0, 17.0, 1e3, 1e6}) {
    for (double step : {1e-3, 0.05, 1.0, 4.0}) {
      ++checked;
      bad += !build_gaussian_table(sigma, step).valid();
    }
  }
  for (double p : {0.0, 1e-9, 0.01, 0.5, 0.99, 1.0 - 1e-9, 1.0}) {
    ++checked;
    bad += !build_bernoulli_table(p).valid();
  }
  std::ostringstream d;
  d << checked << " tables and 32 cumulative sweeps, " << bad << " violations";
  return exact_result("monotone cdf", bad == 0, d.str());
}

std::vector<CheckResult> gradient_suite(uint64_t seed) {
  std::vector<CheckResult> out{grad_mlp(seed),           grad_grid(seed), grad_density(seed),
                               grad_gaussian_bits(seed), grad_mask(seed), grad_estimator(seed)};
  for (Variant v : {Variant::Baseline, Variant::Predict, Variant::PredictHyper}) {
    out.push_back(grad_full_loss(seed, v));
  }
  return out;
}

std::vector<CheckResult> run_self_checks(uint64_t seed) {
  std::vector<CheckResult> out;
  out.push_back(check_symbol_roundtrip(seed));
  out.push_back(check_scene_roundtrip(seed));
  out.push_back(check_corrupt_streams(seed));
  out.push_back(check_cdf_monotone(seed));
  for (auto& r : gradient_suite(seed)) out.push_back(std::move(r));
  return out;
}

}  // namespace az3d
