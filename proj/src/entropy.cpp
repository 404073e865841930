#include "az3d/entropy.hpp"

#include "az3d/array_math.hpp"

#include <cmath>
#include <numbers>

namespace az3d {

double quantize(double v, const QuantSpec& spec, QuantMode mode, double noise) {
  require(spec.step > 0.0, "quantize: step must be positive");
  if (mode == QuantMode::Train) return v + spec.step * noise;
  return spec.center + spec.step * std::round((v - spec.center) / spec.step);
}

double quantize(double v, const QuantSpec& spec, QuantMode mode, CounterRng& rng) {
  // (-1/2, 1/2]
  const double u = 0.5 - rng.uniform();
  return quantize(v, spec, mode, u);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

GaussianBits gaussian_bits(double value, double mu, double sigma, double step) {
  GaussianBits out;
  const double d = value - mu;
  const double ad = std::abs(d);
  const double s = d >= 0.0 ? 1.0 : -1.0;
  // Evaluate both edges in the lower tail to avoid cancellation.
  const double a = (0.5 * step - ad) / sigma;
  const double b = (-0.5 * step - ad) / sigma;
  const double pa = normal_pdf(a);
  const double pb = normal_pdf(b);
  out.p = normal_cdf(a) - normal_cdf(b);
  if (out.p > kProbabilityFloor) {
    out.bits = -std::log2(out.p);
    const double dbits_dp = -1.0 / (out.p * std::numbers::ln2);
    const double dp_dad = (pb - pa) / sigma;
    out.d_value = dbits_dp * dp_dad * s;
    out.d_mu = -out.d_value;
    out.d_sigma = dbits_dp * (-(a * pa - b * pb) / sigma);
    out.d_step = dbits_dp * (pa + pb) / (2.0 * sigma);
  } else {
    out.bits = -std::log2(kProbabilityFloor);
  }
  return out;
}

namespace {

// Fixed-size block so the whole chain stays in registers.
constexpr int kLanes = 16;
using Lane = Eigen::Array<double, kLanes, 1>;

struct LaneBits {
  Lane bits, d_value, d_sigma, d_step;
};

void gaussian_lanes(const Lane& value, const Lane& mu, const Lane& sigma, const Lane& step, bool grads,
                    LaneBits& out) {
  constexpr double inv_sqrt2 = std::numbers::sqrt2 / 2.0;
  constexpr double inv_sqrt2pi = 0.3989422804014327;
  const Lane d = value - mu;
  const Lane ad = d.abs();
  const Lane inv_sigma = sigma.inverse();
  const Lane a = (0.5 * step - ad) * inv_sigma;
  const Lane b = (-0.5 * step - ad) * inv_sigma;
  const Lane p = 0.5 * (erfc_array(Lane(-a * inv_sqrt2)) - erfc_array(Lane(-b * inv_sqrt2)));
  const auto live = p > kProbabilityFloor;
  out.bits = live.select(-p.max(kProbabilityFloor).log() / std::numbers::ln2, -std::log2(kProbabilityFloor));
  if (!grads) return;
  const Lane pa = (-0.5 * a.square()).exp() * inv_sqrt2pi;
  const Lane pb = (-0.5 * b.square()).exp() * inv_sqrt2pi;
  const Lane dbits_dp = live.select(-1.0 / (p * std::numbers::ln2), 0.0);
  const Lane sign = (d >= 0.0).select(Lane::Ones(), -1.0);
  out.d_value = dbits_dp * (pb - pa) * inv_sigma * sign;
  out.d_sigma = dbits_dp * (-(a * pa - b * pb) * inv_sigma);
  out.d_step = dbits_dp * (pa + pb) * (0.5 * inv_sigma);
}

}  // namespace

void gaussian_bits_batch(const Eigen::Ref<const Eigen::ArrayXd>& value, const Eigen::Ref<const Eigen::ArrayXd>& mu,
                         const Eigen::Ref<const Eigen::ArrayXd>& sigma, const Eigen::Ref<const Eigen::ArrayXd>& step,
                         bool grads, GaussianBitsBatch& out) {
  const Eigen::Index n = value.size();
  require(mu.size() == n && sigma.size() == n && step.size() == n,
          "gaussian_bits_batch: arrays differ in length");
  out.bits.resize(n);
  out.d_value.resize(grads ? n : 0);
  out.d_sigma.resize(grads ? n : 0);
  out.d_step.resize(grads ? n : 0);
  LaneBits lb;
  for (Eigen::Index i = 0; i < n; i += kLanes) {
    const Eigen::Index len = std::min<Eigen::Index>(kLanes, n - i);
    if (len == kLanes) {
      gaussian_lanes(value.segment<kLanes>(i), mu.segment<kLanes>(i), sigma.segment<kLanes>(i),
                     step.segment<kLanes>(i), grads, lb);
    } else {
      // Ragged tail: pad with a harmless unit bin.
      Lane v = Lane::Zero(), m = Lane::Zero(), sg = Lane::Ones(), q = Lane::Ones();
      v.head(len) = value.segment(i, len);
      m.head(len) = mu.segment(i, len);
      sg.head(len) = sigma.segment(i, len);
      q.head(len) = step.segment(i, len);
      gaussian_lanes(v, m, sg, q, grads, lb);
    }
    out.bits.segment(i, len) = lb.bits.head(len);
    if (grads) {
      out.d_value.segment(i, len) = lb.d_value.head(len);
      out.d_sigma.segment(i, len) = lb.d_sigma.head(len);
      out.d_step.segment(i, len) = lb.d_step.head(len);
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

// Offsets into the 29-entry parameter row.
constexpr int kH0 = 0, kB0 = 3, kA0 = 6;
constexpr int kH1 = 9, kB1 = 18, kA1 = 21;
constexpr int kH2 = 24, kB2 = 27, kA2 = 28;

struct Stage {
  int in, out, h, b, a;
};
constexpr std::array<Stage, 3> kStages{{{1, 3, kH0, kB0, kA0}, {3, 3, kH1, kB1, kA1}, {3, 1, kH2, kB2, kA2}}};

}  // namespace

struct FactorizedDensity::Trace {
  // Inputs to each stage, the affine pre-activations and their tanh.
  std::array<std::array<double, 3>, 3> input{};
  std::array<std::array<double, 3>, 3> pre{};
  std::array<std::array<double, 3>, 3> tanh_pre{};
  double output = 0.0;
};

// Reparameterized values of one channel: softplus(H), sigmoid(H) and tanh(a).
struct FactorizedDensity::Derived {
  std::array<double, kDensityParamCount> softplus_h{};
  std::array<double, kDensityParamCount> sigmoid_h{};
  std::array<double, kDensityParamCount> tanh_a{};
};

FactorizedDensity FactorizedDensity::symmetric(int channels) {
  FactorizedDensity d;
  d.params = RowMat::Zero(channels, kDensityParamCount);
  d.raw_step = Vec::Zero(channels);
  const double unit = std::log(std::numbers::e - 1.0);  // softplus(unit) == 1
  for (int c = 0; c < channels; ++c) {
    for (const Stage& st : kStages) {
      for (int i = 0; i < st.in * st.out; ++i) d.params(c, st.h + i) = unit;
    }
  }
  d.grad_params = RowMat::Zero(channels, kDensityParamCount);
  d.grad_raw_step = Vec::Zero(channels);
  return d;
}

FactorizedDensity::Derived FactorizedDensity::derive(int channel) const {
  Derived d;
  const double* p = params.row(channel).data();
  for (const Stage& st : kStages) {
    for (int i = 0; i < st.in * st.out; ++i) {
      d.softplus_h[st.h + i] = softplus(p[st.h + i]);
      d.sigmoid_h[st.h + i] = sigmoid(p[st.h + i]);
    }
    for (int i = 0; i < st.out; ++i) d.tanh_a[st.a + i] = std::tanh(p[st.a + i]);
  }
  return d;
}

void FactorizedDensity::trace(int channel, const Derived& d, double x, Trace& t) const {
  const double* p = params.row(channel).data();
  std::array<double, 3> u{x, 0.0, 0.0};
  for (size_t k = 0; k < kStages.size(); ++k) {
    const Stage& st = kStages[k];
    t.input[k] = u;
    std::array<double, 3> next{};
    for (int i = 0; i < st.out; ++i) {
      double acc = p[st.b + i];
      for (int j = 0; j < st.in; ++j) acc += d.softplus_h[st.h + i * st.in + j] * u[j];
      t.pre[k][i] = acc;
      t.tanh_pre[k][i] = std::tanh(acc);
      next[i] = acc + d.tanh_a[st.a + i] * t.tanh_pre[k][i];
    }
    u = next;
  }
  t.output = u[0];
}

double FactorizedDensity::backprop(int channel, const Derived& d, const Trace& t, double upstream) {
  double* g = grad_params.row(channel).data();
  // Propagates d(logit) with unit seed; parameter gradients are scaled by upstream.
  std::array<double, 3> dout{1.0, 0.0, 0.0};
  for (int k = static_cast<int>(kStages.size()) - 1; k >= 0; --k) {
    const Stage& st = kStages[k];
    std::array<double, 3> din{};
    for (int i = 0; i < st.out; ++i) {
      const double ta = d.tanh_a[st.a + i];
      const double tp = t.tanh_pre[k][i];
      const double dpre = dout[i] * (1.0 + ta * (1.0 - tp * tp));
      if (upstream != 0.0) {
        g[st.a + i] += upstream * dout[i] * tp * (1.0 - ta * ta);
        g[st.b + i] += upstream * dpre;
      }
      for (int j = 0; j < st.in; ++j) {
        const int h = st.h + i * st.in + j;
        if (upstream != 0.0) g[h] += upstream * dpre * t.input[k][j] * d.sigmoid_h[h];
        din[j] += dpre * d.softplus_h[h];
      }
    }
    dout = din;
  }
  return dout[0];
}

double FactorizedDensity::logit(int channel, double x) const {
  Trace t;
  trace(channel, derive(channel), x, t);
  return t.output;
}

namespace {

// |sigmoid(hi) - sigmoid(lo)| evaluated on the side where both are small.
double bin_mass(double lo, double hi) {
  if (lo + hi > 0.0) return sigmoid(-lo) - sigmoid(-hi);
  return sigmoid(hi) - sigmoid(lo);
}

}  // namespace

FactorizedBits FactorizedDensity::bits_with(int channel, const Derived& d, double zhat) const {
  const double s = step(channel);
  Trace lo, hi;
  trace(channel, d, zhat - 0.5 * s, lo);
  trace(channel, d, zhat + 0.5 * s, hi);
  FactorizedBits out;
  out.p = bin_mass(lo.output, hi.output);
  out.bits = -std::log2(std::max(out.p, kProbabilityFloor));
  return out;
}

FactorizedBits FactorizedDensity::backward_with(int channel, const Derived& d, double zhat, double upstream) {
  const double s = step(channel);
  Trace lo_t, hi_t;
  trace(channel, d, zhat - 0.5 * s, lo_t);
  trace(channel, d, zhat + 0.5 * s, hi_t);
  FactorizedBits out;
  out.p = bin_mass(lo_t.output, hi_t.output);
  if (out.p <= kProbabilityFloor) {
    out.bits = -std::log2(kProbabilityFloor);
    return out;
  }
  out.bits = -std::log2(out.p);
  const double dbits_dp = -1.0 / (out.p * std::numbers::ln2);
  const double sh = sigmoid(hi_t.output), sl = sigmoid(lo_t.output);
  const double g_hi = dbits_dp * sh * (1.0 - sh);
  const double g_lo = -dbits_dp * sl * (1.0 - sl);
  const double dx_hi = g_hi * backprop(channel, d, hi_t, upstream * g_hi);
  const double dx_lo = g_lo * backprop(channel, d, lo_t, upstream * g_lo);
  // d(bits)/d(raw_step) = s * (0.5 * d/d(hi edge) - 0.5 * d/d(lo edge))
  grad_raw_step[channel] += upstream * s * 0.5 * (dx_hi - dx_lo);
  out.d_value = dx_hi + dx_lo;
  return out;
}

FactorizedBits FactorizedDensity::bits(int channel, double zhat) const {
  return bits_with(channel, derive(channel), zhat);
}

FactorizedBits FactorizedDensity::bits_backward(int channel, double zhat, double upstream) {
  return backward_with(channel, derive(channel), zhat, upstream);
}

namespace {

using Arr = Eigen::ArrayXd;

// One bin edge for a whole batch: stage inputs and tanh of the pre-activations.
struct EdgeArrays {
  std::array<std::array<Arr, 3>, 3> input;
  std::array<std::array<Arr, 3>, 3> tanh_pre;
  Arr output;
};

}  // namespace

double FactorizedDensity::bits_batch(int channel, std::span<const double> zhat, std::span<double> d_value,
                                     double upstream) {
  require(d_value.empty() || d_value.size() == zhat.size(), "bits_batch: gradient span has the wrong size");
  if (zhat.empty()) return 0.0;
  const Derived d = derive(channel);
  const double* p = params.row(channel).data();
  const double s = step(channel);
  const Eigen::Map<const Arr> z(zhat.data(), static_cast<Eigen::Index>(zhat.size()));

  auto run = [&](const Arr& x, EdgeArrays& t) {
    std::array<Arr, 3> u{x, Arr(), Arr()};
    for (size_t k = 0; k < kStages.size(); ++k) {
      const Stage& st = kStages[k];
      t.input[k] = u;
      std::array<Arr, 3> next;
      for (int i = 0; i < st.out; ++i) {
        Arr acc = Arr::Constant(x.size(), p[st.b + i]);
        for (int j = 0; j < st.in; ++j) acc += d.softplus_h[st.h + i * st.in + j] * u[j];
        t.tanh_pre[k][i] = tanh_array(acc);
        next[i] = acc + d.tanh_a[st.a + i] * t.tanh_pre[k][i];
      }
      u = std::move(next);
    }
    t.output = std::move(u[0]);
  };
  EdgeArrays lo, hi;
  run(z - 0.5 * s, lo);
  run(z + 0.5 * s, hi);

  const Arr mass = (lo.output + hi.output > 0.0)
                       .select(sigmoid_array(-lo.output) - sigmoid_array(-hi.output),
                               sigmoid_array(hi.output) - sigmoid_array(lo.output));
  const auto live = mass > kProbabilityFloor;
  const Arr bits = live.select(-mass.max(kProbabilityFloor).log() / std::numbers::ln2,
                               -std::log2(kProbabilityFloor));
  if (d_value.empty()) return bits.sum();

  double* g = grad_params.row(channel).data();
  // Same chain as backprop(), with a per-value seed in place of the unit seed.
  auto back = [&](const EdgeArrays& t, Arr seed) {
    std::array<Arr, 3> dout{std::move(seed), Arr(), Arr()};
    for (int k = static_cast<int>(kStages.size()) - 1; k >= 0; --k) {
      const Stage& st = kStages[k];
      std::array<Arr, 3> din;
      for (int j = 0; j < st.in; ++j) din[j] = Arr::Zero(dout[0].size());
      for (int i = 0; i < st.out; ++i) {
        const double ta = d.tanh_a[st.a + i];
        const Arr& tp = t.tanh_pre[k][i];
        const Arr dpre = dout[i] * (1.0 + ta * (1.0 - tp.square()));
        g[st.a + i] += upstream * (dout[i] * tp).sum() * (1.0 - ta * ta);
        g[st.b + i] += upstream * dpre.sum();
        for (int j = 0; j < st.in; ++j) {
          const int h = st.h + i * st.in + j;
          g[h] += upstream * (dpre * t.input[k][j]).sum() * d.sigmoid_h[h];
          din[j] += dpre * d.softplus_h[h];
        }
      }
      dout = std::move(din);
    }
    return std::move(dout[0]);
  };
  const Arr dbits_dp = live.select(-1.0 / (mass * std::numbers::ln2), 0.0);
  const Arr sh = sigmoid_array(hi.output), sl = sigmoid_array(lo.output);
  const Arr dx_hi = back(hi, dbits_dp * sh * (1.0 - sh));
  const Arr dx_lo = back(lo, -dbits_dp * sl * (1.0 - sl));
  grad_raw_step[channel] += upstream * s * 0.5 * (dx_hi - dx_lo).sum();
  Eigen::Map<Arr>(d_value.data(), static_cast<Eigen::Index>(d_value.size())) = dx_hi + dx_lo;
  return bits.sum();
}

void FactorizedDensity::zero_grad() {
  grad_params.setZero();
  grad_raw_step.setZero();
}

void FactorizedDensity::append_blocks(std::vector<ParamBlock>& out) {
  out.push_back({"zprior.density", flat(params), flat(grad_params)});
  out.push_back({"zprior.raw_step", flat(raw_step), flat(grad_raw_step)});
}

bool FactorizedDensity::all_finite() const { return params.allFinite() && raw_step.allFinite(); }

void FactorizedDensity::round_to_float() {
  auto r = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  params = params.unaryExpr(r);
  raw_step = raw_step.unaryExpr(r);
}

}  // namespace az3d
