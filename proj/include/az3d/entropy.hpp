#pragma once

#include "az3d/common.hpp"
#include "az3d/diffmath.hpp"
#include "az3d/rng.hpp"

#include <array>
#include <span>
#include <vector>

namespace az3d {

/// Probability floor applied before taking -log2; the coder clamps outliers to match.
inline constexpr double kProbabilityFloor = 1e-9;
/// Smallest standard deviation the Gaussian-conditional model accepts.
inline constexpr double kMinSigma = 1e-4;

struct QuantSpec {
  double step = 1.0;
  double center = 0.0;
};

enum class QuantMode { Train, Infer };

/// Train: v + step * noise with noise in (-1/2, 1/2]. Infer: center + step * round((v - center) / step),
/// rounding half away from zero. Both have identity straight-through gradient w.r.t. v.
double quantize(double v, const QuantSpec& spec, QuantMode mode, double noise = 0.0);
double quantize(double v, const QuantSpec& spec, QuantMode mode, CounterRng& rng);

/// Symbol index of v on the lattice centered at `center` with spacing `step`.
inline long quantize_symbol(double v, const QuantSpec& spec) {
  return std::lround((v - spec.center) / spec.step);
}

double normal_cdf(double x);
double normal_pdf(double x);

/// Probability mass of the quantization bin around `value` and the derivatives of its bit cost.
struct GaussianBits {
  double p = 1.0;
  double bits = 0.0;
  double d_value = 0.0;
  double d_mu = 0.0;
  double d_sigma = 0.0;
  double d_step = 0.0;
};

/// p = Phi((v - mu + q/2)/sigma) - Phi((v - mu - q/2)/sigma); bits = -log2(max(p, 1e-9)).
GaussianBits gaussian_bits(double value, double mu, double sigma, double step);

/// gaussian_bits over equal-length arrays. d_mu is -d_value and is not stored; the
/// derivative arrays are left empty unless `grads` is set.
struct GaussianBitsBatch {
  Eigen::ArrayXd bits, d_value, d_sigma, d_step;
};
void gaussian_bits_batch(const Eigen::Ref<const Eigen::ArrayXd>& value, const Eigen::Ref<const Eigen::ArrayXd>& mu,
                         const Eigen::Ref<const Eigen::ArrayXd>& sigma, const Eigen::Ref<const Eigen::ArrayXd>& step,
                         bool grads, GaussianBitsBatch& out);

// ---------------------------------------------------------------------------
// Learnable factorized density for the hyperprior. Each channel is a monotone
// 1 -> 3 -> 3 -> 1 composition squashed by a sigmoid.

inline constexpr int kDensityParamCount = 29;

struct FactorizedBits {
  double p = 1.0;
  double bits = 0.0;
  double d_value = 0.0;
};

class FactorizedDensity {
 public:
  FactorizedDensity() = default;
  /// Unit-slope stages (softplus(H) = 1), zero biases and gates, unit steps: an odd,
  /// symmetric density with c(0) = 0.5.
  static FactorizedDensity symmetric(int channels);

  int channels() const { return static_cast<int>(params.rows()); }
  double step(int channel) const { return std::exp(raw_step[channel]); }

  /// Pre-sigmoid value of the cumulative at x.
  double logit(int channel, double x) const;
  double cdf(int channel, double x) const { return sigmoid(logit(channel, x)); }

  /// Bin mass c(z + s/2) - c(z - s/2) with s the channel step.
  FactorizedBits bits(int channel, double zhat) const;
  /// Same as bits(), plus d(bits)/d(zhat) in d_value; accumulates
  /// upstream * d(bits)/d(params, raw_step) into the gradients.
  FactorizedBits bits_backward(int channel, double zhat, double upstream);

  /// Sum of bits over many values of one channel. With a non-empty `d_value`, also writes
  /// d(bits)/d(zhat) per value and accumulates upstream-scaled parameter gradients.
  double bits_batch(int channel, std::span<const double> zhat, std::span<double> d_value, double upstream);

  void zero_grad();
  void append_blocks(std::vector<ParamBlock>& out);
  bool all_finite() const;
  void round_to_float();

  RowMat params;  // channels x 29
  Vec raw_step;   // log of the per-channel quantization step
  RowMat grad_params;
  Vec grad_raw_step;

 private:
  struct Trace;
  struct Derived;
  Derived derive(int channel) const;
  void trace(int channel, const Derived& d, double x, Trace& t) const;
  /// Accumulates upstream * d(logit)/d(params) and returns d(logit)/dx.
  double backprop(int channel, const Derived& d, const Trace& t, double upstream);
  FactorizedBits bits_with(int channel, const Derived& d, double zhat) const;
  FactorizedBits backward_with(int channel, const Derived& d, double zhat, double upstream);
};

}  // namespace az3d
