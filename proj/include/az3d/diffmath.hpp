#pragma once

#include "az3d/bytes.hpp"
#include "az3d/common.hpp"

#include <array>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace az3d {

class Mlp2;

/// Activations kept by a single-sample forward pass.
struct Mlp2Cache {
  const Mlp2* owner = nullptr;
  Vec x;
  Vec pre;  // W1·x + b1
};

/// Activations kept by a batched forward pass (one sample per row).
struct Mlp2BatchCache {
  const Mlp2* owner = nullptr;
  RowMat x;
  RowMat pre;
};

/// Two-layer fully connected network y = W2·ReLU(W1·x + b1) + b2 with explicit
/// reverse-mode gradients. Gradients accumulate until zero_grad().
class Mlp2 {
 public:
  Mlp2() = default;
  Mlp2(int in_dim, int hidden_dim, int out_dim);

  /// Uniform init in ±sqrt(1/fan_in), rounded to float so that values survive
  /// serialization unchanged.
  static Mlp2 random(int in_dim, int hidden_dim, int out_dim, uint64_t seed);

  int in_dim() const { return static_cast<int>(W1.cols()); }
  int hidden_dim() const { return static_cast<int>(W1.rows()); }
  int out_dim() const { return static_cast<int>(W2.rows()); }

  Vec forward(const Vec& x, Mlp2Cache* cache = nullptr) const;
  /// Returns dL/dx and accumulates parameter gradients.
  Vec backward(const Mlp2Cache& cache, const Vec& dy);

  RowMat forward_batch(const RowMat& x, Mlp2BatchCache* cache = nullptr) const;
  RowMat backward_batch(const Mlp2BatchCache& cache, const RowMat& dy);

  void zero_grad();
  void set_zero();
  bool all_finite() const;
  size_t parameter_count() const;

  /// Rounds every parameter through float.
  void round_to_float();

  RowMat W1, W2;
  Vec b1, b2;
  RowMat gW1, gW2;
  Vec gb1, gb2;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  int64_t t = 0;
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState make(size_t n, const AdamConfig& cfg);
};

/// One bias-corrected Adam update. Gradients are left untouched.
/// Throws NumericError naming `block` if any gradient is non-finite.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::string_view block);

/// A named trainable tensor viewed as flat value/gradient spans.
struct ParamBlock {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
  double lr_scale = 1.0;
};

inline std::span<double> flat(RowMat& m) { return {m.data(), static_cast<size_t>(m.size())}; }
inline std::span<double> flat(Vec& v) { return {v.data(), static_cast<size_t>(v.size())}; }
inline std::span<const double> flat(const RowMat& m) {
  return {m.data(), static_cast<size_t>(m.size())};
}
inline std::span<const double> flat(const Vec& v) {
  return {v.data(), static_cast<size_t>(v.size())};
}

/// Appends the four parameter blocks of `net` with names prefixed by `prefix`.
void append_blocks(Mlp2& net, const std::string& prefix, std::vector<ParamBlock>& out);

// ---------------------------------------------------------------------------
// Finite differences

/// Scalar function returning its value and, when `grad` is non-null, its gradient.
using DifferentiableFn = std::function<double(const Vec& x, Vec* grad)>;

/// Max over coordinates of |analytic - central| / max(1e-12, |analytic| + |central|).
double grad_check(const DifferentiableFn& f, const Vec& x, double eps);

/// Relative error used by every gradient comparison in the project.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-12, std::abs(analytic) + std::abs(numeric));
}

// ---------------------------------------------------------------------------
// Tensor serialization: 3 x u32 shape header, then little-endian f32, row-major.

using TensorShape = std::array<uint32_t, 3>;

void write_tensor(ByteWriter& out, const TensorShape& shape, std::span<const double> values);
/// Reads a tensor and checks it has the expected shape.
std::vector<double> read_tensor(ByteReader& in, const TensorShape& expected, std::string_view what);

void write_mlp(ByteWriter& out, const Mlp2& net);
/// Reads a network whose dimensions must match (in, hidden, out).
Mlp2 read_mlp(ByteReader& in, int in_dim, int hidden_dim, int out_dim, std::string_view what);
size_t mlp_serialized_size(const Mlp2& net);

}  // namespace az3d
