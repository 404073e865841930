#include "az3d/diffmath.hpp"

#include "az3d/rng.hpp"

#include <cmath>
#include <sstream>

namespace az3d {

Mlp2::Mlp2(int in_dim, int hidden_dim, int out_dim)
    : W1(RowMat::Zero(hidden_dim, in_dim)),
      W2(RowMat::Zero(out_dim, hidden_dim)),
      b1(Vec::Zero(hidden_dim)),
      b2(Vec::Zero(out_dim)),
      gW1(RowMat::Zero(hidden_dim, in_dim)),
      gW2(RowMat::Zero(out_dim, hidden_dim)),
      gb1(Vec::Zero(hidden_dim)),
      gb2(Vec::Zero(out_dim)) {
  require(in_dim > 0 && hidden_dim > 0 && out_dim > 0, "Mlp2: dimensions must be positive");
}

Mlp2 Mlp2::random(int in_dim, int hidden_dim, int out_dim, uint64_t seed) {
  Mlp2 net(in_dim, hidden_dim, out_dim);
  CounterRng rng(seed, 0x6d6c7032);  // "mlp2"
  auto fill = [&rng](double* p, Eigen::Index n, int fan_in) {
    const double bound = std::sqrt(1.0 / fan_in);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = static_cast<float>(rng.uniform(-bound, bound));
    }
  };
  fill(net.W1.data(), net.W1.size(), in_dim);
  fill(net.b1.data(), net.b1.size(), in_dim);
  fill(net.W2.data(), net.W2.size(), hidden_dim);
  fill(net.b2.data(), net.b2.size(), hidden_dim);
  return net;
}

Vec Mlp2::forward(const Vec& x, Mlp2Cache* cache) const {
  if (x.size() != in_dim()) {
    std::ostringstream msg;
    msg << "Mlp2::forward: input has " << x.size() << " entries, expected " << in_dim();
    throw ContractViolation(msg.str());
  }
  Vec pre = W1 * x + b1;
  Vec y = W2 * pre.cwiseMax(0.0) + b2;
  if (cache) {
    cache->owner = this;
    cache->x = x;
    cache->pre = std::move(pre);
  }
  return y;
}

Vec Mlp2::backward(const Mlp2Cache& cache, const Vec& dy) {
  require(cache.owner == this && cache.x.size() == in_dim() && cache.pre.size() == hidden_dim(),
          "Mlp2::backward: cache does not belong to this network");
  require(dy.size() == out_dim(), "Mlp2::backward: dy has wrong dimension");
  const Vec act = cache.pre.cwiseMax(0.0);
  gW2.noalias() += dy * act.transpose();
  gb2 += dy;
  // ReLU subgradient at 0 is 0.
  Vec dpre = (W2.transpose() * dy).cwiseProduct((cache.pre.array() > 0.0).cast<double>().matrix());
  gW1.noalias() += dpre * cache.x.transpose();
  gb1 += dpre;
  return W1.transpose() * dpre;
}

RowMat Mlp2::forward_batch(const RowMat& x, Mlp2BatchCache* cache) const {
  if (x.cols() != in_dim()) {
    std::ostringstream msg;
    msg << "Mlp2::forward_batch: input has " << x.cols() << " columns, expected " << in_dim();
    throw ContractViolation(msg.str());
  }
  RowMat pre = x * W1.transpose();
  pre.rowwise() += b1.transpose();
  RowMat y = pre.cwiseMax(0.0) * W2.transpose();
  y.rowwise() += b2.transpose();
  if (cache) {
    cache->owner = this;
    cache->x = x;
    cache->pre = std::move(pre);
  }
  return y;
}

RowMat Mlp2::backward_batch(const Mlp2BatchCache& cache, const RowMat& dy) {
  require(cache.owner == this && cache.x.cols() == in_dim() && cache.pre.cols() == hidden_dim(),
          "Mlp2::backward_batch: cache does not belong to this network");
  require(dy.cols() == out_dim() && dy.rows() == cache.x.rows(),
          "Mlp2::backward_batch: dy has wrong shape");
  const RowMat act = cache.pre.cwiseMax(0.0);
  gW2.noalias() += dy.transpose() * act;
  gb2 += dy.colwise().sum().transpose();
  RowMat dpre = dy * W2;
  dpre.array() *= (cache.pre.array() > 0.0).cast<double>();
  gW1.noalias() += dpre.transpose() * cache.x;
  gb1 += dpre.colwise().sum().transpose();
  return dpre * W1;
}

void Mlp2::zero_grad() {
  gW1.setZero();
  gW2.setZero();
  gb1.setZero();
  gb2.setZero();
}

void Mlp2::set_zero() {
  W1.setZero();
  W2.setZero();
  b1.setZero();
  b2.setZero();
}

bool Mlp2::all_finite() const {
  return W1.allFinite() && W2.allFinite() && b1.allFinite() && b2.allFinite();
}

size_t Mlp2::parameter_count() const {
  return static_cast<size_t>(W1.size() + W2.size() + b1.size() + b2.size());
}

void Mlp2::round_to_float() {
  auto r = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  W1 = W1.unaryExpr(r);
  W2 = W2.unaryExpr(r);
  b1 = b1.unaryExpr(r);
  b2 = b2.unaryExpr(r);
}

AdamState AdamState::make(size_t n, const AdamConfig& cfg) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = cfg.lr;
  s.beta1 = cfg.beta1;
  s.beta2 = cfg.beta2;
  s.eps = cfg.eps;
  return s;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               std::string_view block) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ContractViolation("adam_step: shape mismatch in block " + std::string(block));
  }
  require(state.t >= 0, "adam_step: negative step count");
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("non-finite gradient in parameter block '" + std::string(block) + "'");
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

void append_blocks(Mlp2& net, const std::string& prefix, std::vector<ParamBlock>& out) {
  out.push_back({prefix + ".W1", flat(net.W1), flat(net.gW1)});
  out.push_back({prefix + ".b1", flat(net.b1), flat(net.gb1)});
  out.push_back({prefix + ".W2", flat(net.W2), flat(net.gW2)});
  out.push_back({prefix + ".b2", flat(net.b2), flat(net.gb2)});
}

double grad_check(const DifferentiableFn& f, const Vec& x, double eps) {
  Vec analytic = Vec::Zero(x.size());
  const double f0 = f(x, &analytic);
  if (!std::isfinite(f0) || !analytic.allFinite()) {
    throw NumericError("grad_check: non-finite evaluation at the base point");
  }
  double worst = 0.0;
  Vec probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double fp = f(probe, nullptr);
    probe[i] = x[i] - eps;
    const double fm = f(probe, nullptr);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("grad_check: non-finite evaluation at coordinate " + std::to_string(i));
    }
    worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2.0 * eps)));
  }
  return worst;
}

void write_tensor(ByteWriter& out, const TensorShape& shape, std::span<const double> values) {
  require(static_cast<size_t>(shape[0]) * shape[1] * shape[2] == values.size(),
          "write_tensor: shape does not match value count");
  for (uint32_t d : shape) out.u32(d);
  for (double v : values) out.f32(static_cast<float>(v));
}

std::vector<double> read_tensor(ByteReader& in, const TensorShape& expected, std::string_view what) {
  TensorShape shape{in.u32(), in.u32(), in.u32()};
  if (shape != expected) {
    std::ostringstream msg;
    msg << what << ": tensor shape " << shape[0] << "x" << shape[1] << "x" << shape[2]
        << " does not match expected " << expected[0] << "x" << expected[1] << "x" << expected[2];
    throw ContractViolation(msg.str());
  }
  const size_t n = static_cast<size_t>(shape[0]) * shape[1] * shape[2];
  std::vector<double> values(n);
  for (size_t i = 0; i < n; ++i) values[i] = in.f32();
  return values;
}

namespace {

TensorShape matrix_shape(const RowMat& m) {
  return {static_cast<uint32_t>(m.rows()), static_cast<uint32_t>(m.cols()), 1};
}
TensorShape vector_shape(const Vec& v) { return {static_cast<uint32_t>(v.size()), 1, 1}; }

}  // namespace

void write_mlp(ByteWriter& out, const Mlp2& net) {
  write_tensor(out, matrix_shape(net.W1), flat(net.W1));
  write_tensor(out, vector_shape(net.b1), flat(net.b1));
  write_tensor(out, matrix_shape(net.W2), flat(net.W2));
  write_tensor(out, vector_shape(net.b2), flat(net.b2));
}

Mlp2 read_mlp(ByteReader& in, int in_dim, int hidden_dim, int out_dim, std::string_view what) {
  Mlp2 net(in_dim, hidden_dim, out_dim);
  auto load = [&](auto& dst, const TensorShape& shape) {
    const auto v = read_tensor(in, shape, what);
    std::copy(v.begin(), v.end(), dst.data());
  };
  load(net.W1, matrix_shape(net.W1));
  load(net.b1, vector_shape(net.b1));
  load(net.W2, matrix_shape(net.W2));
  load(net.b2, vector_shape(net.b2));
  return net;
}

size_t mlp_serialized_size(const Mlp2& net) { return 4 * 12 + 4 * net.parameter_count(); }

}  // namespace az3d
