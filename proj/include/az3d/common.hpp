#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace az3d {

using Vec = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;
// Batched tensors keep one sample (anchor) per row.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised when a caller breaks a documented precondition (shapes, ranges, stale caches).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

/// Raised when a value that must be finite is not.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}
inline void require(bool cond, const char* msg) {
  if (!cond) throw ContractViolation(msg);
}

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();

  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
};

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

}  // namespace az3d
