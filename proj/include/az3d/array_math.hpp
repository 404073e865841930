#pragma once

#include <Eigen/Dense>

#include <array>

namespace az3d {

// Elementwise maps over whole arrays, written with exp/log so Eigen vectorizes them.
// Results match the scalar forms to within a few ulps of the output scale.

template <typename Derived>
auto softplus_array(const Eigen::ArrayBase<Derived>& x) {
  return x.max(0.0) + (1.0 + (-x.abs()).exp()).log();
}

template <typename Derived>
auto tanh_array(const Eigen::ArrayBase<Derived>& x) {
  // 1 - 2 / (e^{2x} + 1), with |x| capped so the exponential stays finite.
  return 1.0 - 2.0 / ((2.0 * x.min(40.0).max(-40.0)).exp() + 1.0);
}

template <typename Derived>
auto sigmoid_array(const Eigen::ArrayBase<Derived>& x) {
  return 1.0 / (1.0 + (-x.min(700.0).max(-700.0)).exp());
}

}  // namespace az3d

namespace az3d {

namespace detail {

template <typename Derived, size_t N>
auto polevl_array(const Eigen::ArrayBase<Derived>& x, const std::array<double, N>& c) {
  typename Derived::PlainObject acc = Derived::PlainObject::Constant(x.rows(), x.cols(), c[0]);
  for (size_t i = 1; i < N; ++i) acc = acc * x + c[i];
  return acc;
}

// Same, with an implicit leading coefficient of 1.
template <typename Derived, size_t N>
auto p1evl_array(const Eigen::ArrayBase<Derived>& x, const std::array<double, N>& c) {
  typename Derived::PlainObject acc = x + c[0];
  for (size_t i = 1; i < N; ++i) acc = acc * x + c[i];
  return acc;
}

}  // namespace detail

/// Complementary error function, relative error around 1e-15. Every branch is evaluated
/// and the right one selected per element.
template <typename Derived>
typename Derived::PlainObject erfc_array(const Eigen::ArrayBase<Derived>& x) {
  static constexpr std::array<double, 9> P{2.46196981473530512524e-10, 5.64189564831068821977e-1,
                                           7.46321056442269912687e0,   4.86371970985681366614e1,
                                           1.96520832956077098242e2,   5.26445194995477358631e2,
                                           9.34528527171957607540e2,   1.02755188689515710272e3,
                                           5.57535335369399327526e2};
  static constexpr std::array<double, 8> Q{1.32281951154744992508e1, 8.67072140885989742329e1,
                                           3.54937778887819891062e2, 9.75708501743205489753e2,
                                           1.82390916687909736289e3, 2.24633760818710981792e3,
                                           1.65666309194161350182e3, 5.57535340817727675546e2};
  static constexpr std::array<double, 6> R{5.64189583547755073984e-1, 1.27536670759978104416e0,
                                           5.01905042251180477414e0,  6.16021097993053585195e0,
                                           7.40974269950448939160e0,  2.97886665372100240670e0};
  static constexpr std::array<double, 6> S{2.26052863220117276590e0, 9.39603524938001434673e0,
                                           1.20489539808096656605e1, 1.70814450747565897222e1,
                                           9.60896809063285878198e0, 3.36907645100081516050e0};
  static constexpr std::array<double, 5> T{9.60497373987051638749e0, 9.00260197203842689217e1,
                                           2.23200534594684319226e3, 7.00332514112805075473e3,
                                           5.55923013010394962768e4};
  static constexpr std::array<double, 5> U{3.35617141647503099647e1, 5.21357949780152679795e2,
                                           4.59432382970980127987e3, 2.26290000613890934246e4,
                                           4.92673942608635921086e4};
  using Plain = typename Derived::PlainObject;
  const Plain a = x.abs().min(27.0);  // erfc underflows past 26.6
  const Plain z = (-a.square()).exp();
  const Plain mid = z * detail::polevl_array(a, P) / detail::p1evl_array(a, Q);
  const Plain far = z * detail::polevl_array(a, R) / detail::p1evl_array(a, S);
  const Plain tail = (a < 8.0).select(mid, (x.abs() < 27.0).select(far, 0.0));
  const Plain y = (x < 0.0).select(2.0 - tail, tail);
  const Plain x2 = x.square();
  const Plain near = 1.0 - x * detail::polevl_array(x2, T) / detail::p1evl_array(x2, U);
  return (a < 1.0).select(near, y);
}

}  // namespace az3d
