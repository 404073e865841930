#include "az3d/entropy.hpp"

#include "doctest.h"

#include <cmath>

using namespace az3d;

TEST_CASE("gaussian bin mass matches independently computed values") {
  struct Case {
    double v, mu, sigma, step, p, bits;
  };
  const Case cases[] = {
      {0.0, 0.0, 1.0, 1.0, 0.38292492254802624, 1.3848665342909896},
      {1.0, 0.0, 1.0, 1.0, 0.2417303374571288, 2.0485295504045213},
      {-2.5, 0.5, 2.0, 0.5, 0.032484442936116187, 4.9441072246302165},
  };
  for (const Case& c : cases) {
    const GaussianBits g = gaussian_bits(c.v, c.mu, c.sigma, c.step);
    CHECK(g.p == doctest::Approx(c.p).epsilon(1e-12));
    CHECK(g.bits == doctest::Approx(c.bits).epsilon(1e-12));
    CHECK(g.d_mu == -g.d_value);
  }
}

TEST_CASE("gaussian bits hit the probability floor far in the tail") {
  const GaussianBits g = gaussian_bits(1000.0, 0.0, 1.0, 1.0);
  CHECK(g.bits == doctest::Approx(-std::log2(kProbabilityFloor)));
  CHECK(g.d_value == 0.0);
}

TEST_CASE("gaussian bit gradients match central differences") {
  const double v = 0.7, mu = -0.2, sigma = 0.9, step = 0.6, h = 1e-6;
  const GaussianBits g = gaussian_bits(v, mu, sigma, step);
  auto b = [](double v, double mu, double s, double q) { return gaussian_bits(v, mu, s, q).bits; };
  CHECK(relative_error(g.d_value, (b(v + h, mu, sigma, step) - b(v - h, mu, sigma, step)) / (2 * h)) < 1e-6);
  CHECK(relative_error(g.d_mu, (b(v, mu + h, sigma, step) - b(v, mu - h, sigma, step)) / (2 * h)) < 1e-6);
  CHECK(relative_error(g.d_sigma, (b(v, mu, sigma + h, step) - b(v, mu, sigma - h, step)) / (2 * h)) < 1e-6);
  CHECK(relative_error(g.d_step, (b(v, mu, sigma, step + h) - b(v, mu, sigma, step - h)) / (2 * h)) < 1e-6);
}

TEST_CASE("batched gaussian bits equal the scalar path") {
  CounterRng rng(21);
  const int n = 37;  // not a multiple of the lane width
  Eigen::ArrayXd v(n), mu(n), sigma(n), step(n);
  for (int i = 0; i < n; ++i) {
    v[i] = rng.normal() * 3;
    mu[i] = rng.normal();
    sigma[i] = std::exp(rng.uniform(-4, 3));
    step[i] = std::exp(rng.uniform(-2, 1));
  }
  GaussianBitsBatch out;
  gaussian_bits_batch(v, mu, sigma, step, true, out);
  REQUIRE(out.bits.size() == n);
  for (int i = 0; i < n; ++i) {
    const GaussianBits g = gaussian_bits(v[i], mu[i], sigma[i], step[i]);
    CHECK(out.bits[i] == doctest::Approx(g.bits).epsilon(1e-11));
    CHECK(out.d_value[i] == doctest::Approx(g.d_value).epsilon(1e-9).scale(1e-12));
    CHECK(out.d_sigma[i] == doctest::Approx(g.d_sigma).epsilon(1e-9).scale(1e-12));
    CHECK(out.d_step[i] == doctest::Approx(g.d_step).epsilon(1e-9).scale(1e-12));
  }
  gaussian_bits_batch(v, mu, sigma, step, false, out);
  CHECK(out.d_value.size() == 0);
}

TEST_CASE("quantization rounds half away from zero and adds scaled noise in training") {
  const QuantSpec unit{1.0, 0.0};
  CHECK(quantize(2.5, unit, QuantMode::Infer) == 3.0);
  CHECK(quantize(-2.5, unit, QuantMode::Infer) == -3.0);
  CHECK(quantize(0.49, unit, QuantMode::Infer) == 0.0);
  const QuantSpec shifted{0.5, 0.1};
  CHECK(quantize(0.72, shifted, QuantMode::Infer) == doctest::Approx(0.6));
  CHECK(quantize_symbol(0.72, shifted) == 1);
  CHECK(quantize(1.0, shifted, QuantMode::Train, 0.25) == doctest::Approx(1.125));
  CounterRng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double q = quantize(1.0, unit, QuantMode::Train, rng);
    CHECK((q > 0.5 && q <= 1.5));
  }
}

TEST_CASE("normal cdf and pdf") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  CHECK(normal_pdf(0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-14));
}

TEST_CASE("symmetric factorized density starts centered") {
  const FactorizedDensity d = FactorizedDensity::symmetric(3);
  CHECK(d.channels() == 3);
  CHECK(d.params.cols() == kDensityParamCount);
  CHECK(d.cdf(1, 0.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(d.cdf(1, 1.3) == doctest::Approx(1.0 - d.cdf(1, -1.3)).epsilon(1e-12));
  CHECK(d.step(0) == 1.0);
  // Bin masses over the whole line sum to one.
  double total = 0.0;
  for (int z = -200; z <= 200; ++z) total += d.bits(0, z).p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("factorized density gradients match central differences") {
  FactorizedDensity d = FactorizedDensity::symmetric(2);
  CounterRng rng(9);
  for (Eigen::Index i = 0; i < d.params.size(); ++i) d.params.data()[i] += 0.3 * rng.normal();
  d.raw_step[1] = -0.4;
  d.zero_grad();
  const double z = 0.8;
  const FactorizedBits fb = d.bits_backward(1, z, 1.0);
  const double h = 1e-6;
  CHECK(relative_error(fb.d_value, (d.bits(1, z + h).bits - d.bits(1, z - h).bits) / (2 * h)) < 1e-6);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < d.params.cols(); ++k) {
    const double keep = d.params(1, k);
    d.params(1, k) = keep + h;
    const double up = d.bits(1, z).bits;
    d.params(1, k) = keep - h;
    const double down = d.bits(1, z).bits;
    d.params(1, k) = keep;
    const double numeric = (up - down) / (2 * h);
    if (std::abs(numeric) + std::abs(d.grad_params(1, k)) > 1e-8)
      worst = std::max(worst, relative_error(d.grad_params(1, k), numeric));
  }
  CHECK(worst < 1e-5);
  CHECK(d.grad_params.row(0).isZero());

  const double keep = d.raw_step[1];
  d.raw_step[1] = keep + h;
  const double up = d.bits(1, z).bits;
  d.raw_step[1] = keep - h;
  const double down = d.bits(1, z).bits;
  d.raw_step[1] = keep;
  CHECK(relative_error(d.grad_raw_step[1], (up - down) / (2 * h)) < 1e-6);
}

TEST_CASE("batched factorized bits equal the scalar sum") {
  FactorizedDensity a = FactorizedDensity::symmetric(1);
  CounterRng rng(2);
  for (Eigen::Index i = 0; i < a.params.size(); ++i) a.params.data()[i] += 0.2 * rng.normal();
  FactorizedDensity b = a;
  a.zero_grad();
  b.zero_grad();
  std::vector<double> z(50), dz(50);
  for (double& x : z) x = std::round(rng.normal() * 4);
  const double total = a.bits_batch(0, z, dz, 0.5);
  double expect = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    const FactorizedBits fb = b.bits_backward(0, z[i], 0.5);
    expect += fb.bits;
    CHECK(dz[i] == doctest::Approx(fb.d_value).epsilon(1e-10));
  }
  CHECK(total == doctest::Approx(expect).epsilon(1e-12));
  CHECK((a.grad_params - b.grad_params).norm() < 1e-9 * (1.0 + b.grad_params.norm()));
}
