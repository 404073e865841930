#include "az3d/entropy.hpp"
#include "az3d/predictor.hpp"
#include "az3d/rng.hpp"

#include "doctest.h"

#include <cmath>

using namespace az3d;

namespace {

RowMat random_rows(Eigen::Index rows, Eigen::Index cols, uint64_t seed, double scale = 1.0) {
  CounterRng rng(seed);
  RowMat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

}  // namespace

TEST_CASE("variant names round trip") {
  for (Variant v : {Variant::Baseline, Variant::Predict, Variant::PredictHyper}) {
    CHECK(parse_variant(variant_name(v)) == v);
  }
  CHECK_THROWS_AS(parse_variant("hyper"), ContractViolation);
}

TEST_CASE("layout channel bookkeeping") {
  AnchorLayout l;
  CHECK(l.latent_dim() == 25);
  CHECK(l.channel_count() == 25 + 3 + 30);
  CHECK(l.entropy_input_dim() == 36);
  l.variant = Variant::Baseline;
  CHECK(l.latent_dim() == 32);
  CHECK(l.entropy_input_dim() == 32);
  CHECK(l.offset_channel() == 35);
}

TEST_CASE("network shapes follow the layout") {
  const AnchorLayout l;
  const FPNet fp = FPNet::random(l, 1);
  CHECK(fp.net.in_dim() == 57);
  CHECK(fp.net.out_dim() == 32);
  const ICEncoder ic = ICEncoder::random(l, 2);
  CHECK(ic.net.in_dim() == 25);
  CHECK(ic.net.out_dim() == 4);
  const PENet pe = PENet::random(l, 3);
  CHECK(pe.net.in_dim() == 36);
  CHECK(pe.net.out_dim() == 3 * 58);
  CHECK_THROWS_AS(fp.predict(Vec::Zero(32), Vec::Zero(3)), ContractViolation);
}

TEST_CASE("prediction batch equals per-anchor prediction") {
  const AnchorLayout l;
  const FPNet fp = FPNet::random(l, 5);
  const RowMat fc = random_rows(4, 32, 1, 0.2);
  const RowMat fr = random_rows(4, 25, 2);
  const RowMat out = fp.predict_batch(fc, fr);
  for (int i = 0; i < 4; ++i) {
    CHECK((out.row(i).transpose() - fp.predict(fc.row(i).transpose(), fr.row(i).transpose())).norm() <
          1e-12);
  }
}

TEST_CASE("entropy parameters respect their ranges") {
  const AnchorLayout l;
  PENet pe = PENet::random(l, 4);
  pe.net.b2.array() += 30.0 * Eigen::ArrayXd::LinSpaced(pe.net.out_dim(), -1.0, 1.0);
  const RowMat in = pe.input_batch(random_rows(8, 4, 3), random_rows(8, 32, 4));
  const EntropyParamsBatch p = pe.estimate_batch(in);
  CHECK(p.sigma.minCoeff() >= kMinSigma);
  for (int c = 0; c < l.channel_count(); ++c) {
    const double base = pe.base_step(c);
    CHECK(p.step.col(c).minCoeff() >= 0.5 * base - 1e-15);
    CHECK(p.step.col(c).maxCoeff() <= 1.5 * base + 1e-15);
  }
  CHECK(pe.base_step(0) == 1.0);
  CHECK(pe.base_step(l.scale_channel()) == 0.001);
  CHECK(pe.base_step(l.offset_channel()) == 0.2);
  CHECK_THROWS_AS(pe.input_batch(RowMat(), random_rows(8, 32, 4)), ContractViolation);
}

TEST_CASE("entropy head gradient matches central differences") {
  AnchorLayout l;
  l.offsets = 2;
  PENet pe = PENet::random(l, 6);
  const int C = l.channel_count();
  const RowMat in = pe.input_batch(random_rows(1, 4, 5), random_rows(1, 32, 6));
  const RowMat a = random_rows(1, C, 7), b = random_rows(1, C, 8), c = random_rows(1, C, 9);
  // Loss = sum(a*mu + b*sigma + c*step) as a function of the raw output.
  auto loss = [&](const RowMat& raw) {
    PENet copy = pe;
    copy.net.set_zero();
    copy.net.b2 = raw.row(0).transpose();
    const EntropyParamsBatch p = copy.estimate_batch(in);
    return (a.cwiseProduct(p.mu) + b.cwiseProduct(p.sigma) + c.cwiseProduct(p.step)).sum();
  };
  const EntropyParamsBatch p = pe.estimate_batch(in);
  const RowMat d_raw = pe.raw_gradient(p, a, b, c);
  const double h = 1e-6;
  double worst = 0.0;
  for (int k = 0; k < 3 * C; ++k) {
    RowMat up = p.raw, down = p.raw;
    up(0, k) += h;
    down(0, k) -= h;
    worst = std::max(worst, relative_error(d_raw(0, k), (loss(up) - loss(down)) / (2 * h)));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("offset mask is a hard threshold with a sigmoid surrogate") {
  RowMat logits(1, 3);
  logits << -1.0, 0.0, 2.0;
  const MaskResult m = offset_mask_apply(logits);
  CHECK(m.mask(0, 0) == 0.0);
  CHECK(m.mask(0, 1) == 1.0);
  CHECK(m.mask(0, 2) == 1.0);
  CHECK(m.loss == doctest::Approx((sigmoid(-1.0) + 0.5 + sigmoid(2.0)) / 3.0));

  RowMat d_mask(1, 3);
  d_mask << 1.0, -2.0, 0.5;
  RowMat d_logits = RowMat::Zero(1, 3);
  offset_mask_backward(logits, d_mask, 3.0, d_logits);
  for (int i = 0; i < 3; ++i) {
    const double s = sigmoid(logits(0, i));
    CHECK(d_logits(0, i) == doctest::Approx((d_mask(0, i) + 1.0) * s * (1 - s)));
  }
  RowMat wrong = RowMat::Zero(2, 3);
  CHECK_THROWS_AS(offset_mask_backward(logits, d_mask, 1.0, wrong), ContractViolation);
}
