#include "az3d/diffmath.hpp"
#include "az3d/rng.hpp"

#include "doctest.h"

using namespace az3d;

namespace {

// 2 -> 2 -> 1 network with hand-picked weights.
Mlp2 tiny_net() {
  Mlp2 net(2, 2, 1);
  net.W1 << 1.0, -1.0, 0.5, 2.0;
  net.b1 << 0.0, -1.0;
  net.W2 << 1.0, 1.0;
  net.b2 << 0.5;
  return net;
}

}  // namespace

TEST_CASE("mlp forward and backward match a hand computation") {
  Mlp2 net = tiny_net();
  Mlp2Cache cache;
  const Vec y = net.forward(Eigen::Vector2d(2.0, 1.0), &cache);
  // pre = (1, 2), relu keeps both, y = 1 + 2 + 0.5.
  CHECK(y[0] == doctest::Approx(3.5).epsilon(1e-15));

  const Vec dx = net.backward(cache, Vec::Ones(1));
  CHECK(net.gW2(0, 0) == 1.0);
  CHECK(net.gW2(0, 1) == 2.0);
  CHECK(net.gb2[0] == 1.0);
  CHECK(net.gW1(0, 0) == 2.0);
  CHECK(net.gW1(0, 1) == 1.0);
  CHECK(net.gW1(1, 0) == 2.0);
  CHECK(net.gW1(1, 1) == 1.0);
  CHECK(dx[0] == doctest::Approx(1.5));
  CHECK(dx[1] == doctest::Approx(1.0));
}

TEST_CASE("inactive relu units pass no gradient") {
  Mlp2 net = tiny_net();
  Mlp2Cache cache;
  // pre = (-1, -4): both units off, output is the bias.
  const Vec y = net.forward(Eigen::Vector2d(-2.0, -1.0), &cache);
  CHECK(y[0] == 0.5);
  net.backward(cache, Vec::Ones(1));
  CHECK(net.gW1.isZero());
  CHECK(net.gb1.isZero());
  CHECK(net.gb2[0] == 1.0);
}

TEST_CASE("gradients accumulate until zero_grad") {
  Mlp2 net = tiny_net();
  Mlp2Cache cache;
  net.forward(Eigen::Vector2d(2.0, 1.0), &cache);
  net.backward(cache, Vec::Ones(1));
  net.backward(cache, Vec::Ones(1));
  CHECK(net.gb2[0] == 2.0);
  net.zero_grad();
  CHECK(net.gb2[0] == 0.0);
  CHECK(net.gW1.isZero());
}

TEST_CASE("batched passes equal the per-sample passes") {
  Mlp2 a = Mlp2::random(5, 7, 3, 11);
  Mlp2 b = a;
  CounterRng rng(4);
  RowMat X(6, 5), dY(6, 3);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < dY.size(); ++i) dY.data()[i] = rng.normal();

  Mlp2BatchCache bc;
  const RowMat Y = a.forward_batch(X, &bc);
  const RowMat dX = a.backward_batch(bc, dY);
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    Mlp2Cache c;
    const Vec y = b.forward(X.row(r).transpose(), &c);
    const Vec dx = b.backward(c, dY.row(r).transpose());
    CHECK((Y.row(r).transpose() - y).norm() < 1e-12);
    CHECK((dX.row(r).transpose() - dx).norm() < 1e-12);
  }
  CHECK((a.gW1 - b.gW1).norm() < 1e-12);
  CHECK((a.gW2 - b.gW2).norm() < 1e-12);
  CHECK((a.gb1 - b.gb1).norm() < 1e-12);
}

TEST_CASE("mlp rejects wrong shapes and foreign caches") {
  Mlp2 net = tiny_net();
  CHECK_THROWS_AS(net.forward(Vec::Ones(3)), ContractViolation);
  CHECK_THROWS_AS(net.forward_batch(RowMat::Ones(2, 3)), ContractViolation);
  Mlp2 other = tiny_net();
  Mlp2Cache cache;
  other.forward(Eigen::Vector2d(1.0, 1.0), &cache);
  CHECK_THROWS_AS(net.backward(cache, Vec::Ones(1)), ContractViolation);
  CHECK_THROWS_AS(Mlp2(0, 2, 2), ContractViolation);
}

TEST_CASE("random init is float-exact and seed-determined") {
  const Mlp2 a = Mlp2::random(4, 8, 2, 99);
  const Mlp2 b = Mlp2::random(4, 8, 2, 99);
  const Mlp2 c = Mlp2::random(4, 8, 2, 100);
  CHECK(a.W1 == b.W1);
  CHECK(a.W1 != c.W1);
  for (Eigen::Index i = 0; i < a.W1.size(); ++i) {
    const double v = a.W1.data()[i];
    CHECK(v == static_cast<double>(static_cast<float>(v)));
    CHECK(std::abs(v) <= 0.5);  // sqrt(1/4)
  }
}

TEST_CASE("first adam step moves by lr in the gradient's direction") {
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{0.5, -3.0};
  AdamConfig cfg;
  cfg.lr = 0.1;
  AdamState st = AdamState::make(2, cfg);
  adam_step(p, g, st, "test");
  // m_hat = g, v_hat = g^2 after bias correction.
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.1 * 3.0 / (3.0 + 1e-8)).epsilon(1e-14));
  CHECK(st.t == 1);
}

TEST_CASE("adam names the block holding a non-finite gradient") {
  std::vector<double> p{1.0};
  const std::vector<double> g{std::nan("")};
  AdamState st = AdamState::make(1, {});
  try {
    adam_step(p, g, st, "grid.scale");
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("grid.scale") != std::string::npos);
  }
  std::vector<double> short_grad;
  CHECK_THROWS_AS(adam_step(p, short_grad, st, "x"), ContractViolation);
}

TEST_CASE("grad_check accepts a correct gradient and flags a wrong one") {
  const Vec x = Eigen::Vector3d(0.3, -1.2, 2.0);
  auto cubic = [](double scale) {
    return [scale](const Vec& v, Vec* g) {
      if (g) *g = scale * 3.0 * v.array().square().matrix();
      return v.array().cube().sum();
    };
  };
  CHECK(grad_check(cubic(1.0), x, 1e-6) < 1e-8);
  CHECK(grad_check(cubic(1.1), x, 1e-6) > 1e-2);
}

TEST_CASE("tensors and networks serialize through f32") {
  const Mlp2 net = Mlp2::random(3, 5, 2, 7);
  ByteWriter w;
  write_mlp(w, net);
  CHECK(w.size() == mlp_serialized_size(net));
  ByteReader r(w.data());
  const Mlp2 back = read_mlp(r, 3, 5, 2, "net");
  CHECK(back.W1 == net.W1);
  CHECK(back.W2 == net.W2);
  CHECK(back.b1 == net.b1);
  CHECK(back.b2 == net.b2);

  ByteReader wrong(w.data());
  CHECK_THROWS_AS(read_mlp(wrong, 3, 6, 2, "net"), std::exception);

  ByteWriter t;
  const std::vector<double> vals{0.1, 2.0, -3.5};
  write_tensor(t, {3, 1, 1}, vals);
  ByteReader tr(t.data());
  const auto got = read_tensor(tr, {3, 1, 1}, "t");
  CHECK(got[0] == static_cast<double>(0.1f));
  CHECK(got[1] == 2.0);
  CHECK(got[2] == -3.5);
  CHECK_THROWS_AS(write_tensor(t, {2, 1, 1}, vals), ContractViolation);
}

TEST_CASE("counter generator matches splitmix64 reference values") {
  CHECK(mix64(0) == 0xe220a8397b1dcdafULL);
  CHECK(mix64(1234567) == 6457827717110365317ULL);
  CounterRng a(5, 2), b(5, 2);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(counter_uniform(5, 2, 3) == counter_uniform(5, 2, 3));
  for (uint64_t c = 0; c < 1000; ++c) {
    const double u = counter_centered(1, 1, c);
    CHECK((u > -0.5 && u <= 0.5));
  }
}

TEST_CASE("scalar helpers") {
  CHECK(softplus(1.0) == doctest::Approx(1.3132616875182228).epsilon(1e-15));
  CHECK(softplus(40.0) == 40.0);
  CHECK(sigmoid(-800.0) == 0.0);
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(relative_error(1.0, 1.0) == 0.0);
}
