#include "az3d/render.hpp"

#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace az3d;

namespace {

ToyCamera one_pixel() {
  ToyCamera cam;
  cam.width = cam.height = 1;
  return cam;  // pixel center (0.5, 0.5)
}

NeuralGaussian splat(double opacity, const Vec3& color, double z = 0.5) {
  NeuralGaussian g;
  g.mean = Vec3(0.5, 0.5, z);
  g.scale = Vec3(0.1, 0.1, 0.1);
  g.opacity = opacity;
  g.color = color;
  return g;
}

}  // namespace

TEST_CASE("a single centered gaussian contributes color times opacity") {
  const Vec3 c(0.2, 0.4, 0.9);
  const Image img = render_image({splat(0.7, c)}, one_pixel());
  for (int k = 0; k < 3; ++k) CHECK(std::abs(img.at(0, 0, k) - c[k] * 0.7) <= 1e-6);
}

TEST_CASE("off-center gaussians fall off with the mahalanobis distance") {
  NeuralGaussian g = splat(1.0, Vec3::Ones());
  g.mean.x() = 0.6;  // one standard deviation away
  const Image img = render_image({g}, one_pixel());
  CHECK(img.at(0, 0, 0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("two half-opaque layers composite to three quarters") {
  const Vec3 c(1.0, 0.5, 0.25);
  const Image img = render_image({splat(0.5, c, 0.2), splat(0.5, c, 0.8)}, one_pixel());
  for (int k = 0; k < 3; ++k) CHECK(std::abs(img.at(0, 0, k) - 0.75 * c[k]) <= 1e-6);
}

TEST_CASE("compositing runs front to back regardless of input order") {
  const Vec3 red(1, 0, 0), blue(0, 0, 1);
  // Camera looks down -z, so larger z is nearer.
  const Image a = render_image({splat(0.5, red, 0.9), splat(1.0, blue, 0.1)}, one_pixel());
  const Image b = render_image({splat(1.0, blue, 0.1), splat(0.5, red, 0.9)}, one_pixel());
  CHECK(a.at(0, 0, 0) == doctest::Approx(0.5));
  CHECK(a.at(0, 0, 2) == doctest::Approx(0.5));
  CHECK(a.rgb == b.rgb);
}

TEST_CASE("gaussian means are anchor plus offset scaled by the anchor scale") {
  const GaussianHeads heads = GaussianHeads::random(32, 2, 5);
  Vec offsets(6);
  offsets << 0.1, 0.0, 0.0, -1.0, 0.5, 2.0;
  const auto gs = derive_gaussians(Vec3(1, 2, 3), Vec::Zero(32), Vec3(2, 2, 2), offsets, {true, true},
                                   heads, ToyCamera{});
  REQUIRE(gs.size() == 2);
  CHECK((gs[0].mean - Vec3(1.2, 2.0, 3.0)).norm() <= 1e-6);
  CHECK((gs[1].mean - Vec3(-1.0, 3.0, 7.0)).norm() <= 1e-6);
  for (const auto& g : gs) {
    CHECK((g.opacity > 0.0 && g.opacity < 1.0));
    CHECK(g.scale.minCoeff() >= 1e-4);
    CHECK(g.rotation.norm() == doctest::Approx(1.0));
  }
  const auto masked = derive_gaussians(Vec3(1, 2, 3), Vec::Zero(32), Vec3(2, 2, 2), offsets,
                                       {false, true}, heads, ToyCamera{});
  REQUIRE(masked.size() == 1);
  CHECK((masked[0].mean - gs[1].mean).norm() == 0.0);
  CHECK_THROWS_AS(derive_gaussians(Vec3::Zero(), Vec::Zero(32), Vec3::Ones(), Vec::Zero(3),
                                   {true, true}, heads, ToyCamera{}),
                  ContractViolation);
}

TEST_CASE("gaussian evaluation uses the rotated covariance") {
  NeuralGaussian g;
  g.scale = Vec3(2.0, 1.0, 1.0);
  g.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()));
  // The long axis now points along y.
  CHECK(eval_gaussian(g, Vec3(0, 2, 0)) == doctest::Approx(std::exp(-0.5)));
  CHECK(eval_gaussian(g, Vec3(1, 0, 0)) == doctest::Approx(std::exp(-0.5)));
  g.scale = Vec3(0, 1, 1);
  CHECK_THROWS_AS(eval_gaussian(g, Vec3::Zero()), NumericError);
}

TEST_CASE("psnr, camera fitting and image output") {
  Image a(2, 2), b(2, 2);
  CHECK(psnr(a, b) == kPsnrCap);
  b.at(0, 0, 0) = 0.1;
  // mse = 0.01 / 12
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(1200.0)));
  CHECK_THROWS_AS(psnr(a, Image(3, 2)), ContractViolation);

  Aabb box;
  box.min = Vec3(-1, 0, 0);
  box.max = Vec3(1, 4, 2);
  const ToyCamera cam = ToyCamera::fit(box, 8, 8);
  CHECK(cam.x_min == -1.0);
  CHECK(cam.y_max == 4.0);
  CHECK(cam.position.z() == 6.0);
  ToyCamera broken;
  broken.width = 0;
  CHECK_THROWS_AS(render_image({}, broken), ContractViolation);

  const Image both = side_by_side(a, b);
  CHECK(both.width == 4);
  CHECK(both.at(2, 0, 0) == 0.1);
  const std::string path = "az3d_test_image.ppm";
  write_ppm(path, both);
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  CHECK(static_cast<long>(in.tellg()) == static_cast<long>(std::string("P6\n4 2\n255\n").size() + 24));
  std::remove(path.c_str());
}
