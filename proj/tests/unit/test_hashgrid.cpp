#include "az3d/hashgrid.hpp"
#include "az3d/rng.hpp"

#include "doctest.h"

#include <cmath>

using namespace az3d;

TEST_CASE("level resolutions follow the geometric progression") {
  HashGridConfig cfg;
  CHECK(cfg.resolutions() == std::vector<int>{16, 26, 43, 71, 116, 190, 312, 512});
  HashGridConfig bad = cfg;
  bad.base_resolution = 4;
  bad.max_resolution = 6;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("coarse levels index densely and fine levels hash") {
  const HashGrid grid(HashGridConfig{});
  CHECK(grid.is_dense(0));
  CHECK_FALSE(grid.is_dense(1));
  CHECK(grid.rows(0) == 17u * 17u * 17u);
  CHECK(grid.rows(1) == 8192u);
  CHECK(grid.hash_index(0, {1, 2, 3}) == 1u + 2u * 17u + 3u * 289u);
  CHECK(grid.hash_index(1, {3, 5, 7}) == 1381u);
  CHECK(grid.hash_index(6, {100, 200, 300}) == 4272u);
  CHECK_THROWS_AS(grid.hash_index(1, {0, 0, 27}), ContractViolation);
  CHECK_THROWS_AS(grid.hash_index(8, {0, 0, 0}), ContractViolation);
}

TEST_CASE("trilinear query reproduces an affine field on the dense level") {
  HashGridConfig cfg;
  cfg.levels = 1;
  cfg.feat_per_level = 1;
  cfg.base_resolution = cfg.max_resolution = 4;
  HashGrid grid(cfg);
  // Value at lattice corner (i,j,k) = i + 2j - k; trilinear interpolation is exact.
  for (int k = 0; k <= 4; ++k)
    for (int j = 0; j <= 4; ++j)
      for (int i = 0; i <= 4; ++i) grid.tables[0][grid.hash_index(0, {i, j, k})] = i + 2 * j - k;
  const Vec3 x(0.3, 0.55, 0.9);
  const Vec v = grid.query(x, GridView::Raw);
  CHECK(v[0] == doctest::Approx(4 * (0.3 + 2 * 0.55 - 0.9)).epsilon(1e-14));
  // Outside the box the position is clamped to the boundary.
  const Vec edge = grid.query(Vec3(2.0, 0.0, 0.0), GridView::Raw);
  CHECK(edge[0] == doctest::Approx(4.0));
}

TEST_CASE("binarized view is sign times level scale") {
  HashGrid grid = HashGrid::random(HashGridConfig{}, 3);
  grid.tables[2][10] = 0.0;
  grid.tables[2][11] = -0.01;
  grid.level_scale[2] = 0.25;
  CHECK(grid.binarized(2, 10) == 0.25);
  CHECK(grid.binarized(2, 11) == -0.25);
  HashGrid copy = grid;
  copy.binarize_in_place();
  CHECK(copy.tables[2][11] == -0.25);
  const Vec3 x(0.41, 0.12, 0.77);
  CHECK((grid.query(x, GridView::Binarized) - copy.query(x, GridView::Raw)).norm() < 1e-15);
}

TEST_CASE("batched queries and backward match the single-position path") {
  HashGrid a = HashGrid::random(HashGridConfig{}, 8);
  HashGrid b = a;
  CounterRng rng(12);
  RowMat pos(20, 3), d(20, a.config().dim());
  for (Eigen::Index i = 0; i < pos.size(); ++i) pos.data()[i] = rng.uniform();
  for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = rng.normal();

  for (GridView view : {GridView::Raw, GridView::Binarized}) {
    a.zero_grad();
    b.zero_grad();
    RowMat out;
    const GridStencil s = a.stencil(pos);
    a.query_batch(s, view, out);
    a.backward_batch(s, d, view);
    for (Eigen::Index n = 0; n < pos.rows(); ++n) {
      const Vec q = b.query(pos.row(n).transpose(), view);
      CHECK((out.row(n).transpose() - q).norm() < 1e-13);
      b.backward(pos.row(n).transpose(), d.row(n).transpose(), view);
    }
    for (int l = 0; l < a.levels(); ++l) {
      CHECK(a.level_scale_grads[l] == doctest::Approx(b.level_scale_grads[l]).epsilon(1e-12));
      double diff = 0.0;
      for (size_t i = 0; i < a.table_grads[l].size(); ++i)
        diff = std::max(diff, std::abs(a.table_grads[l][i] - b.table_grads[l][i]));
      CHECK(diff < 1e-12);
    }
  }

  HashGridConfig other;
  other.levels = 4;
  const HashGrid small(other);
  RowMat out;
  CHECK_THROWS_AS(small.query_batch(a.stencil(pos), GridView::Raw, out), ContractViolation);
}

TEST_CASE("straight-through gradient stops outside the unit interval") {
  HashGridConfig cfg;
  cfg.levels = 1;
  cfg.feat_per_level = 1;
  cfg.base_resolution = cfg.max_resolution = 2;
  HashGrid grid(cfg);
  std::fill(grid.tables[0].begin(), grid.tables[0].end(), 1.5);
  grid.backward(Vec3(0.5, 0.5, 0.5), Vec::Ones(1), GridView::Binarized);
  for (double g : grid.table_grads[0]) CHECK(g == 0.0);
  CHECK(grid.level_scale_grads[0] == doctest::Approx(1.0));
}

TEST_CASE("bernoulli rate counts signs and differentiates in the logit") {
  HashGridConfig cfg;
  cfg.levels = 1;
  cfg.feat_per_level = 2;
  cfg.base_resolution = cfg.max_resolution = 1;
  HashGrid grid(cfg);  // 8 rows x 2 features, all zero, so all positive
  grid.tables[0][0] = -1.0;
  grid.tables[0][1] = -1.0;
  grid.bernoulli_logit[0] = 0.0;
  CHECK(grid.positive_count(0) == 14u);
  CHECK(grid.rate_bits() == doctest::Approx(16.0));

  grid.bernoulli_logit[0] = 0.7;
  grid.rate_backward(1.0);
  const double h = 1e-6;
  grid.bernoulli_logit[0] = 0.7 + h;
  const double up = grid.rate_bits();
  grid.bernoulli_logit[0] = 0.7 - h;
  const double down = grid.rate_bits();
  CHECK(relative_error(grid.bernoulli_logit_grads[0], (up - down) / (2 * h)) < 1e-7);
}

TEST_CASE("non-finite positions are rejected") {
  const HashGrid grid(HashGridConfig{});
  CHECK_THROWS_AS(grid.query(Vec3(std::nan(""), 0, 0)), NumericError);
  RowMat pos = RowMat::Zero(2, 3);
  pos(1, 2) = INFINITY;
  CHECK_THROWS_AS(grid.stencil(pos), NumericError);
}
