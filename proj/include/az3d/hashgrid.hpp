#pragma once

#include "az3d/common.hpp"
#include "az3d/diffmath.hpp"

#include <array>
#include <vector>

namespace az3d {

struct HashGridConfig {
  int levels = 8;
  int table_size_log2 = 13;
  int feat_per_level = 4;
  int base_resolution = 16;
  int max_resolution = 512;
  Aabb bbox;

  int dim() const { return levels * feat_per_level; }
  /// Geometric progression base -> max, rounded; throws unless strictly increasing.
  std::vector<int> resolutions() const;
  void validate() const;
};

/// Which table values a query reads: raw parameters, or their sign scaled by the
/// per-level magnitude (what the codec stores).
enum class GridView { Raw, Binarized };

/// Trilinear corner indices and weights for a fixed set of positions, per level.
/// Positions do not move during training, so this is computed once.
struct GridStencil {
  Eigen::Index count = 0;
  std::vector<int> resolutions;
  std::vector<std::vector<uint32_t>> index;  // per level, count x 8
  std::vector<std::vector<double>> weight;
};

/// Multi-resolution spatial hash grid producing the spatial condition for each anchor.
class HashGrid {
 public:
  HashGrid() = default;
  explicit HashGrid(const HashGridConfig& config);
  static HashGrid random(const HashGridConfig& config, uint64_t seed, double init_range = 0.05,
                         double init_scale = 0.2);

  const HashGridConfig& config() const { return config_; }
  int levels() const { return config_.levels; }
  int resolution(int level) const { return resolutions_[level]; }
  bool is_dense(int level) const;
  size_t rows(int level) const { return tables[level].size() / config_.feat_per_level; }
  size_t entry_count() const;

  /// Dense index on levels whose corner lattice fits in the table, XOR-prime hash otherwise.
  uint32_t hash_index(int level, const std::array<int, 3>& corner) const;

  Vec query(const Vec3& x, GridView view = GridView::Binarized) const;
  void query_batch(const RowMat& positions, GridView view, RowMat& out) const;
  void query_batch(const GridStencil& stencil, GridView view, RowMat& out) const;
  GridStencil stencil(const RowMat& positions) const;

  void backward(const Vec3& x, const Vec& d_fc, GridView view = GridView::Binarized);
  void backward_batch(const RowMat& positions, const RowMat& d_fc, GridView view);
  void backward_batch(const GridStencil& stencil, const RowMat& d_fc, GridView view);

  /// sign(theta) * delta_l with sign(0) = +1.
  double binarized(int level, size_t index) const;
  /// Replaces every entry with its binarized value.
  void binarize_in_place();

  double bernoulli_p(int level) const;
  /// Estimated size of the binarized tables in bits under the per-level Bernoulli model.
  double rate_bits() const;
  /// Adds scale * d(rate_bits)/d(logit) into the logit gradients.
  void rate_backward(double scale);
  /// Number of +1 entries per level.
  size_t positive_count(int level) const;

  void zero_grad();
  void append_blocks(std::vector<ParamBlock>& out, double table_lr_scale = 1.0);
  bool all_finite() const;
  void round_to_float();

  // Per level, rows x feat_per_level row-major.
  std::vector<std::vector<double>> tables;
  std::vector<double> level_scale;
  std::vector<double> bernoulli_logit;

  std::vector<std::vector<double>> table_grads;
  std::vector<double> level_scale_grads;
  std::vector<double> bernoulli_logit_grads;

 private:
  struct Corners {
    std::array<uint32_t, 8> index;
    std::array<double, 8> weight;
  };
  Corners corners(int level, const Vec3& x) const;
  void check_stencil(const GridStencil& stencil) const;
  uint32_t index_unchecked(int level, const std::array<int, 3>& corner) const;

  HashGridConfig config_;
  std::vector<int> resolutions_;
  std::vector<bool> dense_;
};

}  // namespace az3d
