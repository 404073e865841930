#pragma once

#include "az3d/common.hpp"
#include "az3d/scene.hpp"

#include <Eigen/Geometry>

#include <string>
#include <vector>

namespace az3d {

/// Orthographic camera looking down -z over an xy window.
struct ToyCamera {
  int width = 64;
  int height = 64;
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;
  Vec3 position{0.5, 0.5, 2.0};

  /// Window over the bbox footprint, camera one extent above the top face.
  static ToyCamera fit(const Aabb& bbox, int width, int height);
  void validate() const;
  Eigen::Vector2d pixel_center(int px, int py) const;
};

struct NeuralGaussian {
  Vec3 mean = Vec3::Zero();
  Vec3 scale = Vec3::Ones();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  double opacity = 1.0;
  Vec3 color = Vec3::Zero();

  /// R S S^T R^T.
  Eigen::Matrix3d covariance() const;
};

/// Derives the unmasked Gaussians of one anchor: mean = x + o_i * l (componentwise),
/// attributes from the heads fed [feature, |x - cam|, (x - cam)/|x - cam|].
std::vector<NeuralGaussian> derive_gaussians(const Vec3& x, const Vec& feature, const Vec3& scale,
                                             const Vec& offsets, const std::vector<bool>& mask,
                                             const GaussianHeads& heads, const ToyCamera& camera);

/// Gaussians for every anchor, in anchor then offset order.
std::vector<NeuralGaussian> derive_scene_gaussians(const RowMat& positions, const RowMat& features,
                                                   const RowMat& scales, const RowMat& offsets,
                                                   const RowMat& mask, const GaussianHeads& heads,
                                                   const ToyCamera& camera);

/// exp(-1/2 (x - mu)^T Sigma^-1 (x - mu)).
double eval_gaussian(const NeuralGaussian& g, const Vec3& x);

struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;  // row-major, 3 per pixel

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0.0) {}
  double& at(int x, int y, int c) { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
};

/// Front-to-back alpha compositing of orthographically projected Gaussians.
Image render_image(const std::vector<NeuralGaussian>& gaussians, const ToyCamera& camera);

inline constexpr double kPsnrCap = 99.0;
double psnr(const Image& a, const Image& b);

void write_ppm(const std::string& path, const Image& image);
/// Two images next to each other.
Image side_by_side(const Image& left, const Image& right);

}  // namespace az3d
