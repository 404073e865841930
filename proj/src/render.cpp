#include "az3d/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace az3d {

ToyCamera ToyCamera::fit(const Aabb& bbox, int width, int height) {
  ToyCamera cam;
  cam.width = width;
  cam.height = height;
  cam.x_min = bbox.min.x();
  cam.x_max = bbox.max.x();
  cam.y_min = bbox.min.y();
  cam.y_max = bbox.max.y();
  if (cam.x_max <= cam.x_min) cam.x_max = cam.x_min + 1.0;
  if (cam.y_max <= cam.y_min) cam.y_max = cam.y_min + 1.0;
  const double extent = std::max(bbox.extent().maxCoeff(), 1e-6);
  const Vec3 c = bbox.center();
  cam.position = Vec3(c.x(), c.y(), bbox.max.z() + extent);
  return cam;
}

void ToyCamera::validate() const {
  require(width > 0 && height > 0, "ToyCamera: image size must be positive");
  require((x_max - x_min) * (y_max - y_min) > 0.0, "ToyCamera: window area must be positive");
}

Eigen::Vector2d ToyCamera::pixel_center(int px, int py) const {
  return {x_min + (px + 0.5) * (x_max - x_min) / width, y_min + (py + 0.5) * (y_max - y_min) / height};
}

Eigen::Matrix3d NeuralGaussian::covariance() const {
  const Eigen::Matrix3d R = rotation.normalized().toRotationMatrix();
  const Eigen::Matrix3d S = scale.asDiagonal();
  return R * S * S.transpose() * R.transpose();
}

std::vector<NeuralGaussian> derive_gaussians(const Vec3& x, const Vec& feature, const Vec3& scale,
                                             const Vec& offsets, const std::vector<bool>& mask,
                                             const GaussianHeads& heads, const ToyCamera& camera) {
  const int k = heads.offsets();
  require(offsets.size() == 3 * k && static_cast<int>(mask.size()) == k,
          "derive_gaussians: offsets/mask do not match the heads");
  std::vector<NeuralGaussian> out;
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) return out;

  const Vec3 rel = x - camera.position;
  const double dist = rel.norm();
  const Vec3 dir = dist > 0.0 ? Vec3(rel / dist) : Vec3(0.0, 0.0, -1.0);
  Vec in(feature.size() + 4);
  in << feature, dist, dir;
  const Vec opacity = heads.opacity.forward(in);
  const Vec cov = heads.covariance.forward(in);
  const Vec color = heads.color.forward(in);

  for (int i = 0; i < k; ++i) {
    if (!mask[i]) continue;
    NeuralGaussian g;
    g.mean = x + offsets.segment<3>(3 * i).cwiseProduct(scale);
    g.opacity = sigmoid(opacity[i]);
    for (int d = 0; d < 3; ++d) {
      g.scale[d] = std::clamp(std::exp(cov[7 * i + d]), 1e-4, 1.0);
      g.color[d] = sigmoid(color[3 * i + d]);
    }
    Eigen::Quaterniond q(cov[7 * i + 3], cov[7 * i + 4], cov[7 * i + 5], cov[7 * i + 6]);
    g.rotation = q.norm() > 1e-12 ? q.normalized() : Eigen::Quaterniond::Identity();
    out.push_back(g);
  }
  return out;
}

std::vector<NeuralGaussian> derive_scene_gaussians(const RowMat& positions, const RowMat& features,
                                                   const RowMat& scales, const RowMat& offsets,
                                                   const RowMat& mask, const GaussianHeads& heads,
                                                   const ToyCamera& camera) {
  std::vector<NeuralGaussian> all;
  const int k = heads.offsets();
  std::vector<bool> m(static_cast<size_t>(k));
  for (Eigen::Index n = 0; n < positions.rows(); ++n) {
    for (int i = 0; i < k; ++i) m[i] = mask(n, i) != 0.0;
    auto g = derive_gaussians(positions.row(n).transpose(), features.row(n).transpose(),
                              scales.row(n).transpose(), offsets.row(n).transpose(), m, heads, camera);
    all.insert(all.end(), g.begin(), g.end());
  }
  return all;
}

double eval_gaussian(const NeuralGaussian& g, const Vec3& x) {
  const Eigen::Matrix3d cov = g.covariance();
  Eigen::LLT<Eigen::Matrix3d> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericError("eval_gaussian: covariance is not positive definite");
  const Vec3 d = x - g.mean;
  return std::exp(-0.5 * d.dot(llt.solve(d)));
}

Image render_image(const std::vector<NeuralGaussian>& gaussians, const ToyCamera& camera) {
  camera.validate();
  Image img(camera.width, camera.height);
  std::vector<double> transmittance(static_cast<size_t>(camera.width) * camera.height, 1.0);

  // Front to back along -z; ties keep input order.
  std::vector<size_t> order(gaussians.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return gaussians[a].mean.z() > gaussians[b].mean.z(); });

  const double px_w = (camera.x_max - camera.x_min) / camera.width;
  const double px_h = (camera.y_max - camera.y_min) / camera.height;
  for (size_t idx : order) {
    const NeuralGaussian& g = gaussians[idx];
    const Eigen::Matrix2d cov2 = g.covariance().topLeftCorner<2, 2>();
    const double det = cov2.determinant();
    if (!(det > 0.0)) continue;
    const Eigen::Matrix2d inv = cov2.inverse();
    // 3-sigma footprint along each axis.
    const double rx = 3.0 * std::sqrt(cov2(0, 0));
    const double ry = 3.0 * std::sqrt(cov2(1, 1));
    const int x0 = std::max(0, static_cast<int>(std::floor((g.mean.x() - rx - camera.x_min) / px_w)));
    const int x1 = std::min(camera.width - 1, static_cast<int>(std::floor((g.mean.x() + rx - camera.x_min) / px_w)));
    const int y0 = std::max(0, static_cast<int>(std::floor((g.mean.y() - ry - camera.y_min) / px_h)));
    const int y1 = std::min(camera.height - 1, static_cast<int>(std::floor((g.mean.y() + ry - camera.y_min) / px_h)));
    for (int py = y0; py <= y1; ++py) {
      for (int px = x0; px <= x1; ++px) {
        const Eigen::Vector2d d = camera.pixel_center(px, py) - g.mean.head<2>();
        const double m2 = d.dot(inv * d);
        if (m2 > 9.0) continue;
        const double alpha = g.opacity * std::exp(-0.5 * m2);
        double& T = transmittance[static_cast<size_t>(py) * camera.width + px];
        for (int c = 0; c < 3; ++c) img.at(px, py, c) += g.color[c] * alpha * T;
        T *= 1.0 - alpha;
      }
    }
  }
  return img;
}

double psnr(const Image& a, const Image& b) {
  require(a.width == b.width && a.height == b.height, "psnr: image dimensions differ");
  double se = 0.0;
  for (size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = a.rgb[i] - b.rgb[i];
    se += d * d;
  }
  if (se == 0.0 || a.rgb.empty()) return kPsnrCap;
  const double mse = se / static_cast<double>(a.rgb.size());
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

void write_ppm(const std::string& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  for (double v : image.rgb) {
    out.put(static_cast<char>(static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

Image side_by_side(const Image& left, const Image& right) {
  require(left.height == right.height, "side_by_side: heights differ");
  Image out(left.width + right.width, left.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) = x < left.width ? left.at(x, y, c) : right.at(x - left.width, y, c);
      }
    }
  }
  return out;
}

}  // namespace az3d
