#include "az3d/scene.hpp"

#include "az3d/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace az3d {

void TargetAnchorSet::compute_bbox() {
  if (positions.rows() == 0) {
    bbox = Aabb{};
    return;
  }
  bbox.min = positions.colwise().minCoeff().transpose();
  bbox.max = positions.colwise().maxCoeff().transpose();
}

void TargetAnchorSet::validate() const {
  const Eigen::Index n = positions.rows();
  require(offset_count >= 1, "TargetAnchorSet: offset count must be >= 1");
  require(positions.cols() == 3 && scales.rows() == n && scales.cols() == 3 && features.rows() == n &&
              offsets.rows() == n && offsets.cols() == 3 * offset_count,
          "TargetAnchorSet: inconsistent attribute shapes");
  require(positions.allFinite() && features.allFinite() && scales.allFinite() && offsets.allFinite(),
          "TargetAnchorSet: non-finite attribute");
}

SynthSpec parse_synth_spec(const std::string& text) {
  SynthSpec spec;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    require(eq != std::string::npos, "synthetic scene: expected key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    try {
      if (key == "n") {
        spec.n = std::stoull(value);
      } else if (key == "k") {
        spec.k = std::stoi(value);
      } else if (key == "seed") {
        spec.seed = std::stoull(value);
      } else if (key == "noise") {
        spec.noise = std::stod(value);
      } else if (key == "field") {
        if (value == "smooth") {
          spec.field = SynthField::Smooth;
        } else if (value == "noisy") {
          spec.field = SynthField::Noisy;
        } else {
          throw ContractViolation("synthetic scene: field must be smooth or noisy");
        }
      } else {
        throw ContractViolation("synthetic scene: unknown key '" + key + "'");
      }
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const ContractViolation*>(&e)) throw;
      throw ContractViolation("synthetic scene: bad value for '" + key + "'");
    }
  }
  require(spec.k >= 1, "synthetic scene: k must be >= 1");
  require(spec.noise >= 0.0, "synthetic scene: noise must be >= 0");
  return spec;
}

namespace {

constexpr int kEncodingOctaves = 2;
constexpr int kEncodingDim = 3 * 2 * kEncodingOctaves;
constexpr double kBaseScale = 0.02;

Eigen::Matrix<double, kEncodingDim, 1> encode_position(const Vec3& x) {
  Eigen::Matrix<double, kEncodingDim, 1> e;
  int i = 0;
  for (int d = 0; d < 3; ++d) {
    for (int j = 0; j < kEncodingOctaves; ++j) {
      const double w = std::numbers::pi * static_cast<double>(1 << j);
      e[i++] = std::sin(w * x[d]);
      e[i++] = std::cos(w * x[d]);
    }
  }
  return e;
}

RowMat random_map(CounterRng& rng, int rows, int cols, double bound) {
  RowMat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

}  // namespace

TargetAnchorSet synth_targets(const SynthSpec& spec) {
  require(spec.k >= 1, "synth_targets: k must be >= 1");
  const auto n = static_cast<Eigen::Index>(spec.n);
  const int feature_dim = AnchorLayout{}.feature_dim;
  TargetAnchorSet t;
  t.offset_count = spec.k;
  t.positions.resize(n, 3);
  t.features.resize(n, feature_dim);
  t.scales.resize(n, 3);
  t.offsets.resize(n, 3 * spec.k);

  // The maps depend only on the seed, never on n.
  CounterRng maps(spec.seed, 0x6d617073);  // "maps"
  const double unit = std::sqrt(3.0 / kEncodingDim) * std::sqrt(2.0);  // unit-variance outputs
  const RowMat feature_map = random_map(maps, feature_dim, kEncodingDim, unit);
  const RowMat offset_map = random_map(maps, 3 * spec.k, kEncodingDim, 0.5 * unit);
  const RowMat scale_map = random_map(maps, 3, kEncodingDim, 0.5 * unit);

  CounterRng pos_rng(spec.seed, 0x706f73);     // "pos"
  CounterRng noise_rng(spec.seed, 0x6e6f6973);  // "nois"
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 x(pos_rng.uniform(), pos_rng.uniform(), pos_rng.uniform());
    t.positions.row(i) = x.transpose();
    const auto e = encode_position(x);
    t.features.row(i) = (feature_map * e).transpose();
    if (spec.field == SynthField::Noisy) {
      for (int c = 0; c < feature_dim; ++c) t.features(i, c) += spec.noise * noise_rng.normal();
    }
    const Vec3 s = scale_map * e;
    for (int d = 0; d < 3; ++d) t.scales(i, d) = kBaseScale * std::exp(0.5 * std::tanh(s[d]));
    t.offsets.row(i) = (offset_map * e).transpose();
  }
  t.compute_bbox();
  return t;
}

GaussianHeads GaussianHeads::random(int feature_dim, int offsets, uint64_t seed) {
  const int in = feature_dim + 4;
  GaussianHeads h;
  h.opacity = Mlp2::random(in, 32, offsets, mix64(seed ^ 0x11));
  h.covariance = Mlp2::random(in, 32, 7 * offsets, mix64(seed ^ 0x22));
  h.color = Mlp2::random(in, 32, 3 * offsets, mix64(seed ^ 0x33));
  // Bias the log-scale outputs toward anchor-sized splats.
  for (int i = 0; i < offsets; ++i) {
    for (int d = 0; d < 3; ++d) h.covariance.b2[7 * i + d] = static_cast<float>(std::log(0.02));
  }
  return h;
}

bool GaussianHeads::all_finite() const {
  return opacity.all_finite() && covariance.all_finite() && color.all_finite();
}

void GaussianHeads::round_to_float() {
  opacity.round_to_float();
  covariance.round_to_float();
  color.round_to_float();
}

bool SceneModel::all_finite() const {
  bool ok = positions.allFinite() && latent.allFinite() && scales.allFinite() && offsets.allFinite() &&
            mask_logits.allFinite() && grid.all_finite() && pe.net.all_finite() &&
            hyper_prior.all_finite() && heads.all_finite();
  if (fp) ok = ok && fp->net.all_finite();
  if (ic) ok = ok && ic->net.all_finite();
  if (decoded_hyper) ok = ok && decoded_hyper->allFinite();
  return ok;
}

void SceneModel::round_stored_to_float() {
  positions = positions.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
  grid.round_to_float();
  if (fp) fp->net.round_to_float();
  if (ic) ic->net.round_to_float();
  pe.net.round_to_float();
  hyper_prior.round_to_float();
  heads.round_to_float();
}

HashGridConfig default_grid_config(const Aabb& bbox) {
  HashGridConfig cfg;
  cfg.bbox = bbox;
  return cfg;
}

SceneModel init_scene_model(const TargetAnchorSet& targets, Variant variant, uint64_t seed,
                            const ModelInit& init) {
  targets.validate();
  SceneModel m;
  m.layout.variant = variant;
  m.layout.offsets = targets.offset_count;
  m.layout.feature_dim = static_cast<int>(targets.features.cols());
  m.seed = seed;
  const Eigen::Index n = targets.positions.rows();

  HashGridConfig grid_cfg = default_grid_config(targets.bbox);
  m.layout.condition_dim = grid_cfg.dim();
  m.grid = HashGrid::random(grid_cfg, mix64(seed ^ 0x67726964), init.grid_init_range,
                            init.grid_init_scale);

  m.positions = targets.positions;
  m.scales = targets.scales;
  m.offsets = targets.offsets;
  m.mask_logits = RowMat::Constant(n, targets.offset_count, init.mask_logit);
  if (m.layout.uses_prediction()) {
    m.latent = RowMat::Zero(n, m.layout.residual_dim);
    m.fp = FPNet::random(m.layout, mix64(seed ^ 0x6670));
  } else {
    m.latent = targets.features;
  }
  if (m.layout.uses_hyperprior()) {
    m.ic = ICEncoder::random(m.layout, mix64(seed ^ 0x6963));
    m.hyper_prior = FactorizedDensity::symmetric(m.layout.hyper_dim);
  } else {
    m.hyper_prior = FactorizedDensity::symmetric(0);
  }
  m.pe = PENet::random(m.layout, mix64(seed ^ 0x7065));
  m.heads = GaussianHeads::random(m.layout.feature_dim, m.layout.offsets, mix64(seed ^ 0x6865));
  return m;
}

}  // namespace az3d
