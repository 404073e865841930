#pragma once

#include "az3d/common.hpp"
#include "az3d/diffmath.hpp"
#include "az3d/entropy.hpp"
#include "az3d/hashgrid.hpp"
#include "az3d/predictor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace az3d {

/// Attributes of a pretrained anchor scene: the codec's compression target.
struct TargetAnchorSet {
  int offset_count = 10;
  RowMat positions;  // N x 3
  RowMat features;   // N x 32
  RowMat scales;     // N x 3
  RowMat offsets;    // N x 3k, offset i in columns [3i, 3i + 3)
  Aabb bbox;

  size_t size() const { return static_cast<size_t>(positions.rows()); }
  /// Axis-aligned bounds of the positions; the unit cube when empty.
  void compute_bbox();
  /// Throws ContractViolation on inconsistent shapes or non-finite values.
  void validate() const;
};

enum class SynthField { Smooth, Noisy };

struct SynthSpec {
  size_t n = 1000;
  int k = 10;
  uint64_t seed = 0;
  SynthField field = SynthField::Smooth;
  double noise = 0.1;  // feature noise standard deviation, Noisy only
};

/// Parses "n=5000,seed=1,k=10,field=noisy,noise=0.2"; unknown keys throw ContractViolation.
SynthSpec parse_synth_spec(const std::string& text);

/// Anchors uniform in the unit cube. Features, scales and offsets are fixed random linear
/// maps of a low-frequency sin/cos encoding of the position, so they are predictable from x.
TargetAnchorSet synth_targets(const SynthSpec& spec);

/// Frozen MLP heads turning (feature, view distance, view direction) into per-offset
/// opacity (k), scale+rotation (7k) and color (3k).
struct GaussianHeads {
  Mlp2 opacity;
  Mlp2 covariance;
  Mlp2 color;

  static GaussianHeads random(int feature_dim, int offsets, uint64_t seed);
  int offsets() const { return opacity.out_dim(); }
  bool all_finite() const;
  void round_to_float();
};

/// The trainable compressed representation.
struct SceneModel {
  AnchorLayout layout;
  uint64_t seed = 0;

  RowMat positions;    // N x 3
  RowMat latent;       // N x latent_dim: residual, or the full feature for Baseline
  RowMat scales;       // N x 3
  RowMat offsets;      // N x 3k
  RowMat mask_logits;  // N x k

  HashGrid grid;
  std::optional<FPNet> fp;
  std::optional<ICEncoder> ic;
  PENet pe;
  FactorizedDensity hyper_prior;  // hyper_dim channels, or none
  GaussianHeads heads;

  /// Quantized hyperprior carried by decoded models; encoders reuse it instead of
  /// re-running the context encoder on an already-quantized latent.
  std::optional<RowMat> decoded_hyper;

  size_t size() const { return static_cast<size_t>(positions.rows()); }
  bool all_finite() const;
  /// Rounds every value the bitstream stores as f32 (positions, networks, grid, prior).
  void round_stored_to_float();
};

struct ModelInit {
  double mask_logit = 2.0;
  double grid_init_range = 0.05;
  double grid_init_scale = 0.2;
};

/// Fresh model for `targets`: residuals zero (Baseline starts from the target features),
/// scales and offsets copied from the targets, grid and networks seeded from `seed`.
SceneModel init_scene_model(const TargetAnchorSet& targets, Variant variant, uint64_t seed,
                            const ModelInit& init = {});

HashGridConfig default_grid_config(const Aabb& bbox);

}  // namespace az3d
