#pragma once

#include "az3d/entropy.hpp"
#include "az3d/render.hpp"
#include "az3d/scene.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace az3d {

struct TrainConfig {
  double lambda_e = 0.004;
  double lambda_m = 5e-4;
  int iters = 500;
  double lr = 2e-3;
  uint64_t seed = 0;
  Variant variant = Variant::PredictHyper;
  int log_every = 10;
  int threads = 1;

  // Learning-rate multipliers per parameter group.
  double latent_lr_scale = 5.0;
  double scale_lr_scale = 0.05;
  double offset_lr_scale = 1.0;
  double mask_lr_scale = 10.0;
  double grid_lr_scale = 1.0;
  /// The learning rate follows a cosine from 1 down to this factor over the second half.
  double lr_final_scale = 0.1;

  /// When > 0, lambda_e is steered during training so that the inference-mode
  /// distortion settles at this value (used to compare variants at equal distortion).
  double target_distortion = 0.0;
  /// Per-checkpoint targets, overriding target_distortion where present. Entry j is the
  /// target at the j-th controller checkpoint, as recorded in TrainResult::probes.
  std::vector<double> distortion_schedule;
  /// Record inference-mode distortion at every controller checkpoint even without a target.
  bool record_probes = false;
  int controller_every = 20;
  /// lambda_e is multiplied by exp(gain * relative distortion error), clamped to +-0.3.
  double controller_gain = 2.0;

  /// Throws ContractViolation naming the offending key.
  void validate() const;
};

/// Flat "key = value" lines; '#' starts a comment. Keys match the field names.
TrainConfig parse_train_config(const std::string& text, TrainConfig base = {});
TrainConfig load_train_config(const std::string& path, TrainConfig base = {});

/// Bits per attribute group.
struct RateBreakdown {
  double latent = 0.0;
  double scale = 0.0;
  double offset = 0.0;
  double hyper = 0.0;
  double grid = 0.0;

  /// Anchor attributes plus hyperprior, the entropy-coded payload.
  double entropy() const { return latent + scale + offset + hyper; }
  double total() const { return entropy() + grid; }
};

struct LossTerms {
  double distortion = 0.0;
  double d_feature = 0.0;
  double d_scale = 0.0;
  double d_offset = 0.0;
  RateBreakdown rate;
  double mask_loss = 0.0;
  double total = 0.0;
};

/// Gradients of the per-anchor tensors; network gradients live in the networks.
struct AnchorGrads {
  RowMat latent, scales, offsets, mask_logits;
};

/// Which quantization path a pass takes. Train mode draws noise from the counter
/// streams of `iteration`, so repeating a pass reproduces it exactly.
struct PassOptions {
  QuantMode mode = QuantMode::Infer;
  uint64_t noise_seed = 0;
  int64_t iteration = 0;
  double lambda_e = 0.0;
  double lambda_m = 0.0;
  /// Precomputed grid corners for the model's positions; built on the fly when null.
  const GridStencil* stencil = nullptr;
};

/// Rate of the entropy-coded attributes and the hyperprior, inference mode (what the coder
/// will spend). The grid entry holds the Bernoulli estimate of the grid signs.
RateBreakdown total_rate(const SceneModel& model);

/// D, R, L_m and L_total = D + lambda_e * R / N + lambda_m * L_m. With `grads` set, zeroes
/// and then fills every gradient of the model.
LossTerms rd_loss(SceneModel& model, const TargetAnchorSet& targets, const PassOptions& options,
                  AnchorGrads* grads = nullptr);

/// Zero-filled gradient holders shaped like the model's anchor tensors.
AnchorGrads make_anchor_grads(const SceneModel& model);

/// Every trainable tensor (frozen Gaussian heads excluded) with its learning-rate multiplier.
std::vector<ParamBlock> trainable_blocks(SceneModel& model, AnchorGrads& grads, const TrainConfig& cfg);

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int iteration, const std::string& what)
      : std::runtime_error("training diverged at iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

struct CurvePoint {
  int iter = 0;
  double distortion = 0.0;
  double rate = 0.0;  // bits per anchor, train mode
  double total = 0.0;
  double lambda_e = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  double final_lambda_e = 0.0;
  /// Inference-mode distortion at each controller checkpoint (after warmup, every
  /// controller_every iterations).
  std::vector<double> probes;
};

/// Adam on every trainable tensor. Throws DivergenceError on a non-finite loss or gradient.
TrainResult train(SceneModel& model, const TargetAnchorSet& targets, const TrainConfig& cfg);

/// Inference-mode evaluation: quantized values, f_p, and the resulting terms.
LossTerms evaluate(const SceneModel& model, const TargetAnchorSet& targets, const TrainConfig& cfg);

struct AblationRow {
  std::string label;
  Variant variant = Variant::Baseline;
  double lambda_e = 0.0;
  double distortion = 0.0;
  double psnr = 0.0;
  RateBreakdown bits;
  size_t latent_bytes = 0;  // coded feature (Baseline) or residual payload
  size_t coded_bytes = 0;   // whole stream
};

std::string ablation_label(Variant v);

/// Trains the three variants from the same seed and budget. Baseline runs at cfg.lambda_e;
/// the prediction variants steer lambda_e so their distortion follows Baseline's at every
/// controller checkpoint.
std::vector<AblationRow> ablate(const TargetAnchorSet& targets, const TrainConfig& cfg);

/// Renders of the target attributes (every offset kept) and of the model's decoded
/// attributes, through the model's heads on a square toy camera over the target bounds.
struct RenderPair {
  Image original;
  Image decoded;
  double psnr = 0.0;
};
RenderPair render_pair(const SceneModel& model, const TargetAnchorSet& targets, int size = 64);

/// Render-space PSNR between target features and the model's decoded features.
double render_psnr(const SceneModel& model, const TargetAnchorSet& targets, int size = 64);

}  // namespace az3d
