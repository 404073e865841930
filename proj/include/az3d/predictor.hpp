#pragma once

#include "az3d/common.hpp"
#include "az3d/diffmath.hpp"

#include <array>
#include <string>
#include <string_view>

namespace az3d {

/// Which feature path a model uses.
///   Baseline:     anchors carry the full feature, coded under a grid-conditioned model.
///   Predict:      anchors carry a residual; features come from the prediction network.
///   PredictHyper: Predict plus a per-anchor hyperprior feeding the entropy model.
enum class Variant : uint8_t { Baseline = 0, Predict = 1, PredictHyper = 2 };

std::string_view variant_name(Variant v);
/// Accepts baseline | predict | predict_hyper.
Variant parse_variant(std::string_view name);

/// Per-anchor dimensions shared by every component.
struct AnchorLayout {
  Variant variant = Variant::PredictHyper;
  int feature_dim = 32;
  int residual_dim = 25;
  int hyper_dim = 4;
  int offsets = 10;
  int condition_dim = 32;

  bool uses_prediction() const { return variant != Variant::Baseline; }
  bool uses_hyperprior() const { return variant == Variant::PredictHyper; }
  /// Dimension of the coded per-anchor latent: the residual, or the feature for Baseline.
  int latent_dim() const { return uses_prediction() ? residual_dim : feature_dim; }
  int entropy_input_dim() const { return condition_dim + (uses_hyperprior() ? hyper_dim : 0); }
  /// Coded channels per anchor: latent, then 3 scale, then 3 per offset.
  int channel_count() const { return latent_dim() + 3 + 3 * offsets; }
  int scale_channel() const { return latent_dim(); }
  int offset_channel() const { return latent_dim() + 3; }
};

inline constexpr int kPredictHidden = 64;
inline constexpr int kContextHidden = 16;
inline constexpr int kEstimateHidden = 64;

/// Base quantization steps per attribute group.
struct BaseSteps {
  double latent = 1.0;
  double scale = 0.001;
  double offset = 0.2;
};

/// Feature prediction: fp = P([fc, fr_hat]).
struct FPNet {
  Mlp2 net;

  static FPNet random(const AnchorLayout& layout, uint64_t seed);
  Vec predict(const Vec& fc, const Vec& fr_hat) const;
  RowMat predict_batch(const RowMat& fc, const RowMat& fr_hat, Mlp2BatchCache* cache = nullptr) const;
};

/// Instance-aware context encoder: z = E(fr), fed with the raw residual.
struct ICEncoder {
  Mlp2 net;

  static ICEncoder random(const AnchorLayout& layout, uint64_t seed);
  Vec encode(const Vec& fr) const;
  RowMat encode_batch(const RowMat& fr, Mlp2BatchCache* cache = nullptr) const;
};

/// Mean, standard deviation and quantization step per coded channel.
struct EntropyParams {
  Vec mu, sigma, step;
};

struct EntropyParamsBatch {
  RowMat raw;  // network output, kept for the backward pass
  RowMat mu, sigma, step;
};

/// Probability estimation: {mu, sigma, q} = M([z_hat, fc]) (z_hat omitted without hyperprior).
/// Output layout: [mu | sigma | q] blocks, each ordered latent, scale, offsets.
struct PENet {
  Mlp2 net;
  AnchorLayout layout;
  BaseSteps base;

  static PENet random(const AnchorLayout& layout, uint64_t seed);

  double base_step(int channel) const;
  /// Builds the network input; z_hat must be empty when the layout has no hyperprior.
  RowMat input_batch(const RowMat& z_hat, const RowMat& fc) const;

  EntropyParams estimate(const Vec& z_hat, const Vec& fc) const;
  EntropyParamsBatch estimate_batch(const RowMat& input, Mlp2BatchCache* cache = nullptr) const;
  /// Maps gradients w.r.t. (mu, sigma, step) back to the raw network output.
  RowMat raw_gradient(const EntropyParamsBatch& params, const RowMat& d_mu, const RowMat& d_sigma,
                      const RowMat& d_step) const;

 private:
  void split(const RowMat& raw, EntropyParamsBatch& out) const;
};

/// Hard offset mask and the masking loss.
struct MaskResult {
  RowMat mask;  // 0/1 per (anchor, offset)
  double loss = 0.0;
};

/// mask = [sigmoid(m) >= 0.5], loss = mean(sigmoid(m)).
MaskResult offset_mask_apply(const RowMat& logits);
/// Straight-through gradients: d_logits += (d_mask + d_loss / count) * sigmoid'(m).
void offset_mask_backward(const RowMat& logits, const RowMat& d_mask, double d_loss, RowMat& d_logits);

}  // namespace az3d
