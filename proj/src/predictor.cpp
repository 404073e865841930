#include "az3d/predictor.hpp"

#include "az3d/array_math.hpp"
#include "az3d/entropy.hpp"

#include <cmath>

namespace az3d {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Baseline:
      return "baseline";
    case Variant::Predict:
      return "predict";
    case Variant::PredictHyper:
      return "predict_hyper";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "baseline") return Variant::Baseline;
  if (name == "predict") return Variant::Predict;
  if (name == "predict_hyper") return Variant::PredictHyper;
  throw ContractViolation("unknown variant '" + std::string(name) +
                          "' (expected baseline, predict or predict_hyper)");
}

FPNet FPNet::random(const AnchorLayout& layout, uint64_t seed) {
  return {Mlp2::random(layout.condition_dim + layout.residual_dim, kPredictHidden, layout.feature_dim,
                       seed)};
}

Vec FPNet::predict(const Vec& fc, const Vec& fr_hat) const {
  require(fc.size() + fr_hat.size() == net.in_dim(), "predict_feature: input dimension mismatch");
  Vec in(fc.size() + fr_hat.size());
  in << fc, fr_hat;
  return net.forward(in);
}

RowMat FPNet::predict_batch(const RowMat& fc, const RowMat& fr_hat, Mlp2BatchCache* cache) const {
  require(fc.rows() == fr_hat.rows() && fc.cols() + fr_hat.cols() == net.in_dim(),
          "predict_feature: input dimension mismatch");
  RowMat in(fc.rows(), fc.cols() + fr_hat.cols());
  in << fc, fr_hat;
  return net.forward_batch(in, cache);
}

ICEncoder ICEncoder::random(const AnchorLayout& layout, uint64_t seed) {
  return {Mlp2::random(layout.residual_dim, kContextHidden, layout.hyper_dim, seed)};
}

Vec ICEncoder::encode(const Vec& fr) const { return net.forward(fr); }

RowMat ICEncoder::encode_batch(const RowMat& fr, Mlp2BatchCache* cache) const {
  return net.forward_batch(fr, cache);
}

PENet PENet::random(const AnchorLayout& layout, uint64_t seed) {
  PENet pe;
  pe.layout = layout;
  pe.net = Mlp2::random(layout.entropy_input_dim(), kEstimateHidden, 3 * layout.channel_count(), seed);
  return pe;
}

double PENet::base_step(int channel) const {
  if (channel < layout.scale_channel()) return base.latent;
  if (channel < layout.offset_channel()) return base.scale;
  return base.offset;
}

RowMat PENet::input_batch(const RowMat& z_hat, const RowMat& fc) const {
  if (!layout.uses_hyperprior()) {
    require(z_hat.size() == 0, "estimate_params: hyperprior given to a model without one");
    return fc;
  }
  require(z_hat.rows() == fc.rows() && z_hat.cols() == layout.hyper_dim,
          "estimate_params: hyperprior shape mismatch");
  RowMat in(fc.rows(), z_hat.cols() + fc.cols());
  in << z_hat, fc;
  return in;
}

void PENet::split(const RowMat& raw, EntropyParamsBatch& out) const {
  const int C = layout.channel_count();
  out.mu = raw.leftCols(C);
  out.sigma = (1e-6 + softplus_array(raw.middleCols(C, C).array())).max(kMinSigma).matrix();
  Eigen::Array<double, 1, Eigen::Dynamic> base_row(C);
  for (int c = 0; c < C; ++c) base_row[c] = base_step(c);
  out.step = (tanh_array(raw.rightCols(C).array()) * 0.5 + 1.0).matrix();
  out.step.array().rowwise() *= base_row;
}

EntropyParams PENet::estimate(const Vec& z_hat, const Vec& fc) const {
  RowMat z = z_hat.size() ? RowMat(z_hat.transpose()) : RowMat();
  EntropyParamsBatch b = estimate_batch(input_batch(z, fc.transpose()));
  return {b.mu.row(0).transpose(), b.sigma.row(0).transpose(), b.step.row(0).transpose()};
}

EntropyParamsBatch PENet::estimate_batch(const RowMat& input, Mlp2BatchCache* cache) const {
  EntropyParamsBatch out;
  out.raw = net.forward_batch(input, cache);
  split(out.raw, out);
  return out;
}

RowMat PENet::raw_gradient(const EntropyParamsBatch& params, const RowMat& d_mu,
                           const RowMat& d_sigma, const RowMat& d_step) const {
  const int C = layout.channel_count();
  const Eigen::Index N = params.raw.rows();
  RowMat d_raw(N, 3 * C);
  d_raw.leftCols(C) = d_mu;
  // At the clamp sigma no longer depends on the raw output.
  d_raw.middleCols(C, C) =
      (params.sigma.array() > kMinSigma)
          .select(d_sigma.array() * sigmoid_array(params.raw.middleCols(C, C).array()), 0.0)
          .matrix();
  Eigen::Array<double, 1, Eigen::Dynamic> half_base(C);
  for (int c = 0; c < C; ++c) half_base[c] = 0.5 * base_step(c);
  auto t = tanh_array(params.raw.rightCols(C).array());
  RowMat ds = (d_step.array() * (1.0 - t * t)).matrix();
  ds.array().rowwise() *= half_base;
  d_raw.rightCols(C) = ds;
  return d_raw;
}

MaskResult offset_mask_apply(const RowMat& logits) {
  MaskResult out;
  out.mask.resize(logits.rows(), logits.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double s = sigmoid(logits.data()[i]);
    out.mask.data()[i] = s >= 0.5 ? 1.0 : 0.0;
    sum += s;
  }
  out.loss = logits.size() ? sum / static_cast<double>(logits.size()) : 0.0;
  return out;
}

void offset_mask_backward(const RowMat& logits, const RowMat& d_mask, double d_loss, RowMat& d_logits) {
  require(d_mask.rows() == logits.rows() && d_mask.cols() == logits.cols() &&
              d_logits.rows() == logits.rows() && d_logits.cols() == logits.cols(),
          "offset_mask_backward: shape mismatch");
  const double per_entry = logits.size() ? d_loss / static_cast<double>(logits.size()) : 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double s = sigmoid(logits.data()[i]);
    d_logits.data()[i] += (d_mask.data()[i] + per_entry) * s * (1.0 - s);
  }
}

}  // namespace az3d
