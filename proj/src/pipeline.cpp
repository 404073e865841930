#include "az3d/pipeline.hpp"

#include <cmath>

namespace az3d {

RowMat spatial_condition(const SceneModel& model) {
  RowMat fc;
  model.grid.query_batch(model.positions, GridView::Binarized, fc);
  return fc;
}

std::vector<CdfTable> hyper_tables(const FactorizedDensity& density) {
  std::vector<CdfTable> tables;
  for (int c = 0; c < density.channels(); ++c) {
    tables.push_back(
        build_density_table([&](double x) { return density.cdf(c, x); }, density.step(c)));
  }
  return tables;
}

SymbolMat hyper_symbols(const SceneModel& model, const std::vector<CdfTable>& tables) {
  const auto& layout = model.layout;
  const Eigen::Index n = static_cast<Eigen::Index>(model.size());
  SymbolMat sym(n, layout.uses_hyperprior() ? layout.hyper_dim : 0);
  if (!layout.uses_hyperprior()) return sym;
  RowMat z;
  if (model.decoded_hyper) {
    require(model.decoded_hyper->rows() == n && model.decoded_hyper->cols() == layout.hyper_dim,
            "decoded hyperprior has the wrong shape");
    z = *model.decoded_hyper;
  } else {
    require(model.ic.has_value(), "model without IC-Encoder cannot produce a hyperprior");
    z = model.ic->encode_batch(model.latent);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < layout.hyper_dim; ++c) {
      const QuantSpec spec{model.hyper_prior.step(c), 0.0};
      const long s = quantize_symbol(z(i, c), spec);
      sym(i, c) = tables[c].clamp(static_cast<int32_t>(std::clamp<long>(s, INT32_MIN, INT32_MAX)));
    }
  }
  return sym;
}

RowMat dequantize(const EntropyParamsBatch& params, const SymbolMat& symbols, const RowMat& mask,
                  const AnchorLayout& layout) {
  RowMat values(symbols.rows(), symbols.cols());
  const int oc = layout.offset_channel();
  for (Eigen::Index i = 0; i < symbols.rows(); ++i) {
    for (Eigen::Index c = 0; c < symbols.cols(); ++c) {
      if (c >= oc && mask(i, (c - oc) / 3) == 0.0) {
        values(i, c) = 0.0;
        continue;
      }
      values(i, c) = params.mu(i, c) + params.step(i, c) * static_cast<double>(symbols(i, c));
    }
  }
  return values;
}

RowMat decoded_features(const SceneModel& model, const RowMat& fc, const RowMat& latent_hat) {
  if (!model.layout.uses_prediction()) return latent_hat;
  require(model.fp.has_value(), "prediction variant without FP-Net");
  return model.fp->predict_batch(fc, latent_hat);
}

QuantizedScene quantize_scene(const SceneModel& model) {
  const auto& layout = model.layout;
  const Eigen::Index n = static_cast<Eigen::Index>(model.size());
  QuantizedScene q;
  q.fc = spatial_condition(model);

  if (layout.uses_hyperprior()) {
    const auto tables = hyper_tables(model.hyper_prior);
    q.z_symbols = hyper_symbols(model, tables);
    q.z_hat.resize(n, layout.hyper_dim);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int c = 0; c < layout.hyper_dim; ++c) {
        q.z_hat(i, c) = model.hyper_prior.step(c) * static_cast<double>(q.z_symbols(i, c));
      }
    }
  }
  q.params = model.pe.estimate_batch(model.pe.input_batch(q.z_hat, q.fc));
  q.mask = offset_mask_apply(model.mask_logits).mask;

  const int C = layout.channel_count();
  const int L = layout.latent_dim();
  const int oc = layout.offset_channel();
  q.symbols.resize(n, C);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < C; ++c) {
      double v;
      if (c < L) {
        v = model.latent(i, c);
      } else if (c < oc) {
        v = model.scales(i, c - L);
      } else {
        if (q.mask(i, (c - oc) / 3) == 0.0) {
          q.symbols(i, c) = 0;
          continue;
        }
        v = model.offsets(i, c - oc);
      }
      const long s = quantize_symbol(v, {q.params.step(i, c), q.params.mu(i, c)});
      q.symbols(i, c) = static_cast<int32_t>(std::clamp<long>(s, INT32_MIN / 2, INT32_MAX / 2));
    }
  }
  q.values = dequantize(q.params, q.symbols, q.mask, layout);
  q.features = decoded_features(model, q.fc, q.values.leftCols(L));
  return q;
}

}  // namespace az3d
