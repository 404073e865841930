#pragma once

#include "az3d/range_coder.hpp"
#include "az3d/scene.hpp"

#include <vector>

namespace az3d {

using SymbolMat = Eigen::Matrix<int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// f_c for every anchor, binarized grid view.
RowMat spatial_condition(const SceneModel& model);

/// Per-channel coding tables of the hyperprior lattice z = n * s_c.
std::vector<CdfTable> hyper_tables(const FactorizedDensity& density);

/// Decoder-visible quantities of a model, computed exactly as the decoder will:
/// f_c, z_hat, the entropy parameters, the hard mask and the mean-centered symbols.
/// Attribute symbols are not clamped to coder tables here; the encoder does that.
struct QuantizedScene {
  RowMat fc;
  SymbolMat z_symbols;  // N x hyper_dim, clamped to hyper_tables
  RowMat z_hat;
  EntropyParamsBatch params;
  RowMat mask;
  SymbolMat symbols;  // N x channel_count; masked offsets hold 0
  RowMat values;      // mu + q * symbol (masked offsets 0)
  RowMat features;    // f_p, or the quantized feature for Baseline
};

QuantizedScene quantize_scene(const SceneModel& model);

/// Hyperprior symbols: the stored decoded values, else round(E(f_r) / s).
SymbolMat hyper_symbols(const SceneModel& model, const std::vector<CdfTable>& tables);

/// mu + q * n for all channels from symbols (masked offsets become 0).
RowMat dequantize(const EntropyParamsBatch& params, const SymbolMat& symbols, const RowMat& mask,
                  const AnchorLayout& layout);

/// Features seen by the renderer: FP-Net output or the latent itself.
RowMat decoded_features(const SceneModel& model, const RowMat& fc, const RowMat& latent_hat);

}  // namespace az3d
