#include "az3d/bitstream.hpp"
#include "az3d/pipeline.hpp"
#include "az3d/trainer.hpp"

#include "doctest.h"

using namespace az3d;

namespace {

SceneModel trained(Variant v, size_t n = 60) {
  SynthSpec spec;
  spec.n = n;
  spec.k = 3;
  spec.seed = 2;
  const TargetAnchorSet t = synth_targets(spec);
  SceneModel m = init_scene_model(t, v, 7);
  TrainConfig cfg;
  cfg.variant = v;
  cfg.iters = 8;
  train(m, t, cfg);
  return m;
}

}  // namespace

TEST_CASE("spatial condition has one grid row per anchor") {
  const SceneModel m = trained(Variant::Predict);
  const RowMat fc = spatial_condition(m);
  CHECK(fc.rows() == 60);
  CHECK(fc.cols() == m.layout.condition_dim);
  CHECK((fc.row(3).transpose() - m.grid.query(m.positions.row(3).transpose())).norm() < 1e-12);
}

TEST_CASE("quantized values sit on the mean-centered lattice") {
  for (Variant v : {Variant::Baseline, Variant::Predict, Variant::PredictHyper}) {
    const SceneModel m = trained(v);
    const QuantizedScene q = quantize_scene(m);
    const AnchorLayout& L = m.layout;
    CHECK(q.symbols.rows() == 60);
    CHECK(q.symbols.cols() == L.channel_count());
    CHECK(q.z_symbols.cols() == (L.uses_hyperprior() ? L.hyper_dim : 0));
    const RowMat again = dequantize(q.params, q.symbols, q.mask, L);
    CHECK(again == q.values);
    for (Eigen::Index n = 0; n < 60; ++n) {
      for (int c = 0; c < L.latent_dim(); ++c) {
        CHECK(q.values(n, c) == q.params.mu(n, c) + q.params.step(n, c) * q.symbols(n, c));
      }
      for (int i = 0; i < L.offsets; ++i) {
        if (q.mask(n, i) == 0.0) {
          for (int d = 0; d < 3; ++d) CHECK(q.values(n, L.offset_channel() + 3 * i + d) == 0.0);
        }
      }
    }
    const RowMat feats = decoded_features(m, q.fc, q.values.leftCols(L.latent_dim()));
    CHECK(feats == q.features);
  }
}

TEST_CASE("hyperprior tables are valid and symbols stay inside them") {
  const SceneModel m = trained(Variant::PredictHyper);
  const auto tables = hyper_tables(m.hyper_prior);
  REQUIRE(tables.size() == 4);
  for (const auto& t : tables) CHECK(t.valid());
  const SymbolMat z = hyper_symbols(m, tables);
  for (Eigen::Index n = 0; n < z.rows(); ++n) {
    for (int c = 0; c < 4; ++c) CHECK(tables[c].contains(z(n, c)));
  }
}

TEST_CASE("the decoder sees exactly what the encoder quantized") {
  for (Variant v : {Variant::Baseline, Variant::Predict, Variant::PredictHyper}) {
    SceneModel m = trained(v);
    EncodeReport rep;
    const SceneModel d = decode_scene(encode_scene(m, &rep));
    // The stream stores networks, grid and positions as f32.
    m.round_stored_to_float();
    QuantizedScene qm = quantize_scene(m);
    const QuantizedScene qd = quantize_scene(d);
    // The encoder clamps symbols that fall outside their coding table.
    for (Eigen::Index n = 0; n < qm.symbols.rows(); ++n) {
      for (Eigen::Index c = 0; c < qm.symbols.cols(); ++c) {
        const CdfTable t = build_gaussian_table(qm.params.sigma(n, c), qm.params.step(n, c));
        qm.symbols(n, c) = t.clamp(qm.symbols(n, c));
      }
    }
    CHECK(qd.symbols == qm.symbols);
    CHECK(qd.mask == qm.mask);
    if (rep.clamped == 0) CHECK((qd.features - qm.features).cwiseAbs().maxCoeff() < 1e-5);
  }
}
