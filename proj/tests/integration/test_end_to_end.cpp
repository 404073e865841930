#include "az3d/bitstream.hpp"
#include "az3d/checkpoint.hpp"
#include "az3d/ply.hpp"
#include "az3d/trainer.hpp"

#include "doctest.h"

#include <cstdio>

using namespace az3d;

namespace {

size_t payload_bytes(const StreamHeader& h) {
  size_t b = 0;
  for (Section s : {Section::HyperPayload, Section::LatentPayload, Section::ScalePayload, Section::OffsetPayload}) {
    b += h.section_bytes[static_cast<int>(s)];
  }
  return b;
}

}  // namespace

TEST_CASE("ply scene through training, coding and rendering") {
  SynthSpec spec;
  spec.n = 800;
  spec.seed = 21;
  const TargetAnchorSet original = synth_targets(spec);
  const std::string path = "az3d_e2e_scene.ply";
  save_targets(path, original);
  const TargetAnchorSet targets = load_targets(path);
  std::remove(path.c_str());
  CHECK(targets.features == original.features);

  TrainConfig cfg;
  cfg.iters = 60;
  SceneModel model = init_scene_model(targets, cfg.variant, cfg.seed);
  const TrainResult tr = train(model, targets, cfg);
  CHECK(tr.curve.back().distortion < tr.curve.front().distortion);

  EncodeReport rep;
  const auto bytes = encode_scene(model, &rep);
  const SceneModel decoded = decode_scene(bytes);
  CHECK(encode_scene(decoded) == bytes);

  // Distortion is a property of the decoded values, so coding does not change it.
  const double d_model = evaluate(model, targets, cfg).distortion;
  const double d_decoded = evaluate(decoded, targets, cfg).distortion;
  CHECK(d_decoded == doctest::Approx(d_model).epsilon(1e-4));

  const RateBreakdown est = total_rate(model);
  const double actual = 8.0 * static_cast<double>(payload_bytes(rep.header));
  CHECK(actual <= est.entropy() * 1.01 + 8 * 64 * 4);
  CHECK(actual >= est.entropy() * 0.99 - 8 * 64 * 4);

  const RenderPair pair = render_pair(decoded, targets, 32);
  CHECK(pair.psnr > 15.0);
}

TEST_CASE("checkpoint then code gives the same stream as coding directly") {
  SynthSpec spec;
  spec.n = 300;
  const TargetAnchorSet targets = synth_targets(spec);
  TrainConfig cfg;
  cfg.variant = Variant::Predict;
  cfg.iters = 20;
  SceneModel model = init_scene_model(targets, cfg.variant, 2);
  train(model, targets, cfg);
  const SceneModel restored = deserialize_checkpoint(serialize_checkpoint(model));
  CHECK(encode_scene(restored) == encode_scene(model));
}

TEST_CASE("small ablation produces the three rows") {
  SynthSpec spec;
  spec.n = 400;
  spec.seed = 3;
  const TargetAnchorSet targets = synth_targets(spec);
  TrainConfig cfg;
  cfg.iters = 40;
  const auto rows = ablate(targets, cfg);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].label == "Baseline");
  CHECK(rows[1].label == "W/ predict");
  CHECK(rows[2].label == "W/ predict & hyper");
  for (const AblationRow& r : rows) {
    CHECK(r.coded_bytes > r.latent_bytes);
    CHECK(r.distortion > 0.0);
  }
  // With a fitted prediction network the residual costs far less than the full feature.
  CHECK(rows[1].latent_bytes < rows[0].latent_bytes);
}

TEST_CASE("decoded models evaluate but refuse further training") {
  SynthSpec spec;
  spec.n = 200;
  const TargetAnchorSet targets = synth_targets(spec);
  TrainConfig cfg;
  cfg.iters = 10;
  SceneModel model = init_scene_model(targets, cfg.variant, 1);
  train(model, targets, cfg);
  SceneModel decoded = decode_scene(encode_scene(model));
  CHECK(decoded.decoded_hyper.has_value());
  // The hyperprior encoder is not in the stream, so there is nothing to train z with.
  CHECK(evaluate(decoded, targets, cfg).distortion == doctest::Approx(evaluate(model, targets, cfg).distortion).epsilon(0.05));
  CHECK_THROWS_AS(train(decoded, targets, cfg), ContractViolation);
  CHECK(decoded.all_finite());
}
