#include "az3d/checkpoint.hpp"
#include "az3d/trainer.hpp"

#include "doctest.h"

#include <cstdio>

using namespace az3d;

namespace {

SceneModel small_model(Variant v) {
  SynthSpec spec;
  spec.n = 40;
  spec.k = 3;
  SceneModel m = init_scene_model(synth_targets(spec), v, 4);
  m.latent.setRandom();
  m.grid.tables[1][5] = 0.123456789012345;
  return m;
}

}  // namespace

TEST_CASE("checkpoints keep every value at full precision") {
  for (Variant v : {Variant::Baseline, Variant::Predict, Variant::PredictHyper}) {
    const SceneModel m = small_model(v);
    const auto bytes = serialize_checkpoint(m);
    const SceneModel back = deserialize_checkpoint(bytes);
    CHECK(back.layout.variant == v);
    CHECK(back.latent == m.latent);
    CHECK(back.grid.tables[1][5] == 0.123456789012345);
    CHECK(back.pe.net.W2 == m.pe.net.W2);
    CHECK(back.heads.color.W1 == m.heads.color.W1);
    CHECK(back.fp.has_value() == m.fp.has_value());
    CHECK(back.ic.has_value() == m.ic.has_value());
    CHECK(serialize_checkpoint(back) == bytes);
  }
}

TEST_CASE("decoded hyperprior values survive a checkpoint") {
  SceneModel m = small_model(Variant::PredictHyper);
  m.decoded_hyper = RowMat::Constant(40, 4, 0.5);
  const SceneModel back = deserialize_checkpoint(serialize_checkpoint(m));
  REQUIRE(back.decoded_hyper.has_value());
  CHECK(*back.decoded_hyper == *m.decoded_hyper);
}

TEST_CASE("damaged checkpoints raise CheckpointError") {
  const auto bytes = serialize_checkpoint(small_model(Variant::Predict));
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad), CheckpointError);
  for (size_t cut : {size_t{3}, size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    CHECK_THROWS_AS(deserialize_checkpoint(std::span(bytes).first(cut)), CheckpointError);
  }
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(deserialize_checkpoint(bad), CheckpointError);
  bad = bytes;
  bad[4] = 9;  // version
  CHECK_THROWS_AS(deserialize_checkpoint(bad), CheckpointError);
}

TEST_CASE("checkpoint files and io errors") {
  const std::string path = "az3d_test_checkpoint.azck";
  const SceneModel m = small_model(Variant::Baseline);
  save_checkpoint(path, m);
  CHECK(load_checkpoint(path).latent == m.latent);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/x.azck"), IoError);
  CHECK_THROWS_AS(save_checkpoint("/nonexistent/dir/x.azck", m), IoError);
}
