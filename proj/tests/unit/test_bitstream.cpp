#include "az3d/bitstream.hpp"
#include "az3d/trainer.hpp"

#include "doctest.h"

#include <numeric>

using namespace az3d;

namespace {

struct Fixture {
  TargetAnchorSet targets;
  SceneModel model;
};

Fixture trained(Variant v, size_t n = 80) {
  SynthSpec spec;
  spec.n = n;
  spec.k = 4;
  spec.seed = 9;
  Fixture f{synth_targets(spec), {}};
  f.model = init_scene_model(f.targets, v, 3);
  TrainConfig cfg;
  cfg.variant = v;
  cfg.iters = 10;
  train(f.model, f.targets, cfg);
  return f;
}

}  // namespace

TEST_CASE("encode, decode and re-encode are byte identical") {
  for (Variant v : {Variant::Baseline, Variant::Predict, Variant::PredictHyper}) {
    const Fixture f = trained(v);
    EncodeReport rep;
    const auto bytes = encode_scene(f.model, &rep);
    const SceneModel d = decode_scene(bytes);
    CHECK(d.layout.variant == v);
    CHECK(d.size() == f.model.size());
    CHECK(encode_scene(d) == bytes);
    CHECK(rep.header.anchors == 80u);
  }
}

TEST_CASE("header sections account for every byte") {
  const Fixture f = trained(Variant::PredictHyper);
  const auto bytes = encode_scene(f.model);
  const StreamHeader h = read_header(bytes);
  const uint64_t sum = std::accumulate(h.section_bytes.begin(), h.section_bytes.end(), uint64_t{0});
  CHECK(h.header_bytes() + sum == bytes.size());
  CHECK(h.section_offset(Section::Locations) == h.header_bytes());
  CHECK(h.section_bytes[static_cast<int>(Section::Locations)] == 12u * 80u);
  CHECK(h.layout().channel_count() == f.model.layout.channel_count());
  CHECK(section_name(Section::HyperPayload) != section_name(Section::LatentPayload));
}

TEST_CASE("stages run in stream order only") {
  const Fixture f = trained(Variant::PredictHyper);
  const auto bytes = encode_scene(f.model);
  SceneDecoder dec(bytes);
  CHECK_THROWS_AS(dec.read_grid(), ContractViolation);
  dec.read_locations();
  CHECK(dec.stage() == SceneDecoder::Stage::Locations);
  CHECK_THROWS_AS(dec.decode_anchors(), ContractViolation);
  dec.read_networks();
  dec.read_grid();
  dec.read_hyper_tables();
  dec.decode_hyper();
  dec.decode_anchors();
  CHECK(dec.stage() == SceneDecoder::Stage::Anchors);
  CHECK(encode_scene(dec.finish()) == bytes);
}

TEST_CASE("a damaged hyperprior payload fails residual decoding only") {
  const Fixture f = trained(Variant::PredictHyper);
  auto bytes = encode_scene(f.model);
  const StreamHeader h = read_header(bytes);
  const auto off = h.section_offset(Section::HyperPayload);
  const auto len = h.section_bytes[static_cast<int>(Section::HyperPayload)];
  REQUIRE(len > 0);
  for (uint64_t i = 0; i < len; ++i) bytes[off + i] ^= 0xA5;

  for (int attempt = 0; attempt < 2; ++attempt) {
    SceneDecoder dec(bytes);
    dec.read_locations();
    dec.read_networks();
    dec.read_grid();
    dec.read_hyper_tables();
    try {
      dec.decode_hyper();
      dec.decode_anchors();
      FAIL("corrupted stream decoded");
    } catch (const CodecError& e) {
      const std::string where = e.section();
      CHECK((where == section_name(Section::HyperPayload) || where == section_name(Section::LatentPayload)));
    }
  }
}

TEST_CASE("malformed headers raise typed codec errors") {
  const Fixture f = trained(Variant::Predict, 20);
  const auto bytes = encode_scene(f.model);
  auto kind = [](std::vector<uint8_t> b) {
    try {
      decode_scene(b);
    } catch (const CodecError& e) {
      return e.kind();
    }
    FAIL("expected CodecError");
    return CodecError::Kind::Corrupt;
  };
  auto bad = bytes;
  bad[0] = 'X';
  CHECK(kind(bad) == CodecError::Kind::BadMagic);
  bad = bytes;
  bad[4] = 0x7F;
  CHECK(kind(bad) == CodecError::Kind::UnsupportedVersion);
  CHECK(kind({bytes.begin(), bytes.begin() + 3}) == CodecError::Kind::Truncated);
  CHECK(kind({bytes.begin(), bytes.end() - 1}) == CodecError::Kind::Truncated);
  bad = bytes;
  bad.push_back(0);
  CHECK(kind(bad) == CodecError::Kind::Corrupt);
}

TEST_CASE("non-finite models are not encoded") {
  Fixture f = trained(Variant::Baseline, 10);
  f.model.latent(0, 0) = NAN;
  CHECK_THROWS_AS(encode_scene(f.model), NumericError);
}

TEST_CASE("symbol digest depends on every coded symbol") {
  AnchorLayout L;
  L.offsets = 1;
  SymbolMat s = SymbolMat::Zero(2, L.channel_count());
  const RowMat mask = RowMat::Ones(2, 1);
  const uint64_t a = symbol_digest(s, mask, L);
  s(1, 3) = 1;
  CHECK(symbol_digest(s, mask, L) != a);
}
