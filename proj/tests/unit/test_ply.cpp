#include "az3d/ply.hpp"

#include "doctest.h"

#include <cstdio>
#include <sstream>

using namespace az3d;

namespace {

TargetAnchorSet sample(int k = 2) {
  SynthSpec spec;
  spec.n = 7;
  spec.k = k;
  spec.seed = 5;
  return synth_targets(spec);
}

void check_same(const TargetAnchorSet& a, const TargetAnchorSet& b) {
  CHECK(a.offset_count == b.offset_count);
  CHECK(a.positions == b.positions);
  CHECK(a.features == b.features);
  CHECK(a.scales == b.scales);
  CHECK(a.offsets == b.offsets);
}

// Minimal ascii file with one vertex, properties in a shuffled order and mixed types.
std::string shuffled_ascii() {
  std::ostringstream h;
  h << "ply\nformat ascii 1.0\ncomment test\nelement vertex 1\n";
  for (int i = 2; i >= 0; --i) h << "property float o_" << i << "\n";
  h << "property double z\nproperty float y\nproperty int x\n";
  for (int i = 0; i < 32; ++i) h << "property float f_" << i << "\n";
  for (int i = 0; i < 3; ++i) h << "property uchar l_" << i << "\n";
  h << "end_header\n";
  h << "0.3 0.2 0.1 2.5 1.5 4";
  for (int i = 0; i < 32; ++i) h << " " << i;
  h << " 1 2 3\n";
  return h.str();
}

}  // namespace

TEST_CASE("ply round trips exactly in both encodings") {
  const TargetAnchorSet t = sample();
  check_same(parse_targets(serialize_targets(t, PlyFormat::Ascii)), t);
  check_same(parse_targets(serialize_targets(t, PlyFormat::BinaryLittleEndian)), t);
}

TEST_CASE("property order and scalar types are free") {
  const TargetAnchorSet t = parse_targets(shuffled_ascii());
  REQUIRE(t.size() == 1);
  CHECK(t.offset_count == 1);
  CHECK(t.positions(0, 0) == 4.0);
  CHECK(t.positions(0, 1) == 1.5);
  CHECK(t.positions(0, 2) == 2.5);
  CHECK(t.offsets(0, 0) == doctest::Approx(0.1));
  CHECK(t.offsets(0, 2) == doctest::Approx(0.3));
  CHECK(t.features(0, 31) == 31.0);
  CHECK(t.scales(0, 2) == 3.0);
}

TEST_CASE("malformed files report what is wrong") {
  auto kind_of = [](const std::string& text) {
    try {
      parse_targets(text);
    } catch (const PlyError& e) {
      return static_cast<int>(e.kind());
    }
    return -1;
  };
  CHECK(kind_of("not a ply") == static_cast<int>(PlyError::Kind::MalformedHeader));
  std::string no_end = shuffled_ascii();
  no_end.erase(no_end.find("end_header"));
  CHECK(kind_of(no_end) == static_cast<int>(PlyError::Kind::MalformedHeader));

  std::string missing = shuffled_ascii();
  missing.replace(missing.find("property float f_7\n"), 19, "");
  CHECK(kind_of(missing) == static_cast<int>(PlyError::Kind::MissingProperty));

  std::string short_body = shuffled_ascii();
  short_body.resize(short_body.size() - 4);
  CHECK(kind_of(short_body) == static_cast<int>(PlyError::Kind::CountMismatch));

  std::string binary = serialize_targets(sample(), PlyFormat::BinaryLittleEndian);
  binary.pop_back();
  CHECK(kind_of(binary) == static_cast<int>(PlyError::Kind::CountMismatch));

  CHECK_THROWS_AS(load_targets("/nonexistent/file.ply"), PlyError);
}

TEST_CASE("ply files on disk") {
  const std::string path = "az3d_test_targets.ply";
  const TargetAnchorSet t = sample(3);
  save_targets(path, t);
  check_same(load_targets(path), t);
  std::remove(path.c_str());
}
