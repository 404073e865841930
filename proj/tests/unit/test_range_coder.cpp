#include "az3d/entropy.hpp"
#include "az3d/range_coder.hpp"
#include "az3d/rng.hpp"

#include "doctest.h"

#include <cmath>

using namespace az3d;

TEST_CASE("empty stream is the flush bytes only") {
  RangeEncoder enc;
  CHECK(enc.finish().size() == kRangeCoderFlushBytes);
}

TEST_CASE("uniform two-symbol table costs one bit per symbol") {
  const CdfTable t = build_bernoulli_table(0.5);
  CHECK(t.valid());
  std::vector<int32_t> syms(8000);
  CounterRng rng(3);
  for (auto& s : syms) s = static_cast<int32_t>(rng.next_u64() & 1);
  const std::vector<CdfTable> tables(syms.size(), t);
  const auto bytes = rc_encode(syms, tables);
  CHECK(bytes.size() <= 1000 + kRangeCoderFlushBytes);
  CHECK(rc_decode(bytes, tables, syms.size()) == syms);
}

TEST_CASE("mixed tables round trip and stay close to the ideal length") {
  CounterRng rng(17);
  std::vector<CdfTable> palette;
  for (int k = 0; k < 20; ++k) palette.push_back(build_gaussian_table(std::exp(rng.uniform(-3, 4)), 1.0));
  palette.push_back(build_bernoulli_table(0.02));
  std::vector<int32_t> syms;
  std::vector<CdfTable> tables;
  double ideal = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const CdfTable& t = palette[rng.next_u64() % palette.size()];
    // Draw by inverse cdf.
    const uint32_t u = static_cast<uint32_t>(rng.next_u64() % kProbTotal);
    const auto it = std::upper_bound(t.cdf.begin(), t.cdf.end(), u);
    const int32_t s = t.offset + static_cast<int32_t>(it - t.cdf.begin()) - 1;
    syms.push_back(s);
    tables.push_back(t);
    ideal += t.ideal_bits(s);
  }
  const auto bytes = rc_encode(syms, tables);
  CHECK(rc_decode(bytes, tables, syms.size()) == syms);
  CHECK(8.0 * bytes.size() <= ideal * 1.001 + 64);
}

TEST_CASE("symbols outside a table are rejected by the encoder") {
  const CdfTable t = build_gaussian_table(1.0, 1.0);
  RangeEncoder enc;
  CHECK_THROWS_AS(enc.encode(t, t.max_symbol() + 1), TableError);
  CHECK(t.clamp(t.max_symbol() + 100) == t.max_symbol());
}

TEST_CASE("decoder flags reads past the end of the input") {
  const CdfTable t = build_gaussian_table(50.0, 1.0);
  std::vector<int32_t> syms(500, 17);
  const std::vector<CdfTable> tables(syms.size(), t);
  auto bytes = rc_encode(syms, tables);
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(rc_decode(bytes, tables, syms.size()), TableError);
  CHECK_THROWS_AS(rc_decode(bytes, tables, syms.size() + 1), std::length_error);
}

TEST_CASE("gaussian tables are valid across scales") {
  for (double sigma : {kMinSigma, 0.01, 0.3, 1.0, 7.0, 400.0, 1e6}) {
    const CdfTable t = build_gaussian_table(sigma, 1.0);
    CHECK(t.valid());
    CHECK(t.min_symbol() == -t.max_symbol());
    CHECK(t.max_symbol() <= kMaxHalfRange);
  }
  CHECK(build_gaussian_table(kMinSigma, 1.0).size() == 1);
  CHECK_THROWS_AS(build_gaussian_table(0.0, 1.0), TableError);
  CHECK_THROWS_AS(build_gaussian_table(1.0, -1.0), TableError);
  CHECK_THROWS_AS(build_gaussian_table(NAN, 1.0), TableError);
}

TEST_CASE("table masses follow the gaussian bin masses") {
  const double sigma = 2.0;
  const CdfTable t = build_gaussian_table(sigma, 1.0);
  for (int s : {0, 1, -3, 5}) {
    const double p = static_cast<double>(t.frequency(s)) / kProbTotal;
    CHECK(p == doctest::Approx(gaussian_bits(s, 0.0, sigma, 1.0).p).epsilon(2e-3));
  }
}

TEST_CASE("table_from_cdf keeps one count per symbol") {
  const CdfTable t = table_from_cdf(-2, 5, [](int i) { return i < 3 ? 0.0 : 1.0; });
  CHECK(t.valid());
  CHECK(t.frequency(-2) >= 1);
  CHECK(t.frequency(2) >= 1);
  CHECK_THROWS_AS(table_from_cdf(0, 0, [](int) { return 0.0; }), TableError);
  CHECK_THROWS_AS(table_from_cdf(0, 3, [](int) { return NAN; }), TableError);
}

TEST_CASE("bernoulli tables reserve mass for both outcomes") {
  for (double p : {0.0, 1e-9, 0.3, 1.0}) {
    const CdfTable t = build_bernoulli_table(p);
    CHECK(t.valid());
    CHECK(t.size() == 2);
  }
  const CdfTable t = build_bernoulli_table(0.25);
  CHECK(t.cdf[1] == 49152u);
}

TEST_CASE("streams must start with the zero lead byte") {
  const CdfTable t = build_gaussian_table(3.0, 1.0);
  const std::vector<int32_t> syms{1, -2, 0, 4};
  const std::vector<CdfTable> tables(syms.size(), t);
  auto bytes = rc_encode(syms, tables);
  REQUIRE(bytes[0] == 0);
  bytes[0] = 1;
  CHECK_THROWS_AS(rc_decode(bytes, tables, syms.size()), TableError);
}
