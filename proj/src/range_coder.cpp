#include "az3d/range_coder.hpp"

#include "az3d/entropy.hpp"

#include <algorithm>
#include <cmath>

namespace az3d {

int32_t CdfTable::clamp(int32_t symbol) const {
  return std::clamp(symbol, min_symbol(), max_symbol());
}

uint32_t CdfTable::frequency(int32_t symbol) const {
  const size_t i = static_cast<size_t>(symbol - offset);
  return cdf[i + 1] - cdf[i];
}

double CdfTable::ideal_bits(int32_t symbol) const {
  return static_cast<double>(kProbBits) - std::log2(static_cast<double>(frequency(symbol)));
}

bool CdfTable::valid() const {
  if (cdf.size() < 2 || cdf.front() != 0 || cdf.back() != kProbTotal) return false;
  for (size_t i = 1; i < cdf.size(); ++i) {
    if (cdf[i] <= cdf[i - 1]) return false;
  }
  return true;
}

CdfTable table_from_cdf(int32_t offset, int count, const std::function<double(int)>& lower_edge) {
  if (count < 1 || count > static_cast<int>(kProbTotal)) {
    throw TableError("table_from_cdf: symbol count out of range");
  }
  CdfTable t;
  t.offset = offset;
  t.cdf.assign(static_cast<size_t>(count) + 1, 0);
  t.cdf[count] = kProbTotal;
  for (int i = 1; i < count; ++i) {
    const double F = lower_edge(i);
    if (!std::isfinite(F)) throw TableError("table_from_cdf: non-finite cumulative");
    t.cdf[i] = static_cast<uint32_t>(std::lround(std::clamp(F, 0.0, 1.0) * kProbTotal));
  }
  // Enforce at least one count per symbol: forward then backward.
  for (int i = 1; i < count; ++i) t.cdf[i] = std::max(t.cdf[i], t.cdf[i - 1] + 1);
  for (int i = count - 1; i >= 1; --i) t.cdf[i] = std::min(t.cdf[i], t.cdf[i + 1] - 1);
  return t;
}

namespace {

// z such that Phi(-z) = kTableTailMass / 2, by bisection.
double gaussian_tail_bound() {
  static const double bound = [] {
    double lo = 0.0, hi = 10.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (normal_cdf(-mid) > 0.5 * kTableTailMass ? lo : hi) = mid;
    }
    return hi;
  }();
  return bound;
}

}  // namespace

CdfTable build_gaussian_table(double sigma, double step) {
  if (!(sigma >= kMinSigma * (1.0 - 1e-12)) || !std::isfinite(sigma) || !(step > 0.0) ||
      !std::isfinite(step)) {
    throw TableError("build_gaussian_table: degenerate sigma or step");
  }
  const double ratio = sigma / step;
  const double half_real = std::ceil(gaussian_tail_bound() * ratio - 0.5);
  const int half = static_cast<int>(std::clamp(half_real, 0.0, static_cast<double>(kMaxHalfRange)));
  const double inv = step / sigma;
  return table_from_cdf(-half, 2 * half + 1, [&](int i) {
    return normal_cdf((static_cast<double>(i - half) - 0.5) * inv);
  });
}

CdfTable build_density_table(const std::function<double(double)>& cdf, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw TableError("build_density_table: bad step");
  int half = 0;
  while (half < kMaxHalfRange) {
    const double edge = (half + 0.5) * step;
    if (cdf(edge) - cdf(-edge) >= 1.0 - kTableTailMass) break;
    ++half;
  }
  return table_from_cdf(-half, 2 * half + 1,
                        [&](int i) { return cdf((static_cast<double>(i - half) - 0.5) * step); });
}

CdfTable build_bernoulli_table(double p_one) {
  CdfTable t;
  t.offset = 0;
  const double p0 = std::clamp(1.0 - p_one, 0.0, 1.0);
  const long split = std::clamp<long>(std::lround(p0 * kProbTotal), 1, kProbTotal - 1);
  t.cdf = {0, static_cast<uint32_t>(split), kProbTotal};
  return t;
}

// ---------------------------------------------------------------------------

void RangeEncoder::shift_low() {
  if (static_cast<uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const uint8_t carry = static_cast<uint8_t>(low_ >> 32);
    uint8_t temp = cache_;
    do {
      out_.push_back(static_cast<uint8_t>(temp + carry));
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::encode(const CdfTable& table, int32_t symbol) {
  if (!table.contains(symbol)) throw TableError("range coder: symbol outside table");
  const size_t i = static_cast<size_t>(symbol - table.offset);
  const uint32_t r = range_ >> kProbBits;
  low_ += static_cast<uint64_t>(r) * table.cdf[i];
  range_ = r * (table.cdf[i + 1] - table.cdf[i]);
  while (range_ < (1u << 24)) {
    range_ <<= 8;
    shift_low();
  }
  ++symbols_;
}

std::vector<uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> data) : data_(data) {
  // The first byte is shifted out of the 32-bit code, so it carries no information.
  bad_lead_ = !data.empty() && data[0] != 0;
  for (int i = 0; i < 5; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
  if (pos_ < data_.size()) return data_[pos_++];
  overrun_ = true;
  return 0;
}

int32_t RangeDecoder::decode(const CdfTable& table) {
  const uint32_t r = range_ >> kProbBits;
  const uint32_t value = std::min<uint32_t>(code_ / r, kProbTotal - 1);
  // Largest i with cdf[i] <= value.
  const auto it = std::upper_bound(table.cdf.begin(), table.cdf.end(), value);
  const size_t i = static_cast<size_t>(std::distance(table.cdf.begin(), it)) - 1;
  code_ -= r * table.cdf[i];
  range_ = r * (table.cdf[i + 1] - table.cdf[i]);
  while (range_ < (1u << 24)) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
  return table.offset + static_cast<int32_t>(i);
}

std::vector<uint8_t> rc_encode(std::span<const int32_t> symbols, std::span<const CdfTable> tables) {
  if (symbols.size() != tables.size()) throw std::length_error("rc_encode: one table per symbol required");
  RangeEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) enc.encode(tables[i], symbols[i]);
  return enc.finish();
}

std::vector<int32_t> rc_decode(std::span<const uint8_t> bytes, std::span<const CdfTable> tables, size_t n) {
  if (tables.size() != n) throw std::length_error("rc_decode: table count does not match symbol count");
  RangeDecoder dec(bytes);
  std::vector<int32_t> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = dec.decode(tables[i]);
  if (dec.failed()) throw TableError("rc_decode: stream ended before all symbols were decoded");
  return out;
}

}  // namespace az3d
