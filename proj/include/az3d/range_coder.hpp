#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace az3d {

inline constexpr int kProbBits = 16;
inline constexpr uint32_t kProbTotal = 1u << kProbBits;
/// Tail mass a table may leave to its two extreme symbols.
inline constexpr double kTableTailMass = 1.0 / 32768.0;
inline constexpr int kMaxHalfRange = 1 << 12;

/// Discrete model for the range coder: symbol `offset + i` owns [cdf[i], cdf[i+1]).
struct CdfTable {
  int32_t offset = 0;
  std::vector<uint32_t> cdf;  // size() + 1 entries, cdf[0] = 0, back() = 2^16

  size_t size() const { return cdf.empty() ? 0 : cdf.size() - 1; }
  int32_t min_symbol() const { return offset; }
  int32_t max_symbol() const { return offset + static_cast<int32_t>(size()) - 1; }
  bool contains(int32_t symbol) const { return symbol >= min_symbol() && symbol <= max_symbol(); }
  int32_t clamp(int32_t symbol) const;
  uint32_t frequency(int32_t symbol) const;
  double ideal_bits(int32_t symbol) const;
  /// Strictly increasing, starts at 0, ends at 2^16.
  bool valid() const;
};

class TableError : public std::runtime_error {
 public:
  explicit TableError(const std::string& what) : std::runtime_error(what) {}
};

/// Converts a real CDF sampled at symbol boundaries into a table. `lower_edge(i)`
/// returns the cumulative mass below symbol i for i in [1, count); tails fold into the
/// extremes. Every symbol receives at least one count.
CdfTable table_from_cdf(int32_t offset, int count, const std::function<double(int)>& lower_edge);

/// Table for a mean-centered Gaussian lattice (symbol n means mu + n*step).
CdfTable build_gaussian_table(double sigma, double step);
/// Table for a lattice z = n*step under a cumulative function `cdf`.
CdfTable build_density_table(const std::function<double(double)>& cdf, double step);
/// Two-symbol table: symbol 1 with probability p_one.
CdfTable build_bernoulli_table(double p_one);

/// Carry-propagating range coder: 64-bit low, 32-bit range, byte-wise renormalization.
class RangeEncoder {
 public:
  void encode(const CdfTable& table, int32_t symbol);
  std::vector<uint8_t> finish();
  size_t symbols() const { return symbols_; }

 private:
  void shift_low();

  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  uint64_t cache_size_ = 1;
  size_t symbols_ = 0;
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> data);
  int32_t decode(const CdfTable& table);
  /// True once the decoder asked for bytes past the end of its input, or when the input
  /// does not start with the zero byte every encoder output starts with.
  bool failed() const { return overrun_ || bad_lead_; }
  size_t consumed() const { return pos_; }

 private:
  uint8_t next_byte();

  std::span<const uint8_t> data_;
  size_t pos_ = 0;
  uint32_t code_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  bool overrun_ = false;
  bool bad_lead_ = false;
};

/// Encoded size of an empty stream.
inline constexpr size_t kRangeCoderFlushBytes = 5;

std::vector<uint8_t> rc_encode(std::span<const int32_t> symbols, std::span<const CdfTable> tables);
/// Throws std::length_error if tables.size() != n, TableError when the decoder fails.
std::vector<int32_t> rc_decode(std::span<const uint8_t> bytes, std::span<const CdfTable> tables, size_t n);

}  // namespace az3d
