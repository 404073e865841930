#pragma once

#include "az3d/pipeline.hpp"
#include "az3d/scene.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace az3d {

inline constexpr std::array<char, 4> kStreamMagic{'A', 'Z', '3', 'D'};
inline constexpr uint16_t kStreamVersion = 1;

/// Sections in stream order.
enum class Section : uint8_t {
  Locations,
  Networks,
  Grid,
  HyperTables,
  HyperPayload,
  LatentPayload,
  ScalePayload,
  MaskPayload,
  OffsetPayload,
};
inline constexpr int kSectionCount = 9;
std::string_view section_name(Section s);

class CodecError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, UnsupportedVersion, Truncated, Corrupt };
  CodecError(Kind kind, std::string section, const std::string& detail)
      : std::runtime_error(section + ": " + detail), kind_(kind), section_(std::move(section)) {}
  Kind kind() const { return kind_; }
  const std::string& section() const { return section_; }

 private:
  Kind kind_;
  std::string section_;
};

struct StreamHeader {
  Variant variant = Variant::PredictHyper;
  uint32_t anchors = 0;
  uint16_t offsets = 0;
  uint16_t feature_dim = 0;
  uint16_t residual_dim = 0;
  uint16_t hyper_dim = 0;
  uint16_t condition_dim = 0;
  Aabb bbox;
  uint64_t seed = 0;
  HashGridConfig grid;
  uint32_t chunk_size = 0;  // 0: single stream
  std::array<uint64_t, kSectionCount> section_bytes{};
  uint64_t symbol_digest = 0;

  size_t header_bytes() const;
  uint64_t section_offset(Section s) const;
  AnchorLayout layout() const;
};

/// Symbols that fell outside their table and were clamped, and the ideal bits of what was coded.
/// The clamp count is not stored in the stream: re-encoding a decoded model sees no clamps.
struct EncodeReport {
  StreamHeader header;
  uint32_t clamped = 0;
  double ideal_bits_latent = 0.0;
  double ideal_bits_scale = 0.0;
  double ideal_bits_offset = 0.0;
  double ideal_bits_hyper = 0.0;
};

/// Writes header, locations, networks, grid, hyperprior tables and payload, then the
/// anchor payloads. Throws NumericError for non-finite models.
std::vector<uint8_t> encode_scene(const SceneModel& model, EncodeReport* report = nullptr);

/// Parses only the header.
StreamHeader read_header(std::span<const uint8_t> bytes);

/// Decoder that can only move forward through the stages in stream order; each stage
/// uses nothing but the bytes and what earlier stages produced.
class SceneDecoder {
 public:
  enum class Stage { Header, Locations, Networks, Grid, HyperTables, Hyper, Anchors };

  explicit SceneDecoder(std::span<const uint8_t> bytes);

  const StreamHeader& header() const { return header_; }
  Stage stage() const { return stage_; }

  void read_locations();
  void read_networks();
  void read_grid();
  void read_hyper_tables();
  /// z_hat from the factorized prior. Needs the tables only.
  void decode_hyper();
  /// Residual/feature, scale, mask and offset symbols under PE-Net(z_hat, f_c).
  void decode_anchors();
  /// Runs any remaining stages.
  SceneModel finish();

 private:
  std::span<const uint8_t> section(Section s) const;
  void expect(Stage current, const char* what) const;

  std::span<const uint8_t> bytes_;
  StreamHeader header_;
  Stage stage_ = Stage::Header;
  SceneModel model_;
  double mask_p_ = 0.5;
  std::vector<CdfTable> hyper_tables_;
  RowMat z_hat_;
};

SceneModel decode_scene(std::span<const uint8_t> bytes);

/// 64-bit FNV-1a over the anchor symbols in stream order.
uint64_t symbol_digest(const SymbolMat& symbols, const RowMat& mask, const AnchorLayout& layout);

}  // namespace az3d
