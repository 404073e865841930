#include "az3d/bitstream.hpp"

#include "az3d/bytes.hpp"
#include "az3d/diffmath.hpp"

#include <cmath>
#include <cstring>

namespace az3d {

std::string_view section_name(Section s) {
  switch (s) {
    case Section::Locations:
      return "locations";
    case Section::Networks:
      return "networks";
    case Section::Grid:
      return "grid";
    case Section::HyperTables:
      return "hyperprior tables";
    case Section::HyperPayload:
      return "hyperprior payload";
    case Section::LatentPayload:
      return "latent payload";
    case Section::ScalePayload:
      return "scale payload";
    case Section::MaskPayload:
      return "mask payload";
    case Section::OffsetPayload:
      return "offset payload";
  }
  return "unknown";
}

namespace {

constexpr double kDecodedMaskLogit = 10.0;
constexpr double kMaskProbClamp = 1e-4;

CodecError corrupt(Section s, const std::string& detail) {
  return CodecError(CodecError::Kind::Corrupt, std::string(section_name(s)), detail);
}

void write_header(ByteWriter& w, const StreamHeader& h) {
  for (char c : kStreamMagic) w.u8(static_cast<uint8_t>(c));
  w.u16(kStreamVersion);
  w.u8(static_cast<uint8_t>(h.variant));
  w.u8(0);
  w.u32(h.anchors);
  w.u16(h.offsets);
  w.u16(h.feature_dim);
  w.u16(h.residual_dim);
  w.u16(h.hyper_dim);
  w.u16(h.condition_dim);
  for (int d = 0; d < 3; ++d) w.f64(h.bbox.min[d]);
  for (int d = 0; d < 3; ++d) w.f64(h.bbox.max[d]);
  w.u64(h.seed);
  w.u8(static_cast<uint8_t>(h.grid.levels));
  w.u8(static_cast<uint8_t>(h.grid.table_size_log2));
  w.u8(static_cast<uint8_t>(h.grid.feat_per_level));
  w.u8(0);
  w.u16(static_cast<uint16_t>(h.grid.base_resolution));
  w.u16(static_cast<uint16_t>(h.grid.max_resolution));
  w.u32(h.chunk_size);
  w.u8(kSectionCount);
  for (uint64_t b : h.section_bytes) w.u64(b);
  w.u64(h.symbol_digest);
}

uint64_t fnv_step(uint64_t h, int32_t v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  for (int i = 0; i < 4; ++i) {
    h ^= (u >> (8 * i)) & 0xFFu;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void check_layout(const SceneModel& m) {
  const auto& L = m.layout;
  const auto n = static_cast<Eigen::Index>(m.size());
  require(m.latent.rows() == n && m.latent.cols() == L.latent_dim() && m.scales.rows() == n &&
              m.scales.cols() == 3 && m.offsets.rows() == n && m.offsets.cols() == 3 * L.offsets &&
              m.mask_logits.rows() == n && m.mask_logits.cols() == L.offsets,
          "encode_scene: anchor tensors do not match the layout");
  require(m.fp.has_value() == L.uses_prediction(), "encode_scene: FP-Net presence does not match the variant");
  require(m.ic.has_value() == L.uses_hyperprior() || m.decoded_hyper.has_value(),
          "encode_scene: IC-Encoder presence does not match the variant");
  require(m.hyper_prior.channels() == (L.uses_hyperprior() ? L.hyper_dim : 0),
          "encode_scene: hyperprior channel count does not match the variant");
  require(m.grid.config().dim() == L.condition_dim, "encode_scene: grid dimension mismatch");
}

double mask_probability(const RowMat& mask) {
  const double frac = mask.size() ? mask.sum() / static_cast<double>(mask.size()) : 0.5;
  return static_cast<float>(std::clamp(frac, kMaskProbClamp, 1.0 - kMaskProbClamp));
}

}  // namespace

size_t StreamHeader::header_bytes() const {
  ByteWriter w;
  write_header(w, *this);
  return w.size();
}

uint64_t StreamHeader::section_offset(Section s) const {
  uint64_t off = header_bytes();
  for (int i = 0; i < static_cast<int>(s); ++i) off += section_bytes[i];
  return off;
}

AnchorLayout StreamHeader::layout() const {
  AnchorLayout l;
  l.variant = variant;
  l.feature_dim = feature_dim;
  l.residual_dim = residual_dim;
  l.hyper_dim = hyper_dim;
  l.offsets = offsets;
  l.condition_dim = condition_dim;
  return l;
}

uint64_t symbol_digest(const SymbolMat& symbols, const RowMat& mask, const AnchorLayout& layout) {
  uint64_t h = 0xcbf29ce484222325ULL;
  const int oc = layout.offset_channel();
  for (Eigen::Index i = 0; i < symbols.rows(); ++i) {
    for (int c = 0; c < oc; ++c) h = fnv_step(h, symbols(i, c));
    for (int j = 0; j < layout.offsets; ++j) {
      const bool kept = mask(i, j) != 0.0;
      h = fnv_step(h, kept ? 1 : 0);
      if (!kept) continue;
      for (int d = 0; d < 3; ++d) h = fnv_step(h, symbols(i, oc + 3 * j + d));
    }
  }
  return h;
}

std::vector<uint8_t> encode_scene(const SceneModel& input, EncodeReport* report) {
  if (!input.all_finite()) throw NumericError("encode_scene: refusing to encode a model with non-finite values");
  check_layout(input);
  SceneModel m = input;
  m.round_stored_to_float();
  const AnchorLayout& L = m.layout;
  const auto n = static_cast<Eigen::Index>(m.size());
  require(m.size() <= UINT32_MAX, "encode_scene: too many anchors");

  QuantizedScene q = quantize_scene(m);
  EncodeReport rep;
  std::array<std::vector<uint8_t>, kSectionCount> sec;

  {
    ByteWriter w;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int d = 0; d < 3; ++d) w.f32(static_cast<float>(m.positions(i, d)));
    }
    sec[static_cast<int>(Section::Locations)] = w.take();
  }
  const double mask_p = mask_probability(q.mask);
  {
    ByteWriter w;
    w.u8((m.fp ? 1 : 0) | (L.uses_hyperprior() ? 2 : 0));
    if (m.fp) write_mlp(w, m.fp->net);
    if (L.uses_hyperprior()) {
      // A decoded model has no encoder; its slot keeps a zero network of the right shape.
      write_mlp(w, m.ic ? m.ic->net : Mlp2(L.residual_dim, kContextHidden, L.hyper_dim));
    }
    write_mlp(w, m.pe.net);
    write_mlp(w, m.heads.opacity);
    write_mlp(w, m.heads.covariance);
    write_mlp(w, m.heads.color);
    w.f32(static_cast<float>(mask_p));
    sec[static_cast<int>(Section::Networks)] = w.take();
  }
  {
    ByteWriter w;
    const int F = m.grid.config().feat_per_level;
    for (int l = 0; l < m.grid.levels(); ++l) {
      w.f32(static_cast<float>(m.grid.level_scale[l]));
      w.f32(static_cast<float>(m.grid.bernoulli_logit[l]));
      const CdfTable table = build_bernoulli_table(m.grid.bernoulli_p(l));
      RangeEncoder enc;
      for (size_t i = 0; i < m.grid.rows(l) * F; ++i) enc.encode(table, m.grid.tables[l][i] >= 0.0 ? 1 : 0);
      const auto bytes = enc.finish();
      w.u32(static_cast<uint32_t>(bytes.size()));
      w.bytes(bytes);
    }
    sec[static_cast<int>(Section::Grid)] = w.take();
  }
  {
    ByteWriter w;
    for (int c = 0; c < m.hyper_prior.channels(); ++c) {
      w.f32(static_cast<float>(m.hyper_prior.raw_step[c]));
      for (int p = 0; p < kDensityParamCount; ++p) w.f32(static_cast<float>(m.hyper_prior.params(c, p)));
    }
    sec[static_cast<int>(Section::HyperTables)] = w.take();
  }
  {
    RangeEncoder enc;
    if (L.uses_hyperprior()) {
      const auto tables = hyper_tables(m.hyper_prior);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int c = 0; c < L.hyper_dim; ++c) {
          enc.encode(tables[c], q.z_symbols(i, c));
          rep.ideal_bits_hyper += tables[c].ideal_bits(q.z_symbols(i, c));
        }
      }
    }
    sec[static_cast<int>(Section::HyperPayload)] = enc.finish();
  }

  // Anchor payloads, each in anchor index order.
  auto code_channel = [&](RangeEncoder& enc, Eigen::Index i, int c, double& ideal) {
    const CdfTable table = build_gaussian_table(q.params.sigma(i, c), q.params.step(i, c));
    int32_t s = q.symbols(i, c);
    if (!table.contains(s)) {
      s = table.clamp(s);
      q.symbols(i, c) = s;
      ++rep.clamped;
    }
    enc.encode(table, s);
    ideal += table.ideal_bits(s);
  };
  const int Ld = L.latent_dim();
  const int oc = L.offset_channel();
  {
    RangeEncoder enc;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int c = 0; c < Ld; ++c) code_channel(enc, i, c, rep.ideal_bits_latent);
    }
    sec[static_cast<int>(Section::LatentPayload)] = enc.finish();
  }
  {
    RangeEncoder enc;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int c = Ld; c < oc; ++c) code_channel(enc, i, c, rep.ideal_bits_scale);
    }
    sec[static_cast<int>(Section::ScalePayload)] = enc.finish();
  }
  {
    RangeEncoder enc;
    const CdfTable table = build_bernoulli_table(mask_p);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int j = 0; j < L.offsets; ++j) enc.encode(table, q.mask(i, j) != 0.0 ? 1 : 0);
    }
    sec[static_cast<int>(Section::MaskPayload)] = enc.finish();
  }
  {
    RangeEncoder enc;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int j = 0; j < L.offsets; ++j) {
        if (q.mask(i, j) == 0.0) continue;
        for (int d = 0; d < 3; ++d) code_channel(enc, i, oc + 3 * j + d, rep.ideal_bits_offset);
      }
    }
    sec[static_cast<int>(Section::OffsetPayload)] = enc.finish();
  }

  StreamHeader& h = rep.header;
  h.variant = L.variant;
  h.anchors = static_cast<uint32_t>(n);
  h.offsets = static_cast<uint16_t>(L.offsets);
  h.feature_dim = static_cast<uint16_t>(L.feature_dim);
  h.residual_dim = static_cast<uint16_t>(L.residual_dim);
  h.hyper_dim = static_cast<uint16_t>(L.hyper_dim);
  h.condition_dim = static_cast<uint16_t>(L.condition_dim);
  h.bbox = m.grid.config().bbox;
  h.seed = m.seed;
  h.grid = m.grid.config();
  h.chunk_size = 0;
  for (int s = 0; s < kSectionCount; ++s) h.section_bytes[s] = sec[s].size();
  h.symbol_digest = symbol_digest(q.symbols, q.mask, L);

  ByteWriter out;
  write_header(out, h);
  for (const auto& s : sec) out.bytes(s);
  if (report) *report = rep;
  return out.take();
}

StreamHeader read_header(std::span<const uint8_t> bytes) {
  const std::string where = "header";
  if (bytes.size() < 6) throw CodecError(CodecError::Kind::Truncated, where, "stream shorter than magic and version");
  if (std::memcmp(bytes.data(), kStreamMagic.data(), 4) != 0) {
    throw CodecError(CodecError::Kind::BadMagic, where, "not an AZ3D stream");
  }
  ByteReader r(bytes);
  r.bytes(4);
  const uint16_t version = r.u16();
  if (version != kStreamVersion) {
    throw CodecError(CodecError::Kind::UnsupportedVersion, where,
                     "stream version " + std::to_string(version) + " is not supported");
  }
  StreamHeader h;
  try {
    const uint8_t variant = r.u8();
    if (variant > 2) throw CodecError(CodecError::Kind::Corrupt, where, "unknown variant");
    h.variant = static_cast<Variant>(variant);
    r.u8();
    h.anchors = r.u32();
    h.offsets = r.u16();
    h.feature_dim = r.u16();
    h.residual_dim = r.u16();
    h.hyper_dim = r.u16();
    h.condition_dim = r.u16();
    for (int d = 0; d < 3; ++d) h.bbox.min[d] = r.f64();
    for (int d = 0; d < 3; ++d) h.bbox.max[d] = r.f64();
    h.seed = r.u64();
    h.grid.levels = r.u8();
    h.grid.table_size_log2 = r.u8();
    h.grid.feat_per_level = r.u8();
    r.u8();
    h.grid.base_resolution = r.u16();
    h.grid.max_resolution = r.u16();
    h.grid.bbox = h.bbox;
    h.chunk_size = r.u32();
    const uint8_t count = r.u8();
    if (count != kSectionCount) throw CodecError(CodecError::Kind::Corrupt, where, "unexpected section count");
    for (auto& b : h.section_bytes) b = r.u64();
    h.symbol_digest = r.u64();
  } catch (const ByteUnderflow&) {
    throw CodecError(CodecError::Kind::Truncated, where, "header is incomplete");
  }
  if (h.chunk_size != 0) throw CodecError(CodecError::Kind::Corrupt, where, "chunked streams are not supported");
  if (h.offsets == 0 || h.feature_dim == 0 || h.residual_dim == 0 || h.condition_dim == 0 ||
      (h.variant == Variant::PredictHyper && h.hyper_dim == 0)) {
    throw CodecError(CodecError::Kind::Corrupt, where, "zero dimension");
  }
  if (!h.bbox.min.allFinite() || !h.bbox.max.allFinite() || (h.bbox.max.array() < h.bbox.min.array()).any()) {
    throw CodecError(CodecError::Kind::Corrupt, where, "invalid bounding box");
  }
  try {
    h.grid.validate();
  } catch (const ContractViolation& e) {
    throw CodecError(CodecError::Kind::Corrupt, where, e.what());
  }
  if (h.grid.dim() != h.condition_dim) throw CodecError(CodecError::Kind::Corrupt, where, "grid dimension mismatch");

  uint64_t end = h.header_bytes();
  for (int s = 0; s < kSectionCount; ++s) {
    if (h.section_bytes[s] > bytes.size() || end + h.section_bytes[s] > bytes.size()) {
      throw CodecError(CodecError::Kind::Truncated, std::string(section_name(static_cast<Section>(s))),
                       "section extends past the end of the stream");
    }
    end += h.section_bytes[s];
  }
  if (end != bytes.size()) throw CodecError(CodecError::Kind::Corrupt, where, "trailing bytes after the last section");
  return h;
}

// ---------------------------------------------------------------------------

SceneDecoder::SceneDecoder(std::span<const uint8_t> bytes) : bytes_(bytes), header_(read_header(bytes)) {
  model_.layout = header_.layout();
  model_.seed = header_.seed;
}

std::span<const uint8_t> SceneDecoder::section(Section s) const {
  return bytes_.subspan(header_.section_offset(s), header_.section_bytes[static_cast<int>(s)]);
}

void SceneDecoder::expect(Stage current, const char* what) const {
  if (stage_ != current) throw ContractViolation(std::string("SceneDecoder: ") + what + " called out of order");
}

void SceneDecoder::read_locations() {
  expect(Stage::Header, "read_locations");
  const auto data = section(Section::Locations);
  const size_t n = header_.anchors;
  if (data.size() != 12 * n) throw corrupt(Section::Locations, "expected 12 bytes per anchor");
  ByteReader r(data);
  model_.positions.resize(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < model_.positions.rows(); ++i) {
    for (int d = 0; d < 3; ++d) model_.positions(i, d) = r.f32();
  }
  if (!model_.positions.allFinite()) throw corrupt(Section::Locations, "non-finite position");
  stage_ = Stage::Locations;
}

void SceneDecoder::read_networks() {
  expect(Stage::Locations, "read_networks");
  const AnchorLayout& L = model_.layout;
  ByteReader r(section(Section::Networks));
  try {
    const uint8_t flags = r.u8();
    if (((flags & 1) != 0) != L.uses_prediction() || ((flags & 2) != 0) != L.uses_hyperprior() || flags > 3) {
      throw corrupt(Section::Networks, "network flags do not match the variant");
    }
    if (L.uses_prediction()) {
      model_.fp = FPNet{read_mlp(r, L.condition_dim + L.residual_dim, kPredictHidden, L.feature_dim, "FP-Net")};
    }
    if (L.uses_hyperprior()) {
      model_.ic = ICEncoder{read_mlp(r, L.residual_dim, kContextHidden, L.hyper_dim, "IC-Encoder")};
    }
    model_.pe.layout = L;
    model_.pe.net = read_mlp(r, L.entropy_input_dim(), kEstimateHidden, 3 * L.channel_count(), "PE-Net");
    const int in = L.feature_dim + 4;
    model_.heads.opacity = read_mlp(r, in, 32, L.offsets, "opacity head");
    model_.heads.covariance = read_mlp(r, in, 32, 7 * L.offsets, "covariance head");
    model_.heads.color = read_mlp(r, in, 32, 3 * L.offsets, "color head");
    mask_p_ = r.f32();
  } catch (const ByteUnderflow&) {
    throw corrupt(Section::Networks, "section ends inside a tensor");
  } catch (const ContractViolation& e) {
    throw corrupt(Section::Networks, e.what());
  }
  if (r.remaining() != 0) throw corrupt(Section::Networks, "unexpected trailing bytes");
  if (!(mask_p_ >= kMaskProbClamp * 0.5 && mask_p_ <= 1.0 - kMaskProbClamp * 0.5)) {
    throw corrupt(Section::Networks, "mask probability out of range");
  }
  bool finite = model_.pe.net.all_finite() && model_.heads.all_finite();
  if (model_.fp) finite = finite && model_.fp->net.all_finite();
  if (model_.ic) finite = finite && model_.ic->net.all_finite();
  if (!finite) throw corrupt(Section::Networks, "non-finite weight");
  stage_ = Stage::Networks;
}

void SceneDecoder::read_grid() {
  expect(Stage::Networks, "read_grid");
  model_.grid = HashGrid(header_.grid);
  HashGrid& g = model_.grid;
  ByteReader r(section(Section::Grid));
  const int F = header_.grid.feat_per_level;
  try {
    for (int l = 0; l < g.levels(); ++l) {
      g.level_scale[l] = r.f32();
      g.bernoulli_logit[l] = r.f32();
      if (!(std::isfinite(g.level_scale[l]) && g.level_scale[l] > 0.0 && std::isfinite(g.bernoulli_logit[l]))) {
        throw corrupt(Section::Grid, "invalid level scale or logit at level " + std::to_string(l));
      }
      const uint32_t len = r.u32();
      RangeDecoder dec(r.bytes(len));
      const CdfTable table = build_bernoulli_table(g.bernoulli_p(l));
      for (size_t i = 0; i < g.rows(l) * F; ++i) {
        g.tables[l][i] = dec.decode(table) == 1 ? g.level_scale[l] : -g.level_scale[l];
      }
      if (dec.failed()) throw corrupt(Section::Grid, "sign payload of level " + std::to_string(l) + " is short or malformed");
    }
  } catch (const ByteUnderflow&) {
    throw corrupt(Section::Grid, "section ends early");
  }
  if (r.remaining() != 0) throw corrupt(Section::Grid, "unexpected trailing bytes");
  stage_ = Stage::Grid;
}

void SceneDecoder::read_hyper_tables() {
  expect(Stage::Grid, "read_hyper_tables");
  const int hd = model_.layout.uses_hyperprior() ? model_.layout.hyper_dim : 0;
  const auto data = section(Section::HyperTables);
  if (data.size() != static_cast<size_t>(hd) * 4 * (1 + kDensityParamCount)) {
    throw corrupt(Section::HyperTables, "unexpected size");
  }
  ByteReader r(data);
  model_.hyper_prior = FactorizedDensity::symmetric(hd);
  for (int c = 0; c < hd; ++c) {
    model_.hyper_prior.raw_step[c] = r.f32();
    for (int p = 0; p < kDensityParamCount; ++p) model_.hyper_prior.params(c, p) = r.f32();
  }
  if (!model_.hyper_prior.all_finite()) throw corrupt(Section::HyperTables, "non-finite density parameter");
  try {
    hyper_tables_ = hyper_tables(model_.hyper_prior);
  } catch (const TableError& e) {
    throw corrupt(Section::HyperTables, e.what());
  }
  stage_ = Stage::HyperTables;
}

void SceneDecoder::decode_hyper() {
  expect(Stage::HyperTables, "decode_hyper");
  const auto n = static_cast<Eigen::Index>(header_.anchors);
  const int hd = static_cast<int>(hyper_tables_.size());
  RangeDecoder dec(section(Section::HyperPayload));
  z_hat_.resize(n, hd);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < hd; ++c) {
      z_hat_(i, c) = model_.hyper_prior.step(c) * static_cast<double>(dec.decode(hyper_tables_[c]));
    }
  }
  if (dec.failed()) throw corrupt(Section::HyperPayload, "payload is short or malformed");
  stage_ = Stage::Hyper;
}

void SceneDecoder::decode_anchors() {
  expect(Stage::Hyper, "decode_anchors");
  const AnchorLayout& L = model_.layout;
  const auto n = static_cast<Eigen::Index>(header_.anchors);
  const int C = L.channel_count();
  const int Ld = L.latent_dim();
  const int oc = L.offset_channel();

  const RowMat fc = spatial_condition(model_);
  const RowMat z = L.uses_hyperprior() ? z_hat_ : RowMat();
  const EntropyParamsBatch params = model_.pe.estimate_batch(model_.pe.input_batch(z, fc));
  if (!params.mu.allFinite() || !params.sigma.allFinite() || !params.step.allFinite()) {
    throw corrupt(Section::LatentPayload, "entropy parameters are not finite");
  }

  SymbolMat symbols = SymbolMat::Zero(n, C);
  RowMat mask = RowMat::Zero(n, L.offsets);
  auto decode_range = [&](Section s, int c0, int c1) {
    RangeDecoder dec(section(s));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int c = c0; c < c1; ++c) {
        symbols(i, c) = dec.decode(build_gaussian_table(params.sigma(i, c), params.step(i, c)));
      }
    }
    if (dec.failed()) throw corrupt(s, "payload is short or malformed");
  };
  try {
    decode_range(Section::LatentPayload, 0, Ld);
    decode_range(Section::ScalePayload, Ld, oc);
    {
      RangeDecoder dec(section(Section::MaskPayload));
      const CdfTable table = build_bernoulli_table(mask_p_);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < L.offsets; ++j) mask(i, j) = dec.decode(table);
      }
      if (dec.failed()) throw corrupt(Section::MaskPayload, "payload is short or malformed");
    }
    {
      RangeDecoder dec(section(Section::OffsetPayload));
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < L.offsets; ++j) {
          if (mask(i, j) == 0.0) continue;
          for (int d = 0; d < 3; ++d) {
            const int c = oc + 3 * j + d;
            symbols(i, c) = dec.decode(build_gaussian_table(params.sigma(i, c), params.step(i, c)));
          }
        }
      }
      if (dec.failed()) throw corrupt(Section::OffsetPayload, "payload is short or malformed");
    }
  } catch (const TableError& e) {
    throw corrupt(Section::LatentPayload, e.what());
  }
  if (symbol_digest(symbols, mask, L) != header_.symbol_digest) {
    throw corrupt(Section::LatentPayload, "decoded symbols do not match the stream digest");
  }

  const RowMat values = dequantize(params, symbols, mask, L);
  model_.latent = values.leftCols(Ld);
  model_.scales = values.middleCols(Ld, 3);
  model_.offsets = values.rightCols(3 * L.offsets);
  model_.mask_logits = (mask.array() * 2.0 - 1.0) * kDecodedMaskLogit;
  if (L.uses_hyperprior()) model_.decoded_hyper = z_hat_;
  (void)C;
  stage_ = Stage::Anchors;
}

SceneModel SceneDecoder::finish() {
  if (stage_ == Stage::Header) read_locations();
  if (stage_ == Stage::Locations) read_networks();
  if (stage_ == Stage::Networks) read_grid();
  if (stage_ == Stage::Grid) read_hyper_tables();
  if (stage_ == Stage::HyperTables) decode_hyper();
  if (stage_ == Stage::Hyper) decode_anchors();
  return model_;
}

SceneModel decode_scene(std::span<const uint8_t> bytes) { return SceneDecoder(bytes).finish(); }

}  // namespace az3d
