#include "az3d/checkpoint.hpp"

#include "az3d/bytes.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace az3d {

namespace {

constexpr char kMagic[4] = {'A', 'Z', 'C', 'K'};
constexpr uint16_t kVersion = 1;

void put(ByteWriter& w, std::span<const double> v) {
  for (double x : v) w.f64(x);
}

void put_mat(ByteWriter& w, const RowMat& m) {
  w.u32(static_cast<uint32_t>(m.rows()));
  w.u32(static_cast<uint32_t>(m.cols()));
  put(w, flat(m));
}

RowMat get_mat(ByteReader& r, Eigen::Index rows, Eigen::Index cols, const char* what) {
  const uint32_t rr = r.u32(), cc = r.u32();
  if (rr != rows || cc != cols) throw CheckpointError(std::string("checkpoint: bad shape for ") + what);
  RowMat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
  return m;
}

void put_mlp(ByteWriter& w, const Mlp2& net) {
  w.u32(static_cast<uint32_t>(net.in_dim()));
  w.u32(static_cast<uint32_t>(net.hidden_dim()));
  w.u32(static_cast<uint32_t>(net.out_dim()));
  put(w, flat(net.W1));
  put(w, flat(net.b1));
  put(w, flat(net.W2));
  put(w, flat(net.b2));
}

Mlp2 get_mlp(ByteReader& r, int in, int hidden, int out, const char* what) {
  if (static_cast<int>(r.u32()) != in || static_cast<int>(r.u32()) != hidden || static_cast<int>(r.u32()) != out) {
    throw CheckpointError(std::string("checkpoint: bad shape for ") + what);
  }
  Mlp2 net(in, hidden, out);
  for (double& v : flat(net.W1)) v = r.f64();
  for (double& v : flat(net.b1)) v = r.f64();
  for (double& v : flat(net.W2)) v = r.f64();
  for (double& v : flat(net.b2)) v = r.f64();
  return net;
}

}  // namespace

std::vector<uint8_t> serialize_checkpoint(const SceneModel& m) {
  const AnchorLayout& L = m.layout;
  ByteWriter w;
  for (char c : kMagic) w.u8(static_cast<uint8_t>(c));
  w.u16(kVersion);
  w.u8(static_cast<uint8_t>(L.variant));
  w.u32(static_cast<uint32_t>(L.feature_dim));
  w.u32(static_cast<uint32_t>(L.residual_dim));
  w.u32(static_cast<uint32_t>(L.hyper_dim));
  w.u32(static_cast<uint32_t>(L.offsets));
  w.u32(static_cast<uint32_t>(L.condition_dim));
  w.u64(m.seed);
  w.u64(m.size());

  const HashGridConfig& gc = m.grid.config();
  w.u32(static_cast<uint32_t>(gc.levels));
  w.u32(static_cast<uint32_t>(gc.table_size_log2));
  w.u32(static_cast<uint32_t>(gc.feat_per_level));
  w.u32(static_cast<uint32_t>(gc.base_resolution));
  w.u32(static_cast<uint32_t>(gc.max_resolution));
  for (int d = 0; d < 3; ++d) w.f64(gc.bbox.min[d]);
  for (int d = 0; d < 3; ++d) w.f64(gc.bbox.max[d]);

  put_mat(w, m.positions);
  put_mat(w, m.latent);
  put_mat(w, m.scales);
  put_mat(w, m.offsets);
  put_mat(w, m.mask_logits);
  for (int l = 0; l < m.grid.levels(); ++l) put(w, m.grid.tables[l]);
  put(w, m.grid.level_scale);
  put(w, m.grid.bernoulli_logit);

  w.u8((m.fp ? 1 : 0) | (m.ic ? 2 : 0) | (m.decoded_hyper ? 4 : 0));
  if (m.fp) put_mlp(w, m.fp->net);
  if (m.ic) put_mlp(w, m.ic->net);
  put_mlp(w, m.pe.net);
  put_mlp(w, m.heads.opacity);
  put_mlp(w, m.heads.covariance);
  put_mlp(w, m.heads.color);
  put_mat(w, m.hyper_prior.params);
  put(w, flat(m.hyper_prior.raw_step));
  if (m.decoded_hyper) put_mat(w, *m.decoded_hyper);
  return w.take();
}

SceneModel deserialize_checkpoint(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  SceneModel m;
  try {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
      throw CheckpointError("checkpoint: bad magic");
    }
    r.bytes(4);
    if (r.u16() != kVersion) throw CheckpointError("checkpoint: unsupported version");
    const uint8_t variant = r.u8();
    if (variant > 2) throw CheckpointError("checkpoint: unknown variant");
    AnchorLayout& L = m.layout;
    L.variant = static_cast<Variant>(variant);
    L.feature_dim = static_cast<int>(r.u32());
    L.residual_dim = static_cast<int>(r.u32());
    L.hyper_dim = static_cast<int>(r.u32());
    L.offsets = static_cast<int>(r.u32());
    L.condition_dim = static_cast<int>(r.u32());
    m.seed = r.u64();
    const auto n = static_cast<Eigen::Index>(r.u64());
    if (n < 0 || static_cast<uint64_t>(n) > bytes.size()) throw CheckpointError("checkpoint: bad anchor count");

    HashGridConfig gc;
    gc.levels = static_cast<int>(r.u32());
    gc.table_size_log2 = static_cast<int>(r.u32());
    gc.feat_per_level = static_cast<int>(r.u32());
    gc.base_resolution = static_cast<int>(r.u32());
    gc.max_resolution = static_cast<int>(r.u32());
    for (int d = 0; d < 3; ++d) gc.bbox.min[d] = r.f64();
    for (int d = 0; d < 3; ++d) gc.bbox.max[d] = r.f64();
    if (gc.levels < 1 || gc.levels > 32 || gc.table_size_log2 < 1 || gc.table_size_log2 > 24 ||
        gc.dim() != L.condition_dim) {
      throw CheckpointError("checkpoint: bad grid configuration");
    }

    m.positions = get_mat(r, n, 3, "positions");
    m.latent = get_mat(r, n, L.latent_dim(), "latent");
    m.scales = get_mat(r, n, 3, "scales");
    m.offsets = get_mat(r, n, 3 * L.offsets, "offsets");
    m.mask_logits = get_mat(r, n, L.offsets, "mask logits");
    m.grid = HashGrid(gc);
    for (int l = 0; l < m.grid.levels(); ++l) {
      for (double& v : m.grid.tables[l]) v = r.f64();
    }
    for (double& v : m.grid.level_scale) v = r.f64();
    for (double& v : m.grid.bernoulli_logit) v = r.f64();

    const uint8_t flags = r.u8();
    if (((flags & 1) != 0) != L.uses_prediction()) throw CheckpointError("checkpoint: FP-Net flag mismatch");
    if (((flags & 2) != 0) != L.uses_hyperprior()) throw CheckpointError("checkpoint: IC-Encoder flag mismatch");
    if (flags & 1) m.fp = FPNet{get_mlp(r, L.condition_dim + L.residual_dim, kPredictHidden, L.feature_dim, "FP-Net")};
    if (flags & 2) m.ic = ICEncoder{get_mlp(r, L.residual_dim, kContextHidden, L.hyper_dim, "IC-Encoder")};
    m.pe.layout = L;
    m.pe.net = get_mlp(r, L.entropy_input_dim(), kEstimateHidden, 3 * L.channel_count(), "PE-Net");
    const int in = L.feature_dim + 4;
    m.heads.opacity = get_mlp(r, in, 32, L.offsets, "opacity head");
    m.heads.covariance = get_mlp(r, in, 32, 7 * L.offsets, "covariance head");
    m.heads.color = get_mlp(r, in, 32, 3 * L.offsets, "color head");
    const int hd = L.uses_hyperprior() ? L.hyper_dim : 0;
    m.hyper_prior = FactorizedDensity::symmetric(hd);
    m.hyper_prior.params = get_mat(r, hd, kDensityParamCount, "density");
    for (double& v : flat(m.hyper_prior.raw_step)) v = r.f64();
    if (flags & 4) m.decoded_hyper = get_mat(r, n, L.hyper_dim, "decoded hyperprior");
  } catch (const ByteUnderflow&) {
    throw CheckpointError("checkpoint: file is truncated");
  }
  if (r.remaining() != 0) throw CheckpointError("checkpoint: trailing bytes");
  if (!m.all_finite()) throw CheckpointError("checkpoint: non-finite value");
  return m;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

void save_checkpoint(const std::string& path, const SceneModel& model) {
  write_file(path, serialize_checkpoint(model));
}

SceneModel load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace az3d
