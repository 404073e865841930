#include "az3d/hashgrid.hpp"

#include "az3d/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace az3d {

namespace {
constexpr double kProbFloor = 1e-6;
}

std::vector<int> HashGridConfig::resolutions() const {
  std::vector<int> res(static_cast<size_t>(levels));
  if (levels == 1) {
    res[0] = base_resolution;
    return res;
  }
  const double growth =
      std::exp(std::log(static_cast<double>(max_resolution) / base_resolution) / (levels - 1));
  for (int l = 0; l < levels; ++l) {
    res[l] = static_cast<int>(std::lround(base_resolution * std::pow(growth, l)));
  }
  return res;
}

void HashGridConfig::validate() const {
  require(levels >= 1, "HashGridConfig: levels must be >= 1");
  require(feat_per_level >= 1, "HashGridConfig: feat_per_level must be >= 1");
  require(table_size_log2 >= 1 && table_size_log2 <= 24, "HashGridConfig: table_size_log2 out of range");
  require(base_resolution >= 1 && max_resolution >= base_resolution,
          "HashGridConfig: resolutions out of range");
  const auto res = resolutions();
  for (size_t i = 1; i < res.size(); ++i) {
    require(res[i] > res[i - 1], "HashGridConfig: resolutions must be strictly increasing");
  }
  require((bbox.max.array() >= bbox.min.array()).all(), "HashGridConfig: inverted bbox");
}

HashGrid::HashGrid(const HashGridConfig& config) : config_(config) {
  config_.validate();
  resolutions_ = config_.resolutions();
  const size_t table_rows = size_t{1} << config_.table_size_log2;
  tables.resize(config_.levels);
  table_grads.resize(config_.levels);
  for (int l = 0; l < config_.levels; ++l) {
    const size_t lattice = static_cast<size_t>(resolutions_[l] + 1);
    const size_t rows = std::min(table_rows, lattice * lattice * lattice);
    tables[l].assign(rows * config_.feat_per_level, 0.0);
    table_grads[l].assign(rows * config_.feat_per_level, 0.0);
  }
  for (int l = 0; l < config_.levels; ++l) dense_.push_back(is_dense(l));
  level_scale.assign(config_.levels, 1.0);
  bernoulli_logit.assign(config_.levels, 0.0);
  level_scale_grads.assign(config_.levels, 0.0);
  bernoulli_logit_grads.assign(config_.levels, 0.0);
}

HashGrid HashGrid::random(const HashGridConfig& config, uint64_t seed, double init_range,
                          double init_scale) {
  HashGrid grid(config);
  CounterRng rng(seed, 0x68617368);  // "hash"
  for (auto& table : grid.tables) {
    for (double& v : table) v = static_cast<float>(rng.uniform(-init_range, init_range));
  }
  std::fill(grid.level_scale.begin(), grid.level_scale.end(), static_cast<float>(init_scale));
  return grid;
}

bool HashGrid::is_dense(int level) const {
  const uint64_t lattice = static_cast<uint64_t>(resolutions_[level] + 1);
  return lattice * lattice * lattice <= (uint64_t{1} << config_.table_size_log2);
}

size_t HashGrid::entry_count() const {
  size_t n = 0;
  for (const auto& t : tables) n += t.size();
  return n;
}

uint32_t HashGrid::hash_index(int level, const std::array<int, 3>& corner) const {
  require(level >= 0 && level < config_.levels, "hash_index: level out of range");
  const int res = resolutions_[level];
  for (int c : corner) {
    require(c >= 0 && c <= res, "hash_index: corner outside [0, resolution]");
  }
  return index_unchecked(level, corner);
}

uint32_t HashGrid::index_unchecked(int level, const std::array<int, 3>& corner) const {
  const int res = resolutions_[level];
  if (dense_[level]) {
    const uint32_t side = static_cast<uint32_t>(res + 1);
    return static_cast<uint32_t>(corner[0]) + static_cast<uint32_t>(corner[1]) * side +
           static_cast<uint32_t>(corner[2]) * side * side;
  }
  const uint32_t h = static_cast<uint32_t>(corner[0]) ^
                     (static_cast<uint32_t>(corner[1]) * 2654435761u) ^
                     (static_cast<uint32_t>(corner[2]) * 805459861u);
  return h & ((1u << config_.table_size_log2) - 1u);
}

HashGrid::Corners HashGrid::corners(int level, const Vec3& x) const {
  const int res = resolutions_[level];
  const Vec3 ext = config_.bbox.extent();
  std::array<int, 3> cell{};
  std::array<double, 3> frac{};
  for (int d = 0; d < 3; ++d) {
    double u = ext[d] > 0.0 ? (x[d] - config_.bbox.min[d]) / ext[d] : 0.0;
    u = std::clamp(u, 0.0, 1.0) * res;
    const int c = std::min(static_cast<int>(std::floor(u)), res - 1);
    cell[d] = c;
    frac[d] = u - c;
  }
  Corners out;
  for (int i = 0; i < 8; ++i) {
    std::array<int, 3> corner{};
    double w = 1.0;
    for (int d = 0; d < 3; ++d) {
      const int bit = (i >> d) & 1;
      corner[d] = cell[d] + bit;
      w *= bit ? frac[d] : 1.0 - frac[d];
    }
    out.index[i] = index_unchecked(level, corner);
    out.weight[i] = w;
  }
  return out;
}

double HashGrid::binarized(int level, size_t index) const {
  return tables[level][index] >= 0.0 ? level_scale[level] : -level_scale[level];
}

void HashGrid::binarize_in_place() {
  for (int l = 0; l < config_.levels; ++l) {
    for (size_t i = 0; i < tables[l].size(); ++i) tables[l][i] = binarized(l, i);
  }
}

Vec HashGrid::query(const Vec3& x, GridView view) const {
  if (!x.allFinite()) throw NumericError("grid_query: non-finite position");
  const int F = config_.feat_per_level;
  Vec out = Vec::Zero(config_.dim());
  for (int l = 0; l < config_.levels; ++l) {
    const Corners c = corners(l, x);
    for (int i = 0; i < 8; ++i) {
      const size_t base = static_cast<size_t>(c.index[i]) * F;
      for (int f = 0; f < F; ++f) {
        const double v = view == GridView::Raw ? tables[l][base + f] : binarized(l, base + f);
        out[l * F + f] += c.weight[i] * v;
      }
    }
  }
  return out;
}

void HashGrid::query_batch(const RowMat& positions, GridView view, RowMat& out) const {
  query_batch(stencil(positions), view, out);
}

GridStencil HashGrid::stencil(const RowMat& positions) const {
  require(positions.cols() == 3, "grid_query: positions must have 3 columns");
  if (!positions.allFinite()) throw NumericError("grid_query: non-finite position");
  GridStencil s;
  s.count = positions.rows();
  s.resolutions = resolutions_;
  s.index.resize(config_.levels);
  s.weight.resize(config_.levels);
  for (int l = 0; l < config_.levels; ++l) {
    s.index[l].resize(static_cast<size_t>(s.count) * 8);
    s.weight[l].resize(static_cast<size_t>(s.count) * 8);
    for (Eigen::Index n = 0; n < s.count; ++n) {
      const Corners c = corners(l, positions.row(n).transpose());
      std::copy(c.index.begin(), c.index.end(), s.index[l].begin() + n * 8);
      std::copy(c.weight.begin(), c.weight.end(), s.weight[l].begin() + n * 8);
    }
  }
  return s;
}

void HashGrid::check_stencil(const GridStencil& s) const {
  require(s.resolutions == resolutions_ && static_cast<int>(s.index.size()) == config_.levels,
          "grid stencil was built for a different grid");
}

void HashGrid::query_batch(const GridStencil& s, GridView view, RowMat& out) const {
  check_stencil(s);
  const int F = config_.feat_per_level;
  out.setZero(s.count, config_.dim());
  std::vector<double> values;
  for (int l = 0; l < config_.levels; ++l) {
    const std::vector<double>* table = &tables[l];
    if (view == GridView::Binarized) {
      values.resize(tables[l].size());
      for (size_t i = 0; i < values.size(); ++i) values[i] = binarized(l, i);
      table = &values;
    }
    const uint32_t* idx = s.index[l].data();
    const double* wt = s.weight[l].data();
    for (Eigen::Index n = 0; n < s.count; ++n) {
      double* row = out.row(n).data() + l * F;
      for (int i = 0; i < 8; ++i) {
        const double* src = table->data() + static_cast<size_t>(idx[n * 8 + i]) * F;
        const double w = wt[n * 8 + i];
        for (int f = 0; f < F; ++f) row[f] += w * src[f];
      }
    }
  }
}

void HashGrid::backward(const Vec3& x, const Vec& d_fc, GridView view) {
  require(d_fc.size() == config_.dim(), "grid_query_backward: gradient has wrong dimension");
  if (!x.allFinite()) throw NumericError("grid_query_backward: non-finite position");
  const int F = config_.feat_per_level;
  for (int l = 0; l < config_.levels; ++l) {
    const Corners c = corners(l, x);
    double d_scale = 0.0;
    for (int i = 0; i < 8; ++i) {
      const size_t base = static_cast<size_t>(c.index[i]) * F;
      for (int f = 0; f < F; ++f) {
        const double g = c.weight[i] * d_fc[l * F + f];
        const double theta = tables[l][base + f];
        if (view == GridView::Raw) {
          table_grads[l][base + f] += g;
        } else {
          // Straight-through: identity inside |theta| <= 1, zero outside.
          if (std::abs(theta) <= 1.0) table_grads[l][base + f] += g;
          d_scale += theta >= 0.0 ? g : -g;
        }
      }
    }
    level_scale_grads[l] += d_scale;
  }
}

void HashGrid::backward_batch(const RowMat& positions, const RowMat& d_fc, GridView view) {
  require(positions.rows() == d_fc.rows(), "grid_query_backward: batch size mismatch");
  backward_batch(stencil(positions), d_fc, view);
}

void HashGrid::backward_batch(const GridStencil& s, const RowMat& d_fc, GridView view) {
  check_stencil(s);
  require(d_fc.rows() == s.count && d_fc.cols() == config_.dim(),
          "grid_query_backward: gradient has wrong shape");
  const int F = config_.feat_per_level;
  for (int l = 0; l < config_.levels; ++l) {
    const std::vector<double>& table = tables[l];
    std::vector<double>& grads = table_grads[l];
    const uint32_t* idx = s.index[l].data();
    const double* wt = s.weight[l].data();
    double d_scale = 0.0;
    for (Eigen::Index n = 0; n < s.count; ++n) {
      const double* up = d_fc.row(n).data() + l * F;
      for (int i = 0; i < 8; ++i) {
        const size_t base = static_cast<size_t>(idx[n * 8 + i]) * F;
        const double w = wt[n * 8 + i];
        for (int f = 0; f < F; ++f) {
          const double g = w * up[f];
          if (view == GridView::Raw) {
            grads[base + f] += g;
          } else {
            // Straight-through: identity inside |theta| <= 1, zero outside.
            const double theta = table[base + f];
            if (std::abs(theta) <= 1.0) grads[base + f] += g;
            d_scale += theta >= 0.0 ? g : -g;
          }
        }
      }
    }
    level_scale_grads[l] += d_scale;
  }
}

double HashGrid::bernoulli_p(int level) const {
  return std::clamp(sigmoid(bernoulli_logit[level]), kProbFloor, 1.0 - kProbFloor);
}

size_t HashGrid::positive_count(int level) const {
  return static_cast<size_t>(
      std::count_if(tables[level].begin(), tables[level].end(), [](double v) { return v >= 0.0; }));
}

double HashGrid::rate_bits() const {
  double bits = 0.0;
  for (int l = 0; l < config_.levels; ++l) {
    const double p = bernoulli_p(l);
    const double pos = static_cast<double>(positive_count(l));
    const double neg = static_cast<double>(tables[l].size()) - pos;
    bits -= pos * std::log2(p) + neg * std::log2(1.0 - p);
  }
  return bits;
}

void HashGrid::rate_backward(double scale) {
  for (int l = 0; l < config_.levels; ++l) {
    const double raw = sigmoid(bernoulli_logit[l]);
    if (raw <= kProbFloor || raw >= 1.0 - kProbFloor) continue;
    const double pos = static_cast<double>(positive_count(l));
    const double neg = static_cast<double>(tables[l].size()) - pos;
    // d/dlogit [-pos log2 p - neg log2 (1-p)] = (-pos (1-p) + neg p) / ln 2
    bernoulli_logit_grads[l] += scale * (-pos * (1.0 - raw) + neg * raw) / std::numbers::ln2;
  }
}

void HashGrid::zero_grad() {
  for (auto& g : table_grads) std::fill(g.begin(), g.end(), 0.0);
  std::fill(level_scale_grads.begin(), level_scale_grads.end(), 0.0);
  std::fill(bernoulli_logit_grads.begin(), bernoulli_logit_grads.end(), 0.0);
}

void HashGrid::append_blocks(std::vector<ParamBlock>& out, double table_lr_scale) {
  for (int l = 0; l < config_.levels; ++l) {
    out.push_back({"grid.table" + std::to_string(l), tables[l], table_grads[l], table_lr_scale});
  }
  out.push_back({"grid.scale", level_scale, level_scale_grads});
  out.push_back({"grid.bernoulli_logit", bernoulli_logit, bernoulli_logit_grads});
}

bool HashGrid::all_finite() const {
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return std::all_of(tables.begin(), tables.end(), finite) && finite(level_scale) &&
         finite(bernoulli_logit) &&
         std::all_of(level_scale.begin(), level_scale.end(), [](double d) { return d > 0.0; });
}

void HashGrid::round_to_float() {
  for (auto& t : tables) {
    for (double& v : t) v = static_cast<float>(v);
  }
  for (double& v : level_scale) v = static_cast<float>(v);
  for (double& v : bernoulli_logit) v = static_cast<float>(v);
}

}  // namespace az3d
