#include "az3d/ply.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <vector>

namespace az3d {

namespace {

enum class ScalarType { I8, U8, I16, U16, I32, U32, F32, F64 };

bool parse_type(const std::string& name, ScalarType& out) {
  static const std::map<std::string, ScalarType> types = {
      {"char", ScalarType::I8},    {"int8", ScalarType::I8},     {"uchar", ScalarType::U8},
      {"uint8", ScalarType::U8},   {"short", ScalarType::I16},   {"int16", ScalarType::I16},
      {"ushort", ScalarType::U16}, {"uint16", ScalarType::U16},  {"int", ScalarType::I32},
      {"int32", ScalarType::I32},  {"uint", ScalarType::U32},    {"uint32", ScalarType::U32},
      {"float", ScalarType::F32},  {"float32", ScalarType::F32}, {"double", ScalarType::F64},
      {"float64", ScalarType::F64}};
  const auto it = types.find(name);
  if (it == types.end()) return false;
  out = it->second;
  return true;
}

size_t type_size(ScalarType t) {
  switch (t) {
    case ScalarType::I8:
    case ScalarType::U8:
      return 1;
    case ScalarType::I16:
    case ScalarType::U16:
      return 2;
    case ScalarType::I32:
    case ScalarType::U32:
    case ScalarType::F32:
      return 4;
    case ScalarType::F64:
      return 8;
  }
  return 0;
}

template <typename T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

double read_binary(ScalarType t, const char* p) {
  switch (t) {
    case ScalarType::I8:
      return load_le<int8_t>(p);
    case ScalarType::U8:
      return load_le<uint8_t>(p);
    case ScalarType::I16:
      return load_le<int16_t>(p);
    case ScalarType::U16:
      return load_le<uint16_t>(p);
    case ScalarType::I32:
      return load_le<int32_t>(p);
    case ScalarType::U32:
      return load_le<uint32_t>(p);
    case ScalarType::F32:
      return load_le<float>(p);
    case ScalarType::F64:
      return load_le<double>(p);
  }
  return 0.0;
}

struct Property {
  std::string name;
  ScalarType type;
};

struct Element {
  std::string name;
  size_t count = 0;
  std::vector<Property> properties;
  size_t stride() const {
    size_t s = 0;
    for (const auto& p : properties) s += type_size(p.type);
    return s;
  }
};

[[noreturn]] void malformed(const std::string& msg) {
  throw PlyError(PlyError::Kind::MalformedHeader, "PLY: " + msg);
}

}  // namespace

TargetAnchorSet parse_targets(const std::string& contents) {
  std::istringstream in(contents);
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) malformed("missing 'ply' magic");

  bool binary = false;
  bool have_format = false;
  std::vector<Element> elements;
  bool ended = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word.empty() || word == "comment" || word == "obj_info") continue;
    if (word == "format") {
      std::string fmt, version;
      ls >> fmt >> version;
      if (fmt == "ascii") {
        binary = false;
      } else if (fmt == "binary_little_endian") {
        binary = true;
      } else {
        malformed("unsupported format '" + fmt + "'");
      }
      have_format = true;
    } else if (word == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (e.name.empty() || count < 0) malformed("bad element line '" + line + "'");
      e.count = static_cast<size_t>(count);
      elements.push_back(e);
    } else if (word == "property") {
      if (elements.empty()) malformed("property before any element");
      std::string type, name;
      ls >> type >> name;
      if (type == "list") malformed("list properties are not supported");
      Property p;
      if (!parse_type(type, p.type) || name.empty()) malformed("bad property line '" + line + "'");
      elements.back().properties.push_back({name, p.type});
    } else if (word == "end_header") {
      ended = true;
      break;
    } else {
      malformed("unexpected header keyword '" + word + "'");
    }
  }
  if (!ended) malformed("missing end_header");
  if (!have_format) malformed("missing format line");

  size_t vertex_index = elements.size();
  for (size_t i = 0; i < elements.size(); ++i) {
    if (elements[i].name == "vertex") vertex_index = i;
  }
  if (vertex_index == elements.size()) {
    throw PlyError(PlyError::Kind::MissingProperty, "PLY: no 'vertex' element");
  }
  const Element& vertex = elements[vertex_index];

  std::map<std::string, size_t> column;
  for (size_t i = 0; i < vertex.properties.size(); ++i) column[vertex.properties[i].name] = i;
  auto need = [&](const std::string& name) {
    const auto it = column.find(name);
    if (it == column.end()) {
      throw PlyError(PlyError::Kind::MissingProperty, "PLY: missing property '" + name + "'");
    }
    return it->second;
  };

  int offset_props = 0;
  while (column.count("o_" + std::to_string(offset_props))) ++offset_props;
  if (offset_props == 0) need("o_0");
  if (offset_props % 3 != 0) {
    throw PlyError(PlyError::Kind::MissingProperty,
                   "PLY: missing property 'o_" + std::to_string(offset_props) + "'");
  }
  const int feature_dim = AnchorLayout{}.feature_dim;
  std::vector<size_t> pos_cols{need("x"), need("y"), need("z")};
  std::vector<size_t> f_cols, l_cols, o_cols;
  for (int i = 0; i < feature_dim; ++i) f_cols.push_back(need("f_" + std::to_string(i)));
  for (int i = 0; i < 3; ++i) l_cols.push_back(need("l_" + std::to_string(i)));
  for (int i = 0; i < offset_props; ++i) o_cols.push_back(need("o_" + std::to_string(i)));

  // Raw rows of the vertex element.
  const size_t nprops = vertex.properties.size();
  std::vector<double> values(vertex.count * nprops);
  if (binary) {
    // Binary payload starts right after the header line.
    const size_t start = static_cast<size_t>(in.tellg());
    size_t cursor = start;
    for (size_t e = 0; e < elements.size(); ++e) {
      const size_t bytes = elements[e].count * elements[e].stride();
      if (e == vertex_index) {
        if (contents.size() < cursor + bytes) {
          throw PlyError(PlyError::Kind::CountMismatch, "PLY: file ends before all vertices were read");
        }
        const char* p = contents.data() + cursor;
        for (size_t r = 0; r < vertex.count; ++r) {
          for (size_t c = 0; c < nprops; ++c) {
            values[r * nprops + c] = read_binary(vertex.properties[c].type, p);
            p += type_size(vertex.properties[c].type);
          }
        }
      }
      cursor += bytes;
    }
    if (cursor != contents.size()) {
      throw PlyError(PlyError::Kind::CountMismatch, "PLY: payload size does not match element counts");
    }
  } else {
    std::vector<std::string> tokens;
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    size_t expected = 0, vertex_start = 0;
    for (size_t e = 0; e < elements.size(); ++e) {
      if (e == vertex_index) vertex_start = expected;
      expected += elements[e].count * elements[e].properties.size();
    }
    if (tokens.size() != expected) {
      throw PlyError(PlyError::Kind::CountMismatch, "PLY: value count does not match element counts");
    }
    for (size_t i = 0; i < values.size(); ++i) {
      const std::string& t = tokens[vertex_start + i];
      try {
        size_t used = 0;
        values[i] = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
      } catch (const std::exception&) {
        throw PlyError(PlyError::Kind::CountMismatch, "PLY: bad numeric value '" + t + "'");
      }
    }
  }

  TargetAnchorSet out;
  const auto n = static_cast<Eigen::Index>(vertex.count);
  out.offset_count = offset_props / 3;
  out.positions.resize(n, 3);
  out.features.resize(n, feature_dim);
  out.scales.resize(n, 3);
  out.offsets.resize(n, offset_props);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double* row = values.data() + static_cast<size_t>(r) * nprops;
    for (int c = 0; c < 3; ++c) out.positions(r, c) = row[pos_cols[c]];
    for (int c = 0; c < feature_dim; ++c) out.features(r, c) = row[f_cols[c]];
    for (int c = 0; c < 3; ++c) out.scales(r, c) = row[l_cols[c]];
    for (int c = 0; c < offset_props; ++c) out.offsets(r, c) = row[o_cols[c]];
  }
  out.compute_bbox();
  return out;
}

TargetAnchorSet load_targets(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PlyError(PlyError::Kind::Io, "PLY: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_targets(ss.str());
}

std::string serialize_targets(const TargetAnchorSet& targets, PlyFormat format) {
  targets.validate();
  std::vector<std::string> names{"x", "y", "z"};
  for (Eigen::Index i = 0; i < targets.features.cols(); ++i) names.push_back("f_" + std::to_string(i));
  for (int i = 0; i < 3; ++i) names.push_back("l_" + std::to_string(i));
  for (Eigen::Index i = 0; i < targets.offsets.cols(); ++i) names.push_back("o_" + std::to_string(i));

  std::ostringstream out;
  out << "ply\nformat " << (format == PlyFormat::Ascii ? "ascii" : "binary_little_endian") << " 1.0\n";
  out << "element vertex " << targets.size() << "\n";
  for (const auto& n : names) out << "property double " << n << "\n";
  out << "end_header\n";
  for (size_t r = 0; r < targets.size(); ++r) {
    std::vector<double> row;
    const auto i = static_cast<Eigen::Index>(r);
    for (int c = 0; c < 3; ++c) row.push_back(targets.positions(i, c));
    for (Eigen::Index c = 0; c < targets.features.cols(); ++c) row.push_back(targets.features(i, c));
    for (int c = 0; c < 3; ++c) row.push_back(targets.scales(i, c));
    for (Eigen::Index c = 0; c < targets.offsets.cols(); ++c) row.push_back(targets.offsets(i, c));
    if (format == PlyFormat::Ascii) {
      for (size_t c = 0; c < row.size(); ++c) {
        out << (c ? " " : "") << std::setprecision(17) << row[c];
      }
      out << "\n";
    } else {
      out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 8));
    }
  }
  return out.str();
}

void save_targets(const std::string& path, const TargetAnchorSet& targets, PlyFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PlyError(PlyError::Kind::Io, "PLY: cannot open '" + path + "' for writing");
  out << serialize_targets(targets, format);
}

}  // namespace az3d
