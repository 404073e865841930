#pragma once

#include "az3d/scene.hpp"

#include <stdexcept>
#include <string>

namespace az3d {

class PlyError : public std::runtime_error {
 public:
  enum class Kind { Io, MalformedHeader, MissingProperty, CountMismatch };
  PlyError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Reads a "vertex" element with x,y,z, f_0..f_31, l_0..l_2, o_0..o_{3k-1}
/// (ascii or binary_little_endian, any property order, any scalar type).
TargetAnchorSet load_targets(const std::string& path);
TargetAnchorSet parse_targets(const std::string& contents);

enum class PlyFormat { Ascii, BinaryLittleEndian };
/// Doubles are written as `double` properties so a round-trip is exact.
void save_targets(const std::string& path, const TargetAnchorSet& targets,
                  PlyFormat format = PlyFormat::BinaryLittleEndian);
std::string serialize_targets(const TargetAnchorSet& targets, PlyFormat format);

}  // namespace az3d
