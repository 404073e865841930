#pragma once

#include "az3d/scene.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace az3d {

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Full-precision snapshot of a SceneModel ("AZCK", f64 values, little-endian).
std::vector<uint8_t> serialize_checkpoint(const SceneModel& model);
SceneModel deserialize_checkpoint(std::span<const uint8_t> bytes);

void save_checkpoint(const std::string& path, const SceneModel& model);
SceneModel load_checkpoint(const std::string& path);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const uint8_t> bytes);

}  // namespace az3d
