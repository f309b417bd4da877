#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tap/ndiff/tensor.hpp"

namespace tap::nd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// In-memory image of a checkpoint file. Layout (all integers and doubles little-endian):
///
///   8 bytes   magic "TAPCKPT\0"
///   u32       version
///   u32       metadata byte length L, then L bytes of UTF-8 JSON
///   u32       array count P, then P records of
///               u32 name length, name bytes,
///               u32 rank (2), rank x u64 extents,
///               prod(extents) x f64 values, row-major
struct Checkpoint {
  std::string metadata;
  std::vector<std::pair<std::string, Matrix>> arrays;

  static Checkpoint from_store(const ParameterStore& store, std::string metadata);
  /// Copies arrays into same-named parameters; every parameter must be present with a
  /// matching shape.
  void load_into(ParameterStore& store) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tap::nd
