#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "coride/nn/params.hpp"

namespace coride::nn {

/// Binary checkpoint layout, little-endian:
///
///   8 bytes   magic "CORIDECK"
///   u32       format version
///   u32       tensor count
///   per tensor:
///     u32     name length, then the name bytes
///     u64     rows, u64 cols
///     f64     rows*cols values, column-major
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix value;
};

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& in);

/// Tensors of several stores, each name prefixed with "<store>/".
std::vector<NamedTensor> collect_tensors(const std::vector<std::pair<std::string, const ParamStore*>>& stores);

/// Copies tensors named "<prefix>/<param>" into the store; every parameter
/// must be present with a matching shape.
void restore_store(ParamStore& store, const std::string& prefix, const std::vector<NamedTensor>& tensors);

void save_checkpoint_file(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint_file(const std::string& path);

}  // namespace coride::nn
