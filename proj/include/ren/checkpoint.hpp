#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ren/graph.hpp"
#include "ren/tensor.hpp"

namespace ren {

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

/// Binary tensor container:
///   "RENW" | version u32 | count u32 |
///   per tensor: name length u32, UTF-8 name, rank u32, extents u32 x rank,
///   raw float32 values. All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& in);

std::vector<NamedTensor> export_parameters(const ParameterSet<float>& params);
/// Copies values by name; every parameter must be present with its shape.
void import_parameters(const std::vector<NamedTensor>& tensors, ParameterSet<float>& params);

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

}  // namespace ren
