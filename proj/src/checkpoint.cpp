#include "ren/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ren/errors.hpp"

namespace ren {
namespace {

constexpr char kMagic[4] = {'R', 'E', 'N', 'W'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint truncated");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

}  // namespace

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.tensor.rank()));
    for (std::size_t e : t.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : t.tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw FormatError("failed writing checkpoint");
}

std::vector<NamedTensor> read_tensors(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a RENW checkpoint");
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = get_u32(in);
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name.resize(get_u32(in));
    if (!in.read(t.name.data(), static_cast<std::streamsize>(t.name.size()))) throw FormatError("checkpoint truncated");
    Shape shape(get_u32(in));
    for (std::size_t& e : shape) e = get_u32(in);
    std::vector<float> data(shape_numel(shape));
    for (float& v : data) v = std::bit_cast<float>(get_u32(in));
    t.tensor = Tensor<float>(std::move(shape), std::move(data));
    tensors.push_back(std::move(t));
  }
  return tensors;
}

std::vector<NamedTensor> export_parameters(const ParameterSet<float>& params) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back({params[i].name, params[i].value});
  return out;
}

void import_parameters(const std::vector<NamedTensor>& tensors, ParameterSet<float>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<float>& p = params[i];
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == p.name; });
    if (it == tensors.end()) throw FormatError("checkpoint lacks parameter '" + p.name + "'");
    if (it->tensor.shape() != p.value.shape())
      throw FormatError("checkpoint parameter '" + p.name + "' has shape " + shape_str(it->tensor.shape()) +
                        ", model expects " + shape_str(p.value.shape()));
    p.value = it->tensor;
  }
}

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  write_tensors(out, tensors);
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_tensors(in);
}

}  // namespace ren
