#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ren/graph.hpp"
#include "ren/rng.hpp"
#include "ren/tensor.hpp"

namespace ren {

enum class Variant { Basic, BasicLarge, RegionEnsemble, RegionBagging };

std::string variant_name(Variant v);
/// Accepts basic, basic-large, region-ensemble, region-bagging.
Variant parse_variant(std::string_view name);

struct ModelSpec {
  Variant variant = Variant::RegionEnsemble;
  int grid_n = 2;
  int fc_dim = 2048;
  /// Width of the second FC layer; 0 picks 8192 for BasicLarge, else fc_dim.
  int fc2_dim = 0;
  int joints = 16;
  /// Conv widths of the three trunk stages; each stage has two 3x3 convs.
  std::array<int, 3> channels{16, 32, 64};
  int input_size = 96;
  double dropout = 0.5;

  int second_fc() const;
  int trunk_extent() const { return input_size / 8; }
  int region_extent() const { return trunk_extent() / grid_n; }
  bool uses_regions() const { return variant == Variant::RegionEnsemble || variant == Variant::RegionBagging; }
  void validate() const;

  std::map<std::string, std::string> to_map() const;
  static ModelSpec from_map(const std::map<std::string, std::string>& kv);
};

/// Architecture plus its parameters. Parameters are drawn from a fan-in
/// scaled uniform distribution, bound sqrt(3/fan_in); biases start at zero.
template <typename T>
class Model {
 public:
  Model(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

 private:
  ModelSpec spec_;
  ParameterSet<T> params_;
};

template <typename T>
struct ForwardResult {
  Var<T> pose;                       // N x 3J
  Var<T> features;                   // N x C x E x E trunk output
  std::vector<Var<T>> regions;       // grid tiles, row-major (region variants)
  Var<T> fused;                      // concatenated branch features (RegionEnsemble)
  std::vector<Var<T>> branch_poses;  // per-region poses (RegionBagging)
};

/// Three stages of conv3x3-ReLU-conv3x3-ReLU-maxpool2. Stages 2 and 3 add a
/// 1x1 conv of the stage input to the stage output before pooling.
template <typename T>
Var<T> build_trunk(Model<T>& model, const Var<T>& input);

/// n x n non-overlapping tiles of an N,C,E,E map, row-major.
template <typename T>
std::vector<Var<T>> partition_regions(const Var<T>& features, int n);

template <typename T>
ForwardResult<T> build_head(Model<T>& model, const Var<T>& features);

/// Input is N x 1 x S x S. `rng` drives dropout and may be null when the
/// graph is not training.
template <typename T>
ForwardResult<T> forward(Model<T>& model, const Var<T>& input, CounterRng* rng = nullptr);

/// Inference-mode prediction of an N x 1 x S x S batch, N x 3J out.
Tensor<float> infer(Model<float>& model, const Tensor<float>& batch);

struct ParamCount {
  std::size_t trunk = 0;
  std::size_t head = 0;
  std::size_t total = 0;
  /// Counts grouped by layer, e.g. "trunk.conv1", "head.region0.fc1".
  std::vector<std::pair<std::string, std::size_t>> by_part;
};

template <typename T>
ParamCount param_count(const Model<T>& model);

/// Inclusive pixel rectangle.
struct PixelRect {
  int top = 0, left = 0, bottom = -1, right = -1;
  int height() const { return bottom - top + 1; }
  int width() const { return right - left + 1; }
  bool contains(int row, int col) const { return row >= top && row <= bottom && col >= left && col <= right; }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Input rectangle that can influence trunk cells [row0..row1] x [col0..col1],
/// clipped to the input bounds.
PixelRect receptive_field(const ModelSpec& spec, int row0, int col0, int row1, int col1);

/// Receptive field of grid region (r, c).
PixelRect region_receptive_field(const ModelSpec& spec, int region_row, int region_col);

struct LoadedModel {
  Model<float> model;
  std::map<std::string, std::string> metadata;
};

/// Plain-text header ("REN-MODEL 1", key=value lines for the spec and any
/// metadata, "end") followed by the RENW tensor payload.
void save_model(const std::filesystem::path& path, const Model<float>& model,
                const std::map<std::string, std::string>& metadata = {});
LoadedModel load_model(const std::filesystem::path& path);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace ren
