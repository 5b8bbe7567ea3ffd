#include "ren/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ren/checkpoint.hpp"
#include "ren/errors.hpp"
#include "ren/ops.hpp"

namespace ren {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Basic: return "basic";
    case Variant::BasicLarge: return "basic-large";
    case Variant::RegionEnsemble: return "region-ensemble";
    case Variant::RegionBagging: return "region-bagging";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::Basic, Variant::BasicLarge, Variant::RegionEnsemble, Variant::RegionBagging})
    if (variant_name(v) == name) return v;
  throw InputError("unknown model variant '" + std::string(name) + "'");
}

int ModelSpec::second_fc() const {
  if (fc2_dim > 0) return fc2_dim;
  return variant == Variant::BasicLarge ? 8192 : fc_dim;
}

void ModelSpec::validate() const {
  auto fail = [](const std::string& m) { throw InputError("invalid model spec: " + m); };
  if (input_size <= 0 || input_size % 8 != 0) fail("input size must be a positive multiple of 8");
  for (int c : channels)
    if (c <= 0) fail("channel widths must be positive");
  if (fc_dim <= 0 || second_fc() <= 0) fail("FC widths must be positive");
  if (joints <= 0) fail("joint count must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout rate must be in [0, 1)");
  if (uses_regions() && (grid_n <= 0 || trunk_extent() % grid_n != 0))
    fail("grid n=" + std::to_string(grid_n) + " does not divide the " + std::to_string(trunk_extent()) +
         "-cell trunk output");
}

std::map<std::string, std::string> ModelSpec::to_map() const {
  std::ostringstream dr;
  dr.precision(17);
  dr << dropout;
  return {{"variant", variant_name(variant)},
          {"grid_n", std::to_string(grid_n)},
          {"fc_dim", std::to_string(fc_dim)},
          {"fc2_dim", std::to_string(second_fc())},
          {"joints", std::to_string(joints)},
          {"channels", std::to_string(channels[0]) + "," + std::to_string(channels[1]) + "," + std::to_string(channels[2])},
          {"input_size", std::to_string(input_size)},
          {"dropout", dr.str()}};
}

ModelSpec ModelSpec::from_map(const std::map<std::string, std::string>& kv) {
  ModelSpec s;
  auto get = [&](const char* k) -> const std::string* {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };
  try {
    if (auto v = get("variant")) s.variant = parse_variant(*v);
    if (auto v = get("grid_n")) s.grid_n = std::stoi(*v);
    if (auto v = get("fc_dim")) s.fc_dim = std::stoi(*v);
    if (auto v = get("fc2_dim")) s.fc2_dim = std::stoi(*v);
    if (auto v = get("joints")) s.joints = std::stoi(*v);
    if (auto v = get("input_size")) s.input_size = std::stoi(*v);
    if (auto v = get("dropout")) s.dropout = std::stod(*v);
    if (auto v = get("channels")) {
      std::istringstream in(*v);
      std::string tok;
      for (int i = 0; i < 3; ++i) {
        if (!std::getline(in, tok, ',')) throw InputError("channels needs three comma-separated widths");
        s.channels[i] = std::stoi(tok);
      }
    }
  } catch (const std::logic_error&) {
    throw InputError("malformed model spec value");
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

template <typename T>
Model<T>::Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  CounterRng rng(CounterRng::derive(seed, {0x1417}));
  // Variance 1/fan_in, so each ReLU layer halves the second moment. With the
  // mostly +1 background of a depth patch, the ReLU-preserving 2/fan_in left
  // the fused features near |h|^2 ~ 2e4 and lr 0.005 overshot the pose layer.
  auto uniform = [&](Shape shape, std::size_t fan_in) {
    Tensor<T> t(std::move(shape));
    const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
    for (T& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
  };
  auto conv = [&](const std::string& name, int in, int out, int k) {
    params_.add(name + ".w", uniform({std::size_t(out), std::size_t(in), std::size_t(k), std::size_t(k)},
                                     std::size_t(in) * k * k));
    params_.add(name + ".b", Tensor<T>({std::size_t(out)}));
  };
  auto fc = [&](const std::string& name, std::size_t in, std::size_t out) {
    params_.add(name + ".w", uniform({in, out}, in));
    params_.add(name + ".b", Tensor<T>({out}));
  };

  const auto [c1, c2, c3] = spec_.channels;
  conv("trunk.conv1", 1, c1, 3);
  conv("trunk.conv2", c1, c1, 3);
  conv("trunk.conv3", c1, c2, 3);
  conv("trunk.conv4", c2, c2, 3);
  conv("trunk.res2", c1, c2, 1);
  conv("trunk.conv5", c2, c3, 3);
  conv("trunk.conv6", c3, c3, 3);
  conv("trunk.res3", c2, c3, 1);

  const std::size_t e = spec_.trunk_extent();
  const std::size_t out = 3 * static_cast<std::size_t>(spec_.joints);
  const std::size_t fc1 = spec_.fc_dim, fc2 = spec_.second_fc();
  if (!spec_.uses_regions()) {
    fc("head.fc1", e * e * c3, fc1);
    fc("head.fc2", fc1, fc2);
    fc("head.out", fc2, out);
    return;
  }
  const std::size_t r = spec_.region_extent();
  const int regions = spec_.grid_n * spec_.grid_n;
  for (int k = 0; k < regions; ++k) {
    const std::string base = "head.region" + std::to_string(k);
    fc(base + ".fc1", r * r * c3, fc1);
    fc(base + ".fc2", fc1, fc2);
    if (spec_.variant == Variant::RegionBagging) fc(base + ".out", fc2, out);
  }
  if (spec_.variant == Variant::RegionEnsemble) fc("head.out", fc2 * regions, out);
}

namespace {

template <typename T>
Var<T> param(Model<T>& m, Graph<T>& g, const std::string& name) {
  return g.parameter(m.params().get(name));
}

template <typename T>
Var<T> conv_layer(Model<T>& m, const Var<T>& x, const std::string& name, int pad) {
  Graph<T>& g = x.graph();
  return conv2d(x, param(m, g, name + ".w"), param(m, g, name + ".b"), 1, pad);
}

template <typename T>
Var<T> fc_layer(Model<T>& m, const Var<T>& x, const std::string& name) {
  Graph<T>& g = x.graph();
  return linear(x, param(m, g, name + ".w"), param(m, g, name + ".b"));
}

// FC -> ReLU -> dropout, twice.
template <typename T>
Var<T> fc_branch(Model<T>& m, const Var<T>& x, const std::string& base, CounterRng* rng) {
  const double rate = m.spec().dropout;
  auto drop = [&](const Var<T>& v) {
    if (!v.graph().training() || rate == 0.0) return v;
    if (!rng) throw GraphError("training-mode forward needs a dropout RNG");
    return dropout(v, rate, *rng);
  };
  Var<T> h = drop(relu(fc_layer(m, x, base + ".fc1")));
  return drop(relu(fc_layer(m, h, base + ".fc2")));
}

}  // namespace

template <typename T>
Var<T> build_trunk(Model<T>& m, const Var<T>& x) {
  const ModelSpec& s = m.spec();
  const Shape& shape = x.shape();
  const std::size_t in = s.input_size;
  if (shape.size() != 4 || shape[1] != 1 || shape[2] != in || shape[3] != in)
    throw ShapeError("model expects N x 1 x " + std::to_string(in) + " x " + std::to_string(in) + " input, got " +
                     shape_str(shape));
  Var<T> h = relu(conv_layer(m, x, "trunk.conv1", 1));
  h = maxpool2(relu(conv_layer(m, h, "trunk.conv2", 1)));

  Var<T> stage_in = h;
  h = relu(conv_layer(m, stage_in, "trunk.conv3", 1));
  h = relu(conv_layer(m, h, "trunk.conv4", 1));
  h = maxpool2(add(h, conv_layer(m, stage_in, "trunk.res2", 0)));

  stage_in = h;
  h = relu(conv_layer(m, stage_in, "trunk.conv5", 1));
  h = relu(conv_layer(m, h, "trunk.conv6", 1));
  return maxpool2(add(h, conv_layer(m, stage_in, "trunk.res3", 0)));
}

template <typename T>
std::vector<Var<T>> partition_regions(const Var<T>& features, int n) {
  const Shape& s = features.shape();
  if (s.size() != 4) throw ShapeError("partition_regions expects N,C,H,W features");
  if (n <= 0 || s[2] % n != 0 || s[3] % n != 0)
    throw ShapeError("grid n=" + std::to_string(n) + " does not divide " + std::to_string(s[2]) + "x" +
                     std::to_string(s[3]));
  const std::size_t th = s[2] / n, tw = s[3] / n;
  std::vector<Var<T>> tiles;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) tiles.push_back(crop2d(features, r * th, c * tw, th, tw));
  return tiles;
}

namespace {

template <typename T>
ForwardResult<T> head_impl(Model<T>& m, const Var<T>& features, CounterRng* rng) {
  const ModelSpec& s = m.spec();
  ForwardResult<T> out;
  out.features = features;
  if (!s.uses_regions()) {
    out.pose = fc_layer(m, fc_branch(m, flatten(features), "head", rng), "head.out");
    return out;
  }
  out.regions = partition_regions(features, s.grid_n);
  const std::size_t expect = static_cast<std::size_t>(s.channels[2]) * s.region_extent() * s.region_extent();
  std::vector<Var<T>> branch_features;
  for (std::size_t k = 0; k < out.regions.size(); ++k) {
    Var<T> flat = flatten(out.regions[k]);
    if (flat.shape()[1] != expect) throw ShapeError("inconsistent region shape " + shape_str(out.regions[k].shape()));
    const std::string base = "head.region" + std::to_string(k);
    Var<T> h = fc_branch(m, flat, base, rng);
    if (s.variant == Variant::RegionBagging) out.branch_poses.push_back(fc_layer(m, h, base + ".out"));
    else branch_features.push_back(h);
  }
  if (s.variant == Variant::RegionBagging) {
    out.pose = average(std::span<const Var<T>>(out.branch_poses));
  } else {
    out.fused = concat(std::span<const Var<T>>(branch_features));
    out.pose = fc_layer(m, out.fused, "head.out");
  }
  return out;
}

}  // namespace

template <typename T>
ForwardResult<T> build_head(Model<T>& m, const Var<T>& features) {
  return head_impl(m, features, nullptr);
}

template <typename T>
ForwardResult<T> forward(Model<T>& m, const Var<T>& input, CounterRng* rng) {
  return head_impl(m, build_trunk(m, input), rng);
}

Tensor<float> infer(Model<float>& model, const Tensor<float>& batch) {
  Graph<float> g(false);
  return forward(model, g.constant(batch)).pose.value();
}

template <typename T>
ParamCount param_count(const Model<T>& m) {
  ParamCount c;
  const ParameterSet<T>& ps = m.params();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::string& name = ps[i].name;
    const std::string part = name.substr(0, name.rfind('.'));
    const std::size_t n = ps[i].value.size();
    if (c.by_part.empty() || c.by_part.back().first != part) c.by_part.emplace_back(part, 0);
    c.by_part.back().second += n;
    (name.rfind("trunk.", 0) == 0 ? c.trunk : c.head) += n;
    c.total += n;
  }
  return c;
}

// ---------------------------------------------------------------------------

namespace {

struct Interval {
  int lo, hi;  // inclusive
};

Interval through_conv(Interval v, int k, int pad) { return {v.lo - pad, v.hi - pad + k - 1}; }
Interval through_pool(Interval v) { return {2 * v.lo, 2 * v.hi + 1}; }
Interval hull(Interval a, Interval b) { return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)}; }

// Walks the trunk backwards, one axis at a time.
Interval trunk_rf(Interval v) {
  // stage 3: pool <- add(conv6(conv5(x)), res3(x))
  v = through_pool(v);
  v = hull(through_conv(through_conv(v, 3, 1), 3, 1), through_conv(v, 1, 0));
  // stage 2
  v = through_pool(v);
  v = hull(through_conv(through_conv(v, 3, 1), 3, 1), through_conv(v, 1, 0));
  // stage 1
  v = through_pool(v);
  return through_conv(through_conv(v, 3, 1), 3, 1);
}

}  // namespace

PixelRect receptive_field(const ModelSpec& spec, int row0, int col0, int row1, int col1) {
  const int e = spec.trunk_extent();
  if (row0 < 0 || col0 < 0 || row1 >= e || col1 >= e || row0 > row1 || col0 > col1)
    throw InputError("cell range outside the " + std::to_string(e) + "x" + std::to_string(e) + " trunk output");
  const Interval r = trunk_rf({row0, row1});
  const Interval c = trunk_rf({col0, col1});
  const int lim = spec.input_size - 1;
  return {std::max(r.lo, 0), std::max(c.lo, 0), std::min(r.hi, lim), std::min(c.hi, lim)};
}

PixelRect region_receptive_field(const ModelSpec& spec, int region_row, int region_col) {
  const int t = spec.region_extent();
  return receptive_field(spec, region_row * t, region_col * t, region_row * t + t - 1, region_col * t + t - 1);
}

// ---------------------------------------------------------------------------

void save_model(const std::filesystem::path& path, const Model<float>& model,
                const std::map<std::string, std::string>& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "REN-MODEL 1\n";
  for (const auto& [k, v] : model.spec().to_map()) out << k << "=" << v << "\n";
  for (const auto& [k, v] : metadata) out << "meta." << k << "=" << v << "\n";
  out << "end\n";
  write_tensors(out, export_parameters(model.params()));
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "REN-MODEL 1") throw FormatError(path.string() + ": not a model checkpoint");
  std::map<std::string, std::string> spec_kv, meta;
  while (true) {
    if (!std::getline(in, line)) throw FormatError(path.string() + ": unterminated model header");
    if (line == "end") break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(path.string() + ": bad header line '" + line + "'");
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k.rfind("meta.", 0) == 0) meta[k.substr(5)] = v;
    else spec_kv[k] = v;
  }
  LoadedModel lm{Model<float>(ModelSpec::from_map(spec_kv), 0), std::move(meta)};
  import_parameters(read_tensors(in), lm.model.params());
  return lm;
}

template class Model<float>;
template class Model<double>;

#define REN_INSTANTIATE_MODEL(T)                                                   \
  template Var<T> build_trunk(Model<T>&, const Var<T>&);                           \
  template std::vector<Var<T>> partition_regions(const Var<T>&, int);              \
  template ForwardResult<T> build_head(Model<T>&, const Var<T>&);                  \
  template ForwardResult<T> forward(Model<T>&, const Var<T>&, CounterRng*);        \
  template ParamCount param_count(const Model<T>&);

REN_INSTANTIATE_MODEL(float)
REN_INSTANTIATE_MODEL(double)

}  // namespace ren
