#include "ren/config.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ren/errors.hpp"

namespace ren {

std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general);
  return std::string(buf, r.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw InputError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw InputError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

long to_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw InputError(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InputError(key + ": expected true or false, got '" + v + "'");
}

std::string channels_str(const std::array<int, 3>& c) {
  return std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]);
}

}  // namespace

ModelSpec RunConfig::resolved_model() const {
  ModelSpec s = model;
  s.variant = bagging() ? Variant::Basic : parse_variant(variant);
  return s;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  auto i = [&] { return static_cast<int>(to_long(key, v)); };
  auto l = [&] { return to_long(key, v); };
  auto d = [&] { return to_double(key, v); };
  if (key == "variant") {
    if (v != "basic-bagging") (void)parse_variant(v);
    variant = v;
  } else if (key == "k") bagging_k = i();
  else if (key == "grid_n") model.grid_n = i();
  else if (key == "fc_dim") model.fc_dim = i();
  else if (key == "fc2_dim") model.fc2_dim = i();
  else if (key == "joints") model.joints = i();
  else if (key == "channels") {
    ModelSpec probe = ModelSpec::from_map({{"channels", v}, {"variant", "basic"}});
    model.channels = probe.channels;
  } else if (key == "input_size") model.input_size = i();
  else if (key == "dropout") model.dropout = d();
  else if (key == "batch") train.batch_size = i();
  else if (key == "lr0") train.lr0 = d();
  else if (key == "lr_drop_every") train.lr_drop_every = l();
  else if (key == "lr_factor") train.lr_factor = d();
  else if (key == "iters") train.max_iters = l();
  else if (key == "weight_decay") train.weight_decay = d();
  else if (key == "momentum") train.momentum = d();
  else if (key == "seed") train.seed = to_u64(key, v);
  else if (key == "augment") train.augment = to_bool(key, v);
  else if (key == "aug_translate_mm") train.augment_ranges.translate_mm = d();
  else if (key == "aug_scale_min") train.augment_ranges.scale_min = d();
  else if (key == "aug_scale_max") train.augment_ranges.scale_max = d();
  else if (key == "aug_rotate_deg") train.augment_ranges.rotate_deg = d();
  else if (key == "snapshot_every") train.snapshot_every = l();
  else if (key == "keep_snapshots") train.keep_snapshots = i();
  else if (key == "seg_near") preprocess.seg_near = d();
  else if (key == "seg_far") preprocess.seg_far = d();
  else if (key == "cube_size") preprocess.cube_size = d();
  else if (key == "manifest") manifest = v;
  else if (key == "cache") cache = v;
  else if (key == "synthetic") synthetic = l();
  else if (key == "out") out_root = v;
  else if (key == "name") name = v;
  else throw InputError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  return {
      {"variant", variant},
      {"k", std::to_string(bagging_k)},
      {"grid_n", std::to_string(model.grid_n)},
      {"fc_dim", std::to_string(model.fc_dim)},
      {"fc2_dim", std::to_string(model.fc2_dim)},
      {"joints", std::to_string(model.joints)},
      {"channels", channels_str(model.channels)},
      {"input_size", std::to_string(model.input_size)},
      {"dropout", format_number(model.dropout)},
      {"batch", std::to_string(train.batch_size)},
      {"lr0", format_number(train.lr0)},
      {"lr_drop_every", std::to_string(train.lr_drop_every)},
      {"lr_factor", format_number(train.lr_factor)},
      {"iters", std::to_string(train.max_iters)},
      {"weight_decay", format_number(train.weight_decay)},
      {"momentum", format_number(train.momentum)},
      {"seed", std::to_string(train.seed)},
      {"augment", train.augment ? "true" : "false"},
      {"aug_translate_mm", format_number(train.augment_ranges.translate_mm)},
      {"aug_scale_min", format_number(train.augment_ranges.scale_min)},
      {"aug_scale_max", format_number(train.augment_ranges.scale_max)},
      {"aug_rotate_deg", format_number(train.augment_ranges.rotate_deg)},
      {"snapshot_every", std::to_string(train.snapshot_every)},
      {"keep_snapshots", std::to_string(train.keep_snapshots)},
      {"seg_near", format_number(preprocess.seg_near)},
      {"seg_far", format_number(preprocess.seg_far)},
      {"cube_size", format_number(preprocess.cube_size)},
      {"manifest", manifest},
      {"cache", cache},
      {"synthetic", std::to_string(synthetic)},
      {"out", out_root},
      {"name", name},
  };
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + "=" + v + "\n";
  return out;
}

void RunConfig::validate() const {
  resolved_model().validate();
  train.validate();
  if (bagging() && bagging_k < 2) throw InputError("basic-bagging needs k >= 2");
  if (synthetic < 0) throw InputError("synthetic sample count must be non-negative");
  if (!(preprocess.cube_size > 0)) throw InputError("cube_size must be positive");
  if (!(preprocess.seg_near < preprocess.seg_far)) throw InputError("seg_near must be below seg_far");
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw InputError(origin + ":" + std::to_string(n) + ": expected key=value");
    try {
      cfg.set(trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const InputError& e) {
      throw InputError(origin + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

}  // namespace ren
