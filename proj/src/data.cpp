#include "ren/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ren/errors.hpp"
#include "ren/rng.hpp"

namespace fs = std::filesystem;

namespace ren {
namespace {

constexpr char kCacheMagic[4] = {'R', 'E', 'N', 'C'};
constexpr std::size_t kCacheHeaderBytes = 16;
constexpr std::size_t kCachePatchFloats = static_cast<std::size_t>(kPatchSize) * kPatchSize;

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<char>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint64_t get_le(const char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

float get_f32(const char* p) { return std::bit_cast<float>(static_cast<std::uint32_t>(get_le(p, 4))); }

std::size_t record_floats(int joints) { return kCachePatchFloats + 3 * static_cast<std::size_t>(joints) + kCacheTransformFloats; }

Sample decode_record(const char* p, int joints) {
  Sample s;
  s.crop.size = kPatchSize;
  s.crop.patch.resize(kCachePatchFloats);
  for (float& v : s.crop.patch) {
    v = get_f32(p);
    p += 4;
  }
  s.labels.resize(3 * static_cast<std::size_t>(joints));
  for (float& v : s.labels) {
    v = get_f32(p);
    p += 4;
  }
  float t[kCacheTransformFloats];
  for (float& v : t) {
    v = get_f32(p);
    p += 4;
  }
  s.crop.transform = {{t[0], t[1], t[2]}, t[3], t[4], t[5]};
  return s;
}

struct CacheHeader {
  std::uint64_t count = 0;
  int joints = 0;
};

CacheHeader parse_cache_header(const char* p, std::uint64_t total_bytes) {
  if (total_bytes < kCacheHeaderBytes || std::memcmp(p, kCacheMagic, 4) != 0) throw FormatError("not a RENC cache");
  const std::uint32_t version = static_cast<std::uint32_t>(get_le(p + 4, 4));
  if (version != kCacheVersion) throw FormatError("unsupported cache version " + std::to_string(version));
  CacheHeader h;
  h.count = get_le(p + 8, 8);
  if (h.count == 0) throw FormatError("cache holds no records");
  const std::uint64_t payload = total_bytes - kCacheHeaderBytes;
  if (payload % h.count != 0) throw FormatError("cache size is not a whole number of records");
  const std::uint64_t floats = payload / h.count / 4;
  const std::uint64_t label_floats = floats - kCachePatchFloats - kCacheTransformFloats;
  if (payload / h.count % 4 != 0 || floats <= kCachePatchFloats + kCacheTransformFloats || label_floats % 3 != 0)
    throw FormatError("cache record size does not match a 96x96 patch layout");
  h.joints = static_cast<int>(label_floats / 3);
  return h;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(std::string_view tok, std::size_t line) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw FormatError("manifest line " + std::to_string(line) + ": '" + std::string(tok) + "' is not a number");
  return v;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// ---- synthetic renderer ----------------------------------------------------

struct Mat3 {
  double m[3][3];
  Vec3 operator*(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z, m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) r.m[i][j] += m[i][k] * o.m[k][j];
    return r;
  }
  Mat3 transposed() const {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
    return r;
  }
};

Mat3 rot_x(double a) { return {{{1, 0, 0}, {0, std::cos(a), -std::sin(a)}, {0, std::sin(a), std::cos(a)}}}; }
Mat3 rot_y(double a) { return {{{std::cos(a), 0, std::sin(a)}, {0, 1, 0}, {-std::sin(a), 0, std::cos(a)}}}; }
Mat3 rot_z(double a) { return {{{std::cos(a), -std::sin(a), 0}, {std::sin(a), std::cos(a), 0}, {0, 0, 1}}}; }

struct Capsule {
  Vec3 a, b;
  double r;
};

struct HandModel {
  Vec3 center;
  Mat3 rot;  // hand-local -> camera
  Vec3 palm_axes{38.0, 42.0, 14.0};
  std::vector<Capsule> capsules;
  std::vector<Vec3> joints;  // palm, tips, mids, bases
};

struct FingerDef {
  double base_x, base_y, dir_deg, len1, len2, radius;
};

// Hand-local frame: x across the palm, fingers along -y, z away from camera.
constexpr FingerDef kFingers[5] = {
    {34.0, 2.0, -40.0, 28.0, 24.0, 9.0},   // thumb
    {22.0, -36.0, -78.0, 40.0, 30.0, 8.0},   // index
    {7.0, -39.0, -88.0, 44.0, 32.0, 8.0},    // middle
    {-8.0, -38.0, -98.0, 40.0, 30.0, 8.0},   // ring
    {-23.0, -33.0, -108.0, 32.0, 24.0, 7.0}, // little
};

HandModel make_hand(CounterRng& rng, const SynthOptions& o) {
  constexpr double d2r = std::numbers::pi / 180.0;
  HandModel h;
  h.center = {rng.uniform(-o.max_offset_xy, o.max_offset_xy), rng.uniform(-o.max_offset_xy, o.max_offset_xy),
              rng.uniform(o.min_z, o.max_z)};
  h.rot = rot_z(rng.uniform(-o.max_roll_deg, o.max_roll_deg) * d2r) *
          rot_y(rng.uniform(-o.max_tilt_deg, o.max_tilt_deg) * d2r) *
          rot_x(rng.uniform(-o.max_tilt_deg, o.max_tilt_deg) * d2r);
  auto to_cam = [&](const Vec3& p) { return h.center + h.rot * p; };

  Vec3 tips[5], mids[5], bases[5];
  for (int f = 0; f < 5; ++f) {
    const FingerDef& d = kFingers[f];
    const double dir = (d.dir_deg + rng.uniform(-5.0, 5.0)) * d2r;
    const double flex1 = rng.uniform(0.0, 25.0) * d2r;
    const double flex2 = flex1 + rng.uniform(0.0, 25.0) * d2r;
    const Vec3 in_plane{std::cos(dir), std::sin(dir), 0.0};
    // curl toward the camera so a bent finger never hides its own tip
    const Vec3 back{0.0, 0.0, -1.0};
    const Vec3 base{d.base_x, d.base_y, 0.0};
    const Vec3 mid = base + (in_plane * std::cos(flex1) + back * std::sin(flex1)) * d.len1;
    const Vec3 tip = mid + (in_plane * std::cos(flex2) + back * std::sin(flex2)) * d.len2;
    bases[f] = to_cam(base);
    mids[f] = to_cam(mid);
    tips[f] = to_cam(tip);
    h.capsules.push_back({bases[f], mids[f], d.radius});
    h.capsules.push_back({mids[f], tips[f], d.radius * 0.9});
  }
  h.joints.push_back(h.center);
  for (const Vec3* group : {tips, mids, bases})
    for (int f = 0; f < 5; ++f) h.joints.push_back(group[f]);
  return h;
}

// Ray from the origin along unit `rd`; returns hit distance or -1.
double hit_capsule(const Vec3& rd, const Capsule& c) {
  const Vec3 ro{0, 0, 0};
  const Vec3 ba = c.b - c.a, oa = ro - c.a;
  const double baba = ba.dot(ba), bard = ba.dot(rd), baoa = ba.dot(oa), rdoa = rd.dot(oa), oaoa = oa.dot(oa);
  const double a = baba - bard * bard;
  double b = baba * rdoa - baoa * bard;
  double cc = baba * oaoa - baoa * baoa - c.r * c.r * baba;
  double h = b * b - a * cc;
  if (h >= 0.0) {
    const double t = (-b - std::sqrt(h)) / a;
    const double y = baoa + t * bard;
    if (y > 0.0 && y < baba) return t;
    const Vec3 oc = (y <= 0.0) ? oa : ro - c.b;
    b = rd.dot(oc);
    cc = oc.dot(oc) - c.r * c.r;
    h = b * b - cc;
    if (h > 0.0) return -b - std::sqrt(h);
  }
  return -1.0;
}

double hit_ellipsoid(const Vec3& rd, const HandModel& hand) {
  const Mat3 inv = hand.rot.transposed();
  Vec3 o = inv * (Vec3{0, 0, 0} - hand.center);
  Vec3 d = inv * rd;
  o = {o.x / hand.palm_axes.x, o.y / hand.palm_axes.y, o.z / hand.palm_axes.z};
  d = {d.x / hand.palm_axes.x, d.y / hand.palm_axes.y, d.z / hand.palm_axes.z};
  const double a = d.dot(d), b = o.dot(d), c = o.dot(o) - 1.0;
  const double disc = b * b - a * c;
  if (disc < 0) return -1.0;
  return (-b - std::sqrt(disc)) / a;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<char> encode_cache(const SampleCache& cache) {
  if (cache.samples.empty()) throw FormatError("refusing to write an empty cache");
  std::vector<char> out(kCacheMagic, kCacheMagic + 4);
  put_u32(out, kCacheVersion);
  put_u64(out, cache.samples.size());
  out.reserve(kCacheHeaderBytes + cache.samples.size() * record_floats(cache.joints) * 4);
  for (const Sample& s : cache.samples) {
    if (s.crop.size != kPatchSize || s.crop.patch.size() != kCachePatchFloats)
      throw FormatError("cache records need a 96x96 patch");
    if (s.labels.size() != 3 * static_cast<std::size_t>(cache.joints))
      throw FormatError("cache record has " + std::to_string(s.labels.size()) + " labels, expected 3J = " +
                        std::to_string(3 * cache.joints));
    for (float v : s.crop.patch) put_f32(out, v);
    for (float v : s.labels) put_f32(out, v);
    const CropTransform& t = s.crop.transform;
    for (double v : {t.centroid.x, t.centroid.y, t.centroid.z, t.cube_size, t.rotation_deg, t.scale, 0.0})
      put_f32(out, static_cast<float>(v));
  }
  return out;
}

SampleCache decode_cache(const std::vector<char>& bytes) {
  const CacheHeader h = parse_cache_header(bytes.data(), bytes.size());
  SampleCache cache;
  cache.joints = h.joints;
  const std::size_t rec = record_floats(h.joints) * 4;
  cache.samples.reserve(h.count);
  for (std::uint64_t i = 0; i < h.count; ++i)
    cache.samples.push_back(decode_record(bytes.data() + kCacheHeaderBytes + i * rec, h.joints));
  return cache;
}

void write_cache(const fs::path& path, const SampleCache& cache) {
  const std::vector<char> bytes = encode_cache(cache);
  std::ofstream out(path, std::ios::binary);
  if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())))
    throw FormatError("cannot write cache " + path.string());
}

SampleCache read_cache(const fs::path& path) {
  const std::string s = read_file(path);
  return decode_cache(std::vector<char>(s.begin(), s.end()));
}

std::uint64_t cache_record_count(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char head[kCacheHeaderBytes];
  if (!in || !in.read(head, kCacheHeaderBytes)) throw FormatError("cannot read cache " + path.string());
  return parse_cache_header(head, fs::file_size(path)).count;
}

Sample read_cache_record(const fs::path& path, std::size_t index) {
  std::ifstream in(path, std::ios::binary);
  char head[kCacheHeaderBytes];
  if (!in || !in.read(head, kCacheHeaderBytes)) throw FormatError("cannot read cache " + path.string());
  const CacheHeader h = parse_cache_header(head, fs::file_size(path));
  if (index >= h.count) throw FormatError("cache record " + std::to_string(index) + " out of range");
  const std::size_t rec = record_floats(h.joints) * 4;
  std::vector<char> buf(rec);
  in.seekg(static_cast<std::streamoff>(kCacheHeaderBytes + index * rec));
  if (!in.read(buf.data(), static_cast<std::streamsize>(rec))) throw FormatError("cache truncated");
  return decode_record(buf.data(), h.joints);
}

// ---------------------------------------------------------------------------

void write_depth_pgm(const fs::path& path, const DepthFrame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P5\n" << frame.width << " " << frame.height << "\n65535\n";
  std::vector<char> buf;
  buf.reserve(frame.depth.size() * 2);
  for (float d : frame.depth) {
    const auto v = static_cast<std::uint16_t>(std::clamp(std::lround(d), 0L, 65535L));
    buf.push_back(static_cast<char>(v >> 8));
    buf.push_back(static_cast<char>(v & 0xff));
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

DepthFrame read_depth_pgm(const fs::path& path, const CameraIntrinsics& intrinsics) {
  const std::string data = read_file(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
  };
  if (token() != "P5") throw FormatError(path.string() + ": not a binary PGM");
  DepthFrame f;
  f.intrinsics = intrinsics;
  try {
    f.width = std::stoi(token());
    f.height = std::stoi(token());
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": bad PGM header");
  }
  const std::string maxval = token();
  ++pos;  // single whitespace before raster
  const bool wide = maxval != "255";
  const std::size_t n = static_cast<std::size_t>(f.width) * f.height;
  if (data.size() < pos + n * (wide ? 2 : 1)) throw FormatError(path.string() + ": truncated PGM raster");
  f.depth.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
    f.depth[i] = wide ? float(p[2 * i] << 8 | p[2 * i + 1]) : float(p[i]);
  }
  return f;
}

// ---------------------------------------------------------------------------

fs::path DatasetManifest::frame_path(const ManifestEntry& e) const {
  const fs::path p(e.frame);
  return p.is_absolute() ? p : base_dir / p;
}

DatasetManifest parse_manifest(const std::string& text, const fs::path& base_dir, const ManifestOptions& options) {
  DatasetManifest m;
  m.base_dir = base_dir;
  bool image_coords = false;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(1, eq - 1), value = line.substr(eq + 1);
      try {
        if (key == "name") m.name = value;
        else if (key == "J") m.joints = std::stoi(value);
        else if (key == "fx") m.intrinsics.fx = std::stod(value);
        else if (key == "fy") m.intrinsics.fy = std::stod(value);
        else if (key == "cx") m.intrinsics.cx = std::stod(value);
        else if (key == "cy") m.intrinsics.cy = std::stod(value);
        else if (key == "split") m.split = value;
        else if (key == "coords") {
          if (value != "world" && value != "image")
            throw FormatError("manifest line " + std::to_string(line_no) + ": coords must be world or image");
          image_coords = value == "image";
        }
      } catch (const std::invalid_argument&) {
        throw FormatError("manifest line " + std::to_string(line_no) + ": bad value for '" + key + "'");
      }
      continue;
    }
    const auto tok = split_ws(line);
    const std::size_t numbers = tok.size() - 1;
    if (m.joints == 0) {
      if (numbers == 0 || numbers % 3 != 0)
        throw FormatError("manifest line " + std::to_string(line_no) + ": " + std::to_string(numbers) +
                          " numbers is not a multiple of 3");
      m.joints = static_cast<int>(numbers / 3);
    }
    if (numbers != 3 * static_cast<std::size_t>(m.joints))
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected " + std::to_string(3 * m.joints) +
                        " numbers for J=" + std::to_string(m.joints) + ", got " + std::to_string(numbers));
    ManifestEntry e;
    e.frame = std::string(tok[0]);
    for (std::size_t k = 1; k < tok.size(); k += 3) {
      const Vec3 v{parse_double(tok[k], line_no), parse_double(tok[k + 1], line_no), parse_double(tok[k + 2], line_no)};
      e.annotation.joints.push_back(image_coords ? image_to_world({v.x, v.y, v.z}, m.intrinsics) : v);
    }
    if (!options.exclude.count(e.frame)) m.entries.push_back(std::move(e));
  }
  m.intrinsics.validate();
  if (m.entries.empty()) throw FormatError("manifest describes an empty dataset");
  return m;
}

DatasetManifest load_manifest(const fs::path& path, const ManifestOptions& options) {
  if (!fs::exists(path)) throw FormatError("manifest not found: " + path.string());
  try {
    return parse_manifest(read_file(path), path.parent_path(), options);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string format_manifest(const DatasetManifest& m) {
  std::string s;
  s += "#name=" + m.name + "\n";
  s += "#J=" + std::to_string(m.joints) + "\n";
  s += "#fx=" + fmt_double(m.intrinsics.fx) + "\n#fy=" + fmt_double(m.intrinsics.fy) + "\n";
  s += "#cx=" + fmt_double(m.intrinsics.cx) + "\n#cy=" + fmt_double(m.intrinsics.cy) + "\n";
  s += "#split=" + m.split + "\n#coords=world\n";
  for (const ManifestEntry& e : m.entries) {
    s += e.frame;
    for (const Vec3& j : e.annotation.joints) s += " " + fmt_double(j.x) + " " + fmt_double(j.y) + " " + fmt_double(j.z);
    s += "\n";
  }
  return s;
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << format_manifest(m);
}

std::string convert_icvl_labels(const std::string& labels_text, const CameraIntrinsics& k, const std::string& name,
                                int joints) {
  std::string s = "#name=" + name + "\n#J=" + std::to_string(joints) + "\n";
  s += "#fx=" + fmt_double(k.fx) + "\n#fy=" + fmt_double(k.fy) + "\n#cx=" + fmt_double(k.cx) + "\n#cy=" +
       fmt_double(k.cy) + "\n#split=train\n#coords=image\n";
  std::istringstream in(labels_text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 1 + 3 * static_cast<std::size_t>(joints))
      throw FormatError("ICVL label line " + std::to_string(line_no) + ": expected " + std::to_string(3 * joints) +
                        " numbers, got " + std::to_string(tok.size() - 1));
    for (std::size_t i = 1; i < tok.size(); ++i) parse_double(tok[i], line_no);
    s += line + "\n";
  }
  return s;
}

std::pair<DatasetManifest, DatasetManifest> split_manifest(const DatasetManifest& m, std::pair<double, double> fr,
                                                           std::uint64_t seed) {
  if (fr.first < 0 || fr.second < 0 || std::abs(fr.first + fr.second - 1.0) > 1e-9)
    throw InputError("split fractions must be non-negative and sum to 1");
  std::vector<std::size_t> order(m.entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  CounterRng rng(CounterRng::derive(seed, {0x5911}));
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_train = static_cast<std::size_t>(std::llround(fr.first * static_cast<double>(order.size())));
  std::sort(order.begin(), order.begin() + n_train);
  std::sort(order.begin() + n_train, order.end());

  auto subset = [&](auto first, auto last, const char* split) {
    DatasetManifest out = m;
    out.split = split;
    out.entries.clear();
    for (auto it = first; it != last; ++it) out.entries.push_back(m.entries[*it]);
    return out;
  };
  return {subset(order.begin(), order.begin() + n_train, "train"), subset(order.begin() + n_train, order.end(), "test")};
}

Sample make_sample(const DepthFrame& frame, const HandAnnotation& annotation, const PreprocessConfig& config) {
  Sample s;
  s.crop = preprocess_frame(frame, config);
  s.labels = normalize_joints(annotation, s.crop.transform).values;
  return s;
}

SampleCache build_cache(const DatasetManifest& m, const PreprocessConfig& config, const CacheBuildOptions& options,
                        std::vector<std::string>* warnings) {
  if (config.patch_size != kPatchSize) throw InputError("the sample cache stores 96x96 patches");
  SampleCache cache;
  cache.joints = m.joints;
  for (const ManifestEntry& e : m.entries) {
    try {
      cache.samples.push_back(make_sample(read_depth_pgm(m.frame_path(e), m.intrinsics), e.annotation, config));
    } catch (const std::runtime_error& err) {
      if (!options.skip_bad_frames) throw;
      if (warnings) warnings->push_back("skipped " + e.frame + ": " + err.what());
    }
  }
  if (cache.samples.empty()) throw FormatError("no frame of the manifest could be preprocessed");
  return cache;
}

// ---------------------------------------------------------------------------

SynthSample synth_sample(std::size_t index, int joints, std::uint64_t seed, const CameraIntrinsics& k,
                         const SynthOptions& o) {
  if (joints < 5 || joints > kSynthMaxJoints)
    throw InputError("synthetic hands support 5..16 joints, got " + std::to_string(joints));
  k.validate();
  CounterRng rng(CounterRng::derive(seed, {0x5e7, index}));
  const HandModel hand = make_hand(rng, o);

  SynthSample s;
  s.hand_center = hand.center;
  s.annotation.joints.assign(hand.joints.begin(), hand.joints.begin() + joints);
  s.frame.width = o.width;
  s.frame.height = o.height;
  s.frame.intrinsics = k;
  s.frame.depth.assign(static_cast<std::size_t>(o.width) * o.height, 0.0f);

  // Screen-space bound of the hand's bounding sphere.
  constexpr double reach = 130.0;
  const ImagePoint c = world_to_image(hand.center, k);
  const double near_z = std::max(hand.center.z - reach, 1.0);
  const int u0 = std::max(0, static_cast<int>(c.u - reach * k.fx / near_z) - 1);
  const int u1 = std::min(o.width - 1, static_cast<int>(c.u + reach * k.fx / near_z) + 1);
  const int v0 = std::max(0, static_cast<int>(c.v - reach * k.fy / near_z) - 1);
  const int v1 = std::min(o.height - 1, static_cast<int>(c.v + reach * k.fy / near_z) + 1);

  Vec3 surface_sum;
  std::size_t hits = 0;
  for (int v = v0; v <= v1; ++v)
    for (int u = u0; u <= u1; ++u) {
      Vec3 rd{(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0};
      rd = rd * (1.0 / rd.norm());
      double best = hit_ellipsoid(rd, hand);
      if (best <= 0) best = -1.0;
      for (const Capsule& cap : hand.capsules) {
        const double t = hit_capsule(rd, cap);
        if (t > 0 && (best < 0 || t < best)) best = t;
      }
      if (best > 0) {
        surface_sum = surface_sum + rd * best;
        ++hits;
        double z = best * rd.z;
        if (o.depth_jitter_mm > 0) z += rng.uniform(-o.depth_jitter_mm, o.depth_jitter_mm);
        s.frame.depth[static_cast<std::size_t>(v) * o.width + u] = static_cast<float>(z);
      }
    }
  if (hits) s.visible_centroid = surface_sum * (1.0 / static_cast<double>(hits));
  return s;
}

std::vector<SynthSample> synth_generate(std::size_t count, int joints, std::uint64_t seed, const CameraIntrinsics& k,
                                        const SynthOptions& o) {
  if (count == 0) throw InputError("synthetic dataset needs at least one sample");
  std::vector<SynthSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_sample(i, joints, seed, k, o));
  return out;
}

fs::path write_synthetic_dataset(const fs::path& dir, const std::vector<SynthSample>& samples,
                                 const CameraIntrinsics& k, const std::string& name) {
  fs::create_directories(dir / "frames");
  DatasetManifest m;
  m.name = name;
  m.intrinsics = k;
  m.joints = samples.empty() ? 0 : static_cast<int>(samples[0].annotation.joints.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frames/%06zu.pgm", i);
    write_depth_pgm(dir / buf, samples[i].frame);
    m.entries.push_back({buf, samples[i].annotation});
  }
  const fs::path path = dir / "manifest.txt";
  write_manifest(path, m);
  return path;
}

SampleCache synth_cache(std::size_t count, int joints, std::uint64_t seed, const CameraIntrinsics& k,
                        const PreprocessConfig& config, const SynthOptions& o) {
  if (count == 0) throw InputError("synthetic dataset needs at least one sample");
  SampleCache cache;
  cache.joints = joints;
  cache.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const SynthSample s = synth_sample(i, joints, seed, k, o);
    cache.samples.push_back(make_sample(s.frame, s.annotation, config));
  }
  return cache;
}

}  // namespace ren
