#include "ren/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ren/errors.hpp"

namespace ren {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Bilinear depth lookup at image coordinates (u, v). Falls back to the
// nearest pixel when any neighbour is missing so holes do not bleed.
double sample_depth(const DepthFrame& f, double u, double v) {
  const int j0 = static_cast<int>(std::floor(u));
  const int i0 = static_cast<int>(std::floor(v));
  const double tx = u - j0, ty = v - i0;
  if (i0 >= 0 && j0 >= 0 && i0 + 1 < f.height && j0 + 1 < f.width) {
    const double a = f.at(i0, j0), b = f.at(i0, j0 + 1), c = f.at(i0 + 1, j0), d = f.at(i0 + 1, j0 + 1);
    if (a > 0 && b > 0 && c > 0 && d > 0) {
      const double top = a + (b - a) * tx;
      const double bottom = c + (d - c) * tx;
      return top + (bottom - top) * ty;
    }
  }
  const int j = static_cast<int>(std::lround(u));
  const int i = static_cast<int>(std::lround(v));
  if (i < 0 || j < 0 || i >= f.height || j >= f.width) return 0.0;
  return f.at(i, j);
}

// Bilinear lookup in a patch at continuous pixel coordinates, edge-clamped.
// Returns +1 (background) outside the patch.
float sample_patch(const CropResult& c, double col, double row) {
  const double lim = c.size - 0.5;
  if (col < -0.5 || row < -0.5 || col > lim || row > lim) return 1.0f;
  const double x = std::clamp(col, 0.0, c.size - 1.0);
  const double y = std::clamp(row, 0.0, c.size - 1.0);
  const int j0 = std::min(static_cast<int>(x), c.size - 2);
  const int i0 = std::min(static_cast<int>(y), c.size - 2);
  const double tx = x - j0, ty = y - i0;
  const double a = c.at(i0, j0), b = c.at(i0, j0 + 1), cc = c.at(i0 + 1, j0), d = c.at(i0 + 1, j0 + 1);
  const double top = a + (b - a) * tx;
  const double bottom = cc + (d - cc) * tx;
  return static_cast<float>(top + (bottom - top) * ty);
}

// In-plane rotation of (x, y) by `deg`.
Vec3 rotate_xy(const Vec3& p, double deg) {
  if (deg == 0.0) return p;
  const double c = std::cos(deg * kDegToRad), s = std::sin(deg * kDegToRad);
  return {c * p.x - s * p.y, s * p.x + c * p.y, p.z};
}

}  // namespace

double Vec3::norm() const { return std::sqrt(dot(*this)); }

void CameraIntrinsics::validate() const {
  if (!(fx > 0 && fy > 0)) throw InputError("camera intrinsics need fx > 0 and fy > 0");
}

ImagePoint world_to_image(const Vec3& p, const CameraIntrinsics& k) {
  if (!(p.z > 0)) throw InputError("cannot project a point with z <= 0 (z = " + std::to_string(p.z) + ")");
  return {p.x * k.fx / p.z + k.cx, p.y * k.fy / p.z + k.cy, p.z};
}

Vec3 image_to_world(const ImagePoint& p, const CameraIntrinsics& k) {
  if (!(p.depth > 0)) throw InputError("cannot back-project a pixel with depth <= 0");
  return {(p.u - k.cx) * p.depth / k.fx, (p.v - k.cy) * p.depth / k.fy, p.depth};
}

void DepthFrame::validate() const {
  if (width <= 0 || height <= 0) throw InputError("depth frame has no pixels");
  if (depth.size() != static_cast<std::size_t>(width) * height)
    throw InputError("depth frame is " + std::to_string(width) + "x" + std::to_string(height) + " but holds " +
                     std::to_string(depth.size()) + " values");
  for (float d : depth)
    if (!(d >= 0) || !std::isfinite(d)) throw InputError("depth frame contains negative or non-finite depth");
  intrinsics.validate();
}

std::size_t Mask::count() const { return static_cast<std::size_t>(std::count(on.begin(), on.end(), 1)); }

Mask segment_foreground(const DepthFrame& frame, double near, double far, bool largest_component) {
  if (!(near < far)) throw InputError("segmentation band needs near < far");
  Mask m{frame.width, frame.height, std::vector<std::uint8_t>(frame.depth.size(), 0)};
  for (std::size_t i = 0; i < frame.depth.size(); ++i) {
    const double d = frame.depth[i];
    m.on[i] = d > 0 && d >= near && d <= far;
  }
  if (!largest_component) return m;

  // Label 4-connected components; keep the largest (first found on ties).
  std::vector<int> label(m.on.size(), -1);
  std::vector<std::size_t> stack;
  int best = -1;
  std::size_t best_size = 0;
  int next = 0;
  for (std::size_t seed = 0; seed < m.on.size(); ++seed) {
    if (!m.on[seed] || label[seed] >= 0) continue;
    std::size_t size = 0;
    stack.push_back(seed);
    label[seed] = next;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++size;
      const int r = static_cast<int>(p / frame.width), c = static_cast<int>(p % frame.width);
      const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& rc : nbr) {
        if (rc[0] < 0 || rc[1] < 0 || rc[0] >= frame.height || rc[1] >= frame.width) continue;
        const std::size_t q = static_cast<std::size_t>(rc[0]) * frame.width + rc[1];
        if (m.on[q] && label[q] < 0) {
          label[q] = next;
          stack.push_back(q);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best = next;
    }
    ++next;
  }
  for (std::size_t i = 0; i < m.on.size(); ++i) m.on[i] = label[i] == best && best >= 0;
  return m;
}

Vec3 compute_centroid(const DepthFrame& frame, const Mask& mask) {
  Vec3 acc;
  std::size_t n = 0;
  for (int i = 0; i < frame.height; ++i)
    for (int j = 0; j < frame.width; ++j) {
      const std::size_t p = static_cast<std::size_t>(i) * frame.width + j;
      if (!mask.on[p] || !(frame.depth[p] > 0)) continue;
      acc = acc + image_to_world({double(j), double(i), frame.depth[p]}, frame.intrinsics);
      ++n;
    }
  if (n == 0) throw InputError("cannot compute a centroid from an empty mask");
  return acc * (1.0 / static_cast<double>(n));
}

CropResult crop_cube(const DepthFrame& frame, const Vec3& centroid, double cube_size, int out) {
  if (!(centroid.z > 0)) throw InputError("crop centroid must lie in front of the camera");
  if (!(cube_size > 0) || out < 2) throw InputError("crop needs cube_size > 0 and at least a 2x2 patch");
  const ImagePoint c = world_to_image(centroid, frame.intrinsics);
  const double half_u = cube_size * frame.intrinsics.fx / centroid.z;
  const double half_v = cube_size * frame.intrinsics.fy / centroid.z;

  CropResult r;
  r.size = out;
  r.patch.assign(static_cast<std::size_t>(out) * out, 1.0f);
  r.transform = {centroid, cube_size, 0.0, 1.0};
  for (int i = 0; i < out; ++i) {
    const double qy = (i + 0.5) / out * 2.0 - 1.0;
    for (int j = 0; j < out; ++j) {
      const double qx = (j + 0.5) / out * 2.0 - 1.0;
      const double d = sample_depth(frame, c.u + qx * half_u, c.v + qy * half_v);
      if (!(d > 0)) continue;
      const double clamped = std::clamp(d, centroid.z - cube_size, centroid.z + cube_size);
      r.patch[static_cast<std::size_t>(i) * out + j] = static_cast<float>((clamped - centroid.z) / cube_size);
    }
  }
  return r;
}

double denormalize_depth(float value, const CropTransform& t) {
  return t.centroid.z + static_cast<double>(value) * t.cube_size;
}

NormalizedJoints normalize_joints(const HandAnnotation& ann, const CropTransform& t) {
  NormalizedJoints out;
  out.values.reserve(ann.joints.size() * 3);
  for (std::size_t k = 0; k < ann.joints.size(); ++k) {
    const Vec3 d = ann.joints[k] - t.centroid;
    if (std::abs(d.x) > 2 * t.cube_size || std::abs(d.y) > 2 * t.cube_size || std::abs(d.z) > 2 * t.cube_size)
      out.out_of_cube.push_back(k);
    const Vec3 n = rotate_xy(d, t.rotation_deg) * (1.0 / t.cube_size);
    out.values.push_back(static_cast<float>(n.x));
    out.values.push_back(static_cast<float>(n.y));
    out.values.push_back(static_cast<float>(n.z));
  }
  return out;
}

namespace {

template <typename S>
HandAnnotation denormalize_impl(std::span<const S> pred, const CropTransform& t) {
  if (pred.size() % 3 != 0) throw ShapeError("joint vector length " + std::to_string(pred.size()) + " is not 3J");
  HandAnnotation ann;
  ann.joints.reserve(pred.size() / 3);
  for (std::size_t k = 0; k < pred.size(); k += 3) {
    const Vec3 n{double(pred[k]), double(pred[k + 1]), double(pred[k + 2])};
    ann.joints.push_back(t.centroid + rotate_xy(n * t.cube_size, -t.rotation_deg));
  }
  return ann;
}

}  // namespace

HandAnnotation denormalize_joints(std::span<const float> pred, const CropTransform& t) {
  return denormalize_impl(pred, t);
}

HandAnnotation denormalize_joints(std::span<const double> pred, const CropTransform& t) {
  return denormalize_impl(pred, t);
}

AugmentParams sample_augment(const AugmentRanges& r, CounterRng& rng) {
  AugmentParams p;
  p.translate_mm = {rng.uniform(-r.translate_mm, r.translate_mm), rng.uniform(-r.translate_mm, r.translate_mm),
                    rng.uniform(-r.translate_mm, r.translate_mm)};
  p.scale = rng.uniform(r.scale_min, r.scale_max);
  p.rotate_deg = rng.uniform(-r.rotate_deg, r.rotate_deg);
  return p;
}

Augmented augment(const CropResult& crop, std::span<const float> labels, const AugmentParams& params) {
  if (!(params.scale > 0)) throw InputError("augmentation scale must be positive");
  if (labels.size() % 3 != 0) throw ShapeError("label vector length is not 3J");
  const CropTransform& t = crop.transform;
  const double k = params.scale;
  const Vec3 delta = params.translate_mm * (1.0 / t.cube_size);

  Augmented a;
  a.crop.size = crop.size;
  a.crop.transform = {t.centroid + rotate_xy(params.translate_mm, -t.rotation_deg), t.cube_size * k,
                      t.rotation_deg + params.rotate_deg, t.scale * k};

  a.labels.resize(labels.size());
  for (std::size_t j = 0; j < labels.size(); j += 3) {
    const Vec3 n{double(labels[j]), double(labels[j + 1]), double(labels[j + 2])};
    const Vec3 m = rotate_xy(n - delta, params.rotate_deg) * (1.0 / k);
    a.labels[j] = static_cast<float>(m.x);
    a.labels[j + 1] = static_cast<float>(m.y);
    a.labels[j + 2] = static_cast<float>(m.z);
  }

  const int size = crop.size;
  a.crop.patch.resize(crop.patch.size());
  for (int i = 0; i < size; ++i) {
    const double qy = (i + 0.5) / size * 2.0 - 1.0;
    for (int j = 0; j < size; ++j) {
      const double qx = (j + 0.5) / size * 2.0 - 1.0;
      const Vec3 q = rotate_xy({qx, qy, 0.0}, -params.rotate_deg) * k + Vec3{delta.x, delta.y, 0.0};
      const float v = sample_patch(crop, (q.x + 1.0) * 0.5 * size - 0.5, (q.y + 1.0) * 0.5 * size - 0.5);
      float out = 1.0f;
      if (v < 1.0f) out = static_cast<float>(std::clamp((v - delta.z) / k, -1.0, 1.0));
      a.crop.patch[static_cast<std::size_t>(i) * size + j] = out;
    }
  }
  return a;
}

Augmented augment(const CropResult& crop, std::span<const float> labels, const AugmentRanges& ranges,
                  CounterRng& rng) {
  return augment(crop, labels, sample_augment(ranges, rng));
}

CropResult preprocess_frame(const DepthFrame& frame, const PreprocessConfig& config) {
  const Mask mask = segment_foreground(frame, config.seg_near, config.seg_far);
  return crop_cube(frame, compute_centroid(frame, mask), config.cube_size, config.patch_size);
}

}  // namespace ren
