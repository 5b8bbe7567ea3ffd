#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ren/rng.hpp"

namespace ren {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// Pinhole intrinsics in pixels.
struct CameraIntrinsics {
  double fx = 241.42, fy = 241.42, cx = 160.0, cy = 120.0;
  void validate() const;
};

struct ImagePoint {
  double u = 0, v = 0, depth = 0;
};

/// u = x*fx/z + cx, v = y*fy/z + cy. Throws InputError for z <= 0.
ImagePoint world_to_image(const Vec3& p, const CameraIntrinsics& k);
Vec3 image_to_world(const ImagePoint& p, const CameraIntrinsics& k);

/// Depth image in millimetres, row-major, 0 meaning no measurement. Pixel
/// (row i, column j) sits at image coordinates u = j, v = i.
struct DepthFrame {
  int width = 0;
  int height = 0;
  std::vector<float> depth;
  CameraIntrinsics intrinsics;

  float at(int row, int col) const { return depth[static_cast<std::size_t>(row) * width + col]; }
  void validate() const;
};

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> on;

  std::size_t count() const;
};

/// Pixels with near <= depth <= far and depth > 0. With `largest_component`
/// only the biggest 4-connected blob of the band survives.
Mask segment_foreground(const DepthFrame& frame, double near, double far, bool largest_component = true);

/// Mean of the back-projected masked pixels, camera frame, mm.
Vec3 compute_centroid(const DepthFrame& frame, const Mask& mask);

/// Maps a crop's normalized space back to the camera frame:
///   normalized = R(rotation) * (world - centroid) / cube_size
/// with R an in-plane rotation of (x, y). `scale` records the cumulative
/// augmentation scale and is informational.
struct CropTransform {
  Vec3 centroid;
  double cube_size = 150.0;
  double rotation_deg = 0.0;
  double scale = 1.0;
};

/// Square depth patch in [-1, 1]; missing depth is exactly +1.
struct CropResult {
  int size = 96;
  std::vector<float> patch;
  CropTransform transform;

  float at(int row, int col) const { return patch[static_cast<std::size_t>(row) * size + col]; }
};

inline constexpr double kDefaultCubeSize = 150.0;
inline constexpr int kPatchSize = 96;

/// Crops the cube of half-extent `cube_size` around `centroid`: the patch
/// spans the cube's projection at the centroid depth, sampled bilinearly,
/// and depth is clamped to centroid.z +- cube_size then mapped to [-1, 1].
CropResult crop_cube(const DepthFrame& frame, const Vec3& centroid, double cube_size = kDefaultCubeSize,
                     int out = kPatchSize);

/// Inverse of the depth normalization for an in-range patch value.
double denormalize_depth(float value, const CropTransform& t);

struct HandAnnotation {
  std::vector<Vec3> joints;
};

struct NormalizedJoints {
  /// x1, y1, z1, x2, ... in crop-normalized units.
  std::vector<float> values;
  /// Joints farther than two cube sizes from the centroid on some axis.
  std::vector<std::size_t> out_of_cube;
};

NormalizedJoints normalize_joints(const HandAnnotation& ann, const CropTransform& t);
HandAnnotation denormalize_joints(std::span<const float> pred, const CropTransform& t);
HandAnnotation denormalize_joints(std::span<const double> pred, const CropTransform& t);

struct AugmentParams {
  /// Centroid shift in the crop's own (rotated) frame, mm.
  Vec3 translate_mm;
  double scale = 1.0;
  double rotate_deg = 0.0;
};

struct AugmentRanges {
  double translate_mm = 10.0;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double rotate_deg = 180.0;
};

AugmentParams sample_augment(const AugmentRanges& ranges, CounterRng& rng);

struct Augmented {
  CropResult crop;
  std::vector<float> labels;
};

/// Moves the crop instead of the scene: shifts the centroid, scales the
/// cube and rotates the crop in-plane. The patch is resampled in patch space
/// and the labels are re-expressed in the new crop, so
/// denormalize_joints(result.labels, result.crop.transform) equals
/// denormalize_joints(labels, crop.transform).
Augmented augment(const CropResult& crop, std::span<const float> labels, const AugmentParams& params);
Augmented augment(const CropResult& crop, std::span<const float> labels, const AugmentRanges& ranges,
                  CounterRng& rng);

struct PreprocessConfig {
  double seg_near = 100.0;
  double seg_far = 700.0;
  double cube_size = kDefaultCubeSize;
  int patch_size = kPatchSize;
};

/// segment_foreground -> compute_centroid -> crop_cube.
CropResult preprocess_frame(const DepthFrame& frame, const PreprocessConfig& config);

}  // namespace ren
