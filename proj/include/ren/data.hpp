#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ren/preprocess.hpp"

namespace ren {

// ---------------------------------------------------------------------------
// Samples and the binary cache
// ---------------------------------------------------------------------------

/// A preprocessed training example: the crop and its normalized labels.
struct Sample {
  CropResult crop;
  std::vector<float> labels;
};

struct SampleCache {
  int joints = 0;
  std::vector<Sample> samples;
};

/// "RENC" | version u32 | record count u64 | records. A record is 96*96
/// patch floats, 3J label floats and 7 transform floats (centroid xyz, cube
/// size, rotation, scale, reserved), all little-endian float32. J is not
/// stored; it follows from the file size and record count.
inline constexpr std::uint32_t kCacheVersion = 1;
inline constexpr std::size_t kCacheTransformFloats = 7;

std::vector<char> encode_cache(const SampleCache& cache);
SampleCache decode_cache(const std::vector<char>& bytes);
void write_cache(const std::filesystem::path& path, const SampleCache& cache);
SampleCache read_cache(const std::filesystem::path& path);
/// Reads one record by position without loading the rest of the file.
Sample read_cache_record(const std::filesystem::path& path, std::size_t index);
std::uint64_t cache_record_count(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

/// 16-bit binary PGM (P5, maxval 65535, big-endian samples), depth in mm.
void write_depth_pgm(const std::filesystem::path& path, const DepthFrame& frame);
DepthFrame read_depth_pgm(const std::filesystem::path& path, const CameraIntrinsics& intrinsics);

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string frame;
  HandAnnotation annotation;
};

/// Text manifest: header lines "#key=value" (name, J, fx, fy, cx, cy,
/// split, coords) then one "<frame-ref> <3J numbers>" line per sample.
/// coords=image means each triple is (u, v, depth mm) and is converted to
/// camera-frame millimetres on load. Frame refs are relative to base_dir.
struct DatasetManifest {
  std::string name = "dataset";
  int joints = 0;
  CameraIntrinsics intrinsics;
  std::string split = "train";
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::filesystem::path frame_path(const ManifestEntry& e) const;
};

struct ManifestOptions {
  /// Frame refs to drop while loading.
  std::set<std::string> exclude;
};

DatasetManifest load_manifest(const std::filesystem::path& path, const ManifestOptions& options = {});
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                               const ManifestOptions& options = {});
/// Writes world-coordinate joints with round-trip exact number formatting.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
std::string format_manifest(const DatasetManifest& manifest);

/// ICVL label file: "<image path> <u1 v1 d1 ... u16 v16 d16>" per line, image
/// coordinates. Produces a coords=image manifest text.
std::string convert_icvl_labels(const std::string& labels_text, const CameraIntrinsics& intrinsics,
                                const std::string& name, int joints = 16);

/// Disjoint, exhaustive, seed-deterministic split. fractions must sum to 1.
std::pair<DatasetManifest, DatasetManifest> split_manifest(const DatasetManifest& manifest,
                                                           std::pair<double, double> fractions,
                                                           std::uint64_t seed);

struct CacheBuildOptions {
  /// Skip unreadable or unprocessable frames instead of failing.
  bool skip_bad_frames = false;
};

/// Preprocesses every manifest frame once. Skipped frames are reported in
/// `warnings` when given.
SampleCache build_cache(const DatasetManifest& manifest, const PreprocessConfig& config,
                        const CacheBuildOptions& options = {}, std::vector<std::string>* warnings = nullptr);

/// Crop plus labels for one frame with its annotation.
Sample make_sample(const DepthFrame& frame, const HandAnnotation& annotation, const PreprocessConfig& config);

// ---------------------------------------------------------------------------
// Synthetic hands
// ---------------------------------------------------------------------------

struct SynthOptions {
  int width = 320;
  int height = 240;
  /// Uniform depth noise amplitude, mm.
  double depth_jitter_mm = 0.0;
  double min_z = 350.0;
  double max_z = 450.0;
  double max_offset_xy = 30.0;
  double max_roll_deg = 40.0;
  double max_tilt_deg = 15.0;
};

struct SynthSample {
  DepthFrame frame;
  HandAnnotation annotation;
  /// Palm centre (joint 0).
  Vec3 hand_center;
  /// Mean of the exact ray-surface hits behind the rendered pixels.
  Vec3 visible_centroid;
};

inline constexpr int kSynthMaxJoints = 16;

/// Renders a palm ellipsoid with five two-segment capsule fingers in a random
/// pose. Joints are the palm centre then finger tips, middle joints and bases,
/// truncated to the first `joints` (5..16). Sample i depends only on (seed, i).
std::vector<SynthSample> synth_generate(std::size_t count, int joints, std::uint64_t seed,
                                        const CameraIntrinsics& intrinsics, const SynthOptions& options = {});
SynthSample synth_sample(std::size_t index, int joints, std::uint64_t seed, const CameraIntrinsics& intrinsics,
                         const SynthOptions& options = {});

/// Writes frames/NNNNNN.pgm and manifest.txt under `dir`; returns the
/// manifest path.
std::filesystem::path write_synthetic_dataset(const std::filesystem::path& dir, const std::vector<SynthSample>& samples,
                                              const CameraIntrinsics& intrinsics, const std::string& name);

/// In-memory synthetic samples, preprocessed without going through disk.
SampleCache synth_cache(std::size_t count, int joints, std::uint64_t seed, const CameraIntrinsics& intrinsics,
                        const PreprocessConfig& config, const SynthOptions& options = {});

}  // namespace ren
