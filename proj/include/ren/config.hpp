#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ren/model.hpp"
#include "ren/preprocess.hpp"
#include "ren/train.hpp"

namespace ren {

/// Everything a CLI run needs, as flat key=value pairs. Defaults are the
/// reference training setup; unknown keys are errors.
struct RunConfig {
  /// Model variant name; "basic-bagging" trains `bagging_k` basic models.
  std::string variant = "region-ensemble";
  int bagging_k = 4;
  ModelSpec model;
  TrainConfig train;
  PreprocessConfig preprocess;
  std::string manifest;
  std::string cache;
  /// Generate this many synthetic training samples instead of reading data.
  long synthetic = 0;
  std::string out_root = "runs";
  std::string name = "run";

  bool bagging() const { return variant == "basic-bagging"; }
  /// Model spec with the variant applied.
  ModelSpec resolved_model() const;

  void set(const std::string& key, const std::string& value);
  /// Ordered key=value pairs covering every setting.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string echo() const;
  void validate() const;

  static RunConfig parse(const std::string& text, const std::string& origin = "config");
  static RunConfig load(const std::filesystem::path& path);
};

/// Shortest text that parses back to the same double.
std::string format_number(double v);

}  // namespace ren
