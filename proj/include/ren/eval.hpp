#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ren/predictor.hpp"
#include "ren/preprocess.hpp"

namespace ren {

struct JointErrors {
  std::vector<double> per_joint_mm;
  /// Mean of the per-joint means.
  double mean_mm = 0.0;
};

/// Euclidean error per joint averaged over frames, then over joints.
JointErrors mean_joint_error(const std::vector<HandAnnotation>& preds, const std::vector<HandAnnotation>& gts);

/// Largest joint error of each frame.
std::vector<double> max_joint_errors(const std::vector<HandAnnotation>& preds, const std::vector<HandAnnotation>& gts);

/// Fraction of frames whose every joint error is strictly below threshold_mm (> 0).
double success_rate(const std::vector<HandAnnotation>& preds, const std::vector<HandAnnotation>& gts,
                    double threshold_mm);

struct CurvePoint {
  double threshold_mm;
  double fraction;
};

/// 0, 1, ..., 80 mm.
std::vector<double> default_thresholds();

/// success_rate at each (sorted, non-negative) threshold. A 0 threshold
/// reports the limit from above: the fraction of exactly perfect frames.
std::vector<CurvePoint> success_curve(const std::vector<HandAnnotation>& preds, const std::vector<HandAnnotation>& gts,
                                      const std::vector<double>& thresholds = default_thresholds());

struct TimingStats {
  double mean_ms = 0, p50_ms = 0, p95_ms = 0;
  std::vector<double> samples_ms;
};

/// Times `fn` reps times (>= 10) after `warmup` untimed calls.
TimingStats benchmark(const std::function<void()>& fn, int warmup, int reps);
TimingStats benchmark_forward(Predictor& predictor, const Tensor<float>& batch, int warmup, int reps);

struct EvalReport {
  std::string name;
  std::vector<double> per_joint_error_mm;
  double mean_error_mm = 0.0;
  std::vector<CurvePoint> success_curve;
  std::size_t frame_count = 0;
  std::optional<TimingStats> timing;
};

EvalReport evaluate(const std::string& name, const std::vector<HandAnnotation>& preds,
                    const std::vector<HandAnnotation>& gts, const std::vector<double>& thresholds = default_thresholds());

/// (baseline - ours) / baseline as a percentage truncated to two decimals,
/// e.g. 7.47 vs 8.10 gives "7.77%".
std::string relative_improvement(double ours_mm, double baseline_mm);

struct ComparisonTable {
  std::string text;
  std::string csv;
};

/// Rows in the given order; improvements are relative to the first report.
ComparisonTable compare_report(const std::vector<EvalReport>& reports);

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve);
/// Line chart, threshold 0-80 mm against fraction 0-1, one line per report.
void write_curve_svg(const std::filesystem::path& path, const std::vector<EvalReport>& reports);
std::string report_json(const EvalReport& report);
void write_report_json(const std::filesystem::path& path, const EvalReport& report);

}  // namespace ren
