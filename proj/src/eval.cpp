#include "ren/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "ren/errors.hpp"

namespace ren {

namespace {

void check_pair(const std::vector<HandAnnotation>& preds, const std::vector<HandAnnotation>& gts) {
  if (preds.size() != gts.size())
    throw InputError("prediction/ground-truth frame count mismatch: " + std::to_string(preds.size()) + " vs " +
                     std::to_string(gts.size()));
  for (std::size_t f = 0; f < preds.size(); ++f)
    if (preds[f].joints.size() != gts[f].joints.size() || gts[f].joints.size() != gts[0].joints.size())
      throw InputError("joint count mismatch at frame " + std::to_string(f));
}

double dist(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

}  // namespace

JointErrors mean_joint_error(const std::vector<HandAnnotation>& preds, const std::vector<HandAnnotation>& gts) {
  check_pair(preds, gts);
  if (gts.empty()) throw InputError("no frames to evaluate");
  const std::size_t j = gts[0].joints.size();
  JointErrors e;
  e.per_joint_mm.assign(j, 0.0);
  for (std::size_t f = 0; f < gts.size(); ++f)
    for (std::size_t k = 0; k < j; ++k) e.per_joint_mm[k] += dist(preds[f].joints[k], gts[f].joints[k]);
  double total = 0.0;
  for (double& v : e.per_joint_mm) {
    v /= static_cast<double>(gts.size());
    total += v;
  }
  e.mean_mm = j ? total / static_cast<double>(j) : 0.0;
  return e;
}

std::vector<double> max_joint_errors(const std::vector<HandAnnotation>& preds, const std::vector<HandAnnotation>& gts) {
  check_pair(preds, gts);
  std::vector<double> out(gts.size(), 0.0);
  for (std::size_t f = 0; f < gts.size(); ++f)
    for (std::size_t k = 0; k < gts[f].joints.size(); ++k)
      out[f] = std::max(out[f], dist(preds[f].joints[k], gts[f].joints[k]));
  return out;
}

double success_rate(const std::vector<HandAnnotation>& preds, const std::vector<HandAnnotation>& gts,
                    double threshold_mm) {
  if (!(threshold_mm > 0)) throw InputError("success threshold must be positive");
  const auto worst = max_joint_errors(preds, gts);
  if (worst.empty()) throw InputError("no frames to evaluate");
  const auto hits = std::count_if(worst.begin(), worst.end(), [&](double e) { return e < threshold_mm; });
  return static_cast<double>(hits) / static_cast<double>(worst.size());
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 80; ++i) t.push_back(i);
  return t;
}

std::vector<CurvePoint> success_curve(const std::vector<HandAnnotation>& preds, const std::vector<HandAnnotation>& gts,
                                      const std::vector<double>& thresholds) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) throw InputError("thresholds must be sorted");
  const auto worst = max_joint_errors(preds, gts);
  if (worst.empty()) throw InputError("no frames to evaluate");
  std::vector<CurvePoint> curve;
  for (double t : thresholds) {
    if (t < 0) throw InputError("negative success threshold");
    const auto hits = std::count_if(worst.begin(), worst.end(), [&](double e) { return t > 0 ? e < t : e == 0.0; });
    curve.push_back({t, static_cast<double>(hits) / static_cast<double>(worst.size())});
  }
  return curve;
}

TimingStats benchmark(const std::function<void()>& fn, int warmup, int reps) {
  if (reps < 10) throw InputError("benchmark needs at least 10 repetitions");
  for (int i = 0; i < warmup; ++i) fn();
  TimingStats s;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    s.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::vector<double> sorted = s.samples_ms;
  std::sort(sorted.begin(), sorted.end());
  double total = 0;
  for (double v : sorted) total += v;
  s.mean_ms = total / reps;
  auto pct = [&](double q) {
    const double pos = q * (reps - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
  };
  s.p50_ms = pct(0.5);
  s.p95_ms = pct(0.95);
  return s;
}

TimingStats benchmark_forward(Predictor& predictor, const Tensor<float>& batch, int warmup, int reps) {
  return benchmark([&] { predictor.forward(batch); }, warmup, reps);
}

EvalReport evaluate(const std::string& name, const std::vector<HandAnnotation>& preds,
                    const std::vector<HandAnnotation>& gts, const std::vector<double>& thresholds) {
  EvalReport r;
  r.name = name;
  const JointErrors e = mean_joint_error(preds, gts);
  r.per_joint_error_mm = e.per_joint_mm;
  r.mean_error_mm = e.mean_mm;
  r.success_curve = success_curve(preds, gts, thresholds);
  r.frame_count = gts.size();
  return r;
}

std::string relative_improvement(double ours_mm, double baseline_mm) {
  if (!(baseline_mm > 0)) throw InputError("baseline error must be positive");
  const double pct = (baseline_mm - ours_mm) / baseline_mm * 100.0;
  // Truncate toward zero at 0.01%; the epsilon absorbs binary representation error.
  const double hundredths = std::trunc(pct * 100.0 + (pct >= 0 ? 1e-7 : -1e-7));
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << (hundredths == 0 ? 0.0 : hundredths / 100.0) << "%";
  return out.str();
}

ComparisonTable compare_report(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw InputError("nothing to compare");
  const std::vector<std::string> header = {"method", "mean_mm", "frames", "fwd_mean_ms", "fwd_p50_ms", "improvement"};
  std::vector<std::vector<std::string>> rows;
  auto fixed = [](double v, int digits) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(digits) << v;
    return o.str();
  };
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const EvalReport& r = reports[i];
    rows.push_back({r.name, fixed(r.mean_error_mm, 2), std::to_string(r.frame_count),
                    r.timing ? fixed(r.timing->mean_ms, 3) : "-", r.timing ? fixed(r.timing->p50_ms, 3) : "-",
                    i == 0 ? "-" : relative_improvement(r.mean_error_mm, reports[0].mean_error_mm)});
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream text, csv;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) text << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      else text << "  " << std::right << std::setw(static_cast<int>(width[c])) << row[c];
      csv << (c ? "," : "") << row[c];
    }
    text << "\n";
    csv << "\n";
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  return {text.str(), csv.str()};
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
  std::ostringstream out;
  out << "threshold_mm,fraction\n";
  out.precision(10);
  for (const auto& p : curve) out << p.threshold_mm << "," << p.fraction << "\n";
  write_text(path, out.str());
}

void write_curve_svg(const std::filesystem::path& path, const std::vector<EvalReport>& reports) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  const double left = 60, top = 20, w = 480, h = 300;
  auto px = [&](double t) { return left + std::clamp(t, 0.0, 80.0) / 80.0 * w; };
  auto py = [&](double f) { return top + (1.0 - std::clamp(f, 0.0, 1.0)) * h; };
  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + w + 160 << "\" height=\"" << top + h + 50
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << w << "\" height=\"" << h
    << "\" fill=\"none\" stroke=\"#000\"/>\n";
  for (int t = 0; t <= 80; t += 10)
    s << "<text x=\"" << px(t) << "\" y=\"" << top + h + 15 << "\" text-anchor=\"middle\">" << t << "</text>\n";
  for (int i = 0; i <= 10; i += 2)
    s << "<text x=\"" << left - 5 << "\" y=\"" << py(i / 10.0) + 4 << "\" text-anchor=\"end\">" << i * 10
      << "%</text>\n";
  s << "<text x=\"" << left + w / 2 << "\" y=\"" << top + h + 35
    << "\" text-anchor=\"middle\">maximum allowed distance to GT (mm)</text>\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const char* color = colors[i % 6];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : reports[i].success_curve) s << px(p.threshold_mm) << "," << py(p.fraction) << " ";
    s << "\"/>\n";
    const double ly = top + 15 + 16 * static_cast<double>(i);
    s << "<line x1=\"" << left + w + 10 << "\" y1=\"" << ly << "\" x2=\"" << left + w + 30 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << left + w + 35 << "\" y=\"" << ly + 4 << "\">" << reports[i].name << "</text>\n";
  }
  s << "</svg>\n";
  write_text(path, s.str());
}

std::string report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["frame_count"] = r.frame_count;
  j["mean_error_mm"] = r.mean_error_mm;
  j["per_joint_error_mm"] = r.per_joint_error_mm;
  auto& curve = j["success_curve"] = nlohmann::ordered_json::array();
  for (const auto& p : r.success_curve) curve.push_back({{"threshold_mm", p.threshold_mm}, {"fraction", p.fraction}});
  if (r.timing)
    j["timing"] = {{"mean_ms", r.timing->mean_ms}, {"p50_ms", r.timing->p50_ms}, {"p95_ms", r.timing->p95_ms}};
  return j.dump(2) + "\n";
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report) {
  write_text(path, report_json(report));
}

}  // namespace ren
