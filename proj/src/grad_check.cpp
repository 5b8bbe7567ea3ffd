#include "ren/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ren/errors.hpp"
#include "ren/rng.hpp"

namespace ren {
namespace {

double eval_loss(const LossBuilder& build, bool training) {
  Graph<double> g(training);
  const double v = build(g).value()[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
  return v;
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& build, ParameterSet<double>& params, const GradCheckOptions& options) {
  {
    Graph<double> g(options.training);
    Var<double> loss = build(g);
    g.backward(loss);
  }
  std::vector<Tensor<double>> analytic;
  for (std::size_t i = 0; i < params.size(); ++i) analytic.push_back(params[i].grad);

  GradCheckReport report;
  CounterRng rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<double>& p = params[pi];
    std::vector<std::size_t> idx(p.value.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (options.max_entries_per_tensor && idx.size() > options.max_entries_per_tensor) {
      rng.shuffle(std::span<std::size_t>(idx));
      idx.resize(options.max_entries_per_tensor);
    }
    for (std::size_t i : idx) {
      const double saved = p.value[i];
      p.value[i] = saved + options.step;
      const double up = eval_loss(build, options.training);
      p.value[i] = saved - options.step;
      const double down = eval_loss(build, options.training);
      p.value[i] = saved;

      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.floor});
      ++report.checked;
      if (report.checked == 1 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_parameter = p.name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].grad = std::move(analytic[i]);
  return report;
}

}  // namespace ren
