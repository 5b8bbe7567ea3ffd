#include <doctest.h>

#include <functional>

#include "ren/grad_check.hpp"
#include "ren/model.hpp"
#include "ren/ops.hpp"

using namespace ren;

namespace {

using OpFn = std::function<Var<double>(std::vector<Var<double>>&)>;

Tensor<double> random_tensor(const Shape& shape, CounterRng& rng) {
  Tensor<double> t(shape);
  for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// mse(op(inputs), random target) checked over every input.
GradCheckReport check_op(const std::vector<Shape>& shapes, const OpFn& op, std::uint64_t seed = 1,
                         bool training = false) {
  CounterRng rng(seed);
  ParameterSet<double> ps;
  for (std::size_t i = 0; i < shapes.size(); ++i) ps.add("in" + std::to_string(i), random_tensor(shapes[i], rng));
  Tensor<double> target;
  LossBuilder build = [&](Graph<double>& g) {
    std::vector<Var<double>> vars;
    for (std::size_t i = 0; i < ps.size(); ++i) vars.push_back(g.parameter(ps[i]));
    Var<double> out = op(vars);
    if (target.empty()) target = random_tensor(out.shape(), rng);
    return mse_loss(out, g.constant(target));
  };
  GradCheckOptions opts;
  opts.training = training;
  return grad_check(build, ps, opts);
}

}  // namespace

TEST_CASE("grad check: linear alone is tight") {
  const auto r = check_op({{3, 5}, {5, 4}, {4}}, [](auto& v) { return linear(v[0], v[1], v[2]); });
  CHECK(r.checked == 15 + 20 + 4);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("grad check: conv2d variants") {
  CHECK(check_op({{2, 3, 6, 5}, {4, 3, 3, 3}, {4}}, [](auto& v) { return conv2d(v[0], v[1], v[2], 1, 1); })
            .max_rel_error < 1e-4);
  CHECK(check_op({{2, 3, 5, 5}, {2, 3, 1, 1}, {2}}, [](auto& v) { return conv2d(v[0], v[1], v[2], 1, 0); })
            .max_rel_error < 1e-4);
  CHECK(check_op({{1, 2, 7, 7}, {3, 2, 3, 3}, {3}}, [](auto& v) { return conv2d(v[0], v[1], v[2], 2, 0); })
            .max_rel_error < 1e-4);
}

TEST_CASE("grad check: pooling, relu, add, concat, average, crop, flatten") {
  CHECK(check_op({{2, 2, 4, 6}}, [](auto& v) { return maxpool2(v[0]); }).max_rel_error < 1e-4);
  CHECK(check_op({{3, 7}}, [](auto& v) { return relu(v[0]); }).max_rel_error < 1e-4);
  CHECK(check_op({{2, 3}, {2, 3}}, [](auto& v) { return add(v[0], v[1]); }).max_rel_error < 1e-4);
  CHECK(check_op({{2, 3}, {2, 1}, {2, 4}},
                 [](auto& v) { return concat(std::span<const Var<double>>(v)); })
            .max_rel_error < 1e-4);
  CHECK(check_op({{2, 3}, {2, 3}, {2, 3}},
                 [](auto& v) { return average(std::span<const Var<double>>(v)); })
            .max_rel_error < 1e-4);
  CHECK(check_op({{2, 2, 5, 4}}, [](auto& v) { return flatten(crop2d(v[0], 1, 2, 3, 2)); }).max_rel_error < 1e-4);
}

TEST_CASE("grad check: dropout with a fixed mask") {
  const auto r = check_op(
      {{4, 6}},
      [](auto& v) {
        CounterRng mask_rng(77);  // same mask on every rebuild
        return dropout(v[0], 0.5, mask_rng);
      },
      1, true);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("grad check: mse gradient equals 2(pred - target)/(N K)") {
  CHECK(check_op({{3, 4}}, [](auto& v) { return v[0]; }).max_rel_error < 1e-6);
}

TEST_CASE("grad check: composed conv -> relu -> linear -> mse") {
  const auto r = check_op({{2, 2, 6, 6}, {3, 2, 3, 3}, {3}, {108, 5}, {5}}, [](auto& v) {
    return linear(flatten(relu(conv2d(v[0], v[1], v[2], 1, 1))), v[3], v[4]);
  });
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("grad check: tiny models of every variant") {
  for (Variant variant : {Variant::Basic, Variant::BasicLarge, Variant::RegionEnsemble, Variant::RegionBagging}) {
    CAPTURE(variant_name(variant));
    ModelSpec spec;
    spec.variant = variant;
    spec.channels = {2, 3, 4};
    spec.input_size = 16;
    spec.fc_dim = 5;
    spec.fc2_dim = variant == Variant::BasicLarge ? 7 : 0;
    spec.joints = 2;
    Model<double> model(spec, 3);
    CounterRng rng(8);
    // zero biases over an all-zero tile leave fc2 exactly on the ReLU kink,
    // where a central difference is meaningless
    for (std::size_t i = 0; i < model.params().size(); ++i)
      if (model.params()[i].name.ends_with(".b")) model.params()[i].value = random_tensor(model.params()[i].value.shape(), rng);
    const Tensor<double> x = random_tensor({2, 1, 16, 16}, rng);
    const Tensor<double> t = random_tensor({2, 6}, rng);
    LossBuilder build = [&](Graph<double>& g) {
      CounterRng drop(5);
      return mse_loss(forward(model, g.constant(x), &drop).pose, g.constant(t));
    };
    GradCheckOptions opts;
    opts.training = true;
    const auto r = grad_check(build, model.params(), opts);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("grad check catches a corrupted convolution backward") {
  // Forward is a correct convolution; backward reads the kernel transposed.
  auto broken_conv = [](const Var<double>& x, const Var<double>& w) {
    Tensor<double> y = conv2d_reference(x.value(), w.value(), Tensor<double>({w.value().dim(0)}), 1, 1);
    return x.graph().record("broken_conv", std::move(y), {x, w}, [](BackwardContext<double>& ctx) {
      const Tensor<double>& xin = ctx.input(0);
      const Tensor<double>& dy = ctx.grad_output();
      Tensor<double>* dw = ctx.grad_input(1);
      if (!dw) return;
      const std::size_t n = xin.dim(0), c = xin.dim(1), h = xin.dim(2), wd = xin.dim(3), o = dy.dim(1);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t oc = 0; oc < o; ++oc)
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t i = 0; i < 3; ++i)
              for (std::size_t j = 0; j < 3; ++j)
                for (std::size_t y = 0; y < h; ++y)
                  for (std::size_t z = 0; z < wd; ++z) {
                    const long iy = long(y) + long(i) - 1, ix = long(z) + long(j) - 1;
                    if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(wd)) continue;
                    dw->at(oc, ic, j, i) += dy.at(b, oc, y, z) * xin.at(b, ic, iy, ix);  // i, j swapped
                  }
    });
  };
  CounterRng rng(2);
  ParameterSet<double> ps;
  Parameter<double>& w = ps.add("w", random_tensor({2, 2, 3, 3}, rng));
  const Tensor<double> x = random_tensor({1, 2, 5, 5}, rng);
  const Tensor<double> t = random_tensor({1, 2, 5, 5}, rng);
  LossBuilder build = [&](Graph<double>& g) {
    return mse_loss(broken_conv(g.constant(x), g.parameter(w)), g.constant(t));
  };
  const auto r = grad_check(build, ps);
  CHECK(r.max_rel_error > 1e-2);
  CHECK(r.worst_parameter == "w");
}

TEST_CASE("grad check restores the analytic gradients and the parameters") {
  CounterRng rng(4);
  ParameterSet<double> ps;
  ps.add("a", random_tensor({3}, rng));
  const Tensor<double> before = ps[0].value;
  LossBuilder build = [&](Graph<double>& g) { return mse_loss(g.parameter(ps[0]), g.constant(Tensor<double>({3}))); };
  grad_check(build, ps);
  CHECK(ps[0].value == before);
  for (std::size_t i = 0; i < 3; ++i) CHECK(ps[0].grad[i] == doctest::Approx(2.0 * before[i] / 3.0));
}
