#include <doctest.h>

#include <cmath>
#include <vector>

#include "ren/errors.hpp"
#include "ren/ops.hpp"

using namespace ren;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (T& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

Tensor<double> grad_of(Graph<double>& g, const Var<double>& v) { return g.grad(v); }

}  // namespace

TEST_CASE("conv2d: 3x3 ones kernel on 1..9 with padding") {
  Graph<float> g;
  Var<float> x = g.constant(Tensor<float>({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  Var<float> w = g.constant(Tensor<float>({1, 1, 3, 3}, 1.0f));
  Var<float> b = g.constant(Tensor<float>({1}));
  const Tensor<float> y = conv2d(x, w, b, 1, 1).value();
  CHECK(y == Tensor<float>({1, 1, 3, 3}, {12, 21, 16, 27, 45, 33, 24, 39, 28}));
}

TEST_CASE("conv2d: delta kernel is the identity") {
  CounterRng rng(3);
  Graph<float> g;
  const Tensor<float> xin = random_tensor<float>({2, 1, 7, 5}, rng);
  Tensor<float> k({1, 1, 3, 3});
  k[4] = 1.0f;
  const Tensor<float> y = conv2d(g.constant(xin), g.constant(k), g.constant(Tensor<float>({1})), 1, 1).value();
  CHECK(y == xin);
}

TEST_CASE("conv2d: 1x1 identity matrix over 64 channels") {
  CounterRng rng(4);
  const Tensor<float> xin = random_tensor<float>({1, 64, 12, 12}, rng);
  Tensor<float> k({64, 64, 1, 1});
  for (std::size_t i = 0; i < 64; ++i) k[i * 64 + i] = 1.0f;
  Graph<float> g;
  const Tensor<float> y = conv2d(g.constant(xin), g.constant(k), g.constant(Tensor<float>({64})), 1, 0).value();
  CHECK(y == xin);
}

TEST_CASE("conv2d: shape errors") {
  Graph<float> g;
  Var<float> x = g.constant(Tensor<float>({1, 2, 5, 5}));
  Var<float> b = g.constant(Tensor<float>({1}));
  CHECK_THROWS_AS(conv2d(x, g.constant(Tensor<float>({1, 3, 3, 3})), b, 1, 1), ShapeError);
  Var<float> x6 = g.constant(Tensor<float>({1, 2, 6, 6}));
  CHECK_THROWS_AS(conv2d(x6, g.constant(Tensor<float>({1, 2, 3, 3})), b, 2, 0), ShapeError);
  CHECK_NOTHROW(conv2d(x, g.constant(Tensor<float>({1, 2, 3, 3})), b, 1, 0));
  CHECK_THROWS_AS(conv_output_extent(6, 3, 2, 0), ShapeError);
  CHECK(conv_output_extent(96, 3, 1, 1) == 96);
}

TEST_CASE("conv2d matches the naive oracle on random shapes and strides") {
  CounterRng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng.below(2), c = 1 + rng.below(8), o = 1 + rng.below(6);
    const std::size_t k = rng.below(2) ? 3 : 1;
    const int pad = k == 3 ? static_cast<int>(rng.below(2)) : 0;
    const int stride = 1 + static_cast<int>(rng.below(2));
    std::size_t h = k + rng.below(14), w = k + rng.below(14);
    h += (h + 2 * pad - k) % stride;
    w += (w + 2 * pad - k) % stride;
    const auto x = random_tensor<float>({n, c, h, w}, rng);
    const auto wt = random_tensor<float>({o, c, k, k}, rng);
    const auto b = random_tensor<float>({o}, rng);
    Graph<float> g;
    const Tensor<float> fast = conv2d(g.constant(x), g.constant(wt), g.constant(b), stride, pad).value();
    const Tensor<float> ref = conv2d_reference(x, wt, b, stride, pad);
    REQUIRE(fast.shape() == ref.shape());
    double worst = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, double(std::abs(fast[i] - ref[i])));
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("maxpool2") {
  Graph<double> g;
  Var<double> x = g.variable(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
  Var<double> y = maxpool2(x);
  CHECK(y.value() == Tensor<double>({1, 1, 1, 1}, {4}));
  g.backward(sum(y));
  CHECK(g.grad(x) == Tensor<double>({1, 1, 2, 2}, {0, 0, 0, 1}));

  Graph<float> g2;
  Var<float> c = g2.constant(Tensor<float>({1, 3, 96, 96}, 0.75f));
  Var<float> p1 = maxpool2(c), p2 = maxpool2(p1), p3 = maxpool2(p2);
  CHECK(p1.shape() == Shape{1, 3, 48, 48});
  CHECK(p2.shape() == Shape{1, 3, 24, 24});
  CHECK(p3.shape() == Shape{1, 3, 12, 12});
  for (float v : p3.value().data()) CHECK(v == 0.75f);
  CHECK_THROWS_AS(maxpool2(g2.constant(Tensor<float>({1, 1, 3, 4}))), ShapeError);
}

TEST_CASE("maxpool2 backward preserves gradient mass at argmax positions") {
  CounterRng rng(5);
  Graph<double> g;
  Var<double> x = g.variable(random_tensor<double>({2, 3, 8, 6}, rng));
  Var<double> y = maxpool2(x);
  // Weighted sum through a linear layer so each pooled cell carries a distinct gradient.
  Var<double> flat = flatten(y);
  const Tensor<double> wcol = random_tensor<double>({flat.shape()[1], 1}, rng, 0.5, 2.0);
  g.backward(sum(linear(flat, g.constant(wcol), g.constant(Tensor<double>({1})))));
  const Tensor<double>& dx = g.grad(x);
  double in_mass = 0, out_mass = 0;
  for (double v : dx.data()) in_mass += v;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < flat.shape()[1]; ++i) out_mass += wcol[i];
  CHECK(in_mass == doctest::Approx(out_mass).epsilon(1e-12));
  // Every non-zero gradient sits at the maximum of its window.
  const Tensor<double>& xv = x.value();
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (dx[i] == 0) continue;
    const std::size_t w = i % 6, h = (i / 6) % 8, plane = i / 48;
    const std::size_t base = plane * 48 + (h / 2 * 2) * 6 + (w / 2 * 2);
    for (std::size_t o : {base, base + 1, base + 6, base + 7}) CHECK(xv[o] <= xv[i]);
  }
}

TEST_CASE("relu") {
  Graph<double> g;
  Var<double> x = g.variable(Tensor<double>({3}, {-1, 0, 2}));
  CHECK(relu(x).value() == Tensor<double>({3}, {0, 0, 2}));
  Var<double> neg = g.constant(Tensor<double>({4}, -3.0));
  for (double v : relu(neg).value().data()) CHECK(v == 0.0);

  Graph<double> g2;
  Var<double> x2 = g2.variable(Tensor<double>({2}, {-1, 2}));
  g2.backward(sum(relu(x2)));
  CHECK(grad_of(g2, x2) == Tensor<double>({2}, {0, 1}));
}

TEST_CASE("linear") {
  Graph<double> g;
  Tensor<double> eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye[i * 3 + i] = 1;
  const Tensor<double> xin({2, 3}, {1, -2, 3, 0.5, 4, -6});
  CHECK(linear(g.constant(xin), g.constant(eye), g.constant(Tensor<double>({3}))).value() == xin);
  const Tensor<double> y = linear(g.constant(Tensor<double>({1, 2}, {1, 2})), g.constant(Tensor<double>({2, 1}, {1, 1})),
                                  g.constant(Tensor<double>({1}, {0.5})))
                               .value();
  CHECK(y[0] == 3.5);
  Graph<float> gf;
  const Var<float> big = linear(gf.constant(Tensor<float>({1, 2304})), gf.constant(Tensor<float>({2304, 2048})),
                                gf.constant(Tensor<float>({2048})));
  CHECK(big.shape() == Shape{1, 2048});
  CHECK_THROWS_AS(linear(gf.constant(Tensor<float>({1, 3})), gf.constant(Tensor<float>({2, 2})),
                         gf.constant(Tensor<float>({2}))),
                  ShapeError);
}

TEST_CASE("dropout") {
  CounterRng rng(9);
  Graph<float> train(true);
  Var<float> x = train.constant(Tensor<float>({1000000}, 1.0f));
  CHECK(dropout(x, 0.0, rng).id() == x.id());
  const Tensor<float>& y = dropout(x, 0.5, rng).value();
  double mean = 0;
  std::size_t zeros = 0;
  for (float v : y.data()) {
    mean += v;
    zeros += v == 0.0f;
    CHECK((v == 0.0f || v == 2.0f));
  }
  mean /= static_cast<double>(y.size());
  CHECK(std::abs(mean - 1.0) < 0.01);
  CHECK(zeros > 0);

  Graph<float> infer(false);
  Var<float> xi = infer.constant(random_tensor<float>({64}, rng));
  Var<float> yi = dropout(xi, 0.9, rng);
  CHECK(yi.id() == xi.id());
  CHECK(yi.value() == xi.value());
  CHECK_THROWS_AS(dropout(x, 1.0, rng), ShapeError);
  CHECK_THROWS_AS(dropout(x, -0.1, rng), ShapeError);
}

TEST_CASE("concat") {
  Graph<float> g;
  std::vector<Var<float>> parts;
  for (int i = 0; i < 4; ++i) parts.push_back(g.constant(Tensor<float>({1, 2048}, float(i))));
  const Var<float> c = concat(std::span<const Var<float>>(parts));
  CHECK(c.shape() == Shape{1, 8192});
  CHECK(c.value()[2048 * 3] == 3.0f);
  std::vector<Var<float>> one = {parts[0]};
  CHECK(concat(std::span<const Var<float>>(one)).value() == parts[0].value());
  std::vector<Var<float>> bad = {parts[0], g.constant(Tensor<float>({2, 2048}))};
  CHECK_THROWS_AS(concat(std::span<const Var<float>>(bad)), ShapeError);
}

TEST_CASE("concat gradients split back to the inputs exactly") {
  CounterRng rng(21);
  const auto a = random_tensor<double>({3, 2}, rng), b = random_tensor<double>({3, 5}, rng);
  const auto ta = random_tensor<double>({3, 2}, rng), tb = random_tensor<double>({3, 5}, rng);
  Tensor<double> t({3, 7});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 7; ++c) t[r * 7 + c] = c < 2 ? ta[r * 2 + c] : tb[r * 5 + c - 2];

  Graph<double> joint;
  std::vector<Var<double>> ins = {joint.variable(a), joint.variable(b)};
  joint.backward(mse_loss(concat(std::span<const Var<double>>(ins)), joint.constant(t)));

  // Separate graphs: mse over 21 entries = (|a-ta|^2 + |b-tb|^2)/21.
  for (int k = 0; k < 2; ++k) {
    Graph<double> g;
    Var<double> v = g.variable(k == 0 ? a : b);
    Var<double> l = mse_loss(v, g.constant(k == 0 ? ta : tb));
    g.backward(l);
    const double rescale = static_cast<double>(v.value().size()) / 21.0;
    const Tensor<double>& sep = g.grad(v);
    const Tensor<double>& got = joint.grad(ins[k]);
    for (std::size_t i = 0; i < sep.size(); ++i) CHECK(got[i] == doctest::Approx(sep[i] * rescale).epsilon(1e-14));
  }
}

TEST_CASE("add") {
  Graph<double> g;
  Var<double> a = g.variable(Tensor<double>({2}, {1, 2}));
  Var<double> b = g.variable(Tensor<double>({2}, {3, 4}));
  CHECK(add(a, g.constant(Tensor<double>({2}))).value() == a.value());
  CHECK_THROWS_AS(add(a, g.constant(Tensor<double>({3}))), ShapeError);
  Var<double> s = add(a, b);
  CHECK(s.value() == Tensor<double>({2}, {4, 6}));
  g.backward(sum(s));
  CHECK(g.grad(a) == Tensor<double>({2}, {1, 1}));
  CHECK(g.grad(b) == Tensor<double>({2}, {1, 1}));
  CHECK_THROWS_AS(add(a, b), GraphError);
}

TEST_CASE("mse_loss") {
  Graph<double> g;
  Var<double> p = g.variable(Tensor<double>({1, 2}, {0, 0}));
  Var<double> t = g.constant(Tensor<double>({1, 2}, {3, 4}));
  CHECK(mse_loss(t, t).value()[0] == 0.0);
  Var<double> l = mse_loss(p, t);
  CHECK(l.value()[0] == 12.5);
  CHECK_THROWS_AS(mse_loss(p, g.constant(Tensor<double>({2, 1}))), ShapeError);
  g.backward(l);
  // 2 (pred - target) / (N K)
  CHECK(g.grad(p) == Tensor<double>({1, 2}, {-3, -4}));
}

TEST_CASE("average and crop2d") {
  Graph<double> g;
  std::vector<Var<double>> xs = {g.constant(Tensor<double>({1, 2}, {1, 2})), g.constant(Tensor<double>({1, 2}, {3, 6}))};
  CHECK(average(std::span<const Var<double>>(xs)).value() == Tensor<double>({1, 2}, {2, 4}));

  Tensor<double> m({1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) m[i] = static_cast<double>(i);
  const Tensor<double> c = crop2d(g.constant(m), 1, 2, 2, 2).value();
  CHECK(c == Tensor<double>({1, 1, 2, 2}, {6, 7, 10, 11}));
  CHECK_THROWS_AS(crop2d(g.constant(m), 3, 0, 2, 2), ShapeError);
}
