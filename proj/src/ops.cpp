#include "ren/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <string>

#include "ren/errors.hpp"

namespace ren {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<MatR<T>>;
template <typename T>
using CMap = Eigen::Map<const MatR<T>>;

void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

struct ConvGeom {
  std::size_t n, in_c, h, w, out_c, kh, kw, oh, ow;
  int stride, pad;
  std::size_t k() const { return in_c * kh * kw; }
  std::size_t p() const { return oh * ow; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename T>
ConvGeom conv_geometry(const Tensor<T>& x, const Tensor<T>& wt, const Tensor<T>& b, int stride, int pad) {
  require(x.rank() == 4, "conv2d: input must be N,C,H,W, got " + shape_str(x.shape()));
  require(wt.rank() == 4, "conv2d: weights must be OutC,InC,kH,kW, got " + shape_str(wt.shape()));
  require(stride >= 1 && pad >= 0, "conv2d: stride must be >= 1 and pad >= 0");
  require(wt.dim(1) == x.dim(1), "conv2d: weights expect " + std::to_string(wt.dim(1)) + " input channels, input has " +
                                     std::to_string(x.dim(1)));
  require(b.rank() == 1 && b.dim(0) == wt.dim(0), "conv2d: bias must have OutC entries");
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), wt.dim(0), wt.dim(2), wt.dim(3), 0, 0, stride, pad};
  g.oh = conv_output_extent(g.h, g.kh, stride, pad);
  g.ow = conv_output_extent(g.w, g.kw, stride, pad);
  return g;
}

// Output columns [lo, hi) read inside the input row for kernel column j.
struct ColRange {
  std::size_t lo, hi;
};

inline ColRange valid_cols(const ConvGeom& g, std::size_t j) {
  const long pad = g.pad, s = g.stride, w = static_cast<long>(g.w), ow = static_cast<long>(g.ow);
  const long jj = static_cast<long>(j);
  // ix = ox*s - pad + j must lie in [0, w)
  long lo = pad - jj > 0 ? (pad - jj + s - 1) / s : 0;
  long hi = (w - 1 + pad - jj) >= 0 ? (w - 1 + pad - jj) / s + 1 : 0;
  lo = std::min(lo, ow);
  hi = std::clamp(hi, lo, ow);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// cols[(c*kh + i)*kw + j][oy*ow + ox] = x[c][oy*s - pad + i][ox*s - pad + j]
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const long pad = g.pad, s = g.stride;
  for (std::size_t c = 0; c < g.in_c; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * g.p();
        const T* plane = x + c * g.h * g.w;
        const ColRange r = valid_cols(g, j);
        const long shift = static_cast<long>(j) - pad;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy) * s - pad + static_cast<long>(i);
          T* out = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(out, out + g.ow, T(0));
            continue;
          }
          const T* src = plane + iy * g.w;
          std::fill(out, out + r.lo, T(0));
          if (s == 1) {
            std::copy(src + static_cast<long>(r.lo) + shift, src + static_cast<long>(r.hi) + shift, out + r.lo);
          } else {
            for (std::size_t ox = r.lo; ox < r.hi; ++ox) out[ox] = src[static_cast<long>(ox) * s + shift];
          }
          std::fill(out + r.hi, out + g.ow, T(0));
        }
      }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeom& g, T* dx) {
  const long pad = g.pad, s = g.stride;
  for (std::size_t c = 0; c < g.in_c; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * g.p();
        T* plane = dx + c * g.h * g.w;
        const ColRange r = valid_cols(g, j);
        const long shift = static_cast<long>(j) - pad;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy) * s - pad + static_cast<long>(i);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          const T* in = row + oy * g.ow;
          T* dst = plane + iy * g.w;
          if (s == 1) {
            T* d = dst + shift;
            for (std::size_t ox = r.lo; ox < r.hi; ++ox) d[ox] += in[ox];
          } else {
            for (std::size_t ox = r.lo; ox < r.hi; ++ox) dst[static_cast<long>(ox) * s + shift] += in[ox];
          }
        }
      }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t k, int stride, int pad) {
  require(stride >= 1 && pad >= 0, "conv2d: stride must be >= 1 and pad >= 0");
  const long span = static_cast<long>(in) + 2L * pad - static_cast<long>(k);
  if (span < 0 || span % stride != 0)
    throw ShapeError("conv2d: extent " + std::to_string(in) + " with kernel " + std::to_string(k) + ", pad " +
                     std::to_string(pad) + ", stride " + std::to_string(stride) + " gives a non-integral output");
  return static_cast<std::size_t>(span / stride + 1);
}

template <typename T>
Tensor<T> conv2d_reference(const Tensor<T>& x, const Tensor<T>& wt, const Tensor<T>& b, int stride, int pad) {
  const ConvGeom g = conv_geometry(x, wt, b, stride, pad);
  Tensor<T> y({g.n, g.out_c, g.oh, g.ow});
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t o = 0; o < g.out_c; ++o)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          T acc = b[o];
          for (std::size_t c = 0; c < g.in_c; ++c)
            for (std::size_t i = 0; i < g.kh; ++i)
              for (std::size_t j = 0; j < g.kw; ++j) {
                const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(i);
                const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(j);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.h) || ix >= static_cast<long>(g.w)) continue;
                acc += x.at(n, c, iy, ix) * wt.at(o, c, i, j);
              }
          y.at(n, o, oy, ox) = acc;
        }
  return y;
}

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weights, const Var<T>& bias, int stride, int pad) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& wt = weights.value();
  const ConvGeom g = conv_geometry(x, wt, bias.value(), stride, pad);

  Tensor<T> y({g.n, g.out_c, g.oh, g.ow});
  AlignedVector<T> cols(g.pointwise() ? 0 : g.k() * g.p());
  CMap<T> w(wt.ptr(), g.out_c, g.k());
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.value().ptr(), g.out_c);
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xn = x.ptr() + n * g.in_c * g.h * g.w;
    if (!g.pointwise()) im2col(xn, g, cols.data());
    CMap<T> c(g.pointwise() ? xn : cols.data(), g.k(), g.p());
    Map<T> yn(y.ptr() + n * g.out_c * g.p(), g.out_c, g.p());
    yn.noalias() = w * c;
    for (std::size_t o = 0; o < g.out_c; ++o) yn.row(o).array() += b[o];
  }

  return input.graph().record(
      "conv2d", std::move(y), {input, weights, bias}, [g](BackwardContext<T>& ctx) {
        const Tensor<T>& x = ctx.input(0);
        const Tensor<T>& dy = ctx.grad_output();
        Tensor<T>* dx = ctx.grad_input(0);
        Tensor<T>* dw = ctx.grad_input(1);
        Tensor<T>* db = ctx.grad_input(2);
        CMap<T> w(ctx.input(1).ptr(), g.out_c, g.k());
        AlignedVector<T> cols(g.pointwise() ? 0 : g.k() * g.p());
        AlignedVector<T> dcols(dx && !g.pointwise() ? g.k() * g.p() : 0);
        for (std::size_t n = 0; n < g.n; ++n) {
          CMap<T> dyn(dy.ptr() + n * g.out_c * g.p(), g.out_c, g.p());
          const T* xn = x.ptr() + n * g.in_c * g.h * g.w;
          if (dw) {
            if (!g.pointwise()) im2col(xn, g, cols.data());
            CMap<T> c(g.pointwise() ? xn : cols.data(), g.k(), g.p());
            Map<T>(dw->ptr(), g.out_c, g.k()).noalias() += dyn * c.transpose();
          }
          if (db) {
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(db->ptr(), g.out_c) += dyn.rowwise().sum();
          }
          if (dx) {
            T* dxn = dx->ptr() + n * g.in_c * g.h * g.w;
            if (g.pointwise()) {
              Map<T>(dxn, g.k(), g.p()).noalias() += w.transpose() * dyn;
            } else {
              Map<T>(dcols.data(), g.k(), g.p()).noalias() = w.transpose() * dyn;
              col2im_add(dcols.data(), g, dxn);
            }
          }
        }
      });
}

template <typename T>
Var<T> maxpool2(const Var<T>& input) {
  const Tensor<T>& x = input.value();
  require(x.rank() == 4, "maxpool2: input must be N,C,H,W, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h % 2 == 0 && w % 2 == 0, "maxpool2: spatial extent " + std::to_string(h) + "x" + std::to_string(w) +
                                        " is not even");
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor<T> y({n, c, oh, ow});
  std::vector<std::uint32_t> argmax(y.size());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j, ++o) {
        std::size_t best = base + 2 * i * w + 2 * j;
        for (std::size_t cand : {best + 1, best + w, best + w + 1})
          if (x[cand] > x[best]) best = cand;
        y[o] = x[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
  }
  return input.graph().record("maxpool2", std::move(y), {input},
                              [argmax = std::move(argmax)](BackwardContext<T>& ctx) {
                                Tensor<T>* dx = ctx.grad_input(0);
                                const Tensor<T>& dy = ctx.grad_output();
                                for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[argmax[i]] += dy[i];
                              });
}

template <typename T>
Var<T> relu(const Var<T>& input) {
  Tensor<T> y = input.value();
  for (T& v : y.data()) v = v > T(0) ? v : T(0);
  return input.graph().record("relu", std::move(y), {input}, [](BackwardContext<T>& ctx) {
    const Tensor<T>& x = ctx.input(0);
    const Tensor<T>& dy = ctx.grad_output();
    Tensor<T>* dx = ctx.grad_input(0);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > T(0)) (*dx)[i] += dy[i];
  });
}

template <typename T>
Var<T> linear(const Var<T>& input, const Var<T>& weights, const Var<T>& bias) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& wt = weights.value();
  require(x.rank() == 2 && wt.rank() == 2, "linear: expected N x D input and D x K weights, got " +
                                               shape_str(x.shape()) + " and " + shape_str(wt.shape()));
  require(x.dim(1) == wt.dim(0), "linear: input width " + std::to_string(x.dim(1)) + " does not match weights " +
                                     shape_str(wt.shape()));
  require(bias.value().rank() == 1 && bias.value().dim(0) == wt.dim(1), "linear: bias must have K entries");
  const std::size_t n = x.dim(0), d = x.dim(1), k = wt.dim(1);
  Tensor<T> y({n, k});
  Map<T> ym(y.ptr(), n, k);
  ym.noalias() = CMap<T>(x.ptr(), n, d) * CMap<T>(wt.ptr(), d, k);
  ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value().ptr(), k);

  return input.graph().record("linear", std::move(y), {input, weights, bias}, [n, d, k](BackwardContext<T>& ctx) {
    CMap<T> dy(ctx.grad_output().ptr(), n, k);
    if (Tensor<T>* dx = ctx.grad_input(0))
      Map<T>(dx->ptr(), n, d).noalias() += dy * CMap<T>(ctx.input(1).ptr(), d, k).transpose();
    if (Tensor<T>* dw = ctx.grad_input(1))
      Map<T>(dw->ptr(), d, k).noalias() += CMap<T>(ctx.input(0).ptr(), n, d).transpose() * dy;
    if (Tensor<T>* db = ctx.grad_input(2))
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(db->ptr(), k) += dy.colwise().sum();
  });
}

template <typename T>
Var<T> dropout(const Var<T>& input, double rate, CounterRng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ShapeError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  if (!input.graph().training() || rate == 0.0) return input;
  const T scale = T(1.0 / (1.0 - rate));
  std::vector<T> mask(input.value().size());
  Tensor<T> y = input.value();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < rate ? T(0) : scale;
    y[i] *= mask[i];
  }
  return input.graph().record("dropout", std::move(y), {input}, [mask = std::move(mask)](BackwardContext<T>& ctx) {
    Tensor<T>* dx = ctx.grad_input(0);
    const Tensor<T>& dy = ctx.grad_output();
    for (std::size_t i = 0; i < mask.size(); ++i) (*dx)[i] += dy[i] * mask[i];
  });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> inputs) {
  require(!inputs.empty(), "concat: no inputs");
  const std::size_t n = inputs[0].value().rank() == 2 ? inputs[0].value().dim(0) : 0;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var<T>& v : inputs) {
    require(v.value().rank() == 2, "concat: inputs must be N x D, got " + shape_str(v.shape()));
    require(v.value().dim(0) == n, "concat: batch mismatch " + std::to_string(v.value().dim(0)) + " vs " +
                                       std::to_string(n));
    widths.push_back(v.value().dim(1));
    total += widths.back();
  }
  Tensor<T> y({n, total});
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const T* src = inputs[i].value().ptr() + r * widths[i];
      std::copy(src, src + widths[i], y.ptr() + r * total + off);
      off += widths[i];
    }
  }
  return inputs[0].graph().record("concat", std::move(y), std::vector<Var<T>>(inputs.begin(), inputs.end()),
                                  [n, total, widths](BackwardContext<T>& ctx) {
                                    const Tensor<T>& dy = ctx.grad_output();
                                    std::size_t off = 0;
                                    for (std::size_t i = 0; i < widths.size(); ++i) {
                                      if (Tensor<T>* dx = ctx.grad_input(i))
                                        for (std::size_t r = 0; r < n; ++r)
                                          for (std::size_t c = 0; c < widths[i]; ++c)
                                            (*dx)[r * widths[i] + c] += dy[r * total + off + c];
                                      off += widths[i];
                                    }
                                  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> y = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return a.graph().record("add", std::move(y), {a, b}, [](BackwardContext<T>& ctx) {
    const Tensor<T>& dy = ctx.grad_output();
    for (std::size_t k = 0; k < 2; ++k)
      if (Tensor<T>* d = ctx.grad_input(k))
        for (std::size_t i = 0; i < dy.size(); ++i) (*d)[i] += dy[i];
  });
}

template <typename T>
Var<T> average(std::span<const Var<T>> inputs) {
  require(!inputs.empty(), "average: no inputs");
  for (const Var<T>& v : inputs)
    require(v.shape() == inputs[0].shape(), "average: shape mismatch " + shape_str(v.shape()) + " vs " +
                                                shape_str(inputs[0].shape()));
  const T inv = T(1) / static_cast<T>(inputs.size());
  Tensor<T> y = inputs[0].value();
  for (std::size_t k = 1; k < inputs.size(); ++k) {
    const Tensor<T>& v = inputs[k].value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += v[i];
  }
  for (T& v : y.data()) v *= inv;
  return inputs[0].graph().record("average", std::move(y), std::vector<Var<T>>(inputs.begin(), inputs.end()),
                                  [inv](BackwardContext<T>& ctx) {
                                    const Tensor<T>& dy = ctx.grad_output();
                                    for (std::size_t k = 0; k < ctx.input_count(); ++k)
                                      if (Tensor<T>* d = ctx.grad_input(k))
                                        for (std::size_t i = 0; i < dy.size(); ++i) (*d)[i] += dy[i] * inv;
                                  });
}

template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target) {
  require(pred.shape() == target.shape(), "mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                              shape_str(target.shape()));
  const Tensor<T>& p = pred.value();
  const Tensor<T>& t = target.value();
  require(p.size() > 0, "mse_loss: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    acc += d * d;
  }
  const std::size_t m = p.size();
  return pred.graph().record("mse_loss", Tensor<T>({1}, {static_cast<T>(acc / m)}), {pred, target},
                             [m](BackwardContext<T>& ctx) {
                               const T g = ctx.grad_output()[0] * T(2) / static_cast<T>(m);
                               const Tensor<T>& p = ctx.input(0);
                               const Tensor<T>& t = ctx.input(1);
                               Tensor<T>* dp = ctx.grad_input(0);
                               Tensor<T>* dt = ctx.grad_input(1);
                               for (std::size_t i = 0; i < m; ++i) {
                                 const T d = (p[i] - t[i]) * g;
                                 if (dp) (*dp)[i] += d;
                                 if (dt) (*dt)[i] -= d;
                               }
                             });
}

template <typename T>
Var<T> sum(const Var<T>& input) {
  double acc = 0.0;
  for (T v : input.value().data()) acc += v;
  return input.graph().record("sum", Tensor<T>({1}, {static_cast<T>(acc)}), {input}, [](BackwardContext<T>& ctx) {
    const T g = ctx.grad_output()[0];
    for (T& d : ctx.grad_input(0)->data()) d += g;
  });
}

template <typename T>
Var<T> flatten(const Var<T>& input) {
  const Shape& s = input.shape();
  require(s.size() >= 2, "flatten: need a leading batch axis, got " + shape_str(s));
  const std::size_t n = s[0];
  const std::size_t d = input.value().size() / std::max<std::size_t>(n, 1);
  return input.graph().record("flatten", input.value().reshaped({n, d}), {input}, [](BackwardContext<T>& ctx) {
    Tensor<T>* dx = ctx.grad_input(0);
    const Tensor<T>& dy = ctx.grad_output();
    for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += dy[i];
  });
}

template <typename T>
Var<T> crop2d(const Var<T>& input, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  const Tensor<T>& x = input.value();
  require(x.rank() == 4, "crop2d: input must be N,C,H,W");
  require(top + h <= x.dim(2) && left + w <= x.dim(3), "crop2d: window exceeds " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), ih = x.dim(2), iw = x.dim(3);
  Tensor<T> y({n, c, h, w});
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t i = 0; i < h; ++i) {
      const T* src = x.ptr() + (p * ih + top + i) * iw + left;
      std::copy(src, src + w, y.ptr() + (p * h + i) * w);
    }
  return input.graph().record("crop2d", std::move(y), {input}, [=](BackwardContext<T>& ctx) {
    Tensor<T>* dx = ctx.grad_input(0);
    const Tensor<T>& dy = ctx.grad_output();
    for (std::size_t p = 0; p < n * c; ++p)
      for (std::size_t i = 0; i < h; ++i) {
        T* dst = dx->ptr() + (p * ih + top + i) * iw + left;
        const T* src = dy.ptr() + (p * h + i) * w;
        for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
      }
  });
}

#define REN_INSTANTIATE_OPS(T)                                                                     \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                    \
  template Tensor<T> conv2d_reference(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int); \
  template Var<T> maxpool2(const Var<T>&);                                                         \
  template Var<T> relu(const Var<T>&);                                                             \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                             \
  template Var<T> dropout(const Var<T>&, double, CounterRng&);                                     \
  template Var<T> concat(std::span<const Var<T>>);                                                 \
  template Var<T> add(const Var<T>&, const Var<T>&);                                               \
  template Var<T> average(std::span<const Var<T>>);                                                \
  template Var<T> mse_loss(const Var<T>&, const Var<T>&);                                          \
  template Var<T> sum(const Var<T>&);                                                              \
  template Var<T> flatten(const Var<T>&);                                                          \
  template Var<T> crop2d(const Var<T>&, std::size_t, std::size_t, std::size_t, std::size_t);

REN_INSTANTIATE_OPS(float)
REN_INSTANTIATE_OPS(double)

}  // namespace ren
