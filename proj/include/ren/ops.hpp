#pragma once

#include <cstddef>
#include <span>

#include "ren/graph.hpp"
#include "ren/rng.hpp"
#include "ren/tensor.hpp"

namespace ren {

/// Output extent of a convolution along one axis; throws ShapeError unless
/// (in + 2*pad - k) is a non-negative multiple of stride.
std::size_t conv_output_extent(std::size_t in, std::size_t k, int stride, int pad);

/// 2-D convolution, N,C,H,W input and OutC,InC,kH,kW weights. Runs as a
/// patch-matrix expansion followed by a GEMM.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weights, const Var<T>& bias, int stride = 1, int pad = 0);

/// Direct quadruple-loop convolution. Slow; used as the oracle for conv2d.
template <typename T>
Tensor<T> conv2d_reference(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias, int stride,
                           int pad);

/// 2x2 max pooling with stride 2. Ties go to the first element in row-major
/// window order; backward routes the gradient to that element only.
template <typename T>
Var<T> maxpool2(const Var<T>& input);

template <typename T>
Var<T> relu(const Var<T>& input);

/// Row-wise affine map: (N x D) * (D x K) + bias(K).
template <typename T>
Var<T> linear(const Var<T>& input, const Var<T>& weights, const Var<T>& bias);

/// Inverted dropout. Identity (the same Var) when the graph is not training
/// or rate is 0.
template <typename T>
Var<T> dropout(const Var<T>& input, double rate, CounterRng& rng);

/// Concatenation of N x D_i tensors along the feature axis.
template <typename T>
Var<T> concat(std::span<const Var<T>> inputs);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

/// Elementwise arithmetic mean of equally shaped tensors.
template <typename T>
Var<T> average(std::span<const Var<T>> inputs);

/// Mean over all entries of (pred - target)^2, as a one-element tensor.
template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target);

template <typename T>
Var<T> sum(const Var<T>& input);

/// N x (rest) view of an N-leading tensor.
template <typename T>
Var<T> flatten(const Var<T>& input);

/// Spatial window [top, top+h) x [left, left+w) of an N,C,H,W tensor.
template <typename T>
Var<T> crop2d(const Var<T>& input, std::size_t top, std::size_t left, std::size_t h, std::size_t w);

}  // namespace ren
