#pragma once

#include "eqspike/rng.hpp"
#include "eqspike/tensor.hpp"

namespace eqspike {

enum class OpKind { dense, conv2d, conv2d_transposed };

/** Geometry of a 2-D convolution. For conv2d_transposed this describes the
 * underlying forward convolution whose exact adjoint the op applies, so
 * in_channels/in_h/in_w refer to that convolution's input side (which is the
 * transposed op's output side). */
struct ConvGeom {
  Index in_channels = 0, out_channels = 0;
  Index kernel_h = 0, kernel_w = 0;
  Index stride = 1, pad = 0;
  Index in_h = 0, in_w = 0;  // spatial dims of the underlying conv input

  Index out_h() const { return (in_h + 2 * pad - kernel_h) / stride + 1; }
  Index out_w() const { return (in_w + 2 * pad - kernel_w) / stride + 1; }
};

/** A linear map plus bias. apply() and adjoint() are exact transposes of each
 * other (bias excluded from the adjoint), which is the single correctness
 * contract every kind must satisfy. */
struct LinearOp {
  OpKind kind = OpKind::dense;
  Tensor weight;  // dense: [out,in]; conv kinds: [oc,ic,kh,kw] of the forward conv
  Tensor bias;    // length = output channels of this op
  ConvGeom geom;  // conv kinds only
  Shape input_shape, output_shape;

  Index in_size() const { return numel(input_shape); }
  Index out_size() const { return numel(output_shape); }

  static LinearOp make_dense(Index out, Index in);
  static LinearOp make_conv2d(ConvGeom g);
  static LinearOp make_conv2d_transposed(ConvGeom g);
};

/** y = op(x) + bias. Columns of x are independent samples. */
Mat apply(const LinearOp& op, const Mat& x, bool with_bias = true);
Tensor apply(const LinearOp& op, const Tensor& x);

/** x = op^T(y); the exact transpose of the linear part, bias excluded. */
Mat adjoint(const LinearOp& op, const Mat& y);
Tensor adjoint(const LinearOp& op, const Tensor& y);

/** Gradient of <g, op(x)> with respect to the weight, summed over columns. */
Tensor weight_vjp(const LinearOp& op, const Mat& x, const Mat& g);
/** Gradient of <g, op(x)> with respect to the bias (per output channel). */
Vec bias_vjp(const LinearOp& op, const Mat& g);

struct SpectralEstimate {
  double value = 0.0;
  Vec left, right;  // top singular pair: op(right) ~= value * left
  int iters = 0;
};

/** Largest singular value of the linear part by power iteration on op∘op^T.
 * v0 warm-starts the iteration (e.g. the previous step's singular vector). */
SpectralEstimate spectral_norm_full(const LinearOp& op, int iters, double tol, const Vec* v0 = nullptr);
double spectral_norm(const LinearOp& op, int iters = 50, double tol = 1e-6);

}  // namespace eqspike
