#include "eqspike/linear_op.hpp"

#include <sstream>
#include <stdexcept>

namespace eqspike {

namespace {

void check_rows(const LinearOp& op, const Mat& x, Index want, const char* who) {
  if (x.rows() != want) {
    std::ostringstream what;
    what << who << ": expected " << want << " rows for input shape " << shape_str(op.input_shape)
         << " / output shape " << shape_str(op.output_shape) << ", got " << x.rows();
    throw std::invalid_argument(what.str());
  }
}

// Forward convolution of one flattened [ic,H,W] column into [oc,Ho,Wo].
void conv_fwd_col(const ConvGeom& g, const double* w, const double* x, double* y) {
  const Index Ho = g.out_h(), Wo = g.out_w();
  for (Index oc = 0; oc < g.out_channels; ++oc) {
    for (Index ho = 0; ho < Ho; ++ho) {
      for (Index wo = 0; wo < Wo; ++wo) {
        double acc = 0.0;
        const Index h0 = ho * g.stride - g.pad, w0 = wo * g.stride - g.pad;
        for (Index ic = 0; ic < g.in_channels; ++ic) {
          const double* xc = x + ic * g.in_h * g.in_w;
          const double* wc = w + ((oc * g.in_channels + ic) * g.kernel_h) * g.kernel_w;
          for (Index i = 0; i < g.kernel_h; ++i) {
            const Index h = h0 + i;
            if (h < 0 || h >= g.in_h) continue;
            for (Index j = 0; j < g.kernel_w; ++j) {
              const Index ww = w0 + j;
              if (ww < 0 || ww >= g.in_w) continue;
              acc += wc[i * g.kernel_w + j] * xc[h * g.in_w + ww];
            }
          }
        }
        y[(oc * Ho + ho) * Wo + wo] = acc;
      }
    }
  }
}

// Adjoint: scatter a [oc,Ho,Wo] cotangent column back into [ic,H,W].
void conv_adj_col(const ConvGeom& g, const double* w, const double* gy, double* gx) {
  const Index Ho = g.out_h(), Wo = g.out_w();
  std::fill(gx, gx + g.in_channels * g.in_h * g.in_w, 0.0);
  for (Index oc = 0; oc < g.out_channels; ++oc) {
    for (Index ho = 0; ho < Ho; ++ho) {
      for (Index wo = 0; wo < Wo; ++wo) {
        const double v = gy[(oc * Ho + ho) * Wo + wo];
        if (v == 0.0) continue;
        const Index h0 = ho * g.stride - g.pad, w0 = wo * g.stride - g.pad;
        for (Index ic = 0; ic < g.in_channels; ++ic) {
          double* xc = gx + ic * g.in_h * g.in_w;
          const double* wc = w + ((oc * g.in_channels + ic) * g.kernel_h) * g.kernel_w;
          for (Index i = 0; i < g.kernel_h; ++i) {
            const Index h = h0 + i;
            if (h < 0 || h >= g.in_h) continue;
            for (Index j = 0; j < g.kernel_w; ++j) {
              const Index ww = w0 + j;
              if (ww < 0 || ww >= g.in_w) continue;
              xc[h * g.in_w + ww] += v * wc[i * g.kernel_w + j];
            }
          }
        }
      }
    }
  }
}

// d<g, conv(x)>/dw for one column pair, accumulated into dw.
void conv_wgrad_col(const ConvGeom& g, const double* x, const double* gy, double* dw) {
  const Index Ho = g.out_h(), Wo = g.out_w();
  for (Index oc = 0; oc < g.out_channels; ++oc) {
    for (Index ho = 0; ho < Ho; ++ho) {
      for (Index wo = 0; wo < Wo; ++wo) {
        const double v = gy[(oc * Ho + ho) * Wo + wo];
        if (v == 0.0) continue;
        const Index h0 = ho * g.stride - g.pad, w0 = wo * g.stride - g.pad;
        for (Index ic = 0; ic < g.in_channels; ++ic) {
          const double* xc = x + ic * g.in_h * g.in_w;
          double* wc = dw + ((oc * g.in_channels + ic) * g.kernel_h) * g.kernel_w;
          for (Index i = 0; i < g.kernel_h; ++i) {
            const Index h = h0 + i;
            if (h < 0 || h >= g.in_h) continue;
            for (Index j = 0; j < g.kernel_w; ++j) {
              const Index ww = w0 + j;
              if (ww < 0 || ww >= g.in_w) continue;
              wc[i * g.kernel_w + j] += v * xc[h * g.in_w + ww];
            }
          }
        }
      }
    }
  }
}

}  // namespace

LinearOp LinearOp::make_dense(Index out, Index in) {
  LinearOp op;
  op.kind = OpKind::dense;
  op.weight = Tensor({out, in});
  op.bias = Tensor({out});
  op.input_shape = {in};
  op.output_shape = {out};
  return op;
}

LinearOp LinearOp::make_conv2d(ConvGeom g) {
  LinearOp op;
  op.kind = OpKind::conv2d;
  op.geom = g;
  op.weight = Tensor({g.out_channels, g.in_channels, g.kernel_h, g.kernel_w});
  op.bias = Tensor({g.out_channels});
  op.input_shape = {g.in_channels, g.in_h, g.in_w};
  op.output_shape = {g.out_channels, g.out_h(), g.out_w()};
  return op;
}

LinearOp LinearOp::make_conv2d_transposed(ConvGeom g) {
  LinearOp op;
  op.kind = OpKind::conv2d_transposed;
  op.geom = g;
  op.weight = Tensor({g.out_channels, g.in_channels, g.kernel_h, g.kernel_w});
  op.bias = Tensor({g.in_channels});
  op.input_shape = {g.out_channels, g.out_h(), g.out_w()};
  op.output_shape = {g.in_channels, g.in_h, g.in_w};
  return op;
}

Mat apply(const LinearOp& op, const Mat& x, bool with_bias) {
  check_rows(op, x, op.in_size(), "apply");
  Mat y(op.out_size(), x.cols());
  switch (op.kind) {
    case OpKind::dense:
      y.noalias() = op.weight.matrix() * x;
      break;
    case OpKind::conv2d:
      for (Index c = 0; c < x.cols(); ++c) conv_fwd_col(op.geom, op.weight.data(), x.col(c).data(), y.col(c).data());
      break;
    case OpKind::conv2d_transposed:
      for (Index c = 0; c < x.cols(); ++c) conv_adj_col(op.geom, op.weight.data(), x.col(c).data(), y.col(c).data());
      break;
  }
  if (with_bias && op.bias.size() > 0) {
    const Index channels = op.bias.size();
    const Index spatial = op.out_size() / channels;
    for (Index c = 0; c < y.cols(); ++c) {
      auto col = y.col(c);
      for (Index ch = 0; ch < channels; ++ch) col.segment(ch * spatial, spatial).array() += op.bias[ch];
    }
  }
  return y;
}

Tensor apply(const LinearOp& op, const Tensor& x) {
  if (!same_shape(x.shape(), op.input_shape)) {
    std::ostringstream what;
    what << "apply: input shape " << shape_str(x.shape()) << " != op input shape " << shape_str(op.input_shape);
    throw std::invalid_argument(what.str());
  }
  Mat y = apply(op, Mat(x.flat()), true);
  return Tensor(op.output_shape, Vec(y.col(0)));
}

Mat adjoint(const LinearOp& op, const Mat& y) {
  check_rows(op, y, op.out_size(), "adjoint");
  Mat x(op.in_size(), y.cols());
  switch (op.kind) {
    case OpKind::dense:
      x.noalias() = op.weight.matrix().transpose() * y;
      break;
    case OpKind::conv2d:
      for (Index c = 0; c < y.cols(); ++c) conv_adj_col(op.geom, op.weight.data(), y.col(c).data(), x.col(c).data());
      break;
    case OpKind::conv2d_transposed:
      for (Index c = 0; c < y.cols(); ++c) conv_fwd_col(op.geom, op.weight.data(), y.col(c).data(), x.col(c).data());
      break;
  }
  return x;
}

Tensor adjoint(const LinearOp& op, const Tensor& y) {
  if (!same_shape(y.shape(), op.output_shape)) {
    std::ostringstream what;
    what << "adjoint: input shape " << shape_str(y.shape()) << " != op output shape " << shape_str(op.output_shape);
    throw std::invalid_argument(what.str());
  }
  Mat x = adjoint(op, Mat(y.flat()));
  return Tensor(op.input_shape, Vec(x.col(0)));
}

Tensor weight_vjp(const LinearOp& op, const Mat& x, const Mat& g) {
  check_rows(op, x, op.in_size(), "weight_vjp/x");
  check_rows(op, g, op.out_size(), "weight_vjp/g");
  if (x.cols() != g.cols()) throw std::invalid_argument("weight_vjp: column counts differ");
  Tensor dw(op.weight.shape());
  switch (op.kind) {
    case OpKind::dense:
      dw.matrix().noalias() = g * x.transpose();
      break;
    case OpKind::conv2d:
      for (Index c = 0; c < x.cols(); ++c) conv_wgrad_col(op.geom, x.col(c).data(), g.col(c).data(), dw.data());
      break;
    case OpKind::conv2d_transposed:
      // <g, A^T x> = <A g, x>: the forward-conv weight grad with roles swapped.
      for (Index c = 0; c < x.cols(); ++c) conv_wgrad_col(op.geom, g.col(c).data(), x.col(c).data(), dw.data());
      break;
  }
  return dw;
}

Vec bias_vjp(const LinearOp& op, const Mat& g) {
  check_rows(op, g, op.out_size(), "bias_vjp");
  const Index channels = op.bias.size();
  const Index spatial = op.out_size() / channels;
  Vec db = Vec::Zero(channels);
  for (Index c = 0; c < g.cols(); ++c)
    for (Index ch = 0; ch < channels; ++ch) db[ch] += g.col(c).segment(ch * spatial, spatial).sum();
  return db;
}

SpectralEstimate spectral_norm_full(const LinearOp& op, int iters, double tol, const Vec* v0) {
  SpectralEstimate est;
  if (iters < 1) throw std::invalid_argument("spectral_norm: iters must be >= 1");
  if (op.weight.flat().cwiseAbs().maxCoeff() == 0.0) return est;  // zero operator
  RngStream rng(0xE15u, 7u);
  Vec v(op.in_size());
  if (v0 && v0->size() == op.in_size() && v0->allFinite() && v0->norm() > 0.0) {
    v = v0->normalized();
  } else {
    rng.fill_normal(v);
    v.normalize();
  }
  double sigma = 0.0;
  Mat u;
  for (int k = 0; k < iters; ++k) {
    u = apply(op, Mat(v), false);
    const double s = u.col(0).norm();
    if (s == 0.0) {  // landed in the null space; restart from a fresh direction
      rng.fill_normal(v);
      v.normalize();
      continue;
    }
    u /= s;
    Vec w = adjoint(op, u).col(0);
    const double wn = w.norm();
    v = w / wn;
    est.iters = k + 1;
    if (std::abs(s - sigma) <= tol * std::max(s, 1e-300)) {
      sigma = s;
      break;
    }
    sigma = s;
  }
  est.value = sigma;
  est.left = u.col(0);
  est.right = v;
  return est;
}

double spectral_norm(const LinearOp& op, int iters, double tol) { return spectral_norm_full(op, iters, tol).value; }

}  // namespace eqspike
