#pragma once

#include "eqspike/model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace eqspike {

/** Elementwise clamp to [0,1]: 1 if z>1, z if 0<=z<=1, 0 if z<0. */
Mat clamp_sigma(Mat z);
Tensor clamp_sigma(const Tensor& z);

struct SolverConfig {
  enum class Method { broyden, fixed_point };
  Method method = Method::broyden;
  int max_iters = 30;
  double tol = 1e-6;
  double damping = 0.5;  // fixed_point only
};

struct EquilibriumSolution {
  Mat a_star;
  double residual = 0.0;  // ||f(a_star) - a_star||_2, recomputed at return
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_trace;
  std::string diagnostic;  // set when the solve aborted
};

/** The rate map whose fixed point is the network equilibrium, expressed on
 * the last layer's rate: G(a) = f_N(f_{N-1}(...f_2(f_1(a, x*))...)). For a
 * single layer this is a = sigma((W a + F x* + b)/V_th). Columns are
 * independent samples except for batch-mode BN statistics, which couple the
 * batch. */
class FixedPointMap {
 public:
  /** A record of one evaluation; everything the gradient engine needs. */
  struct Trace {
    std::vector<Mat> rate_in;    // input rates per layer (layer 1: the feedback state, dropout applied)
    std::vector<Mat> lin_raw;    // F_l * rate_in + b_l before BN
    std::vector<BnStats> bn_stats;  // batch statistics per layer (empty if no BN / frozen)
    std::vector<Mat> preact;     // z_l, the argument of sigma
    std::vector<Mat> rate_out;   // sigma(z_l); rate_out.back() == G(a)
  };

  FixedPointMap(const NetworkSpec& spec, Mat x_star, BnMode bn_mode = BnMode::frozen,
                const Mat* feedback_dropout = nullptr);

  Mat eval(const Mat& a, Trace* trace = nullptr) const;
  Mat operator()(const Mat& a) const { return eval(a); }

  /** 2-norm of G(a) - a (Frobenius over a batch). */
  double residual(const Mat& a) const;

  Index state_size() const { return spec_->state_size(); }
  Index batch() const { return x_star_.cols(); }
  const NetworkSpec& spec() const { return *spec_; }
  BnMode bn_mode() const { return mode_; }
  const Mat* dropout() const { return dropout_; }
  const Mat& x_star() const { return x_star_; }
  const LinearOp& feedback_op() const { return feedback_eff_; }
  const Mat& input_lin_raw() const { return input_lin_raw_; }
  const BnStats& input_bn_stats() const { return input_bn_stats_; }

 private:
  const NetworkSpec* spec_;
  Mat x_star_;
  BnMode mode_;
  const Mat* dropout_;
  LinearOp feedback_eff_;
  Mat input_lin_raw_;   // F^1 x* + b^1
  Mat input_drive_;     // after layer-1 BN (mode-appropriate); constant in a
  BnStats input_bn_stats_;
};

using VecFn = std::function<Vec(const Vec&)>;

/** Find a fixed point of f. Broyden runs quasi-Newton root finding on
 * g(x) = f(x) - x with rank-one inverse-Jacobian updates (B0 = -I); the
 * fixed-point method damps: x <- (1-d) x + d f(x). Returns the best iterate
 * seen. Non-convergence is reported, never silent. */
EquilibriumSolution solve_fixed_point(const VecFn& f, const SolverConfig& cfg, const Vec& a0);
EquilibriumSolution solve_fixed_point(const FixedPointMap& map, const SolverConfig& cfg, const Mat& a0);

void write_residual_csv(const std::string& path, const std::vector<double>& trace);

}  // namespace eqspike
