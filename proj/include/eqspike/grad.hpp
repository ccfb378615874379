#pragma once

#include "eqspike/equilibrium.hpp"

#include <string>
#include <vector>

namespace eqspike {

/** Named gradient tensors, ordered exactly like NetworkSpec::parameters(). */
struct GradientSet {
  std::vector<std::pair<std::string, Tensor>> items;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool all_finite() const;
  void accumulate(const GradientSet& other, double scale = 1.0);
  void scale(double s);

  static GradientSet zeros_like(NetworkSpec& spec);
};

/** The "second equilibrium": adjoint state solving (I - J_f^T) beta = seed. */
struct BackwardState {
  Mat beta_star;  // state_size x batch
  Mat mask;       // sigma' at the state layer's pre-activation (0/1)
  Mat dL_da;      // the seed
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

/** J_f(a*)^T v: mask by sigma' at each traced pre-activation, scale by
 * 1/V_th, run the adjoint linear ops in reverse layer order. */
Mat map_vjp_state(const FixedPointMap& map, const FixedPointMap::Trace& trace, const Mat& v);

BackwardState solve_adjoint(const FixedPointMap& map, const FixedPointMap::Trace& trace, const Mat& dL_da,
                            const SolverConfig& cfg);

/** Assemble dL/dtheta = (df/dtheta)^T beta* for every parameter, plus the
 * readout gradients computed directly from the loss. */
GradientSet param_gradients(const FixedPointMap& map, const FixedPointMap::Trace& trace, const BackwardState& bs,
                            const ReadoutResult& ro, const Mat& a_state, NetworkSpec& spec);

/** Closed-form single-layer dense gradients: grad_W = (1/V_th) M beta* a*^T,
 * grad_F = (1/V_th) M beta* x*^T, grad_b = (1/V_th) M beta*. An independent
 * assembly used to cross-check the generic path. */
GradientSet hebbian_single_layer_gradients(NetworkSpec& spec, const FixedPointMap& map,
                                           const FixedPointMap::Trace& trace, const BackwardState& bs,
                                           const ReadoutResult& ro, const Mat& a_state);

struct BackwardPassResult {
  double loss = 0.0;
  Mat logits;
  GradientSet grads;
  BackwardState adjoint;
  double map_residual = 0.0;  // ||G(a) - a|| at the evaluation point
};

/** The whole gradient computation of one training step, a function of
 * (a[T], x*, theta) only: evaluate the map once at a_state, seed from the
 * readout loss, solve the adjoint system, assemble parameter gradients.
 * In batch BN mode with update_running_stats the running statistics absorb
 * this batch, once. */
BackwardPassResult backward_pass(NetworkSpec& spec, const Mat& a_state, const Mat& x_star,
                                 const std::vector<int>& labels, const SolverConfig& cfg, BnMode mode,
                                 bool update_running_stats, const Mat* feedback_dropout = nullptr);

struct FdOptions {
  double h = 1e-5;
  SolverConfig solve{SolverConfig::Method::broyden, 200, 1e-12, 0.5};
  BnMode mode = BnMode::batch;
  const Mat* feedback_dropout = nullptr;
};

struct FdValue {
  double value = 0.0;
  bool ok = false;  // false: a perturbed solve did not converge, oracle abstains
};

/** Central difference (L(theta+h) - L(theta-h)) / 2h where each evaluation
 * re-solves the equilibrium from scratch at tight tolerance. */
FdValue finite_diff_oracle(const NetworkSpec& spec, const Mat& x_star, const std::vector<int>& labels,
                           const std::string& param, Index coord, const Mat& a_warm, const FdOptions& opts = {});

}  // namespace eqspike
