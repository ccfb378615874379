#include "eqspike/grad.hpp"

#include <sstream>
#include <stdexcept>

namespace eqspike {

Tensor& GradientSet::at(const std::string& name) {
  for (auto& [n, t] : items)
    if (n == name) return t;
  throw std::invalid_argument("GradientSet: no gradient named " + name);
}

const Tensor& GradientSet::at(const std::string& name) const {
  for (auto& [n, t] : items)
    if (n == name) return t;
  throw std::invalid_argument("GradientSet: no gradient named " + name);
}

bool GradientSet::all_finite() const {
  for (auto& [n, t] : items)
    if (!t.all_finite()) return false;
  return true;
}

void GradientSet::accumulate(const GradientSet& other, double s) {
  if (other.items.size() != items.size()) throw std::invalid_argument("GradientSet::accumulate: size mismatch");
  for (size_t i = 0; i < items.size(); ++i) items[i].second.flat() += s * other.items[i].second.flat();
}

void GradientSet::scale(double s) {
  for (auto& [n, t] : items) t.flat() *= s;
}

GradientSet GradientSet::zeros_like(NetworkSpec& spec) {
  GradientSet gs;
  for (auto& p : spec.parameters()) gs.items.emplace_back(p.name, Tensor(p.tensor->shape()));
  return gs;
}

namespace {

// sigma'(z): 1 iff z in (0,1) strictly, matching the firing-mask convention.
Mat sigma_mask(const Mat& z) {
  return ((z.array() > 0.0) && (z.array() < 1.0)).cast<double>();
}

}  // namespace

Mat map_vjp_state(const FixedPointMap& map, const FixedPointMap::Trace& trace, const Mat& v) {
  const NetworkSpec& spec = map.spec();
  const Index N = spec.layer_count();
  if (v.rows() != map.state_size() || v.cols() != map.batch())
    throw std::invalid_argument("map_vjp_state: cotangent shape mismatch");
  Mat w = v;
  for (Index l = N - 1; l >= 0; --l) {
    Mat p = sigma_mask(trace.preact[l]).cwiseProduct(w) / spec.v_th;
    if (l == 0) {
      // Only the feedback branch depends on the state; the BN'd input branch
      // is constant in a.
      w = adjoint(map.feedback_op(), p);
      if (map.dropout()) w = map.dropout()->cwiseProduct(w);
    } else {
      const auto& layer = spec.layers[l];
      Mat q;
      if (layer.bn) {
        if (map.bn_mode() == BnMode::batch) {
          q = bn_backward_batch(*layer.bn, trace.lin_raw[l], trace.bn_stats[l], p).gz;
        } else {
          const Index channels = layer.bn->channels();
          const Index spatial = p.rows() / channels;
          Vec sc = layer.bn->scale();
          q = p;
          for (Index c = 0; c < q.cols(); ++c)
            for (Index ch = 0; ch < channels; ++ch) q.col(c).segment(ch * spatial, spatial) *= sc[ch];
        }
      } else {
        q = std::move(p);
      }
      w = adjoint(layer.op, q);
    }
  }
  return w;
}

BackwardState solve_adjoint(const FixedPointMap& map, const FixedPointMap::Trace& trace, const Mat& dL_da,
                            const SolverConfig& cfg) {
  if (dL_da.rows() != map.state_size() || dL_da.cols() != map.batch())
    throw std::invalid_argument("solve_adjoint: seed shape mismatch");
  const Index rows = dL_da.rows(), cols = dL_da.cols();
  VecFn f = [&](const Vec& x) -> Vec {
    Mat beta = Eigen::Map<const Mat>(x.data(), rows, cols);
    Mat out = map_vjp_state(map, trace, beta) + dL_da;
    return Eigen::Map<Vec>(out.data(), out.size());
  };
  EquilibriumSolution sol = solve_fixed_point(f, cfg, Vec::Zero(rows * cols));
  BackwardState bs;
  bs.beta_star = Eigen::Map<const Mat>(sol.a_star.data(), rows, cols);
  bs.mask = sigma_mask(trace.preact[map.spec().layer_count() - 1]);
  bs.dL_da = dL_da;
  bs.iterations = sol.iterations;
  bs.residual = sol.residual;
  bs.converged = sol.converged;
  return bs;
}

namespace {

// Gradient of the top singular value with fixed singular vectors:
// d sigma / dW = u1 v1^T, realized for any op kind as the weight VJP of the
// pair (v1, u1).
Tensor sigma_weight_grad(const SpectralReparam& rp) {
  Mat v1 = rp.v1, u1 = rp.u1;
  return weight_vjp(rp.raw, v1, u1);
}

}  // namespace

GradientSet param_gradients(const FixedPointMap& map, const FixedPointMap::Trace& trace, const BackwardState& bs,
                            const ReadoutResult& ro, const Mat& a_state, NetworkSpec& spec) {
  const Index N = spec.layer_count();
  if (bs.beta_star.rows() != map.state_size() || bs.beta_star.cols() != map.batch())
    throw std::invalid_argument("param_gradients: stale BackwardState (shape mismatch)");
  GradientSet gs = GradientSet::zeros_like(spec);

  Mat w = bs.beta_star;
  for (Index l = N - 1; l >= 0; --l) {
    Mat p = sigma_mask(trace.preact[l]).cwiseProduct(w) / spec.v_th;
    const auto& layer = spec.layers[l];
    const std::string prefix = "layers." + std::to_string(l) + ".";

    if (l == 0) {
      // Feedback branch: through the spectral re-parameterization.
      const SpectralReparam& rp = spec.feedback;
      Tensor g_eff = weight_vjp(map.feedback_op(), trace.rate_in[0], p);
      const double alpha_c = rp.alpha_clipped();
      const double dot_raw = g_eff.flat().dot(rp.raw.weight.flat());
      gs.at("feedback.alpha")[0] = dot_raw / rp.sigma;
      Tensor g_raw = g_eff;
      g_raw.flat() *= alpha_c / rp.sigma;
      Tensor dsig = sigma_weight_grad(rp);
      g_raw.flat() -= (alpha_c / (rp.sigma * rp.sigma)) * dot_raw * dsig.flat();
      gs.at("feedback.weight").flat() += g_raw.flat();
    }

    // Input branch of layer l (F^l, bias, BN).
    Mat q;
    if (layer.bn) {
      if (map.bn_mode() == BnMode::batch) {
        BnBackward bk = bn_backward_batch(*layer.bn, trace.lin_raw[l], trace.bn_stats[l], p);
        gs.at(prefix + "bn.gamma").flat() += bk.ggamma;
        gs.at(prefix + "bn.beta").flat() += bk.gbeta;
        q = std::move(bk.gz);
      } else {
        const Index channels = layer.bn->channels();
        const Index spatial = p.rows() / channels;
        Vec inv = (layer.bn->running_var.flat().array() + layer.bn->epsilon).rsqrt();
        Vec sc = layer.bn->scale();
        q.resize(p.rows(), p.cols());
        auto ggamma = gs.at(prefix + "bn.gamma").flat();
        auto gbeta = gs.at(prefix + "bn.beta").flat();
        for (Index c = 0; c < p.cols(); ++c)
          for (Index ch = 0; ch < channels; ++ch) {
            auto ps = p.col(c).segment(ch * spatial, spatial).array();
            auto zs = trace.lin_raw[l].col(c).segment(ch * spatial, spatial).array();
            ggamma[ch] += (ps * (zs - layer.bn->running_mean[ch]) * inv[ch]).sum();
            gbeta[ch] += ps.sum();
            q.col(c).segment(ch * spatial, spatial) = sc[ch] * ps;
          }
      }
    } else {
      q = std::move(p);
    }
    const Mat& lin_input = l == 0 ? map.x_star() : trace.rate_in[l];
    gs.at(prefix + "weight").flat() += weight_vjp(layer.op, lin_input, q).flat();
    gs.at(prefix + "bias").flat() += bias_vjp(layer.op, q);

    if (l > 0) w = adjoint(layer.op, q);
  }

  // Readout gradients come straight from the loss.
  gs.at("readout.weight").flat() += weight_vjp(spec.readout, a_state, ro.dL_dlogits).flat();
  gs.at("readout.bias").flat() += bias_vjp(spec.readout, ro.dL_dlogits);
  return gs;
}

GradientSet hebbian_single_layer_gradients(NetworkSpec& spec, const FixedPointMap& map,
                                           const FixedPointMap::Trace& trace, const BackwardState& bs,
                                           const ReadoutResult& ro, const Mat& a_state) {
  if (spec.layer_count() != 1 || spec.layers[0].op.kind != OpKind::dense || spec.layers[0].bn)
    throw std::invalid_argument("hebbian_single_layer_gradients: needs a single dense layer without BN");
  GradientSet gs = GradientSet::zeros_like(spec);
  Mat mb = bs.mask.cwiseProduct(bs.beta_star) / spec.v_th;  // (1/V_th) M beta*, per sample

  const SpectralReparam& rp = spec.feedback;
  const Mat& fb_in = trace.rate_in[0];
  Tensor g_eff(rp.raw.weight.shape());
  g_eff.matrix().noalias() = mb * fb_in.transpose();  // (1/V_th) M beta* a*^T
  const double alpha_c = rp.alpha_clipped();
  const double dot_raw = g_eff.flat().dot(rp.raw.weight.flat());
  gs.at("feedback.alpha")[0] = dot_raw / rp.sigma;
  Mat u1v1 = rp.u1 * rp.v1.transpose();
  gs.at("feedback.weight").matrix() = (alpha_c / rp.sigma) * g_eff.matrix().eval() -
                                      (alpha_c / (rp.sigma * rp.sigma)) * dot_raw * u1v1;

  gs.at("layers.0.weight").matrix() = mb * map.x_star().transpose();  // (1/V_th) M beta* x*^T
  gs.at("layers.0.bias").flat() = mb.rowwise().sum();                 // (1/V_th) M beta*

  gs.at("readout.weight").matrix() = ro.dL_dlogits * a_state.transpose();
  gs.at("readout.bias").flat() = ro.dL_dlogits.rowwise().sum();
  return gs;
}

BackwardPassResult backward_pass(NetworkSpec& spec, const Mat& a_state, const Mat& x_star,
                                 const std::vector<int>& labels, const SolverConfig& cfg, BnMode mode,
                                 bool update_running_stats, const Mat* feedback_dropout) {
  FixedPointMap map(spec, x_star, mode, feedback_dropout);
  FixedPointMap::Trace trace;
  Mat ga = map.eval(a_state, &trace);

  if (update_running_stats && mode == BnMode::batch) {
    for (Index l = 0; l < spec.layer_count(); ++l) {
      auto& layer = spec.layers[l];
      if (!layer.bn) continue;
      const BnStats& st = l == 0 ? map.input_bn_stats() : trace.bn_stats[l];
      const Index count = (trace.lin_raw[l].rows() / layer.bn->channels()) * trace.lin_raw[l].cols();
      bn_update_running(*layer.bn, st, count);
    }
  }

  BackwardPassResult out;
  out.map_residual = (ga - a_state).norm();
  ReadoutResult ro = readout_and_loss(a_state, spec.readout, labels);
  out.loss = ro.loss;
  out.logits = ro.logits;
  out.adjoint = solve_adjoint(map, trace, ro.dL_dA, cfg);
  out.grads = param_gradients(map, trace, out.adjoint, ro, a_state, spec);
  return out;
}

FdValue finite_diff_oracle(const NetworkSpec& spec, const Mat& x_star, const std::vector<int>& labels,
                           const std::string& param, Index coord, const Mat& a_warm, const FdOptions& opts) {
  const bool touches_feedback = param.rfind("feedback.", 0) == 0;
  auto loss_at = [&](double delta) -> FdValue {
    NetworkSpec pert = spec;
    Tensor* t = nullptr;
    for (auto& p : pert.parameters())
      if (p.name == param) t = p.tensor;
    if (!t) throw std::invalid_argument("finite_diff_oracle: unknown parameter " + param);
    if (coord < 0 || coord >= t->size()) throw std::invalid_argument("finite_diff_oracle: coordinate out of range");
    (*t)[coord] += delta;
    if (touches_feedback) pert.feedback.refresh(1000, 1e-14);
    FixedPointMap map(pert, x_star, opts.mode, opts.feedback_dropout);
    EquilibriumSolution sol = solve_fixed_point(map, opts.solve, a_warm);
    if (!sol.converged) return {0.0, false};
    ReadoutResult ro = readout_and_loss(sol.a_star, pert.readout, labels);
    return {ro.loss, true};
  };
  FdValue plus = loss_at(opts.h);
  if (!plus.ok) return {0.0, false};
  FdValue minus = loss_at(-opts.h);
  if (!minus.ok) return {0.0, false};
  return {(plus.value - minus.value) / (2.0 * opts.h), true};
}

}  // namespace eqspike
