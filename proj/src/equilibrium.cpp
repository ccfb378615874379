#include "eqspike/equilibrium.hpp"

#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace eqspike {

Mat clamp_sigma(Mat z) { return z.cwiseMax(0.0).cwiseMin(1.0); }

Tensor clamp_sigma(const Tensor& z) {
  Tensor out = z;
  out.flat() = out.flat().cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

FixedPointMap::FixedPointMap(const NetworkSpec& spec, Mat x_star, BnMode bn_mode, const Mat* feedback_dropout)
    : spec_(&spec), x_star_(std::move(x_star)), mode_(bn_mode), dropout_(feedback_dropout) {
  if (x_star_.rows() != spec.input_size()) {
    std::ostringstream what;
    what << "FixedPointMap: x* has " << x_star_.rows() << " rows, network input size is " << spec.input_size();
    throw std::invalid_argument(what.str());
  }
  if (dropout_ && (dropout_->rows() != spec.state_size() || dropout_->cols() != x_star_.cols()))
    throw std::invalid_argument("FixedPointMap: dropout mask shape mismatch");
  feedback_eff_ = spec.feedback.effective();
  // The layer-1 input contribution does not depend on the state; fold it once.
  input_lin_raw_ = apply(spec.layers[0].op, x_star_);
  if (spec.layers[0].bn) {
    auto& bn = const_cast<BatchNorm&>(*spec.layers[0].bn);
    if (mode_ == BnMode::batch) {
      input_bn_stats_ = bn_batch_stats(input_lin_raw_, bn.channels());
      input_drive_ = bn_normalize(bn, input_lin_raw_, input_bn_stats_);
    } else {
      input_drive_ = bn_apply(bn, input_lin_raw_, BnMode::frozen);
    }
  } else {
    input_drive_ = input_lin_raw_;
  }
}

Mat FixedPointMap::eval(const Mat& a, Trace* trace) const {
  if (a.rows() != state_size() || a.cols() != batch()) {
    std::ostringstream what;
    what << "FixedPointMap::eval: state is " << a.rows() << "x" << a.cols() << ", expected " << state_size() << "x"
         << batch();
    throw std::invalid_argument(what.str());
  }
  const Index N = spec_->layer_count();
  if (trace) {
    trace->rate_in.assign(N, Mat());
    trace->lin_raw.assign(N, Mat());
    trace->bn_stats.assign(N, BnStats());
    trace->preact.assign(N, Mat());
    trace->rate_out.assign(N, Mat());
  }
  Mat fb_in = dropout_ ? Mat(dropout_->cwiseProduct(a)) : a;
  Mat z = (apply(feedback_eff_, fb_in, false) + input_drive_) / spec_->v_th;
  Mat rate = clamp_sigma(z);
  if (trace) {
    trace->rate_in[0] = std::move(fb_in);
    trace->lin_raw[0] = input_lin_raw_;
    trace->bn_stats[0] = input_bn_stats_;
    trace->preact[0] = std::move(z);
    trace->rate_out[0] = rate;
  }
  for (Index l = 1; l < N; ++l) {
    const auto& layer = spec_->layers[l];
    Mat lin = apply(layer.op, rate);
    Mat bnout;
    BnStats stats;
    if (layer.bn) {
      auto& bn = const_cast<BatchNorm&>(*layer.bn);
      if (mode_ == BnMode::batch) {
        stats = bn_batch_stats(lin, bn.channels());
        bnout = bn_normalize(bn, lin, stats);
      } else {
        bnout = bn_apply(bn, lin, BnMode::frozen);
      }
    } else {
      bnout = lin;
    }
    Mat zl = bnout / spec_->v_th;
    Mat out = clamp_sigma(zl);
    if (trace) {
      trace->rate_in[l] = std::move(rate);
      trace->lin_raw[l] = std::move(lin);
      trace->bn_stats[l] = std::move(stats);
      trace->preact[l] = std::move(zl);
      trace->rate_out[l] = out;
    }
    rate = std::move(out);
  }
  return rate;
}

double FixedPointMap::residual(const Mat& a) const { return (eval(a) - a).norm(); }

namespace {

// B v where B = -I + sum_i u_i v_i^T
Vec apply_inv_jac(const std::vector<Vec>& us, const std::vector<Vec>& vs, const Vec& w) {
  Vec out = -w;
  for (size_t i = 0; i < us.size(); ++i) out.noalias() += us[i] * vs[i].dot(w);
  return out;
}

// B^T v
Vec apply_inv_jac_t(const std::vector<Vec>& us, const std::vector<Vec>& vs, const Vec& w) {
  Vec out = -w;
  for (size_t i = 0; i < us.size(); ++i) out.noalias() += vs[i] * us[i].dot(w);
  return out;
}

EquilibriumSolution solve_broyden(const VecFn& f, const SolverConfig& cfg, const Vec& a0) {
  EquilibriumSolution sol;
  Vec x = a0;
  Vec gx = f(x) - x;
  Vec best_x = x;
  double best_res = gx.norm();
  sol.residual_trace.push_back(best_res);
  std::vector<Vec> us, vs;
  for (int k = 0; k < cfg.max_iters; ++k) {
    if (!gx.allFinite()) {
      sol.diagnostic = "non-finite residual at iteration " + std::to_string(k);
      break;
    }
    if (gx.norm() <= cfg.tol) break;
    Vec dx = -apply_inv_jac(us, vs, gx);
    Vec x1 = x + dx;
    Vec gx1 = f(x1) - x1;
    sol.iterations = k + 1;
    const double r = gx1.norm();
    sol.residual_trace.push_back(r);
    if (!gx1.allFinite()) {
      sol.diagnostic = "non-finite iterate at iteration " + std::to_string(k + 1);
      break;
    }
    if (r < best_res) {
      best_res = r;
      best_x = x1;
    }
    Vec dg = gx1 - gx;
    Vec Bdg = apply_inv_jac(us, vs, dg);
    const double denom = dx.dot(Bdg);
    if (std::abs(denom) > 1e-300) {
      Vec vnew = apply_inv_jac_t(us, vs, dx);  // B^T dx with the pre-update B
      us.push_back((dx - Bdg) / denom);
      vs.push_back(std::move(vnew));
    }
    x = std::move(x1);
    gx = std::move(gx1);
  }
  sol.a_star = best_x;
  return sol;
}

}  // namespace

EquilibriumSolution solve_fixed_point(const VecFn& f, const SolverConfig& cfg, const Vec& a0) {
  if (cfg.max_iters < 1) throw std::invalid_argument("SolverConfig: max_iters must be >= 1");
  if (cfg.tol <= 0.0) throw std::invalid_argument("SolverConfig: tol must be positive");
  EquilibriumSolution sol;
  if (cfg.method == SolverConfig::Method::broyden) {
    sol = solve_broyden(f, cfg, a0);
  } else {
    if (cfg.damping <= 0.0 || cfg.damping > 1.0) throw std::invalid_argument("SolverConfig: damping must be in (0,1]");
    Vec x = a0;
    Vec best_x = x;
    double best_res = std::numeric_limits<double>::infinity();
    for (int k = 0; k < cfg.max_iters; ++k) {
      Vec fx = f(x);
      Vec g = fx - x;
      const double r = g.norm();
      sol.residual_trace.push_back(r);
      sol.iterations = k + 1;
      if (!fx.allFinite()) {
        sol.diagnostic = "non-finite iterate at iteration " + std::to_string(k + 1);
        break;
      }
      if (r < best_res) {
        best_res = r;
        best_x = x;
      }
      if (r <= cfg.tol) break;
      x = (1.0 - cfg.damping) * x + cfg.damping * fx;
    }
    sol.a_star = best_x;
  }
  // The reported residual is always recomputed at the returned point.
  Vec g = f(sol.a_star) - sol.a_star;
  sol.residual = g.allFinite() ? g.norm() : std::numeric_limits<double>::infinity();
  sol.converged = sol.diagnostic.empty() && sol.residual <= cfg.tol;
  return sol;
}

EquilibriumSolution solve_fixed_point(const FixedPointMap& map, const SolverConfig& cfg, const Mat& a0) {
  const Index rows = a0.rows(), cols = a0.cols();
  VecFn f = [&](const Vec& x) -> Vec {
    Mat a = Eigen::Map<const Mat>(x.data(), rows, cols);
    Mat fa = map.eval(a);
    return Eigen::Map<Vec>(fa.data(), fa.size());
  };
  Vec x0 = Eigen::Map<const Vec>(a0.data(), a0.size());
  EquilibriumSolution sol = solve_fixed_point(f, cfg, x0);
  Mat reshaped = Eigen::Map<const Mat>(sol.a_star.data(), rows, cols);
  sol.a_star = std::move(reshaped);
  return sol;
}

void write_residual_csv(const std::string& path, const std::vector<double>& trace) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_residual_csv: cannot open " + path);
  os << "iter,residual\n";
  for (size_t i = 0; i < trace.size(); ++i) os << i << "," << trace[i] << "\n";
}

}  // namespace eqspike
