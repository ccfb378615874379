// Acceptance suite: one line per criterion, nonzero exit if any fail.
// --full additionally runs the 30-epoch Fashion-MNIST training (hours).
#include "eqspike/config.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace eqspike;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int id;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

std::vector<Criterion> g_results;

template <typename Fn>
void run_criterion(int id, const std::string& name, Fn&& fn, double limit_seconds = 0.0) {
  Criterion c{id, name};
  const auto t0 = std::chrono::steady_clock::now();
  try {
    c.pass = fn(c.detail);
  } catch (const std::exception& e) {
    c.pass = false;
    c.detail = std::string("exception: ") + e.what();
  }
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (c.pass && limit_seconds > 0.0 && c.seconds > limit_seconds) {
    c.pass = false;
    c.detail += " [exceeded the " + std::to_string(limit_seconds) + "s budget]";
  }
  g_results.push_back(std::move(c));
}

NetworkSpec single_layer(Index in, Index n, double v_th = 2.0) {
  NetworkSpec spec;
  LayerSpec layer;
  layer.op = LinearOp::make_dense(n, in);
  spec.layers.push_back(std::move(layer));
  spec.feedback.raw = LinearOp::make_dense(n, n);
  spec.feedback.clip = 1e9;  // instance generators pin the norm directly
  spec.readout = LinearOp::make_dense(3, n);
  spec.input_shape = {in};
  spec.v_th = v_th;
  return spec;
}

// Contractive single-layer instance with ||W_eff||_2 = gamma * v_th.
NetworkSpec contractive_instance(RngStream& rng, Index n, double gamma, Index in = 4) {
  NetworkSpec spec = single_layer(in, n);
  Mat w(n, n);
  rng.fill_normal(w);
  spec.feedback.raw.weight.matrix() = w;
  spec.feedback.refresh(4000, 1e-15);
  spec.feedback.alpha[0] = gamma * spec.v_th;  // effective norm = alpha
  auto fw = spec.layers[0].op.weight.flat();
  rng.fill_normal(fw);
  fw *= 0.5;
  for (Index i = 0; i < n; ++i) spec.layers[0].op.bias[i] = rng.uniform(-0.5, 2.2);
  auto rw = spec.readout.weight.flat();
  rng.fill_normal(rw);
  return spec;
}

struct TightSolve {
  Mat a_star;
  bool ok = false;
  double kink = 0.0;
};

TightSolve solve_tight(const NetworkSpec& spec, const Mat& x, double tol = 1e-11) {
  FixedPointMap map(spec, x);
  auto sol = solve_fixed_point(map, {SolverConfig::Method::broyden, 400, tol, 0.5},
                               Mat::Zero(spec.state_size(), x.cols()));
  TightSolve t;
  t.a_star = sol.a_star;
  t.ok = sol.converged;
  FixedPointMap::Trace tr;
  map.eval(sol.a_star, &tr);
  t.kink = 1.0;
  for (const Mat& z : tr.preact)
    t.kink = std::min({t.kink, z.array().abs().minCoeff(), (z.array() - 1.0).abs().minCoeff()});
  return t;
}

const char* source_dir() { return EQSPIKE_SOURCE_DIR; }

// ---- criterion bodies ----

bool c1_gradient_exactness(std::string& detail) {
  RngStream rng(101);
  const char* params[] = {"feedback.weight", "feedback.alpha", "layers.0.weight",
                          "layers.0.bias",   "readout.weight", "readout.bias"};
  int instances = 0;
  double worst = 0.0;
  for (std::uint64_t attempt = 0; attempt < 200 && instances < 20; ++attempt) {
    const Index n = 5 + static_cast<Index>(rng.uniform_index(16));  // widths 5..20
    NetworkSpec spec = contractive_instance(rng, n, rng.uniform(0.3, 0.8));
    // the sigma-derivative term needs a simple top singular value; reject
    // near-degenerate draws (SVD here is test-side oracle machinery)
    {
      Mat w = spec.feedback.raw.weight.matrix();
      Vec sv = Eigen::JacobiSVD<Mat>(w).singularValues();
      if (sv.size() > 1 && sv(1) / sv(0) > 0.99) continue;
    }
    Mat x(4, 2);
    rng.fill_normal(x);
    TightSolve s = solve_tight(spec, x);
    if (!s.ok || s.kink < 1e-3) continue;
    std::vector<int> labels{static_cast<int>(rng.uniform_index(3)), static_cast<int>(rng.uniform_index(3))};
    BackwardPassResult bp = backward_pass(spec, s.a_star, x, labels,
                                          {SolverConfig::Method::broyden, 400, 1e-12, 0.5}, BnMode::frozen, false);
    if (!bp.adjoint.converged) continue;
    FdOptions fd;
    fd.mode = BnMode::frozen;
    // the loss differences are O(h * grad); solve the perturbed equilibria
    // near machine precision so the solver error stays below them
    fd.solve = {SolverConfig::Method::broyden, 600, 1e-13, 0.5};
    for (const char* pname : params) {
      const Tensor& g = bp.grads.at(pname);
      const Index coord = rng.uniform_index(g.size());
      FdValue v = finite_diff_oracle(spec, x, labels, pname, coord, s.a_star, fd);
      if (!v.ok) return detail = "oracle abstained", false;
      const double rel = std::abs(v.value - g[coord]) / (std::abs(v.value) + 1e-8);
      worst = std::max(worst, rel);
      if (rel > 1e-4) {
        std::ostringstream os;
        os << pname << "[" << coord << "]: implicit " << g[coord] << " vs fd " << v.value << " (rel " << rel << ")";
        detail = os.str();
        return false;
      }
    }
    ++instances;
  }
  std::ostringstream os;
  os << instances << "/20 instances, 6 coordinates each, all rel err <= 1e-4 (worst " << worst << ")";
  detail = os.str();
  return instances == 20;
}

bool c2_closed_form(std::string& detail) {
  RngStream rng(202);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const Index n = 5 + static_cast<Index>(rng.uniform_index(16));
    NetworkSpec spec = contractive_instance(rng, n, rng.uniform(0.3, 0.8));
    Mat x(4, 2);
    rng.fill_normal(x);
    TightSolve s = solve_tight(spec, x);
    if (!s.ok) return detail = "solver failed", false;
    FixedPointMap map(spec, x);
    FixedPointMap::Trace tr;
    map.eval(s.a_star, &tr);
    ReadoutResult ro = readout_and_loss(s.a_star, spec.readout, {0, 2});
    BackwardState bs = solve_adjoint(map, tr, ro.dL_dA, {SolverConfig::Method::broyden, 300, 1e-12, 0.5});
    GradientSet generic = param_gradients(map, tr, bs, ro, s.a_star, spec);
    GradientSet closed = hebbian_single_layer_gradients(spec, map, tr, bs, ro, s.a_star);
    for (size_t i = 0; i < generic.items.size(); ++i) {
      const double gap = (generic.items[i].second.flat() - closed.items[i].second.flat()).cwiseAbs().maxCoeff();
      worst = std::max(worst, gap);
      if (gap > 1e-12) {
        detail = "mismatch in " + generic.items[i].first + " (" + std::to_string(gap) + ")";
        return false;
      }
    }
  }
  std::ostringstream os;
  os << "20/20 instances, generic VJP == closed form to 1e-12 (worst gap " << worst << ")";
  detail = os.str();
  return true;
}

bool c3_theorem2(std::string& detail) {
  RngStream rng(303);
  int inf_ok = 0, res_ok = 0;
  double worst_inf = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const Index n = 10 + static_cast<Index>(rng.uniform_index(31));  // 10..40
    NetworkSpec spec = contractive_instance(rng, n, rng.uniform(0.3, 0.9), 1);
    Mat x = Mat::Zero(1, 1);
    SimOptions opts;
    opts.record_residuals = true;
    SimResult sim = simulate(spec, InputEncoding::constant_current(x), 1000, opts);
    Mat aT = average_rate(sim.state, 0);
    FixedPointMap map(spec, x);
    auto sol = solve_fixed_point(map, {SolverConfig::Method::broyden, 400, 1e-10, 0.5}, aT);
    if (!sol.converged) return detail = "Broyden failed on instance " + std::to_string(inst), false;
    const double inf_err = (aT - sol.a_star).cwiseAbs().maxCoeff();
    worst_inf = std::max(worst_inf, inf_err);
    if (inf_err <= 5.0 / 1000 + 1e-5) ++inf_ok;
    if (sim.residual_trace[999] <= sim.residual_trace[9] &&
        sim.residual_trace[999] <= 0.05 * std::sqrt(static_cast<double>(n)))
      ++res_ok;
  }
  std::ostringstream os;
  os << "inf-norm gap <= 5e-3+1e-5 on " << inf_ok << "/50 (need >=45, worst " << worst_inf
     << "); residual decrease on " << res_ok << "/50";
  detail = os.str();
  return inf_ok >= 45 && res_ok == 50;
}

// 3-layer spec meeting the product-norm condition of Theorem 3
NetworkSpec three_layer_instance(RngStream& rng, double gamma) {
  const Index n1 = 8 + static_cast<Index>(rng.uniform_index(13));
  const Index n2 = 8 + static_cast<Index>(rng.uniform_index(13));
  const Index n3 = 8 + static_cast<Index>(rng.uniform_index(13));
  NetworkSpec spec;
  spec.input_shape = {3};
  spec.v_th = 2.0;
  auto make_layer = [&](Index out, Index in, double norm, double blo, double bhi) {
    LayerSpec layer;
    layer.op = LinearOp::make_dense(out, in);
    auto w = layer.op.weight.flat();
    rng.fill_normal(w);
    w *= norm / spectral_norm(layer.op, 1000, 1e-12);
    for (Index i = 0; i < out; ++i) layer.op.bias[i] = rng.uniform(blo, bhi);
    return layer;
  };
  spec.layers.push_back(make_layer(n1, 3, 1.0, -0.5, 2.2));
  spec.layers.push_back(make_layer(n2, n1, 1.3, -0.2, 1.6));
  spec.layers.push_back(make_layer(n3, n2, 1.3, -0.2, 1.6));
  spec.feedback.raw = LinearOp::make_dense(n1, n3);
  spec.feedback.clip = 1e9;
  auto fw = spec.feedback.raw.weight.flat();
  rng.fill_normal(fw);
  spec.feedback.refresh(2000, 1e-13);
  // ||W1|| ||F3|| ||F2|| = gamma v_th^3
  spec.feedback.alpha[0] = gamma * std::pow(spec.v_th, 3) / (1.3 * 1.3);
  spec.readout = LinearOp::make_dense(3, n3);
  return spec;
}

bool c4_theorem3(std::string& detail) {
  RngStream rng(404);
  for (int inst = 0; inst < 20; ++inst) {
    NetworkSpec spec = three_layer_instance(rng, rng.uniform(0.3, 0.9));
    Mat x(3, 1);
    rng.fill_normal(x);
    SimOptions opts;
    opts.record_residuals = true;
    SimResult sim = simulate(spec, InputEncoding::constant_current(x), 1000, opts);
    if (!(sim.residual_trace[999] <= sim.residual_trace[9])) {
      std::ostringstream os;
      os << "instance " << inst << ": residual(1000)=" << sim.residual_trace[999]
         << " > residual(10)=" << sim.residual_trace[9];
      detail = os.str();
      return false;
    }
  }
  detail = "residual(1000) <= residual(10) on 20/20 three-layer specs";
  return true;
}

bool c5_proposition2(std::string& detail) {
  RngStream rng(505);
  double worst_ratio = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const Index n = 10 + static_cast<Index>(rng.uniform_index(31));
    NetworkSpec spec = contractive_instance(rng, n, rng.uniform(0.3, 0.9), 1);
    spec.neuron = NeuronKind::lif(0.95);
    SimOptions opts;
    opts.record_residuals = true;
    SimResult sim = simulate(spec, InputEncoding::constant_current(Mat::Zero(1, 1)), 1000, opts);
    const double r1000 = sim.residual_trace[999], r10 = sim.residual_trace[9];
    const double bound = 0.2 * std::sqrt(static_cast<double>(n));
    worst_ratio = std::max(worst_ratio, r1000 / bound);
    if (!std::isfinite(r1000) || r1000 > r10 || r1000 > bound) {
      std::ostringstream os;
      os << "instance " << inst << ": residual(1000)=" << r1000 << ", residual(10)=" << r10 << ", bound=" << bound;
      detail = os.str();
      return false;
    }
  }
  std::ostringstream os;
  os << "20/20 LIF instances bounded and non-increasing (worst residual/bound " << worst_ratio << ")";
  detail = os.str();
  return true;
}

std::string g_gate_out;

bool c7_desk_gate(std::string& detail) {
  const fs::path out = fs::path(source_dir()) / "build" / "acceptance_gate";
  g_gate_out = out.string();
  fs::remove_all(out);
  nlohmann::json cfg;
  {
    std::ifstream is(fs::path(source_dir()) / "configs" / "mnist10k-gate.json");
    if (!is) return detail = "missing configs/mnist10k-gate.json", false;
    is >> cfg;
  }
  for (const char* key : {"images_path", "labels_path", "test_images_path", "test_labels_path"})
    cfg["dataset"][key] = (fs::path(source_dir()) / cfg["dataset"][key].get<std::string>()).string();
  cfg["output_dir"] = out.string();
  const fs::path cfg_path = fs::path(source_dir()) / "build" / "acceptance_gate_config.json";
  {
    std::ofstream os(cfg_path);
    os << cfg.dump(2);
  }
  if (cmd_train(cfg_path.string(), false, {}) != 0) return detail = "training run failed", false;
  nlohmann::json summary;
  {
    std::ifstream is(out / "summary.json");
    if (!is) return detail = "missing summary.json", false;
    is >> summary;
  }
  const double acc = summary.at("final_acc").get<double>();
  std::ostringstream os;
  os << "MNIST-10k subset, 400 (F400), T=5, 10 epochs: test accuracy " << acc << " (need >= 0.95)";
  detail = os.str();
  return acc >= 0.95;
}

bool c6_figure1(std::string& detail) {
  if (g_gate_out.empty()) return detail = "no trained checkpoint (criterion 7 gate did not run)", false;
  LoadedCheckpoint lc = load_full_checkpoint((fs::path(g_gate_out) / "checkpoint.ide1").string());
  LoadedData data = load_datasets(lc.config.dataset);
  InputEncoding enc = encode_constant_current(data.test, Index{0});
  SimOptions opts;
  opts.record_residuals = true;
  SimResult sim = simulate(lc.spec, enc, 100, opts);
  const double r3 = sim.residual_trace[2], r30 = sim.residual_trace[29];
  std::ostringstream os;
  os << "trained model residuals: t=3 -> " << r3 << ", t=30 -> " << r30 << " (need < 25%)";
  detail = os.str();
  return r30 < 0.25 * r3;
}

bool c8_memory_contract(std::string& detail) {
  Dataset blobs = synth_dataset("blobs", 16, 5);
  fit_normalization(blobs);
  auto live_after_forward = [&](long T) {
    NetworkSpec spec;
    LayerSpec layer;
    layer.op = LinearOp::make_dense(12, 2);
    layer.bn = BatchNorm(12);
    spec.layers.push_back(std::move(layer));
    spec.feedback.raw = LinearOp::make_dense(12, 12);
    spec.feedback.clip = 1.0;
    spec.readout = LinearOp::make_dense(2, 12);
    spec.input_shape = {2};
    RngStream rng(3, 0);
    init_params(spec, rng);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 16;
    cfg.T = T;
    cfg.backward = {SolverConfig::Method::broyden, 30, 1e-8, 0.5};
    TrainState state = make_train_state(spec, cfg);
    long live = -1;
    train_epoch(spec, blobs, cfg, state, [&]() { live = Tensor::live_count(); });
    return live;
  };
  const long at10 = live_after_forward(10);
  const long at100 = live_after_forward(100);
  std::ostringstream os;
  os << "live tensors between forward and update: T=10 -> " << at10 << ", T=100 -> " << at100;
  detail = os.str();
  return at10 > 0 && at10 == at100;
}

bool c9_spectral_invariant(std::string& detail) {
  Dataset blobs = synth_dataset("blobs", 32, 7);
  fit_normalization(blobs);
  NetworkSpec spec;
  LayerSpec layer;
  layer.op = LinearOp::make_dense(16, 2);
  layer.bn = BatchNorm(16);
  spec.layers.push_back(std::move(layer));
  spec.feedback.raw = LinearOp::make_dense(16, 16);
  spec.feedback.clip = 1.0;
  spec.readout = LinearOp::make_dense(2, 16);
  spec.input_shape = {2};
  RngStream rng(9, 0);
  init_params(spec, rng);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 32;  // one optimizer step per epoch
  cfg.lr = 0.5;         // large enough to push alpha against the clip
  cfg.T = 8;
  cfg.backward = {SolverConfig::Method::broyden, 30, 1e-8, 0.5};
  TrainState state = make_train_state(spec, cfg);
  double worst = 0.0;
  for (int step_i = 0; step_i < 100; ++step_i) {
    train_epoch(spec, blobs, cfg, state);
    const double norm = spectral_norm(spec.feedback.effective(), 1000, 1e-10);
    worst = std::max(worst, norm);
    if (norm > spec.feedback.clip + 1e-5) {
      detail = "step " + std::to_string(step_i) + ": effective norm " + std::to_string(norm);
      return false;
    }
  }
  std::ostringstream os;
  os << "100 optimizer steps, max effective feedback norm " << worst << " <= c + 1e-5";
  detail = os.str();
  return true;
}

bool c10_bn_absorption(std::string& detail) {
  RngStream rng(1010);
  double worst = 0.0;
  std::vector<LinearOp> ops;
  ops.push_back(LinearOp::make_dense(8, 5));
  ops.push_back(LinearOp::make_conv2d({2, 3, 3, 3, 1, 1, 6, 6}));
  ops.push_back(LinearOp::make_conv2d_transposed({3, 2, 3, 3, 2, 1, 8, 8}));
  for (auto& op : ops) {
    auto w = op.weight.flat();
    rng.fill_normal(w);
    auto b = op.bias.flat();
    rng.fill_normal(b);
    BatchNorm bn(op.bias.size());
    for (Index i = 0; i < bn.channels(); ++i) {
      bn.gamma[i] = rng.uniform(0.5, 2.0);
      bn.beta[i] = rng.normal();
      bn.running_mean[i] = rng.normal();
      bn.running_var[i] = rng.uniform(0.2, 3.0);
    }
    LinearOp absorbed = bn_absorb(op, bn);
    for (int rep = 0; rep < 50; ++rep) {
      Mat x(op.in_size(), 1);
      rng.fill_normal(x);
      const double gap =
          (apply(absorbed, x) - bn_apply(bn, Mat(apply(op, x)), BnMode::frozen)).cwiseAbs().maxCoeff();
      worst = std::max(worst, gap);
      if (gap > 1e-10) {
        detail = "absorbed op deviates by " + std::to_string(gap);
        return false;
      }
    }
  }
  std::ostringstream os;
  os << "dense/conv/transposed sweeps, worst |absorbed - bn(linear)| = " << worst << " <= 1e-10";
  detail = os.str();
  return true;
}

bool c11_adjoint_oracle(std::string& detail) {
  RngStream rng(1111);
  double worst = 0.0;
  for (Index n : {20, 35, 50}) {
    for (int rep = 0; rep < 2; ++rep) {
      NetworkSpec spec = contractive_instance(rng, n, rng.uniform(0.4, 0.8));
      Mat x(4, 1);
      rng.fill_normal(x);
      TightSolve s = solve_tight(spec, x);
      if (!s.ok) return detail = "equilibrium solve failed", false;
      FixedPointMap map(spec, x);
      FixedPointMap::Trace tr;
      map.eval(s.a_star, &tr);
      Mat seed(n, 1);
      rng.fill_normal(seed);
      Mat mask = ((tr.preact[0].array() > 0.0) && (tr.preact[0].array() < 1.0)).cast<double>();
      Mat J = mask.col(0).asDiagonal() * spec.feedback.effective().weight.matrix() / spec.v_th;
      Vec direct = (Mat::Identity(n, n) - J.transpose()).partialPivLu().solve(Vec(seed.col(0)));
      BackwardState broy = solve_adjoint(map, tr, seed, {SolverConfig::Method::broyden, 400, 1e-10, 0.5});
      BackwardState damp = solve_adjoint(map, tr, seed, {SolverConfig::Method::fixed_point, 6000, 1e-10, 0.5});
      if (!broy.converged || !damp.converged) return detail = "adjoint solver failed", false;
      const double gb = (broy.beta_star.col(0) - direct).cwiseAbs().maxCoeff();
      const double gd = (damp.beta_star.col(0) - direct).cwiseAbs().maxCoeff();
      worst = std::max({worst, gb, gd});
      if (gb > 1e-8 || gd > 1e-8) {
        detail = "width " + std::to_string(n) + ": broyden gap " + std::to_string(gb) + ", fixed-point gap " +
                 std::to_string(gd);
        return false;
      }
    }
  }
  std::ostringstream os;
  os << "widths {20,35,50}: both solvers match the dense LU solve (worst gap " << worst << ") <= 1e-8";
  detail = os.str();
  return true;
}

bool c7_full_fashion(std::string& detail) {
  const fs::path cfg_src = fs::path(source_dir()) / "configs" / "fashion-f400.json";
  const fs::path out = fs::path(source_dir()) / "build" / "acceptance_fashion";
  nlohmann::json cfg;
  {
    std::ifstream is(cfg_src);
    if (!is) return detail = "missing configs/fashion-f400.json", false;
    is >> cfg;
  }
  cfg["output_dir"] = out.string();
  const fs::path cfg_path = fs::path(source_dir()) / "build" / "acceptance_fashion_config.json";
  {
    std::ofstream os(cfg_path);
    os << cfg.dump(2);
  }
  const int rc = cmd_train(cfg_path.string(), false, {});
  if (rc == 3)
    return detail = "Fashion-MNIST files not found (set EQSPIKE_DATA_DIR; see README for the official files)",
           false;
  if (rc != 0) return detail = "training run failed", false;
  nlohmann::json summary;
  std::ifstream is(out / "summary.json");
  is >> summary;
  const double acc = summary.at("final_acc").get<double>();
  std::ostringstream os;
  os << "Fashion-MNIST, 400 (F400), T=5, IF, 30 epochs: test accuracy " << acc << " (need >= 0.88)";
  detail = os.str();
  return acc >= 0.88;
}

}  // namespace

int main(int argc, char** argv) {
  bool full = false;
  for (int i = 1; i < argc; ++i)
    if (std::string(argv[i]) == "--full") full = true;

  run_criterion(1, "gradient exactness vs finite differences", c1_gradient_exactness, 60.0);
  run_criterion(2, "closed-form gradient equivalence", c2_closed_form);
  run_criterion(3, "theorem 2: discrete IF convergence", c3_theorem2, 120.0);
  run_criterion(4, "theorem 3: multi-layer convergence", c4_theorem3, 120.0);
  run_criterion(5, "proposition 2: LIF bounded residual", c5_proposition2, 120.0);
  run_criterion(7, "desk-scale accuracy (fast gate)", c7_desk_gate, 900.0);
  run_criterion(6, "figure-1 residual decay on the trained model", c6_figure1);
  run_criterion(8, "memory contract: no per-step buffers", c8_memory_contract);
  run_criterion(9, "spectral invariant under training", c9_spectral_invariant);
  run_criterion(10, "BN absorption equivalence", c10_bn_absorption);
  run_criterion(11, "adjoint solvers vs dense direct solve", c11_adjoint_oracle);
  if (full) run_criterion(12, "desk-scale accuracy (full Fashion-MNIST run)", c7_full_fashion);

  std::sort(g_results.begin(), g_results.end(), [](const Criterion& a, const Criterion& b) { return a.id < b.id; });
  int failed = 0;
  for (const auto& c : g_results) {
    const int shown = c.id == 12 ? 7 : c.id;
    std::cout << "criterion " << shown << (c.id == 12 ? " (full)" : "") << ": " << (c.pass ? "PASS" : "FAIL")
              << " - " << c.name << ": " << c.detail << " [" << c.seconds << "s]\n";
    if (!c.pass) ++failed;
  }
  std::cout << (failed == 0 ? "ACCEPTANCE: all criteria passed\n"
                            : "ACCEPTANCE: " + std::to_string(failed) + " criteria FAILED\n");
  return failed == 0 ? 0 : 1;
}
