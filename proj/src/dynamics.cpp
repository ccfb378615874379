#include "eqspike/dynamics.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace eqspike {

SimState init_state(const NetworkSpec& spec, Index batch) {
  SimState st;
  const Index N = spec.layer_count();
  st.u.reserve(N);
  st.s.reserve(N);
  st.rate_num.reserve(N);
  for (Index l = 0; l < N; ++l) {
    st.u.emplace_back(Mat::Zero(spec.rate_size(l), batch));
    st.s.emplace_back(Mat::Zero(spec.rate_size(l), batch));
    st.rate_num.emplace_back(Mat::Zero(spec.rate_size(l), batch));
  }
  st.x_num = Mat::Zero(spec.input_size(), batch);
  return st;
}

Mat average_rate(const SimState& state, Index layer) {
  if (state.rate_den <= 0.0) return Mat::Zero(state.rate_num[layer].rows(), state.rate_num[layer].cols());
  return state.rate_num[layer] / state.rate_den;
}

Mat average_input(const SimState& state) {
  if (state.x_den <= 0.0) return Mat::Zero(state.x_num.rows(), state.x_num.cols());
  return state.x_num / state.x_den;
}

namespace {

// Frozen-statistics BN is a per-channel affine map; applying it to every
// per-step current is equivalent to applying it to the average.
Mat layer_drive(const LayerSpec& layer, const Mat& pre) {
  Mat lin = apply(layer.op, pre);
  if (!layer.bn) return lin;
  auto& bn = const_cast<BatchNorm&>(*layer.bn);
  return bn_apply(bn, lin, BnMode::frozen);
}

void check_finite(const Mat& u, Index layer, long t) {
  if (!u.allFinite()) {
    std::ostringstream what;
    what << "simulate: non-finite membrane potential in layer " << layer + 1 << " at step " << t;
    throw std::runtime_error(what.str());
  }
}

void step_impl(SimState& st, const NetworkSpec& spec, const LinearOp& fb_eff, const Mat& drive1, const Mat& x_t,
               const Mat* dropout) {
  const Index N = spec.layer_count();
  const double lambda = spec.neuron.lambda;
  const double v_th = spec.v_th;

  st.x_num = lambda * st.x_num + x_t;
  st.x_den = lambda * st.x_den + 1.0;

  // Layer 1 sees the previous step's last-layer spikes (one-step feedback
  // delay); every other layer sees the spikes just computed below it.
  Mat fb_in = dropout ? Mat(dropout->cwiseProduct(st.s[N - 1])) : st.s[N - 1];
  st.u[0] = lambda * st.u[0] + apply(fb_eff, fb_in, false) + drive1;
  check_finite(st.u[0], 0, st.t + 1);
  st.s[0] = (st.u[0].array() >= v_th).cast<double>();
  st.u[0] -= v_th * st.s[0];

  for (Index l = 1; l < N; ++l) {
    st.u[l] = lambda * st.u[l] + layer_drive(spec.layers[l], st.s[l - 1]);
    check_finite(st.u[l], l, st.t + 1);
    st.s[l] = (st.u[l].array() >= v_th).cast<double>();
    st.u[l] -= v_th * st.s[l];
  }

  for (Index l = 0; l < N; ++l) st.rate_num[l] = lambda * st.rate_num[l] + st.s[l];
  st.rate_den = lambda * st.rate_den + 1.0;
  ++st.t;
}

}  // namespace

void step(SimState& state, const NetworkSpec& spec, const Mat& x_t) {
  if (x_t.rows() != spec.input_size()) throw std::invalid_argument("step: input size mismatch");
  LinearOp fb_eff = spec.feedback.effective();
  step_impl(state, spec, fb_eff, layer_drive(spec.layers[0], x_t), x_t, nullptr);
}

SimResult simulate(const NetworkSpec& spec, const InputEncoding& input, long T, const SimOptions& opts) {
  if (T < 1) throw std::invalid_argument("simulate: T must be >= 1");
  if (input.rows() != spec.input_size()) throw std::invalid_argument("simulate: input size mismatch");
  if (input.mode == InputEncoding::Mode::spike_train && static_cast<long>(input.frames.size()) < T)
    throw std::invalid_argument("simulate: spike-train payload shorter than horizon");

  const Index N = spec.layer_count();
  SimResult res;
  res.state = init_state(spec, input.batch());
  res.spike_totals.assign(N, 0.0);
  if (opts.per_layer_residuals) res.per_layer_trace.assign(N, {});

  LinearOp fb_eff = spec.feedback.effective();
  const bool constant = input.mode == InputEncoding::Mode::constant_current;
  Mat drive1;
  if (constant) drive1 = layer_drive(spec.layers[0], input.constant);

  std::optional<FixedPointMap> map;
  if (opts.record_residuals && constant)
    map.emplace(spec, input.constant, BnMode::frozen, opts.feedback_dropout);

  SimState& st = res.state;
  for (long t = 0; t < T; ++t) {
    const Mat& x_t = input.frame(t);
    if (constant) {
      step_impl(st, spec, fb_eff, drive1, x_t, opts.feedback_dropout);
    } else {
      step_impl(st, spec, fb_eff, layer_drive(spec.layers[0], x_t), x_t, opts.feedback_dropout);
    }
    for (Index l = 0; l < N; ++l) res.spike_totals[l] += st.s[l].sum();

    if (opts.record_residuals || opts.per_layer_residuals) {
      if (!constant) map.emplace(spec, average_input(st), BnMode::frozen, opts.feedback_dropout);
      if (opts.record_residuals) res.residual_trace.push_back(map->residual(average_rate(st, N - 1)));
      if (opts.per_layer_residuals) {
        // Per-layer equation residuals: layer 1 against f_1(a^N, x*), layer
        // l+1 against f_{l+1}(a^l).
        Mat a1 = average_rate(st, 0);
        Mat fbr = opts.feedback_dropout ? Mat(opts.feedback_dropout->cwiseProduct(average_rate(st, N - 1)))
                                        : average_rate(st, N - 1);
        Mat z1 = (apply(fb_eff, fbr, false) +
                  (constant ? drive1 : layer_drive(spec.layers[0], average_input(st)))) /
                 spec.v_th;
        res.per_layer_trace[0].push_back((clamp_sigma(z1) - a1).norm());
        for (Index l = 1; l < N; ++l) {
          Mat zl = layer_drive(spec.layers[l], average_rate(st, l - 1)) / spec.v_th;
          res.per_layer_trace[l].push_back((clamp_sigma(zl) - average_rate(st, l)).norm());
        }
      }
    }
  }
  return res;
}

FiringStats firing_stats(const std::vector<double>& spike_totals, const std::vector<Index>& layer_sizes, long steps,
                         Index samples) {
  if (spike_totals.empty() || spike_totals.size() != layer_sizes.size())
    throw std::invalid_argument("firing_stats: empty or mismatched trace");
  FiringStats fs;
  double all_spikes = 0.0;
  Index all_neurons = 0;
  for (size_t l = 0; l < spike_totals.size(); ++l) {
    fs.per_layer.push_back(spike_totals[l] / (static_cast<double>(layer_sizes[l]) * steps * samples));
    all_spikes += spike_totals[l];
    all_neurons += layer_sizes[l];
  }
  fs.total = all_spikes / (static_cast<double>(all_neurons) * steps * samples);
  return fs;
}

void write_diag_csv(const std::string& path, const SimResult& result, Index layer_count) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_diag_csv: cannot open " + path);
  os << "t,layer,residual\n";
  const size_t T = result.residual_trace.size();
  for (size_t t = 0; t < T; ++t) {
    for (Index l = 0; l + 1 < layer_count; ++l) os << t + 1 << "," << l + 1 << "," << result.per_layer_trace[l][t] << "\n";
    os << t + 1 << "," << layer_count << "," << result.residual_trace[t] << "\n";
  }
}

}  // namespace eqspike
