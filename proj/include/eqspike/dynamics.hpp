#pragma once

#include "eqspike/equilibrium.hpp"

#include <string>
#include <vector>

namespace eqspike {

/** Network input over time: either the same current tensor at every step or
 * an explicit per-step frame sequence (spike trains). Columns are samples. */
struct InputEncoding {
  enum class Mode { constant_current, spike_train };
  Mode mode = Mode::constant_current;
  Mat constant;             // input_size x batch
  std::vector<Mat> frames;  // spike_train: frames[t] for t = 0..T-1

  static InputEncoding constant_current(Mat x) { return {Mode::constant_current, std::move(x), {}}; }
  static InputEncoding spike_train(std::vector<Mat> f) { return {Mode::spike_train, Mat(), std::move(f)}; }

  const Mat& frame(long t) const { return mode == Mode::constant_current ? constant : frames.at(t); }
  Index batch() const { return mode == Mode::constant_current ? constant.cols() : frames.at(0).cols(); }
  Index rows() const { return mode == Mode::constant_current ? constant.rows() : frames.at(0).rows(); }
};

/** Per-layer membrane potentials and spikes plus running (weighted) average
 * accumulators. A value type: simulation of distinct samples can run on
 * distinct threads without sharing. */
struct SimState {
  std::vector<Mat> u, s;        // per layer, rate_size(l) x batch
  std::vector<Mat> rate_num;    // lambda-weighted spike sums (plain sums for IF)
  double rate_den = 0.0;        // shared across layers: sum of lambda^(t-tau), tau=1..t
  Mat x_num;                    // weighted input sum over consumed frames
  double x_den = 0.0;
  long t = 0;
};

SimState init_state(const NetworkSpec& spec, Index batch);

/** Average firing rate a[t] (IF) or weighted average a^[t] (LIF) of layer l. */
Mat average_rate(const SimState& state, Index layer);
/** (Weighted) average of the inputs consumed so far. */
Mat average_input(const SimState& state);

/** One synchronous update of all layers per the discrete neuron model:
 * u' = lambda u + input, s' = H(u' - V_th), u'' = u' - V_th s'. Layer 1
 * receives the previous step's last-layer spikes through the feedback op;
 * layer l+1 receives the spikes layer l just emitted this step. */
void step(SimState& state, const NetworkSpec& spec, const Mat& x_t);

struct SimOptions {
  bool record_residuals = false;   // composite-map residual of the last layer per step
  bool per_layer_residuals = false;
  const Mat* feedback_dropout = nullptr;
};

struct SimResult {
  SimState state;
  std::vector<double> residual_trace;                 // index t-1 -> residual at step t
  std::vector<std::vector<double>> per_layer_trace;   // [layer][t-1]
  std::vector<double> spike_totals;                   // per layer, summed over steps/neurons/samples
};

/** Simulate T steps from u[0]=0, s[0]=0. */
SimResult simulate(const NetworkSpec& spec, const InputEncoding& input, long T, const SimOptions& opts = {});

struct FiringStats {
  std::vector<double> per_layer;
  double total = 0.0;
};

/** Mean spikes per neuron, step and sample, per layer and overall. */
FiringStats firing_stats(const std::vector<double>& spike_totals, const std::vector<Index>& layer_sizes, long steps,
                         Index samples);

/** Rows `t,layer,residual`. Single-layer nets emit one row per step; deeper
 * nets emit one row per layer, with the last layer carrying the composite
 * fixed-point residual on a^N. */
void write_diag_csv(const std::string& path, const SimResult& result, Index layer_count);

}  // namespace eqspike
