#pragma once

#include "eqspike/data.hpp"
#include "eqspike/dynamics.hpp"
#include "eqspike/grad.hpp"

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace eqspike {

struct TrainConfig {
  int epochs = 30;
  Index batch_size = 128;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<int> decay_epochs;  // explicit milestones; overrides decay_every
  int decay_every = 30;           // <= 0 disables
  double decay_factor = 0.1;
  int warmup_iters = 0;
  long T = 5;
  SolverConfig backward;
  bool refine_forward = false;
  SolverConfig forward_refine;
  double dropout = 0.0;
  std::uint64_t seed = 0;
  int threads = 1;
  double unhealthy_frac = 0.5;  // epoch flagged when more backward solves fail
};

/** Linear warmup to the base rate, then step decay at epoch milestones. */
double lr_at(long iteration, int epoch, const TrainConfig& cfg);

struct SgdState {
  std::vector<std::pair<std::string, Tensor>> velocity;
  static SgdState zeros_like(NetworkSpec& spec);
  Tensor& at(const std::string& name);
};

/** Classical momentum with L2 decay folded into the gradient:
 * v <- momentum v + (g + wd theta); theta <- theta - lr v. Weight decay
 * skips BN parameters and alpha. Steps with non-finite gradients are
 * skipped (returns false). Re-clips alpha and refreshes the feedback
 * spectral cache afterwards. */
bool sgd_step(NetworkSpec& spec, const GradientSet& grads, SgdState& state, double lr, double momentum,
              double weight_decay);

struct EpochMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
  double mean_residual = 0.0;  // per-sample RMS fixed-point residual at a[T]
  double firing_rate = 0.0;
  bool healthy = true;
};

struct TrainState {
  SgdState sgd;
  long iteration = 0;
  int epoch = 0;
  RngStream shuffle_rng{0, 1};
  RngStream dropout_rng{0, 2};
  RngStream augment_rng{0, 3};
  long skipped_steps = 0;
};

TrainState make_train_state(NetworkSpec& spec, const TrainConfig& cfg);

/** One pass over the data: simulate T steps with frozen BN, take a[T] as the
 * equilibrium estimate, compute the implicit gradient (BN in batch mode) and
 * apply one SGD step per mini-batch. The after_forward hook fires between
 * the forward simulation and the gradient computation (instrumentation). */
EpochMetrics train_epoch(NetworkSpec& spec, const Dataset& data, const TrainConfig& cfg, TrainState& state,
                         const std::function<void()>& after_forward = {});

/** Test-mode evaluation: frozen BN, no dropout, no updates. */
EpochMetrics evaluate(const NetworkSpec& spec, const Dataset& data, long T, Index batch_size, int threads = 1);

/** Forward simulation of one encoded batch, optionally split over threads by
 * sample. Bit-identical to the single-thread path for any thread count. */
struct ForwardResult {
  Mat a_state;                       // last-layer (weighted) average rate
  std::vector<double> spike_totals;  // per layer
};
ForwardResult forward_batch(const NetworkSpec& spec, const Mat& x, long T, int threads,
                            const Mat* dropout = nullptr);

// ---- Checkpoint file: magic "IDE1", u32 version, u64 header length, JSON
// header with a tensor manifest, then little-endian f64 arrays. ----

struct CheckpointData {
  nlohmann::json header;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void write_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::string& path);

std::vector<std::pair<std::string, Tensor>> checkpoint_tensors(NetworkSpec& spec, const SgdState& sgd);
void restore_checkpoint_tensors(NetworkSpec& spec, SgdState& sgd, const CheckpointData& data);

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void append(int epoch, const std::string& split, const EpochMetrics& m);

 private:
  std::string path_;
};

}  // namespace eqspike
