#pragma once

#include "eqspike/linear_op.hpp"

#include <optional>
#include <string>
#include <vector>

namespace eqspike {

struct NeuronKind {
  enum class Type { IF, LIF };
  Type type = Type::IF;
  double lambda = 1.0;  // leak factor in (0,1]; 1 for IF

  static NeuronKind if_model() { return {Type::IF, 1.0}; }
  static NeuronKind lif(double lambda) { return {Type::LIF, lambda}; }
};

enum class BnMode { frozen, batch };

/** Per-channel batch normalization. Frozen mode is a pure affine transform
 * from the running statistics; batch mode normalizes with mini-batch
 * statistics and folds them into the running ones. */
struct BatchNorm {
  Tensor gamma, beta;              // learnable scale/shift
  Tensor running_mean, running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
  BnMode mode = BnMode::frozen;

  explicit BatchNorm(Index channels = 0);
  Index channels() const { return gamma.size(); }

  Vec scale() const;  // gamma / sqrt(running_var + eps)
  Vec shift() const;  // beta - scale() * running_mean
};

struct BnStats {
  Vec mean, var;  // per channel; var is the biased estimator used to normalize
};

BnStats bn_batch_stats(const Mat& z, Index channels);
/** Normalize with the given statistics (batch-mode forward). */
Mat bn_normalize(const BatchNorm& bn, const Mat& z, const BnStats& stats);
void bn_update_running(BatchNorm& bn, const BnStats& stats, Index count);

/** Frozen: affine from running stats. Batch: normalize with mini-batch stats
 * and update the running ones. Rows of z are channels x spatial, columns are
 * samples. */
Mat bn_apply(BatchNorm& bn, const Mat& z, BnMode mode);
Tensor bn_apply(BatchNorm& bn, const Tensor& z, BnMode mode);

struct BnBackward {
  Mat gz;
  Vec ggamma, gbeta;
};
/** VJP of batch-mode normalization, including the batch-statistics terms. */
BnBackward bn_backward_batch(const BatchNorm& bn, const Mat& z, const BnStats& stats, const Mat& gout);

/** Fold a frozen-statistics BN into the preceding linear operator. */
LinearOp bn_absorb(const LinearOp& op, const BatchNorm& bn);

/** Feedback weight stored as alpha * raw / ||raw||_2 with |alpha| <= clip,
 * which pins the effective spectral norm to |alpha| and hence keeps the
 * contraction condition of the convergence theorems satisfiable by
 * construction. */
struct SpectralReparam {
  LinearOp raw;
  Tensor alpha{Shape{1}};
  double clip = 1.0;

  // top singular triple of the raw operator, cached by refresh()
  double sigma = 0.0;
  Vec u1, v1;

  double alpha_clipped() const;
  void refresh(int iters = 200, double tol = 1e-12);
  LinearOp effective() const;
};

LinearOp effective_feedback(const SpectralReparam& rp);

struct LayerSpec {
  LinearOp op;                   // F^l, with bias b^l
  std::optional<BatchNorm> bn;   // applied to op's output, feedback excluded
};

/** Full architecture: layer chain F^1..F^N, feedback W^1 from the last layer
 * back to the first, neuron kind, threshold, and the non-spiking readout. */
struct NetworkSpec {
  std::vector<LayerSpec> layers;
  SpectralReparam feedback;
  NeuronKind neuron;
  double v_th = 2.0;
  LinearOp readout;  // dense on the flattened last-layer rate
  Shape input_shape;

  Index layer_count() const { return static_cast<Index>(layers.size()); }
  const Shape& rate_shape(Index l) const { return layers[l].op.output_shape; }
  Index rate_size(Index l) const { return numel(layers[l].op.output_shape); }
  Index state_size() const { return rate_size(layer_count() - 1); }
  Index input_size() const { return numel(input_shape); }

  void validate() const;

  struct ParamRef {
    std::string name;
    Tensor* tensor;
    bool decay;  // weight decay applies
  };
  std::vector<ParamRef> parameters();
  std::vector<std::pair<std::string, Tensor*>> state_tensors();  // params + BN running stats
  Index param_count() const;
};

/** Paper-style initialization: U(0,1) weights normalized to unit 2-norm per
 * output dimension, zero biases, alpha = min(||raw||_2, clip), BN identity. */
void init_params(NetworkSpec& spec, RngStream& rng);

struct ReadoutResult {
  Mat logits;      // classes x batch
  double loss;     // mean softmax cross-entropy
  Mat dL_dlogits;  // (softmax - onehot) / batch
  Mat dL_dA;       // readout^T * dL_dlogits
};

ReadoutResult readout_and_loss(const Mat& A, const LinearOp& readout, const std::vector<int>& labels);

}  // namespace eqspike
