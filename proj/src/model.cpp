#include "eqspike/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace eqspike {

BatchNorm::BatchNorm(Index channels)
    : gamma(Tensor::constant({channels}, 1.0)),
      beta(Tensor({channels})),
      running_mean(Tensor({channels})),
      running_var(Tensor::constant({channels}, 1.0)) {}

Vec BatchNorm::scale() const {
  return gamma.flat().array() / (running_var.flat().array() + epsilon).sqrt();
}

Vec BatchNorm::shift() const {
  Vec s = scale();
  return beta.flat().array() - s.array() * running_mean.flat().array();
}

BnStats bn_batch_stats(const Mat& z, Index channels) {
  const Index spatial = z.rows() / channels;
  const Index count = spatial * z.cols();
  BnStats st;
  st.mean = Vec::Zero(channels);
  st.var = Vec::Zero(channels);
  for (Index c = 0; c < z.cols(); ++c)
    for (Index ch = 0; ch < channels; ++ch) st.mean[ch] += z.col(c).segment(ch * spatial, spatial).sum();
  st.mean /= static_cast<double>(count);
  for (Index c = 0; c < z.cols(); ++c)
    for (Index ch = 0; ch < channels; ++ch)
      st.var[ch] += (z.col(c).segment(ch * spatial, spatial).array() - st.mean[ch]).square().sum();
  st.var /= static_cast<double>(count);
  return st;
}

Mat bn_normalize(const BatchNorm& bn, const Mat& z, const BnStats& stats) {
  const Index channels = bn.channels();
  const Index spatial = z.rows() / channels;
  Mat out(z.rows(), z.cols());
  Vec inv = (stats.var.array() + bn.epsilon).rsqrt();
  for (Index c = 0; c < z.cols(); ++c)
    for (Index ch = 0; ch < channels; ++ch)
      out.col(c).segment(ch * spatial, spatial) =
          bn.gamma[ch] * inv[ch] * (z.col(c).segment(ch * spatial, spatial).array() - stats.mean[ch]) + bn.beta[ch];
  return out;
}

void bn_update_running(BatchNorm& bn, const BnStats& stats, Index count) {
  const double m = bn.momentum;
  const double unbias = count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
  bn.running_mean.flat() = (1.0 - m) * bn.running_mean.flat() + m * stats.mean;
  bn.running_var.flat() = (1.0 - m) * bn.running_var.flat() + m * unbias * stats.var;
}

Mat bn_apply(BatchNorm& bn, const Mat& z, BnMode mode) {
  const Index channels = bn.channels();
  if (z.rows() % channels != 0) {
    std::ostringstream what;
    what << "bn_apply: " << z.rows() << " rows not divisible by " << channels << " channels";
    throw std::invalid_argument(what.str());
  }
  if (mode == BnMode::frozen) {
    const Index spatial = z.rows() / channels;
    Vec sc = bn.scale(), sh = bn.shift();
    Mat out(z.rows(), z.cols());
    for (Index c = 0; c < z.cols(); ++c)
      for (Index ch = 0; ch < channels; ++ch)
        out.col(c).segment(ch * spatial, spatial) = sc[ch] * z.col(c).segment(ch * spatial, spatial).array() + sh[ch];
    return out;
  }
  BnStats st = bn_batch_stats(z, channels);
  Mat out = bn_normalize(bn, z, st);
  bn_update_running(bn, st, (z.rows() / channels) * z.cols());
  return out;
}

Tensor bn_apply(BatchNorm& bn, const Tensor& z, BnMode mode) {
  Mat out = bn_apply(bn, Mat(z.flat()), mode);
  return Tensor(z.shape(), Vec(out.col(0)));
}

BnBackward bn_backward_batch(const BatchNorm& bn, const Mat& z, const BnStats& stats, const Mat& gout) {
  const Index channels = bn.channels();
  const Index spatial = z.rows() / channels;
  const double count = static_cast<double>(spatial * z.cols());
  Vec inv = (stats.var.array() + bn.epsilon).rsqrt();

  BnBackward bk;
  bk.ggamma = Vec::Zero(channels);
  bk.gbeta = Vec::Zero(channels);
  Vec dot_gx = Vec::Zero(channels);  // sum of gout * xhat per channel
  Mat xhat(z.rows(), z.cols());
  for (Index c = 0; c < z.cols(); ++c)
    for (Index ch = 0; ch < channels; ++ch) {
      auto xs = z.col(c).segment(ch * spatial, spatial).array();
      auto gs = gout.col(c).segment(ch * spatial, spatial).array();
      auto xh = (xs - stats.mean[ch]) * inv[ch];
      xhat.col(c).segment(ch * spatial, spatial) = xh;
      bk.ggamma[ch] += (gs * xh).sum();
      bk.gbeta[ch] += gs.sum();
      dot_gx[ch] += (gs * xh).sum();
    }
  bk.gz.resize(z.rows(), z.cols());
  for (Index c = 0; c < z.cols(); ++c)
    for (Index ch = 0; ch < channels; ++ch) {
      auto gs = gout.col(c).segment(ch * spatial, spatial).array();
      auto xh = xhat.col(c).segment(ch * spatial, spatial).array();
      bk.gz.col(c).segment(ch * spatial, spatial) =
          bn.gamma[ch] * inv[ch] * (gs - bk.gbeta[ch] / count - xh * dot_gx[ch] / count);
    }
  return bk;
}

LinearOp bn_absorb(const LinearOp& op, const BatchNorm& bn) {
  if (bn.mode != BnMode::frozen) throw std::invalid_argument("bn_absorb: statistics must be frozen");
  const Index channels = bn.channels();
  if (op.bias.size() != channels) throw std::invalid_argument("bn_absorb: channel count mismatch");
  Vec sc = bn.scale();
  LinearOp out = op;
  if (op.kind == OpKind::dense) {
    for (Index r = 0; r < channels; ++r) out.weight.matrix().row(r) *= sc[r];
  } else {
    // scale every kernel element feeding output channel ch
    const Index per_ch = out.weight.size() / channels;
    auto w = out.weight.flat();
    if (op.kind == OpKind::conv2d) {
      for (Index ch = 0; ch < channels; ++ch) w.segment(ch * per_ch, per_ch) *= sc[ch];
    } else {
      // transposed conv: output channels are the geom's in_channels, which is
      // the second weight axis
      const Index ic = op.geom.in_channels, kk = op.geom.kernel_h * op.geom.kernel_w;
      for (Index oc = 0; oc < op.geom.out_channels; ++oc)
        for (Index ch = 0; ch < ic; ++ch) w.segment((oc * ic + ch) * kk, kk) *= sc[ch];
    }
  }
  out.bias.flat() = sc.array() * (op.bias.flat().array() - bn.running_mean.flat().array()) + bn.beta.flat().array();
  return out;
}

double SpectralReparam::alpha_clipped() const { return std::clamp(alpha[0], -clip, clip); }

void SpectralReparam::refresh(int iters, double tol) {
  if (raw.weight.flat().cwiseAbs().maxCoeff() == 0.0)
    throw std::invalid_argument("SpectralReparam: raw weight is zero (degenerate)");
  SpectralEstimate est = spectral_norm_full(raw, iters, tol, v1.size() ? &v1 : nullptr);
  sigma = est.value;
  u1 = est.left;
  v1 = est.right;
}

LinearOp SpectralReparam::effective() const {
  if (sigma <= 0.0) throw std::logic_error("SpectralReparam: refresh() not called");
  LinearOp op = raw;
  op.weight.flat() *= alpha_clipped() / sigma;
  op.bias.flat().setZero();
  return op;
}

LinearOp effective_feedback(const SpectralReparam& rp) { return rp.effective(); }

void NetworkSpec::validate() const {
  if (layers.empty()) throw std::invalid_argument("NetworkSpec: no layers");
  if (v_th <= 0.0) throw std::invalid_argument("NetworkSpec: v_th must be positive");
  if (neuron.lambda <= 0.0 || neuron.lambda > 1.0) throw std::invalid_argument("NetworkSpec: lambda must be in (0,1]");
  // dense layers consume any upstream shape of matching size (flattening)
  auto composes = [](const LinearOp& op, const Shape& from) {
    return same_shape(op.input_shape, from) || (op.kind == OpKind::dense && op.in_size() == numel(from));
  };
  if (!composes(layers[0].op, input_shape))
    throw std::invalid_argument("NetworkSpec: layer 1 input shape != network input shape");
  for (size_t l = 1; l < layers.size(); ++l)
    if (!composes(layers[l].op, layers[l - 1].op.output_shape)) {
      std::ostringstream what;
      what << "NetworkSpec: layer " << l + 1 << " input " << shape_str(layers[l].op.input_shape)
           << " != layer " << l << " output " << shape_str(layers[l - 1].op.output_shape);
      throw std::invalid_argument(what.str());
    }
  if (!same_shape(feedback.raw.output_shape, layers[0].op.output_shape))
    throw std::invalid_argument("NetworkSpec: feedback output shape != layer 1 rate shape");
  if (numel(feedback.raw.input_shape) != state_size())
    throw std::invalid_argument("NetworkSpec: feedback input shape != last layer rate shape");
  if (readout.in_size() != state_size())
    throw std::invalid_argument("NetworkSpec: readout input size != last layer rate size");
  for (const auto& layer : layers)
    if (layer.bn && layer.bn->channels() != layer.op.bias.size())
      throw std::invalid_argument("NetworkSpec: BN channels != layer output channels");
}

std::vector<NetworkSpec::ParamRef> NetworkSpec::parameters() {
  std::vector<ParamRef> out;
  out.push_back({"feedback.weight", &feedback.raw.weight, true});
  out.push_back({"feedback.alpha", &feedback.alpha, false});
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    out.push_back({p + "weight", &layers[l].op.weight, true});
    out.push_back({p + "bias", &layers[l].op.bias, true});
    if (layers[l].bn) {
      out.push_back({p + "bn.gamma", &layers[l].bn->gamma, false});
      out.push_back({p + "bn.beta", &layers[l].bn->beta, false});
    }
  }
  out.push_back({"readout.weight", &readout.weight, true});
  out.push_back({"readout.bias", &readout.bias, true});
  return out;
}

std::vector<std::pair<std::string, Tensor*>> NetworkSpec::state_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& p : parameters()) out.emplace_back(p.name, p.tensor);
  for (size_t l = 0; l < layers.size(); ++l)
    if (layers[l].bn) {
      const std::string p = "layers." + std::to_string(l) + ".bn.";
      out.emplace_back(p + "running_mean", &layers[l].bn->running_mean);
      out.emplace_back(p + "running_var", &layers[l].bn->running_var);
    }
  return out;
}

Index NetworkSpec::param_count() const {
  Index n = 0;
  for (auto& p : const_cast<NetworkSpec&>(*this).parameters()) n += p.tensor->size();
  return n;
}

namespace {

// U(0,1) entries, then unit 2-norm per output dimension (row for dense,
// filter for conv).
void paper_init_weight(Tensor& w, Index out_dims, RngStream& rng) {
  auto flat = w.flat();
  rng.fill_uniform(flat, 0.0, 1.0);
  const Index per = w.size() / out_dims;
  for (Index r = 0; r < out_dims; ++r) {
    auto seg = flat.segment(r * per, per);
    const double n = seg.norm();
    if (n > 0.0) seg /= n;
  }
}

Index weight_out_dims(const LinearOp& op) {
  switch (op.kind) {
    case OpKind::dense:
      return op.output_shape[0];
    case OpKind::conv2d:
    case OpKind::conv2d_transposed:
      return op.geom.out_channels;
  }
  return 0;
}

}  // namespace

void init_params(NetworkSpec& spec, RngStream& rng) {
  paper_init_weight(spec.feedback.raw.weight, weight_out_dims(spec.feedback.raw), rng);
  spec.feedback.raw.bias.flat().setZero();
  for (auto& layer : spec.layers) {
    paper_init_weight(layer.op.weight, weight_out_dims(layer.op), rng);
    layer.op.bias.flat().setZero();
    if (layer.bn) {
      layer.bn->gamma.flat().setOnes();
      layer.bn->beta.flat().setZero();
      layer.bn->running_mean.flat().setZero();
      layer.bn->running_var.flat().setOnes();
    }
  }
  paper_init_weight(spec.readout.weight, weight_out_dims(spec.readout), rng);
  spec.readout.bias.flat().setZero();
  spec.feedback.refresh();
  spec.feedback.alpha[0] = std::min(spec.feedback.sigma, spec.feedback.clip);
}

ReadoutResult readout_and_loss(const Mat& A, const LinearOp& readout, const std::vector<int>& labels) {
  const Index batch = A.cols();
  if (static_cast<Index>(labels.size()) != batch)
    throw std::invalid_argument("readout_and_loss: label count != batch size");
  ReadoutResult r;
  r.logits = apply(readout, A);
  const Index classes = r.logits.rows();
  Mat p = r.logits;
  double loss = 0.0;
  for (Index c = 0; c < batch; ++c) {
    if (labels[c] < 0 || labels[c] >= classes) {
      std::ostringstream what;
      what << "readout_and_loss: label " << labels[c] << " outside [0," << classes << ")";
      throw std::invalid_argument(what.str());
    }
    auto col = p.col(c);
    const double mx = col.maxCoeff();
    col = (col.array() - mx).exp();
    const double z = col.sum();
    loss += -std::log(col[labels[c]] / z);
    col /= z;
  }
  r.loss = loss / static_cast<double>(batch);
  r.dL_dlogits = p;
  for (Index c = 0; c < batch; ++c) r.dL_dlogits(labels[c], c) -= 1.0;
  r.dL_dlogits /= static_cast<double>(batch);
  r.dL_dA = adjoint(readout, r.dL_dlogits);
  return r;
}

}  // namespace eqspike
