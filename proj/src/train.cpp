#include "eqspike/train.hpp"

#include <cstring>
#include <fstream>
#include <iostream>
#include <thread>

namespace eqspike {

double lr_at(long iteration, int epoch, const TrainConfig& cfg) {
  double lr = cfg.lr;
  if (cfg.warmup_iters > 0 && iteration < cfg.warmup_iters)
    return cfg.lr * static_cast<double>(iteration) / static_cast<double>(cfg.warmup_iters);
  int passed = 0;
  if (!cfg.decay_epochs.empty()) {
    for (int m : cfg.decay_epochs)
      if (epoch >= m) ++passed;
  } else if (cfg.decay_every > 0) {
    passed = epoch / cfg.decay_every;
  }
  for (int i = 0; i < passed; ++i) lr *= cfg.decay_factor;
  return lr;
}

SgdState SgdState::zeros_like(NetworkSpec& spec) {
  SgdState st;
  for (auto& p : spec.parameters()) st.velocity.emplace_back(p.name, Tensor(p.tensor->shape()));
  return st;
}

Tensor& SgdState::at(const std::string& name) {
  for (auto& [n, t] : velocity)
    if (n == name) return t;
  throw std::invalid_argument("SgdState: no velocity named " + name);
}

bool sgd_step(NetworkSpec& spec, const GradientSet& grads, SgdState& state, double lr, double momentum,
              double weight_decay) {
  if (!grads.all_finite()) return false;
  auto params = spec.parameters();
  if (params.size() != grads.items.size() || params.size() != state.velocity.size())
    throw std::invalid_argument("sgd_step: parameter/gradient/velocity counts differ");
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const Tensor& g = grads.items[i].second;
    Tensor& v = state.velocity[i].second;
    if (g.size() != p.tensor->size())
      throw std::invalid_argument("sgd_step: shape mismatch for " + p.name);
    const double wd = p.decay ? weight_decay : 0.0;
    v.flat() = momentum * v.flat() + (g.flat() + wd * p.tensor->flat());
    p.tensor->flat() -= lr * v.flat();
  }
  auto& alpha = spec.feedback.alpha[0];
  alpha = std::clamp(alpha, -spec.feedback.clip, spec.feedback.clip);
  spec.feedback.refresh();
  return true;
}

TrainState make_train_state(NetworkSpec& spec, const TrainConfig& cfg) {
  TrainState st;
  st.sgd = SgdState::zeros_like(spec);
  st.shuffle_rng = RngStream(cfg.seed, 1);
  st.dropout_rng = RngStream(cfg.seed, 2);
  st.augment_rng = RngStream(cfg.seed, 3);
  return st;
}

ForwardResult forward_batch(const NetworkSpec& spec, const Mat& x, long T, int threads, const Mat* dropout) {
  const Index batch = x.cols();
  const Index nl = spec.layer_count();
  ForwardResult out;
  out.a_state.resize(spec.state_size(), batch);
  out.spike_totals.assign(static_cast<size_t>(nl), 0.0);
  const int nthreads = std::max(1, std::min<int>(threads, static_cast<int>(batch)));
  if (nthreads == 1) {
    SimResult r = simulate(spec, InputEncoding::constant_current(x), T, SimOptions{false, false, dropout});
    out.a_state = average_rate(r.state, nl - 1);
    out.spike_totals = r.spike_totals;
    return out;
  }
  std::vector<std::vector<double>> totals(static_cast<size_t>(nthreads));
  std::vector<std::thread> pool;
  const Index chunk = (batch + nthreads - 1) / nthreads;
  for (int ti = 0; ti < nthreads; ++ti) {
    pool.emplace_back([&, ti]() {
      const Index lo = ti * chunk;
      const Index hi = std::min(batch, lo + chunk);
      if (lo >= hi) {
        totals[static_cast<size_t>(ti)].assign(static_cast<size_t>(nl), 0.0);
        return;
      }
      Mat xb = x.middleCols(lo, hi - lo);
      std::optional<Mat> db;
      if (dropout) db = dropout->middleCols(lo, hi - lo);
      SimResult r =
          simulate(spec, InputEncoding::constant_current(xb), T, SimOptions{false, false, db ? &*db : nullptr});
      out.a_state.middleCols(lo, hi - lo) = average_rate(r.state, nl - 1);
      totals[static_cast<size_t>(ti)] = r.spike_totals;
    });
  }
  for (auto& t : pool) t.join();
  for (auto& tt : totals)
    for (size_t l = 0; l < tt.size(); ++l) out.spike_totals[l] += tt[l];
  return out;
}

namespace {

Index total_neurons(const NetworkSpec& spec) {
  Index n = 0;
  for (Index l = 0; l < spec.layer_count(); ++l) n += spec.rate_size(l);
  return n;
}

}  // namespace

EpochMetrics train_epoch(NetworkSpec& spec, const Dataset& data, const TrainConfig& cfg, TrainState& state,
                         const std::function<void()>& after_forward) {
  EpochMetrics em;
  const Index n = data.size();
  std::vector<Index> order = shuffled_indices(n, state.shuffle_rng);
  double spike_sum = 0.0;
  long correct = 0, seen = 0, batches = 0, failed_solves = 0;
  for (Index pos = 0; pos < n; pos += cfg.batch_size) {
    const Index take = std::min(cfg.batch_size, n - pos);
    std::vector<Index> idx(order.begin() + pos, order.begin() + pos + take);
    Mat x = data.augment ? encode_batch_augmented(data, idx, state.augment_rng) : encode_batch(data, idx);
    std::vector<int> labels(static_cast<size_t>(take));
    for (Index i = 0; i < take; ++i) labels[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(idx[static_cast<size_t>(i)])];

    std::optional<Mat> dropout;
    if (cfg.dropout > 0.0) {
      dropout = Mat(spec.state_size(), take);
      for (Index i = 0; i < dropout->size(); ++i)
        dropout->data()[i] = state.dropout_rng.uniform() >= cfg.dropout ? 1.0 / (1.0 - cfg.dropout) : 0.0;
    }
    const Mat* dmask = dropout ? &*dropout : nullptr;

    ForwardResult fwd = forward_batch(spec, x, cfg.T, cfg.threads, dmask);
    Mat a_state = std::move(fwd.a_state);
    if (cfg.refine_forward) {
      FixedPointMap map(spec, x, BnMode::frozen, dmask);
      EquilibriumSolution sol = solve_fixed_point(map, cfg.forward_refine, a_state);
      a_state = sol.a_star;
    }
    if (after_forward) after_forward();

    BackwardPassResult bp = backward_pass(spec, a_state, x, labels, cfg.backward, BnMode::batch, true, dmask);
    if (!bp.adjoint.converged) ++failed_solves;

    const double lr = lr_at(state.iteration, state.epoch, cfg);
    if (!sgd_step(spec, bp.grads, state.sgd, lr, cfg.momentum, cfg.weight_decay)) {
      ++state.skipped_steps;
      std::cerr << "train_epoch: non-finite gradient, step " << state.iteration << " skipped\n";
    }
    ++state.iteration;
    ++batches;

    em.loss += bp.loss * take;
    em.mean_residual += bp.map_residual / std::sqrt(static_cast<double>(take));
    for (double s : fwd.spike_totals) spike_sum += s;
    for (Index i = 0; i < take; ++i) {
      Index best;
      bp.logits.col(i).maxCoeff(&best);
      if (static_cast<int>(best) == labels[static_cast<size_t>(i)]) ++correct;
    }
    seen += take;
  }
  em.loss /= static_cast<double>(seen);
  em.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  em.mean_residual /= static_cast<double>(batches);
  em.firing_rate = spike_sum / (static_cast<double>(total_neurons(spec)) * cfg.T * seen);
  em.healthy = failed_solves <= cfg.unhealthy_frac * static_cast<double>(batches);
  ++state.epoch;
  return em;
}

EpochMetrics evaluate(const NetworkSpec& spec, const Dataset& data, long T, Index batch_size, int threads) {
  EpochMetrics em;
  const Index n = data.size();
  double spike_sum = 0.0;
  long correct = 0, batches = 0;
  for (Index pos = 0; pos < n; pos += batch_size) {
    const Index take = std::min(batch_size, n - pos);
    std::vector<Index> idx(static_cast<size_t>(take));
    for (Index i = 0; i < take; ++i) idx[static_cast<size_t>(i)] = pos + i;
    Mat x = encode_batch(data, idx);
    std::vector<int> labels(static_cast<size_t>(take));
    for (Index i = 0; i < take; ++i) labels[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(pos + i)];

    ForwardResult fwd = forward_batch(spec, x, T, threads, nullptr);
    ReadoutResult ro = readout_and_loss(fwd.a_state, spec.readout, labels);
    FixedPointMap map(spec, x, BnMode::frozen, nullptr);
    em.mean_residual += map.residual(fwd.a_state) / std::sqrt(static_cast<double>(take));
    em.loss += ro.loss * take;
    for (Index i = 0; i < take; ++i) {
      Index best;
      ro.logits.col(i).maxCoeff(&best);
      if (static_cast<int>(best) == labels[static_cast<size_t>(i)]) ++correct;
    }
    for (double s : fwd.spike_totals) spike_sum += s;
    ++batches;
  }
  em.loss /= static_cast<double>(n);
  em.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  em.mean_residual /= static_cast<double>(batches);
  em.firing_rate = spike_sum / (static_cast<double>(total_neurons(spec)) * T * n);
  return em;
}

// ---- checkpoint io ----

namespace {
constexpr char kMagic[4] = {'I', 'D', 'E', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("read_checkpoint: truncated " + path);
  return v;
}
}  // namespace

void write_checkpoint(const std::string& path, const CheckpointData& data) {
  nlohmann::json header = data.header;
  nlohmann::json manifest = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : data.tensors) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["offset"] = offset;
    manifest.push_back(entry);
    offset += static_cast<std::uint64_t>(t.size()) * sizeof(double);
  }
  header["tensors"] = manifest;
  const std::string hs = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_checkpoint: cannot open " + path);
  os.write(kMagic, 4);
  write_raw(os, kVersion);
  write_raw(os, static_cast<std::uint64_t>(hs.size()));
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : data.tensors)
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!os) throw std::runtime_error("write_checkpoint: write failed for " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_checkpoint: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("read_checkpoint: bad magic in " + path);
  const auto version = read_raw<std::uint32_t>(is, path);
  if (version != kVersion) throw std::runtime_error("read_checkpoint: unsupported version in " + path);
  const auto hlen = read_raw<std::uint64_t>(is, path);
  std::string hs(hlen, '\0');
  if (!is.read(hs.data(), static_cast<std::streamsize>(hlen)))
    throw std::runtime_error("read_checkpoint: truncated header in " + path);
  CheckpointData data;
  data.header = nlohmann::json::parse(hs);
  for (const auto& entry : data.header.at("tensors")) {
    Shape shape;
    for (const auto& d : entry.at("shape")) shape.push_back(d.get<Index>());
    Tensor t(shape);
    if (!is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw std::runtime_error("read_checkpoint: truncated payload in " + path);
    data.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  return data;
}

std::vector<std::pair<std::string, Tensor>> checkpoint_tensors(NetworkSpec& spec, const SgdState& sgd) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& [name, t] : spec.state_tensors()) out.emplace_back(name, *t);
  for (auto& [name, t] : sgd.velocity) out.emplace_back("sgd." + name, t);
  return out;
}

void restore_checkpoint_tensors(NetworkSpec& spec, SgdState& sgd, const CheckpointData& data) {
  auto find = [&](const std::string& name) -> const Tensor* {
    for (auto& [n, t] : data.tensors)
      if (n == name) return &t;
    return nullptr;
  };
  for (auto& [name, t] : spec.state_tensors()) {
    const Tensor* src = find(name);
    if (!src) throw std::runtime_error("restore_checkpoint_tensors: missing tensor " + name);
    if (src->size() != t->size()) throw std::runtime_error("restore_checkpoint_tensors: size mismatch for " + name);
    t->flat() = src->flat();
  }
  if (sgd.velocity.empty()) sgd = SgdState::zeros_like(spec);
  for (auto& [name, t] : sgd.velocity) {
    const Tensor* src = find("sgd." + name);
    if (!src) throw std::runtime_error("restore_checkpoint_tensors: missing velocity " + name);
    t.flat() = src->flat();
  }
  spec.feedback.refresh();
}

MetricsWriter::MetricsWriter(const std::string& path) : path_(path) {
  std::ofstream os(path_);
  if (!os) throw std::runtime_error("MetricsWriter: cannot open " + path_);
  os << "epoch,split,loss,accuracy,mean_residual,total_firing_rate\n";
}

void MetricsWriter::append(int epoch, const std::string& split, const EpochMetrics& m) {
  std::ofstream os(path_, std::ios::app);
  os << epoch << "," << split << "," << m.loss << "," << m.accuracy << "," << m.mean_residual << ","
     << m.firing_rate << "\n";
}

}  // namespace eqspike
