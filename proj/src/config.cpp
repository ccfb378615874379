#include "eqspike/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace eqspike {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: document is not a JSON object");
  reject_unknown(doc, {"dataset", "architecture", "neuron", "train", "solver", "output_dir", "seed"}, "top level");
  RunConfig rc;
  rc.raw = doc;

  if (!doc.contains("architecture")) throw ConfigError("config: missing 'architecture'");
  rc.architecture = doc.at("architecture").get<std::string>();

  const json ds = doc.value("dataset", json::object());
  reject_unknown(ds,
                 {"name", "images_path", "labels_path", "test_images_path", "test_labels_path", "synthetic",
                  "synthetic_n", "limit", "augment"},
                 "dataset");
  rc.dataset.name = get_or<std::string>(ds, "name", "");
  rc.dataset.images_path = get_or<std::string>(ds, "images_path", "");
  rc.dataset.labels_path = get_or<std::string>(ds, "labels_path", "");
  rc.dataset.test_images_path = get_or<std::string>(ds, "test_images_path", "");
  rc.dataset.test_labels_path = get_or<std::string>(ds, "test_labels_path", "");
  rc.dataset.synthetic = get_or<std::string>(ds, "synthetic", "");
  rc.dataset.synthetic_n = get_or<Index>(ds, "synthetic_n", 200);
  rc.dataset.limit = get_or<Index>(ds, "limit", 0);
  rc.dataset.augment = get_or<bool>(ds, "augment", false);
  if (rc.dataset.synthetic.empty() && (rc.dataset.images_path.empty() || rc.dataset.labels_path.empty()))
    throw ConfigError("config: dataset needs images_path+labels_path or synthetic");

  const json nj = doc.value("neuron", json::object());
  reject_unknown(nj, {"kind", "lambda", "v_th"}, "neuron");
  const std::string kind = get_or<std::string>(nj, "kind", "IF");
  if (kind == "IF") {
    rc.neuron = NeuronKind::if_model();
  } else if (kind == "LIF") {
    rc.neuron = NeuronKind::lif(get_or<double>(nj, "lambda", 0.95));
  } else {
    throw ConfigError("config: neuron.kind must be IF or LIF");
  }
  if (rc.neuron.lambda <= 0.0 || rc.neuron.lambda > 1.0) throw ConfigError("config: lambda must be in (0,1]");
  rc.v_th = get_or<double>(nj, "v_th", 2.0);
  if (rc.v_th <= 0.0) throw ConfigError("config: v_th must be positive");

  const json tj = doc.value("train", json::object());
  reject_unknown(tj,
                 {"epochs", "batch_size", "lr", "momentum", "weight_decay", "decay_every", "decay_epochs",
                  "decay_factor", "warmup_iters", "T", "dropout", "refine_forward", "threads"},
                 "train");
  rc.train.epochs = get_or<int>(tj, "epochs", 30);
  rc.train.batch_size = get_or<Index>(tj, "batch_size", 128);
  rc.train.lr = get_or<double>(tj, "lr", 0.05);
  rc.train.momentum = get_or<double>(tj, "momentum", 0.9);
  rc.train.weight_decay = get_or<double>(tj, "weight_decay", 5e-4);
  rc.train.decay_every = get_or<int>(tj, "decay_every", 30);
  rc.train.decay_epochs = get_or<std::vector<int>>(tj, "decay_epochs", {});
  rc.train.decay_factor = get_or<double>(tj, "decay_factor", 0.1);
  rc.train.warmup_iters = get_or<int>(tj, "warmup_iters", 0);
  rc.train.T = get_or<long>(tj, "T", 5);
  rc.train.dropout = get_or<double>(tj, "dropout", 0.0);
  rc.train.refine_forward = get_or<bool>(tj, "refine_forward", false);
  rc.train.threads = get_or<int>(tj, "threads", 1);
  if (rc.train.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (rc.train.lr <= 0.0) throw ConfigError("config: lr must be positive");
  if (rc.train.T < 1) throw ConfigError("config: T must be >= 1");
  if (rc.train.dropout < 0.0 || rc.train.dropout >= 1.0) throw ConfigError("config: dropout must be in [0,1)");

  const json sj = doc.value("solver", json::object());
  reject_unknown(sj, {"method", "max_iters", "tol", "damping"}, "solver");
  const std::string method = get_or<std::string>(sj, "method", "broyden");
  if (method == "broyden") {
    rc.solver.method = SolverConfig::Method::broyden;
  } else if (method == "fixed_point") {
    rc.solver.method = SolverConfig::Method::fixed_point;
  } else {
    throw ConfigError("config: solver.method must be broyden or fixed_point");
  }
  rc.solver.max_iters = get_or<int>(sj, "max_iters", 30);
  rc.solver.tol = get_or<double>(sj, "tol", 1e-6);
  rc.solver.damping = get_or<double>(sj, "damping", 0.5);
  if (rc.solver.max_iters < 1) throw ConfigError("config: solver.max_iters must be >= 1");
  if (rc.solver.tol <= 0.0) throw ConfigError("config: solver.tol must be positive");
  rc.train.backward = rc.solver;
  rc.train.forward_refine = rc.solver;

  rc.output_dir = get_or<std::string>(doc, "output_dir", ".");
  rc.seed = get_or<std::uint64_t>(doc, "seed", 0);
  rc.train.seed = rc.seed;
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open " + path);
  json doc;
  try {
    is >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config: parse error in " + path + ": " + e.what());
  }
  return parse_run_config(doc);
}

std::string resolve_data_path(const std::string& path) {
  if (path.empty() || fs::exists(path)) return path;
  if (const char* root = std::getenv("EQSPIKE_DATA_DIR")) {
    fs::path p = fs::path(root) / path;
    if (fs::exists(p)) return p.string();
  }
  return path;
}

LoadedData load_datasets(const DatasetConfig& dc) {
  LoadedData out;
  if (!dc.synthetic.empty()) {
    out.train = synth_dataset(dc.synthetic, dc.synthetic_n, 1234);
    out.test = synth_dataset(dc.synthetic, std::max<Index>(dc.synthetic_n / 4, 8), 5678);
  } else {
    const std::string ip = resolve_data_path(dc.images_path);
    const std::string lp = resolve_data_path(dc.labels_path);
    if (!fs::exists(ip)) throw IoError("dataset: missing " + dc.images_path);
    if (!fs::exists(lp)) throw IoError("dataset: missing " + dc.labels_path);
    try {
      out.train = load_image_dataset(ip, lp);
    } catch (const std::exception& e) {
      throw IoError(std::string("dataset: ") + e.what());
    }
    if (!dc.test_images_path.empty()) {
      const std::string tip = resolve_data_path(dc.test_images_path);
      const std::string tlp = resolve_data_path(dc.test_labels_path);
      if (!fs::exists(tip)) throw IoError("dataset: missing " + dc.test_images_path);
      if (!fs::exists(tlp)) throw IoError("dataset: missing " + dc.test_labels_path);
      try {
        out.test = load_image_dataset(tip, tlp);
      } catch (const std::exception& e) {
        throw IoError(std::string("dataset: ") + e.what());
      }
    }
  }
  if (dc.limit > 0 && dc.limit < out.train.size()) {
    const Index d = out.train.sample_size();
    Shape s = out.train.images.shape();
    s[0] = dc.limit;
    Tensor images(s);
    images.flat() = out.train.images.flat().head(dc.limit * d);
    out.train.images = std::move(images);
    out.train.labels.resize(static_cast<size_t>(dc.limit));
  }
  out.train.split = "train";
  out.train.augment = dc.augment;
  fit_normalization(out.train);
  if (out.test.size() > 0) {
    out.test.split = "test";
    out.test.mean = out.train.mean;
    out.test.stddev = out.train.stddev;
    out.test.num_classes = std::max(out.test.num_classes, out.train.num_classes);
    out.train.num_classes = out.test.num_classes;
  }
  return out;
}

namespace {

struct LayerToken {
  bool dense = false;
  Index units = 0;     // dense
  Index channels = 0;  // conv
  Index kernel = 0;
  bool stride2 = false;
  bool upscale = false;
};

LayerToken parse_token(const std::string& tok) {
  LayerToken t;
  size_t i = 0;
  auto read_int = [&]() {
    size_t start = i;
    while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i]))) ++i;
    if (start == i) throw ConfigError("architecture: expected a number in token '" + tok + "'");
    return static_cast<Index>(std::stol(tok.substr(start, i - start)));
  };
  const Index first = read_int();
  if (i == tok.size()) {
    t.dense = true;
    t.units = first;
    return t;
  }
  if (tok[i] != 'C') throw ConfigError("architecture: bad token '" + tok + "'");
  ++i;
  t.channels = first;
  t.kernel = read_int();
  if (i < tok.size() && tok[i] == 's') {
    t.stride2 = true;
    ++i;
  } else if (i < tok.size() && tok[i] == 'u') {
    t.upscale = true;
    ++i;
  }
  if (i != tok.size()) throw ConfigError("architecture: trailing characters in token '" + tok + "'");
  if (t.kernel % 2 == 0) throw ConfigError("architecture: even kernel sizes are not supported ('" + tok + "')");
  return t;
}

LinearOp build_layer_op(const LayerToken& t, const Shape& in_shape) {
  if (t.dense) return LinearOp::make_dense(t.units, numel(in_shape));
  if (in_shape.size() != 3)
    throw ConfigError("architecture: convolution needs a {C,H,W} input, got " + shape_str(in_shape));
  ConvGeom g;
  g.kernel_h = g.kernel_w = t.kernel;
  g.pad = (t.kernel - 1) / 2;
  if (t.upscale) {
    // transposed conv: the underlying forward conv maps the 2x-upscaled
    // output back to this input
    g.stride = 2;
    g.in_channels = t.channels;
    g.out_channels = in_shape[0];
    g.in_h = in_shape[1] * 2;
    g.in_w = in_shape[2] * 2;
    LinearOp op = LinearOp::make_conv2d_transposed(g);
    if (!same_shape(op.input_shape, in_shape))
      throw ConfigError("architecture: transposed conv geometry mismatch");
    return op;
  }
  g.stride = t.stride2 ? 2 : 1;
  g.in_channels = in_shape[0];
  g.out_channels = t.channels;
  g.in_h = in_shape[1];
  g.in_w = in_shape[2];
  return LinearOp::make_conv2d(g);
}

}  // namespace

NetworkSpec build_network(const std::string& architecture, const Shape& input_shape, Index classes,
                          NeuronKind neuron, double v_th, bool batch_norm, double spectral_clip) {
  // split "a-b-c (Fxyz)" into chain tokens and the feedback token
  std::string chain = architecture, fb;
  const size_t open = architecture.find('(');
  if (open != std::string::npos) {
    const size_t close = architecture.find(')', open);
    if (close == std::string::npos) throw ConfigError("architecture: unbalanced parenthesis");
    fb = architecture.substr(open + 1, close - open - 1);
    chain = architecture.substr(0, open);
  }
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t");
    const auto b = s.find_last_not_of(" \t");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  chain = trim(chain);
  fb = trim(fb);
  if (fb.empty() || fb[0] != 'F')
    throw ConfigError("architecture: missing feedback group '(F...)' in '" + architecture + "'");
  fb = fb.substr(1);

  NetworkSpec spec;
  spec.neuron = neuron;
  spec.v_th = v_th;
  spec.input_shape = input_shape;

  Shape cur = input_shape;
  std::stringstream ss(chain);
  std::string tok;
  while (std::getline(ss, tok, '-')) {
    tok = trim(tok);
    if (tok.empty()) throw ConfigError("architecture: empty layer token");
    LayerToken t = parse_token(tok);
    LayerSpec layer;
    layer.op = build_layer_op(t, cur);
    if (batch_norm) {
      BatchNorm bn(layer.op.bias.size());
      layer.bn = std::move(bn);
    }
    cur = layer.op.output_shape;
    spec.layers.push_back(std::move(layer));
  }
  if (spec.layers.empty()) throw ConfigError("architecture: no layers in '" + architecture + "'");

  // feedback: maps the last layer's rate onto layer 1's rate shape
  const Shape& first_out = spec.layers.front().op.output_shape;
  const Shape& last_out = spec.layers.back().op.output_shape;
  LayerToken ft = parse_token(fb);
  LinearOp fb_op;
  if (ft.dense) {
    if (ft.units != numel(first_out))
      throw ConfigError("architecture: dense feedback width != layer 1 output size");
    fb_op = LinearOp::make_dense(ft.units, numel(last_out));
  } else {
    fb_op = build_layer_op(ft, last_out);
    if (numel(fb_op.output_shape) != numel(first_out) || fb_op.output_shape[0] != first_out[0])
      throw ConfigError("architecture: feedback output shape " + shape_str(fb_op.output_shape) +
                        " != layer 1 output " + shape_str(first_out));
  }
  spec.feedback.raw = std::move(fb_op);
  spec.feedback.clip = spectral_clip;

  spec.readout = LinearOp::make_dense(classes, numel(last_out));
  spec.validate();
  return spec;
}

// ---- checkpoint orchestration ----

void save_full_checkpoint(const std::string& path, NetworkSpec& spec, const TrainState& state, const RunConfig& cfg,
                          const Shape& input_shape, Index classes) {
  CheckpointData data;
  data.header["architecture"] = {
      {"text", cfg.architecture},
      {"input_shape", input_shape},
      {"classes", classes},
      {"neuron", spec.neuron.type == NeuronKind::Type::IF ? "IF" : "LIF"},
      {"lambda", spec.neuron.lambda},
      {"v_th", spec.v_th},
      {"clip", spec.feedback.clip},
      {"batch_norm", static_cast<bool>(spec.layers[0].bn)},
  };
  data.header["config"] = cfg.raw;
  data.header["epoch"] = state.epoch;
  data.header["iteration"] = state.iteration;
  data.header["rng"] = {{"shuffle", state.shuffle_rng.state()},
                        {"dropout", state.dropout_rng.state()},
                        {"augment", state.augment_rng.state()}};
  data.tensors = checkpoint_tensors(spec, state.sgd);
  write_checkpoint(path, data);
}

LoadedCheckpoint load_full_checkpoint(const std::string& path) {
  CheckpointData data = read_checkpoint(path);
  LoadedCheckpoint lc;
  const json& arch = data.header.at("architecture");
  lc.config = parse_run_config(data.header.at("config"));
  for (const auto& d : arch.at("input_shape")) lc.input_shape.push_back(d.get<Index>());
  lc.classes = arch.at("classes").get<Index>();
  NeuronKind nk = arch.at("neuron").get<std::string>() == "IF" ? NeuronKind::if_model()
                                                               : NeuronKind::lif(arch.at("lambda").get<double>());
  lc.spec = build_network(arch.at("text").get<std::string>(), lc.input_shape, lc.classes, nk,
                          arch.at("v_th").get<double>(), arch.at("batch_norm").get<bool>(),
                          arch.at("clip").get<double>());
  lc.state.epoch = data.header.at("epoch").get<int>();
  lc.state.iteration = data.header.at("iteration").get<long>();
  lc.state.shuffle_rng.restore(data.header.at("rng").at("shuffle").get<std::string>());
  lc.state.dropout_rng.restore(data.header.at("rng").at("dropout").get<std::string>());
  lc.state.augment_rng.restore(data.header.at("rng").at("augment").get<std::string>());
  lc.state.sgd = SgdState::zeros_like(lc.spec);
  restore_checkpoint_tensors(lc.spec, lc.state.sgd, data);
  return lc;
}

// ---- CLI command bodies ----

namespace {

int guard(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const CheckError& e) {
    std::cerr << "check failed: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

void apply_overrides(RunConfig& rc, const CliOverrides& ov) {
  if (ov.seed) {
    rc.seed = *ov.seed;
    rc.train.seed = *ov.seed;
  }
  if (ov.threads) rc.train.threads = *ov.threads;
  if (!ov.out_dir.empty()) rc.output_dir = ov.out_dir;
}

Shape network_input_shape(const Dataset& ds) { return ds.sample_shape(); }

}  // namespace

int cmd_train(const std::string& config_path, bool dry_run, const CliOverrides& ov) {
  return guard([&]() {
    RunConfig rc = load_run_config(config_path);
    apply_overrides(rc, ov);
    LoadedData data = load_datasets(rc.dataset);
    const Shape in_shape = network_input_shape(data.train);
    const Index classes = data.train.num_classes;
    NetworkSpec spec = build_network(rc.architecture, in_shape, classes, rc.neuron, rc.v_th, true, rc.spectral_clip);
    RngStream init_rng(rc.seed, 0);
    init_params(spec, init_rng);
    std::cout << "network '" << rc.architecture << "': " << spec.param_count() << " parameters, "
              << data.train.size() << " train / " << data.test.size() << " test samples\n";
    if (dry_run) return 0;

    fs::create_directories(rc.output_dir);
    MetricsWriter metrics((fs::path(rc.output_dir) / "metrics.csv").string());
    TrainState state = make_train_state(spec, rc.train);
    double best_acc = 0.0;
    EpochMetrics te;
    for (int e = 0; e < rc.train.epochs; ++e) {
      EpochMetrics tr = train_epoch(spec, data.train, rc.train, state);
      metrics.append(e, "train", tr);
      if (data.test.size() > 0) {
        te = evaluate(spec, data.test, rc.train.T, rc.train.batch_size, rc.train.threads);
        metrics.append(e, "test", te);
      } else {
        te = tr;
      }
      best_acc = std::max(best_acc, te.accuracy);
      std::cout << "epoch " << e << ": train loss " << tr.loss << ", train acc " << tr.accuracy << ", test acc "
                << te.accuracy << (tr.healthy ? "" : " [unhealthy: backward solves failing]") << "\n";
      save_full_checkpoint((fs::path(rc.output_dir) / "checkpoint.ide1").string(), spec, state, rc, in_shape,
                           classes);
    }
    json summary = {{"best_acc", best_acc}, {"final_acc", te.accuracy}, {"epochs", rc.train.epochs}};
    std::ofstream os(fs::path(rc.output_dir) / "summary.json");
    os << summary.dump(2) << "\n";
    std::cout << "summary: " << summary.dump() << "\n";
    return 0;
  });
}

int cmd_eval(const std::string& checkpoint_path, const CliOverrides& ov) {
  return guard([&]() {
    if (!fs::exists(checkpoint_path)) throw IoError("eval: missing checkpoint " + checkpoint_path);
    LoadedCheckpoint lc = load_full_checkpoint(checkpoint_path);
    apply_overrides(lc.config, ov);
    LoadedData data = load_datasets(lc.config.dataset);
    const Dataset& ds = data.test.size() > 0 ? data.test : data.train;
    EpochMetrics m = evaluate(lc.spec, ds, lc.config.train.T, lc.config.train.batch_size, lc.config.train.threads);
    json out = {{"split", ds.split},
                {"loss", m.loss},
                {"accuracy", m.accuracy},
                {"mean_residual", m.mean_residual},
                {"total_firing_rate", m.firing_rate}};
    std::cout << out.dump(2) << "\n";
    return 0;
  });
}

int cmd_equilibrium_diag(const std::string& checkpoint_path, Index sample, long T, const CliOverrides& ov) {
  return guard([&]() {
    if (!fs::exists(checkpoint_path)) throw IoError("equilibrium-diag: missing checkpoint " + checkpoint_path);
    LoadedCheckpoint lc = load_full_checkpoint(checkpoint_path);
    apply_overrides(lc.config, ov);
    LoadedData data = load_datasets(lc.config.dataset);
    const Dataset& ds = data.test.size() > 0 ? data.test : data.train;
    if (sample < 0 || sample >= ds.size()) throw ConfigError("equilibrium-diag: sample index out of range");
    InputEncoding enc = encode_constant_current(ds, sample);
    SimOptions opts;
    opts.record_residuals = true;
    opts.per_layer_residuals = lc.spec.layer_count() > 1;
    SimResult res = simulate(lc.spec, enc, T, opts);
    const std::string out_dir = ov.out_dir.empty() ? "." : ov.out_dir;
    fs::create_directories(out_dir);
    const std::string path = (fs::path(out_dir) / "equilibrium_diag.csv").string();
    write_diag_csv(path, res, lc.spec.layer_count());
    std::cout << "wrote " << path << "\n";
    return 0;
  });
}

int cmd_gradcheck(const std::string& config_path, int n_coords, const CliOverrides& ov) {
  return guard([&]() {
    RunConfig rc = load_run_config(config_path);
    apply_overrides(rc, ov);
    const bool conv_arch = rc.architecture.find('C') != std::string::npos;
    const Shape in_shape = conv_arch ? Shape{1, 8, 8} : Shape{6};
    const Index in_dim = numel(in_shape);
    {
      NetworkSpec probe = build_network(rc.architecture, in_shape, 2, rc.neuron, rc.v_th, true, rc.spectral_clip);
      for (Index l = 0; l < probe.layer_count(); ++l)
        if (probe.rate_size(l) > 64)
          throw ConfigError("gradcheck: refuses architectures above 64 neurons per layer");
    }

    const Index classes = 3, batch = 4;
    const bool lif = rc.neuron.type == NeuronKind::Type::LIF;
    // IF gradients are checked at a tightly solved equilibrium and must be
    // exact; LIF gradients are taken at the simulated a^[T], whose bounded
    // substitution error measures 3-10% per coordinate on desk-scale
    // lambda=0.95 nets.
    const double threshold = lif ? 1e-1 : 1e-4;

    // Find a seed whose equilibrium keeps clear of the clamp kinks so the
    // central differences are well posed.
    NetworkSpec spec;
    Mat x;
    Mat a_eval;
    std::vector<int> labels(batch);
    bool found = false;
    for (std::uint64_t attempt = 0; attempt < 32 && !found; ++attempt) {
      spec = build_network(rc.architecture, in_shape, classes, rc.neuron, rc.v_th, true, rc.spectral_clip);
      RngStream rng(rc.seed + attempt, 0);
      init_params(spec, rng);
      // keep alpha off the clip boundary: the oracle differentiates through
      // the clip, which is one-sided exactly at |alpha| = c
      spec.feedback.alpha[0] = 0.9 * spec.feedback.clip;
      spec.feedback.refresh(1000, 1e-14);
      RngStream data_rng(rc.seed + attempt, 3);
      x.resize(in_dim, batch);
      data_rng.fill_normal(x);
      for (Index i = 0; i < batch; ++i) labels[static_cast<size_t>(i)] = static_cast<int>(data_rng.uniform_index(classes));
      auto kink_of = [&](const FixedPointMap& map, const Mat& a) {
        FixedPointMap::Trace tr;
        map.eval(a, &tr);
        double kink = 1.0;
        for (const Mat& z : tr.preact)
          kink = std::min({kink, z.array().abs().minCoeff(), (z.array() - 1.0).abs().minCoeff()});
        return kink;
      };
      if (lif) {
        // Evaluate at a simulated weighted-average rate; the frozen-BN map is
        // the equation the simulation approximately solves. The LIF estimate
        // oscillates inside its bounded-error band (most recent spikes carry
        // weight 1-lambda), so take the step over the second half of the run
        // where the estimate sits closest to the equation.
        FixedPointMap map(spec, x, BnMode::frozen);
        SimState st = init_state(spec, batch);
        LinearOp fb_eff = spec.feedback.effective();
        double best = std::numeric_limits<double>::infinity();
        for (long t = 0; t < rc.train.T; ++t) {
          step(st, spec, x);
          if (t < rc.train.T / 2) continue;
          Mat a = average_rate(st, spec.layer_count() - 1);
          const double r = map.residual(a);
          if (r < best) {
            best = r;
            a_eval = a;
          }
        }
        if (kink_of(map, a_eval) < 2e-2) continue;
        found = true;
      } else {
        FixedPointMap map(spec, x, BnMode::batch);
        EquilibriumSolution sol =
            solve_fixed_point(map, SolverConfig{SolverConfig::Method::broyden, 300, 1e-11, 0.5}, Mat::Zero(spec.state_size(), batch));
        if (!sol.converged) continue;
        if (kink_of(map, sol.a_star) < 1e-3) continue;
        a_eval = sol.a_star;
        found = true;
      }
    }
    if (!found) throw CheckError("gradcheck: no well-posed instance found");

    const BnMode mode = lif ? BnMode::frozen : BnMode::batch;
    BackwardPassResult bp = backward_pass(spec, a_eval, x, labels,
                                          SolverConfig{rc.solver.method, 300, 1e-11, rc.solver.damping}, mode, false);

    auto params = spec.parameters();
    RngStream pick(rc.seed, 4);
    const std::string out_dir = ov.out_dir.empty() ? "." : ov.out_dir;
    fs::create_directories(out_dir);
    const std::string path = (fs::path(out_dir) / "gradcheck.csv").string();
    std::ofstream os(path);
    os << "param,coordinate,implicit,fd,rel_err\n";
    FdOptions fd;
    fd.mode = mode;
    struct Row {
      std::string name;
      Index coord;
      double implicit, fd;
      bool ok;
    };
    std::vector<Row> rows;
    double grad_peak = 0.0;
    for (int k = 0; k < n_coords; ++k) {
      const auto& p = params[static_cast<size_t>(pick.uniform_index(static_cast<Index>(params.size())))];
      const Index coord = pick.uniform_index(p.tensor->size());
      const double implicit = bp.grads.at(p.name)[coord];
      FdValue v = finite_diff_oracle(spec, x, labels, p.name, coord, a_eval, fd);
      rows.push_back({p.name, coord, implicit, v.value, v.ok});
      if (v.ok) grad_peak = std::max(grad_peak, std::abs(v.value));
    }
    // Near-zero LIF coordinates get an absolute floor scaled to the largest
    // sampled gradient.
    const double atol = lif ? 1e-2 * grad_peak : 0.0;
    double worst = 0.0;
    int failures = 0, abstained = 0;
    for (const Row& r : rows) {
      if (!r.ok) {
        ++abstained;
        os << r.name << "," << r.coord << "," << r.implicit << ",nan,nan\n";
        continue;
      }
      const double rel = std::abs(r.fd - r.implicit) / (std::abs(r.fd) + 1e-8);
      worst = std::max(worst, rel);
      if (std::abs(r.fd - r.implicit) > threshold * (std::abs(r.fd) + 1e-8) + atol) ++failures;
      os << r.name << "," << r.coord << "," << r.implicit << "," << r.fd << "," << rel << "\n";
    }
    std::cout << "gradcheck: " << n_coords - failures - abstained << "/" << n_coords << " within " << threshold
              << " (worst rel err " << worst << ", " << abstained << " abstained), report at " << path << "\n";
    if (failures > 0) throw CheckError("gradcheck: " + std::to_string(failures) + " coordinates above threshold");
    return 0;
  });
}

int cmd_rates(const std::string& checkpoint_path, long T, const CliOverrides& ov) {
  return guard([&]() {
    if (!fs::exists(checkpoint_path)) throw IoError("rates: missing checkpoint " + checkpoint_path);
    LoadedCheckpoint lc = load_full_checkpoint(checkpoint_path);
    apply_overrides(lc.config, ov);
    LoadedData data = load_datasets(lc.config.dataset);
    const Dataset& ds = data.test.size() > 0 ? data.test : data.train;
    const long horizon = T > 0 ? T : lc.config.train.T;

    std::vector<double> totals(static_cast<size_t>(lc.spec.layer_count()), 0.0);
    const Index bs = lc.config.train.batch_size;
    for (Index pos = 0; pos < ds.size(); pos += bs) {
      const Index take = std::min(bs, ds.size() - pos);
      std::vector<Index> idx(static_cast<size_t>(take));
      for (Index i = 0; i < take; ++i) idx[static_cast<size_t>(i)] = pos + i;
      ForwardResult f = forward_batch(lc.spec, encode_batch(ds, idx), horizon, lc.config.train.threads);
      for (size_t l = 0; l < totals.size(); ++l) totals[l] += f.spike_totals[l];
    }
    std::vector<Index> sizes;
    for (Index l = 0; l < lc.spec.layer_count(); ++l) sizes.push_back(lc.spec.rate_size(l));
    FiringStats fs_ = firing_stats(totals, sizes, horizon, ds.size());

    const std::string out_dir = ov.out_dir.empty() ? "." : ov.out_dir;
    fs::create_directories(out_dir);
    const std::string path = (fs::path(out_dir) / "rates.csv").string();
    std::ofstream os(path);
    os << "layer,rate\n";
    for (size_t l = 0; l < fs_.per_layer.size(); ++l) os << "layer" << l + 1 << "," << fs_.per_layer[l] << "\n";
    os << "total," << fs_.total << "\n";
    std::cout << "total firing rate " << fs_.total << ", report at " << path << "\n";
    return 0;
  });
}

}  // namespace eqspike
