#pragma once

#include "eqspike/train.hpp"

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>

namespace eqspike {

/** Invalid or inconsistent configuration (CLI exit code 2). */
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/** Missing or unreadable files (CLI exit code 3). */
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/** A requested check failed (CLI exit code 4). */
struct CheckError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string name;
  std::string images_path, labels_path;
  std::string test_images_path, test_labels_path;
  std::string synthetic;  // "blobs" | "xor" instead of files
  Index synthetic_n = 200;
  Index limit = 0;        // cap on training samples (0 = all)
  bool augment = false;   // random crop + flip during training
};

struct RunConfig {
  nlohmann::json raw;
  DatasetConfig dataset;
  std::string architecture;
  NeuronKind neuron = NeuronKind::if_model();
  double v_th = 2.0;
  double spectral_clip = 1.0;
  TrainConfig train;
  SolverConfig solver;
  std::string output_dir = ".";
  std::uint64_t seed = 0;
};

/** Parse and validate; unknown keys anywhere are rejected. */
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

/** Resolve a dataset path: as given, else under $EQSPIKE_DATA_DIR. */
std::string resolve_data_path(const std::string& path);

struct LoadedData {
  Dataset train, test;
};
LoadedData load_datasets(const DatasetConfig& dc);

/** Build a network from the paper-shorthand architecture grammar:
 * `<n>` dense, `<n>C<k>` convolution (suffix `s`: stride 2, suffix `u`:
 * transposed 2x upscale), layers separated by `-`, feedback op in a
 * trailing parenthesized `F...` group. Example: "64C5s (F64C5)". */
NetworkSpec build_network(const std::string& architecture, const Shape& input_shape, Index classes,
                          NeuronKind neuron, double v_th, bool batch_norm, double spectral_clip);

// ---- checkpoint orchestration ----

void save_full_checkpoint(const std::string& path, NetworkSpec& spec, const TrainState& state,
                          const RunConfig& cfg, const Shape& input_shape, Index classes);

struct LoadedCheckpoint {
  NetworkSpec spec;
  TrainState state;
  RunConfig config;
  Shape input_shape;
  Index classes = 0;
};
LoadedCheckpoint load_full_checkpoint(const std::string& path);

// ---- CLI command bodies (exit codes: 0 ok, 2 config, 3 io, 4 check) ----

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out_dir;
};

int cmd_train(const std::string& config_path, bool dry_run, const CliOverrides& ov);
int cmd_eval(const std::string& checkpoint_path, const CliOverrides& ov);
int cmd_equilibrium_diag(const std::string& checkpoint_path, Index sample, long T, const CliOverrides& ov);
int cmd_gradcheck(const std::string& config_path, int n_coords, const CliOverrides& ov);
int cmd_rates(const std::string& checkpoint_path, long T, const CliOverrides& ov);

}  // namespace eqspike
