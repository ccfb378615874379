#include "eqspike/config.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
  CLI::App app{"eqspike: feedback spiking networks trained by implicit differentiation on the equilibrium"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path;
  eqspike::CliOverrides ov;
  std::uint64_t seed = 0;
  int threads = 0;
  bool dry_run = false;
  int n_coords = 24;
  long T = 0;
  long sample = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--out", ov.out_dir, "output directory");
    cmd->add_option("--seed", seed, "random seed override")->each([&](const std::string&) { ov.seed = seed; });
    cmd->add_option("--threads", threads, "batch-level parallelism (default 1, deterministic)")
        ->each([&](const std::string&) { ov.threads = threads; });
  };

  CLI::App* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "JSON config")->required();
  train->add_flag("--dry-run", dry_run, "validate the config and print the parameter count");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on its test split");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  add_common(eval);

  CLI::App* diag = app.add_subcommand("equilibrium-diag", "per-step fixed-point residuals for one sample");
  diag->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  diag->add_option("--sample", sample, "sample index (test split)")->default_val(0);
  diag->add_option("--T", T, "simulation steps")->default_val(100);
  add_common(diag);

  CLI::App* gc = app.add_subcommand("gradcheck", "implicit gradients vs the finite-difference oracle");
  gc->add_option("--config", config_path, "JSON config (small architectures only)")->required();
  gc->add_option("--coords", n_coords, "sampled parameter coordinates")->default_val(24);
  add_common(gc);

  CLI::App* rates = app.add_subcommand("rates", "per-layer and total mean firing rate on the test split");
  rates->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  rates->add_option("--T", T, "simulation steps (default: the training horizon)")->default_val(0);
  add_common(rates);

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return eqspike::cmd_train(config_path, dry_run, ov);
  if (eval->parsed()) return eqspike::cmd_eval(checkpoint_path, ov);
  if (diag->parsed()) return eqspike::cmd_equilibrium_diag(checkpoint_path, sample, T, ov);
  if (gc->parsed()) return eqspike::cmd_gradcheck(config_path, n_coords, ov);
  if (rates->parsed()) return eqspike::cmd_rates(checkpoint_path, T, ov);
  return 2;
}
