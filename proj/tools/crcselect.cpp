// Command-line front end for the label-free model-selection study harness.
//
//   crcselect generate --family both --data-dir data --out-dir out
//   crcselect train    --out-dir out
//   crcselect select   --out-dir out --eval-sizes 10000,160
//   crcselect report   --out-dir out
//   crcselect all      --family MNIST --data-dir data --out-dir out
//
// Options may also come from a key=value config file (--config); explicit
// flags override the file.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "crc/harness.hpp"
#include "crc/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"crcselect: consistent-relative-confidence model selection harness"};
  app.fallthrough();
  app.set_version_flag("--version", std::string(crc::kVersion));

  std::string config_file, family_spec, data_dir, out_dir, eval_sizes_spec;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  int epochs = 0, batch_size = 0, repeats = 0;
  double lr = 0.0, momentum = 0.0;
  std::uint64_t train_subset = 0;

  auto* opt_config = app.add_option("--config", config_file,
                                    "key=value configuration file; flags override it");
  auto* opt_family =
      app.add_option("--family", family_spec, "MNIST, FashionMNIST, or both (default both)");
  auto* opt_data =
      app.add_option("--data-dir", data_dir, "directory holding the original IDX datasets");
  auto* opt_out = app.add_option("--out-dir", out_dir, "output directory for all artifacts");
  auto* opt_seed = app.add_option("--seed", seed, "master seed; all stage seeds derive from it");
  auto* opt_eval = app.add_option("--eval-sizes", eval_sizes_spec,
                                  "comma-separated evaluation sample sizes (default 10000,160)");
  auto* opt_workers = app.add_option("--workers", workers, "worker threads (default: all cores)");
  auto* opt_epochs = app.add_option("--epochs", epochs, "training epochs (default 3)");
  auto* opt_batch = app.add_option("--batch-size", batch_size, "minibatch size (default 128)");
  auto* opt_lr = app.add_option("--lr", lr, "initial learning rate (default 0.1, halved per epoch)");
  auto* opt_momentum = app.add_option("--momentum", momentum, "momentum factor (default 0.95)");
  auto* opt_subset = app.add_option(
      "--train-subset", train_subset,
      "train every model on a seeded subset of this many samples (0 = full split)");
  auto* opt_repeats = app.add_option(
      "--repeats", repeats, "subsample draws per below-full eval size (sensitivity study)");

  auto* cmd_generate =
      app.add_subcommand("generate", "derive the perturbed datasets D1..D4 from each original D0");
  auto* cmd_train = app.add_subcommand("train", "train one model per generated dataset");
  auto* cmd_select =
      app.add_subcommand("select", "score every model on every dataset with CRC, ER and CE");
  auto* cmd_report = app.add_subcommand("report", "emit CSV, text tables and the summary");
  auto* cmd_all = app.add_subcommand("all", "run generate, train, select and report in order");
  app.require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  try {
    crc::ExperimentPlan plan;
    plan.workers = crc::default_workers();
    if (*opt_config) crc::apply_config(plan, crc::parse_config_file(config_file));
    if (*opt_family) plan.families = crc::parse_family_list(family_spec);
    if (*opt_data) plan.data_dir = data_dir;
    if (*opt_out) plan.out_dir = out_dir;
    if (*opt_seed) plan.seed = seed;
    if (*opt_eval) plan.eval_sizes = crc::parse_size_list(eval_sizes_spec);
    if (*opt_workers) plan.workers = workers;
    if (*opt_epochs) plan.train.epochs = epochs;
    if (*opt_batch) plan.train.batch_size = batch_size;
    if (*opt_lr) plan.train.initial_lr = lr;
    if (*opt_momentum) plan.train.momentum = momentum;
    if (*opt_subset) plan.train.train_subset = train_subset;
    if (*opt_repeats) plan.repeats = repeats;
    plan.validate();

    if (*cmd_generate) crc::run_generate(plan);
    if (*cmd_train) crc::run_train(plan);
    if (*cmd_select) crc::run_select(plan);
    if (*cmd_report) std::cout << crc::run_report(plan);
    if (*cmd_all) std::cout << crc::run_all(plan);
  } catch (const crc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
