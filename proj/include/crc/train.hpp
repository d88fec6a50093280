#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "crc/dataset.hpp"
#include "crc/errors.hpp"
#include "crc/nn.hpp"
#include "crc/rng.hpp"

namespace crc {

// Momentum SGD on the mean cross-entropy, following the study recipe:
// initial learning rate 0.1 halved after each epoch, momentum 0.95,
// minibatch 128, 3 epochs. Classical heavy-ball update:
//   v <- momentum * v - lr * g
//   w <- w + v
struct TrainConfig {
  double initial_lr = 0.1;
  double momentum = 0.95;
  int batch_size = 128;
  int epochs = 3;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  // 0 trains on the full split; otherwise a seeded subset of this many
  // samples is drawn once before the first epoch.
  std::size_t train_subset = 0;

  double epoch_lr(int epoch_index) const { return initial_lr * std::pow(0.5, epoch_index); }

  void validate() const {
    if (!(initial_lr > 0.0)) throw ValidationError("TrainConfig: initial_lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw ValidationError("TrainConfig: momentum must be in [0,1)");
    if (batch_size <= 0) throw ValidationError("TrainConfig: batch_size must be positive");
    if (epochs <= 0) throw ValidationError("TrainConfig: epochs must be positive");
  }

  std::string summary() const {
    return "lr=" + std::to_string(initial_lr) + " halve-per-epoch momentum=" +
           std::to_string(momentum) + " batch=" + std::to_string(batch_size) +
           " epochs=" + std::to_string(epochs) + " subset=" + std::to_string(train_subset);
  }
};

struct TrainLog {
  double initial_loss = 0.0;             // mean CE on the probe slice before training
  std::vector<double> epoch_loss;        // mean CE on the probe slice after each epoch
  std::vector<double> epoch_batch_loss;  // mean of minibatch losses within each epoch
  std::size_t samples_used = 0;
};

namespace detail {

// Mean CE on a fixed slice used only for progress monitoring.
inline double probe_loss(const CnnModel& m, const std::vector<Image>& images,
                         const LabelVector& labels, std::size_t limit, unsigned workers) {
  const std::size_t n = std::min(limit, images.size());
  std::vector<Image> slice(images.begin(), images.begin() + n);
  LabelVector slice_labels(labels.begin(), labels.begin() + n);
  double loss = 0.0;
  const ProbabilityMatrix probs = forward(m, slice, workers);
  for (std::size_t i = 0; i < n; ++i)
    loss += -std::log(std::max(probs.at(i, slice_labels[i]), 1e-12));
  return loss / static_cast<double>(n);
}

}  // namespace detail

// Trains the architecture on a dataset's train split. Deterministic for a
// given config: initialization, per-epoch shuffling and the optional subset
// draw all derive from cfg.seed, and gradient accumulation is order-fixed.
// The last partial minibatch of each epoch is used, not dropped.
inline CnnModel train(const LabeledDataset& data, const TrainConfig& cfg,
                      const CnnArch& arch = CnnArch{}, TrainLog* log = nullptr) {
  cfg.validate();
  arch.validate();
  data.validate();
  if (data.size() == 0) throw ValidationError("train: empty dataset");

  // Working copy of the sample index order; the subset draw happens once.
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (cfg.train_subset > 0 && cfg.train_subset < data.size()) {
    Rng subset_rng(derive_seed(cfg.seed, "train-subset"));
    order = sample_without_replacement(data.size(), cfg.train_subset, subset_rng);
  }
  const std::size_t n = order.size();

  Rng init_rng(derive_seed(cfg.seed, "init"));
  CnnModel model = CnnModel::glorot_init(arch, init_rng);
  ParamSet velocity = ParamSet::zeros(arch);

  if (log) {
    log->samples_used = n;
    log->initial_loss = detail::probe_loss(model, data.images, data.labels, 1024, cfg.workers);
  }

  std::vector<Image> batch;
  LabelVector batch_labels;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.epoch_lr(epoch);
    Rng shuffle_rng(derive_seed(cfg.seed, "epoch-shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle(order, shuffle_rng);

    double batch_loss_sum = 0.0;
    std::size_t num_batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      batch.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(data.images[order[i]]);
        batch_labels.push_back(data.labels[order[i]]);
      }
      double loss = 0.0;
      const ParamSet grad = backward(model, batch, batch_labels, cfg.workers, &loss);
      velocity.scale(cfg.momentum);
      velocity.add_scaled(grad, -lr);
      model.params.add_scaled(velocity, 1.0);
      batch_loss_sum += loss;
      ++num_batches;
    }
    if (log) {
      log->epoch_batch_loss.push_back(batch_loss_sum / static_cast<double>(num_batches));
      log->epoch_loss.push_back(
          detail::probe_loss(model, data.images, data.labels, 1024, cfg.workers));
    }
  }
  return model;
}

}  // namespace crc
