#include <doctest.h>

#include <cmath>
#include <vector>

#include "crc/checkpoint.hpp"
#include "crc/nn.hpp"
#include "crc/train.hpp"
#include "support/synthetic.hpp"

using namespace crc;
using testsupport::TempDir;

namespace {

// Mean cross-entropy of a batch computed straight through forward passes;
// the loss the finite-difference oracle differentiates.
double batch_loss(const CnnModel& m, const std::vector<Image>& batch, const LabelVector& labels) {
  ForwardTrace t;
  double sum = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    forward_image(m, batch[n], t);
    sum += -std::log(std::max(t.probs[labels[n]], 1e-12));
  }
  return sum / static_cast<double>(batch.size());
}

std::vector<Image> random_images(std::size_t count, Rng& rng, int h = 28, int w = 28) {
  std::vector<Image> images;
  for (std::size_t i = 0; i < count; ++i) {
    Image img(h, w);
    for (double& p : img.pixels) p = rng.next_double();
    images.push_back(std::move(img));
  }
  return images;
}

// Reduced architecture used for gradient checking: 2 filters 5x5,
// fully connected 20 -> 10 -> 10.
CnnArch reduced_arch() {
  CnnArch a;
  a.conv_filters = 2;
  a.conv_kernel = 5;
  a.fc1 = 20;
  a.fc2 = 10;
  a.num_classes = 10;
  return a;
}

}  // namespace

TEST_CASE("shape chain of the study architecture") {
  const CnnArch a;
  CHECK(a.conv_out_h() == 20);
  CHECK(a.conv_out_w() == 20);
  CHECK(a.pool_out_h() == 10);
  CHECK(a.pool_out_w() == 10);
  CHECK(a.flatten_dim() == 2000);
  a.validate();

  const CnnModel m = CnnModel::zeros(a);
  CHECK(m.params.conv_w.size() == 20u * 9 * 9);
  CHECK(m.params.fc1_w.size() == 360u * 2000);
  CHECK(m.params.fc2_w.size() == 60u * 360);
  CHECK(m.params.out_w.size() == 10u * 60);

  ForwardTrace t;
  forward_image(m, Image(28, 28), t);
  CHECK(t.conv_pre.size() == 20u * 20 * 20);
  CHECK(t.pooled.size() == 2000u);
  CHECK(t.fc1_pre.size() == 360u);
  CHECK(t.fc2_pre.size() == 60u);
  CHECK(t.probs.size() == 10u);
}

TEST_CASE("architecture validation rejects impossible chains") {
  CnnArch a;
  a.pool = 3;  // 20 not divisible by 3
  CHECK_THROWS_AS(a.validate(), ValidationError);
  CnnArch b;
  b.conv_kernel = 30;
  CHECK_THROWS_AS(b.validate(), ValidationError);
  CnnArch c;
  c.fc1 = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("all-zero parameters give exactly uniform rows") {
  const CnnModel m = CnnModel::zeros();
  Rng rng(1);
  const auto batch = random_images(3, rng);
  const ProbabilityMatrix probs = forward(m, batch);
  for (std::size_t n = 0; n < probs.rows(); ++n)
    for (std::size_t c = 0; c < probs.cols(); ++c) CHECK(probs.at(n, c) == 0.1);
}

TEST_CASE("softmax rows are valid probability rows") {
  Rng rng(22);
  const CnnModel m = CnnModel::glorot_init(reduced_arch(), rng);
  const auto batch = random_images(8, rng);
  const ProbabilityMatrix probs = forward(m, batch, 4);
  probs.validate();  // in [0,1], rows sum to 1 within 1e-9, no NaN
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    double sum = 0.0;
    for (std::size_t c = 0; c < probs.cols(); ++c) sum += probs.at(n, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("forward rejects images of the wrong size") {
  const CnnModel m = CnnModel::zeros();
  ForwardTrace t;
  CHECK_THROWS_AS(forward_image(m, Image(27, 28), t), ValidationError);
}

TEST_CASE("average pooling preserves the map mean") {
  Rng rng(9);
  std::vector<double> map(20 * 20);
  for (double& v : map) v = rng.next_double() * 2.0 - 0.5;
  std::vector<double> pooled(10 * 10);
  detail::average_pool(map.data(), 20, 20, 2, pooled.data());
  double in_mean = 0.0, out_mean = 0.0;
  for (double v : map) in_mean += v;
  for (double v : pooled) out_mean += v;
  in_mean /= map.size();
  out_mean /= pooled.size();
  CHECK(out_mean == doctest::Approx(in_mean).epsilon(1e-12));
}

TEST_CASE("relu keeps pooled activations nonnegative") {
  Rng rng(10);
  const CnnModel m = CnnModel::glorot_init(reduced_arch(), rng);
  ForwardTrace t;
  forward_image(m, random_images(1, rng)[0], t);
  for (double v : t.pooled) CHECK(v >= 0.0);
}

TEST_CASE("gradients match central finite differences") {
  // Reduced model, 4 random images; step 1e-5; the 1e-6 denominator floor
  // guards the ratio for near-zero gradients.
  const CnnArch arch = reduced_arch();
  Rng rng(20240518);
  CnnModel model = CnnModel::glorot_init(arch, rng);
  const auto batch = random_images(4, rng);
  const LabelVector labels = {3, 7, 0, 9};

  const ParamSet analytic = backward(model, batch, labels, 2);

  const double h = 1e-5;
  double worst = 0.0;
  auto segments = model.params.segments();
  auto grads = analytic.segments();
  for (std::size_t s = 0; s < segments.size(); ++s) {
    auto& values = *segments[s];
    const auto& grad = *grads[s];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = batch_loss(model, batch, labels);
      values[i] = saved - h;
      const double down = batch_loss(model, batch, labels);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double rel = std::abs(numeric - grad[i]) /
                         std::max({1e-6, std::abs(numeric), std::abs(grad[i])});
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("duplicating every batch image leaves the mean gradient unchanged") {
  const CnnArch arch = reduced_arch();
  Rng rng(5150);
  const CnnModel model = CnnModel::glorot_init(arch, rng);
  const auto batch = random_images(3, rng);
  const LabelVector labels = {1, 4, 8};

  std::vector<Image> doubled;
  LabelVector doubled_labels;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    doubled.push_back(batch[i]);
    doubled.push_back(batch[i]);
    doubled_labels.push_back(labels[i]);
    doubled_labels.push_back(labels[i]);
  }

  const ParamSet g1 = backward(model, batch, labels);
  const ParamSet g2 = backward(model, doubled, doubled_labels);
  auto a = g1.segments();
  auto b = g2.segments();
  for (std::size_t s = 0; s < a.size(); ++s)
    for (std::size_t i = 0; i < a[s]->size(); ++i)
      CHECK((*a[s])[i] == doctest::Approx((*b[s])[i]).epsilon(1e-12));
}

TEST_CASE("a model already at the optimum has near-zero output gradients") {
  CnnModel m = CnnModel::zeros(reduced_arch());
  m.params.out_b[4] = 40.0;  // softmax is a one-hot at class 4
  const std::vector<Image> batch = {Image(28, 28), Image(28, 28)};  // all-zero images
  const ParamSet grad = backward(m, batch, {4, 4});
  for (double g : grad.out_w) CHECK(std::abs(g) < 1e-8);
  for (double g : grad.out_b) CHECK(std::abs(g) < 1e-8);
}

TEST_CASE("backward validates inputs") {
  const CnnModel m = CnnModel::zeros(reduced_arch());
  Rng rng(3);
  const auto batch = random_images(2, rng);
  CHECK_THROWS_AS(backward(m, {}, {}), ValidationError);
  CHECK_THROWS_AS(backward(m, batch, {1}), ValidationError);
  CHECK_THROWS_AS(backward(m, batch, {1, 12}), ValidationError);
}

TEST_CASE("learning rate schedule halves per epoch") {
  const TrainConfig cfg;
  CHECK(cfg.epoch_lr(0) == 0.1);
  CHECK(cfg.epoch_lr(1) == 0.05);
  CHECK(cfg.epoch_lr(2) == 0.025);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = TrainConfig{};
  cfg.initial_lr = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = TrainConfig{};
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("training is bit-deterministic for a fixed seed and any worker count") {
  const LabeledDataset data = testsupport::make_glyph_dataset("train-det", Split::kTrain, 40, 808);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.seed = 99;
  cfg.workers = 1;

  const CnnModel a = train(data, cfg, reduced_arch());
  const CnnModel b = train(data, cfg, reduced_arch());
  CHECK(a.params == b.params);

  cfg.workers = 4;
  const CnnModel c = train(data, cfg, reduced_arch());
  CHECK(a.params == c.params);

  cfg.seed = 100;
  const CnnModel d = train(data, cfg, reduced_arch());
  CHECK(a.params != d.params);
}

TEST_CASE("one epoch of training lowers the probe loss") {
  const LabeledDataset data =
      testsupport::make_glyph_dataset("train-sanity", Split::kTrain, 200, 424);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 32;
  cfg.seed = 7;
  cfg.workers = 2;
  TrainLog log;
  (void)train(data, cfg, reduced_arch(), &log);
  REQUIRE(log.epoch_loss.size() == 1);
  CHECK(log.epoch_loss[0] < log.initial_loss);
}

TEST_CASE("seeded subset training uses the requested sample count") {
  const LabeledDataset data = testsupport::make_glyph_dataset("subset", Split::kTrain, 60, 5);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.seed = 1;
  cfg.train_subset = 24;
  TrainLog log;
  (void)train(data, cfg, reduced_arch(), &log);
  CHECK(log.samples_used == 24);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  TempDir tmp("ckpt");
  Rng rng(2718);
  const CnnModel model = CnnModel::glorot_init(reduced_arch(), rng);
  CheckpointMeta meta;
  meta.dataset = "glyphs-D0-train";
  meta.seed = 12345;
  meta.config = "lr=0.1 epochs=3";

  const auto path = tmp.path() / "m.ckpt";
  save_model(model, meta, path);
  const LoadedCheckpoint loaded = load_model(path);
  CHECK(loaded.model.arch == model.arch);
  CHECK(loaded.model.params == model.params);
  CHECK(loaded.meta.dataset == meta.dataset);
  CHECK(loaded.meta.seed == meta.seed);
  CHECK(loaded.meta.config == meta.config);

  const auto path2 = tmp.path() / "m2.ckpt";
  save_model(loaded.model, loaded.meta, path2);
  CHECK(read_file_bytes(path) == read_file_bytes(path2));
}

TEST_CASE("checkpoint loader refuses corrupt and mismatched files") {
  TempDir tmp("ckpt-bad");
  const CnnModel model = CnnModel::zeros(reduced_arch());
  const auto path = tmp.path() / "m.ckpt";
  save_model(model, {}, path);

  SUBCASE("corrupt magic") {
    auto bytes = read_file_bytes(path);
    bytes[0] = 'X';
    write_file_bytes(path, bytes);
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("magic"), ParseError);
  }
  SUBCASE("unsupported version") {
    auto bytes = read_file_bytes(path);
    bytes[8] = 99;
    write_file_bytes(path, bytes);
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("version"), ParseError);
  }
  SUBCASE("architecture echo inconsistent with the payload") {
    auto bytes = read_file_bytes(path);
    // fc1 lives at offset 8 (magic) + 4 (version) + 5 * 4 = 32
    bytes[32] = 21;
    write_file_bytes(path, bytes);
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("mismatch"), ParseError);
  }
  SUBCASE("truncated parameters") {
    auto bytes = read_file_bytes(path);
    bytes.resize(bytes.size() - 16);
    write_file_bytes(path, bytes);
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("truncated"), ParseError);
  }
}

TEST_CASE("checkpoint of the all-zero model loads to a uniform-output model") {
  TempDir tmp("ckpt-zero");
  const auto path = tmp.path() / "zero.ckpt";
  save_model(CnnModel::zeros(reduced_arch()), {}, path);
  const LoadedCheckpoint loaded = load_model(path);
  Rng rng(77);
  const ProbabilityMatrix probs = forward(loaded.model, random_images(2, rng));
  for (std::size_t n = 0; n < probs.rows(); ++n)
    for (std::size_t c = 0; c < probs.cols(); ++c) CHECK(probs.at(n, c) == 0.1);
}
