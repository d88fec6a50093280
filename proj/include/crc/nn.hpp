#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "crc/errors.hpp"
#include "crc/image.hpp"
#include "crc/parallel.hpp"
#include "crc/prob_matrix.hpp"
#include "crc/rng.hpp"

namespace crc {

// From-scratch CNN used by the selection study. Layer chain on a 28x28 input
// with the default architecture:
//   conv 20 filters 9x9, stride 1, valid, ReLU   28x28 -> 20x20x20
//   average pool 2x2, stride 2                   -> 10x10x20
//   flatten                                      -> 2000
//   fully connected 2000 -> 360, ReLU
//   fully connected 360 -> 60, ReLU
//   linear 60 -> 10, softmax
// Smaller configurations of the same chain are used for gradient checks.

struct CnnArch {
  int input_height = 28;
  int input_width = 28;
  int conv_filters = 20;
  int conv_kernel = 9;
  int pool = 2;  // window and stride
  int fc1 = 360;
  int fc2 = 60;
  int num_classes = 10;

  int conv_out_h() const { return input_height - conv_kernel + 1; }
  int conv_out_w() const { return input_width - conv_kernel + 1; }
  int pool_out_h() const { return conv_out_h() / pool; }
  int pool_out_w() const { return conv_out_w() / pool; }
  int flatten_dim() const { return pool_out_h() * pool_out_w() * conv_filters; }

  void validate() const {
    if (input_height <= 0 || input_width <= 0 || conv_filters <= 0 || conv_kernel <= 0 ||
        pool <= 0 || fc1 <= 0 || fc2 <= 0 || num_classes <= 0)
      throw ValidationError("CnnArch: all dimensions must be positive");
    if (conv_kernel > input_height || conv_kernel > input_width)
      throw ValidationError("CnnArch: conv kernel larger than input");
    if (conv_out_h() % pool != 0 || conv_out_w() % pool != 0)
      throw ValidationError("CnnArch: conv output " + std::to_string(conv_out_h()) + "x" +
                            std::to_string(conv_out_w()) + " not divisible by pool " +
                            std::to_string(pool));
  }

  bool operator==(const CnnArch&) const = default;
};

// One vector per parameter tensor; doubles throughout. The same shape holds
// gradients and optimizer velocity.
struct ParamSet {
  std::vector<double> conv_w;  // [filters][k][k]
  std::vector<double> conv_b;  // [filters]
  std::vector<double> fc1_w;   // [fc1][flatten]
  std::vector<double> fc1_b;   // [fc1]
  std::vector<double> fc2_w;   // [fc2][fc1]
  std::vector<double> fc2_b;   // [fc2]
  std::vector<double> out_w;   // [classes][fc2]
  std::vector<double> out_b;   // [classes]

  static ParamSet zeros(const CnnArch& a) {
    ParamSet p;
    p.conv_w.assign(static_cast<std::size_t>(a.conv_filters) * a.conv_kernel * a.conv_kernel, 0.0);
    p.conv_b.assign(a.conv_filters, 0.0);
    p.fc1_w.assign(static_cast<std::size_t>(a.fc1) * a.flatten_dim(), 0.0);
    p.fc1_b.assign(a.fc1, 0.0);
    p.fc2_w.assign(static_cast<std::size_t>(a.fc2) * a.fc1, 0.0);
    p.fc2_b.assign(a.fc2, 0.0);
    p.out_w.assign(static_cast<std::size_t>(a.num_classes) * a.fc2, 0.0);
    p.out_b.assign(a.num_classes, 0.0);
    return p;
  }

  std::array<std::vector<double>*, 8> segments() {
    return {&conv_w, &conv_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b, &out_w, &out_b};
  }
  std::array<const std::vector<double>*, 8> segments() const {
    return {&conv_w, &conv_b, &fc1_w, &fc1_b, &fc2_w, &fc2_b, &out_w, &out_b};
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto* s : segments()) n += s->size();
    return n;
  }

  // this += scale * other, segment by segment in fixed order.
  void add_scaled(const ParamSet& other, double scale) {
    auto mine = segments();
    auto theirs = other.segments();
    for (std::size_t s = 0; s < mine.size(); ++s) {
      auto& dst = *mine[s];
      const auto& src = *theirs[s];
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
    }
  }

  void scale(double factor) {
    for (auto* s : segments())
      for (double& v : *s) v *= factor;
  }

  bool operator==(const ParamSet&) const = default;
};

struct CnnModel {
  CnnArch arch;
  ParamSet params;

  static CnnModel zeros(const CnnArch& a = CnnArch{}) {
    a.validate();
    return CnnModel{a, ParamSet::zeros(a)};
  }

  // Glorot-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases.
  // Keeps three epochs at learning rate 0.1 stable.
  static CnnModel glorot_init(const CnnArch& a, Rng& rng) {
    a.validate();
    CnnModel m{a, ParamSet::zeros(a)};
    auto fill = [&rng](std::vector<double>& w, double fan_in, double fan_out) {
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& v : w) v = (2.0 * rng.next_double() - 1.0) * limit;
    };
    const double k2 = static_cast<double>(a.conv_kernel) * a.conv_kernel;
    fill(m.params.conv_w, k2, static_cast<double>(a.conv_filters) * k2);
    fill(m.params.fc1_w, a.flatten_dim(), a.fc1);
    fill(m.params.fc2_w, a.fc1, a.fc2);
    fill(m.params.out_w, a.fc2, a.num_classes);
    return m;
  }
};

// Activations kept from a forward pass for backpropagation.
struct ForwardTrace {
  std::vector<double> conv_pre;  // [filters][convH][convW], before ReLU
  std::vector<double> pooled;    // [flatten], after ReLU + average pool
  std::vector<double> fc1_pre;   // [fc1], before ReLU
  std::vector<double> fc2_pre;   // [fc2], before ReLU
  std::vector<double> logits;    // [classes]
  std::vector<double> probs;     // [classes]
  std::vector<double> relu_scratch;
};

namespace detail {

// Average pooling with a square window equal to the stride. Exact mean
// preservation on evenly divisible maps: the output mean equals the input
// mean because every input cell contributes exactly once with weight 1/area.
inline void average_pool(const double* in, int h, int w, int pool, double* out) {
  const int ph = h / pool;
  const int pw = w / pool;
  const double inv_area = 1.0 / (pool * pool);
  for (int py = 0; py < ph; ++py)
    for (int px = 0; px < pw; ++px) {
      double acc = 0.0;
      for (int u = 0; u < pool; ++u)
        for (int v = 0; v < pool; ++v)
          acc += in[static_cast<std::size_t>(py * pool + u) * w + px * pool + v];
      out[static_cast<std::size_t>(py) * pw + px] = acc * inv_area;
    }
}

inline void softmax_row(const std::vector<double>& logits, std::vector<double>& probs) {
  probs.resize(logits.size());
  double max_logit = logits[0];
  for (double v : logits) max_logit = std::max(max_logit, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
}

}  // namespace detail

// Forward pass for one image, recording intermediate activations.
inline void forward_image(const CnnModel& m, const Image& img, ForwardTrace& t) {
  const CnnArch& a = m.arch;
  if (img.height != a.input_height || img.width != a.input_width)
    throw ValidationError("forward: image " + std::to_string(img.height) + "x" +
                          std::to_string(img.width) + " does not match input " +
                          std::to_string(a.input_height) + "x" + std::to_string(a.input_width));
  const int ch = a.conv_out_h();
  const int cw = a.conv_out_w();
  const int k = a.conv_kernel;

  t.conv_pre.assign(static_cast<std::size_t>(a.conv_filters) * ch * cw, 0.0);
  for (int f = 0; f < a.conv_filters; ++f) {
    const double* w = m.params.conv_w.data() + static_cast<std::size_t>(f) * k * k;
    const double bias = m.params.conv_b[f];
    double* out = t.conv_pre.data() + static_cast<std::size_t>(f) * ch * cw;
    for (int oy = 0; oy < ch; ++oy) {
      for (int ox = 0; ox < cw; ++ox) {
        double acc = bias;
        for (int u = 0; u < k; ++u) {
          const double* row = img.pixels.data() + static_cast<std::size_t>(oy + u) * a.input_width + ox;
          const double* wr = w + static_cast<std::size_t>(u) * k;
          for (int v = 0; v < k; ++v) acc += wr[v] * row[v];
        }
        out[static_cast<std::size_t>(oy) * cw + ox] = acc;
      }
    }
  }

  // ReLU on the conv maps, then average pool
  const int ph = a.pool_out_h();
  const int pw = a.pool_out_w();
  t.pooled.assign(static_cast<std::size_t>(a.conv_filters) * ph * pw, 0.0);
  t.relu_scratch.assign(static_cast<std::size_t>(ch) * cw, 0.0);
  for (int f = 0; f < a.conv_filters; ++f) {
    const double* in = t.conv_pre.data() + static_cast<std::size_t>(f) * ch * cw;
    for (std::size_t i = 0; i < t.relu_scratch.size(); ++i)
      t.relu_scratch[i] = in[i] > 0.0 ? in[i] : 0.0;
    detail::average_pool(t.relu_scratch.data(), ch, cw, a.pool,
                         t.pooled.data() + static_cast<std::size_t>(f) * ph * pw);
  }

  const int flat = a.flatten_dim();
  t.fc1_pre.assign(a.fc1, 0.0);
  for (int i = 0; i < a.fc1; ++i) {
    const double* w = m.params.fc1_w.data() + static_cast<std::size_t>(i) * flat;
    double acc = m.params.fc1_b[i];
    for (int j = 0; j < flat; ++j) acc += w[j] * t.pooled[j];
    t.fc1_pre[i] = acc;
  }

  t.fc2_pre.assign(a.fc2, 0.0);
  for (int i = 0; i < a.fc2; ++i) {
    const double* w = m.params.fc2_w.data() + static_cast<std::size_t>(i) * a.fc1;
    double acc = m.params.fc2_b[i];
    for (int j = 0; j < a.fc1; ++j) acc += w[j] * std::max(0.0, t.fc1_pre[j]);
    t.fc2_pre[i] = acc;
  }

  t.logits.assign(a.num_classes, 0.0);
  for (int i = 0; i < a.num_classes; ++i) {
    const double* w = m.params.out_w.data() + static_cast<std::size_t>(i) * a.fc2;
    double acc = m.params.out_b[i];
    for (int j = 0; j < a.fc2; ++j) acc += w[j] * std::max(0.0, t.fc2_pre[j]);
    t.logits[i] = acc;
  }

  detail::softmax_row(t.logits, t.probs);
}

// Batch inference. Rows are independent, so the image loop parallelizes
// freely without affecting results.
inline ProbabilityMatrix forward(const CnnModel& m, const std::vector<Image>& batch,
                                 unsigned workers = 1) {
  m.arch.validate();
  ProbabilityMatrix out(batch.size(), m.arch.num_classes);
  for_each_chunk(batch.size(), 64, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    ForwardTrace t;
    for (std::size_t n = begin; n < end; ++n) {
      forward_image(m, batch[n], t);
      for (int c = 0; c < m.arch.num_classes; ++c) out.at(n, c) = t.probs[c];
    }
  });
  return out;
}

namespace detail {

// Gradient of one image's cross-entropy w.r.t. every parameter, accumulated
// into `grad` (not averaged; the caller divides by the batch size).
inline void backward_image(const CnnModel& m, const Image& img, std::uint8_t label,
                           const ForwardTrace& t, ParamSet& grad) {
  const CnnArch& a = m.arch;
  const int flat = a.flatten_dim();

  // softmax + cross-entropy
  std::vector<double> dlogits(a.num_classes);
  for (int c = 0; c < a.num_classes; ++c)
    dlogits[c] = t.probs[c] - (c == static_cast<int>(label) ? 1.0 : 0.0);

  // output linear layer
  std::vector<double> dfc2_act(a.fc2, 0.0);
  for (int i = 0; i < a.num_classes; ++i) {
    const double d = dlogits[i];
    double* gw = grad.out_w.data() + static_cast<std::size_t>(i) * a.fc2;
    const double* w = m.params.out_w.data() + static_cast<std::size_t>(i) * a.fc2;
    for (int j = 0; j < a.fc2; ++j) {
      const double act = std::max(0.0, t.fc2_pre[j]);
      gw[j] += d * act;
      dfc2_act[j] += d * w[j];
    }
    grad.out_b[i] += d;
  }

  // fc2 (ReLU)
  std::vector<double> dfc1_act(a.fc1, 0.0);
  for (int i = 0; i < a.fc2; ++i) {
    if (t.fc2_pre[i] <= 0.0) continue;
    const double d = dfc2_act[i];
    double* gw = grad.fc2_w.data() + static_cast<std::size_t>(i) * a.fc1;
    const double* w = m.params.fc2_w.data() + static_cast<std::size_t>(i) * a.fc1;
    for (int j = 0; j < a.fc1; ++j) {
      gw[j] += d * std::max(0.0, t.fc1_pre[j]);
      dfc1_act[j] += d * w[j];
    }
    grad.fc2_b[i] += d;
  }

  // fc1 (ReLU)
  std::vector<double> dpooled(flat, 0.0);
  for (int i = 0; i < a.fc1; ++i) {
    if (t.fc1_pre[i] <= 0.0) continue;
    const double d = dfc1_act[i];
    double* gw = grad.fc1_w.data() + static_cast<std::size_t>(i) * flat;
    const double* w = m.params.fc1_w.data() + static_cast<std::size_t>(i) * flat;
    for (int j = 0; j < flat; ++j) {
      gw[j] += d * t.pooled[j];
      dpooled[j] += d * w[j];
    }
    grad.fc1_b[i] += d;
  }

  // average pool spreads each cell's gradient uniformly, then conv ReLU gates
  const int ch = a.conv_out_h();
  const int cw = a.conv_out_w();
  const int ph = a.pool_out_h();
  const int pw = a.pool_out_w();
  const int k = a.conv_kernel;
  const double inv_area = 1.0 / (a.pool * a.pool);
  std::vector<double> dconv_pre(static_cast<std::size_t>(ch) * cw);
  for (int f = 0; f < a.conv_filters; ++f) {
    const double* dpool_f = dpooled.data() + static_cast<std::size_t>(f) * ph * pw;
    const double* pre = t.conv_pre.data() + static_cast<std::size_t>(f) * ch * cw;
    std::fill(dconv_pre.begin(), dconv_pre.end(), 0.0);
    for (int py = 0; py < ph; ++py)
      for (int px = 0; px < pw; ++px) {
        const double d = dpool_f[static_cast<std::size_t>(py) * pw + px] * inv_area;
        for (int u = 0; u < a.pool; ++u)
          for (int v = 0; v < a.pool; ++v) {
            const std::size_t idx =
                static_cast<std::size_t>(py * a.pool + u) * cw + px * a.pool + v;
            if (pre[idx] > 0.0) dconv_pre[idx] += d;
          }
      }
    // conv weight gradients; the image is the network input, so no gradient
    // flows below this layer
    double* gw = grad.conv_w.data() + static_cast<std::size_t>(f) * k * k;
    double gb = 0.0;
    for (int oy = 0; oy < ch; ++oy)
      for (int ox = 0; ox < cw; ++ox) {
        const double d = dconv_pre[static_cast<std::size_t>(oy) * cw + ox];
        if (d == 0.0) continue;
        gb += d;
        for (int u = 0; u < k; ++u) {
          const double* row =
              img.pixels.data() + static_cast<std::size_t>(oy + u) * a.input_width + ox;
          double* gwr = gw + static_cast<std::size_t>(u) * k;
          for (int v = 0; v < k; ++v) gwr[v] += d * row[v];
        }
      }
    grad.conv_b[f] += gb;
  }
}

}  // namespace detail

// Number of images per gradient chunk. Fixed (never derived from the worker
// count) so per-chunk partial sums combine to bit-identical batch gradients
// for any thread count.
inline constexpr std::size_t kGradChunk = 16;

// Gradients of the mean cross-entropy over the batch w.r.t. every parameter.
// Returns the mean loss through `loss_out` when non-null.
inline ParamSet backward(const CnnModel& m, const std::vector<Image>& batch,
                         const LabelVector& labels, unsigned workers = 1,
                         double* loss_out = nullptr) {
  if (batch.empty()) throw ValidationError("backward: empty batch");
  if (batch.size() != labels.size())
    throw ValidationError("backward: " + std::to_string(batch.size()) + " images but " +
                          std::to_string(labels.size()) + " labels");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= m.arch.num_classes)
      throw ValidationError("backward: label " + std::to_string(labels[i]) + " out of range");

  const std::size_t num_chunks = (batch.size() + kGradChunk - 1) / kGradChunk;
  std::vector<ParamSet> chunk_grads(num_chunks);
  std::vector<double> chunk_loss(num_chunks, 0.0);
  for_each_chunk(batch.size(), kGradChunk, workers,
                 [&](std::size_t chunk, std::size_t begin, std::size_t end) {
                   ParamSet g = ParamSet::zeros(m.arch);
                   ForwardTrace t;
                   double loss = 0.0;
                   for (std::size_t n = begin; n < end; ++n) {
                     forward_image(m, batch[n], t);
                     loss += -std::log(std::max(t.probs[labels[n]], 1e-12));
                     detail::backward_image(m, batch[n], labels[n], t, g);
                   }
                   chunk_grads[chunk] = std::move(g);
                   chunk_loss[chunk] = loss;
                 });

  ParamSet total = std::move(chunk_grads[0]);
  double loss_sum = chunk_loss[0];
  for (std::size_t c = 1; c < num_chunks; ++c) {
    total.add_scaled(chunk_grads[c], 1.0);
    loss_sum += chunk_loss[c];
  }
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  total.scale(inv_batch);
  if (loss_out) *loss_out = loss_sum * inv_batch;
  return total;
}

}  // namespace crc
