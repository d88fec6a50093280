#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "crc/errors.hpp"
#include "crc/prob_matrix.hpp"

namespace crc {

// Label-free CRC scoring over per-model softmax outputs, plus the two
// label-based baselines (error rate, cross-entropy) used for comparison.
//
// Scoring pipeline per model k over N inputs:
//   confidence   conf[n] = max_c p[n][c]
//   MC_k         mean of conf
//   SC_k         sample standard deviation of conf (N-1 denominator)
//   LCB_k        MC_k - SC_k
//   S_k          LCB_k - max over other models' LCB
// The selected model is the argmax of LCB (equivalently of S); ties break to
// the lowest index.

struct ModelScore {
  std::string model_id;
  double mean_confidence = 0.0;
  double std_confidence = 0.0;
  double lcb = 0.0;
  double crc_score = 0.0;
};

struct ModelScoreReport {
  std::vector<ModelScore> scores;
  std::size_t selected_index = 0;
  std::size_t num_inputs = 0;
  std::size_t num_models = 0;

  // Plain-text tabular form, one row per model, selected row marked with '*'.
  std::string to_table() const {
    std::string out = "model            MC            SC           LCB           CRC\n";
    char line[160];
    for (std::size_t k = 0; k < scores.size(); ++k) {
      const ModelScore& s = scores[k];
      std::snprintf(line, sizeof(line), "%-12s %12.6f  %12.6f  %12.6f  %12.6f %s\n",
                    s.model_id.c_str(), s.mean_confidence, s.std_confidence, s.lcb,
                    s.crc_score, k == selected_index ? "*" : "");
      out += line;
    }
    out += "selected: " + scores[selected_index].model_id + " (index " +
           std::to_string(selected_index) + ")\n";
    return out;
  }
};

// Lowest index wins on ties; the deterministic rule used everywhere a row
// argmax is needed (confidence, ER predictions, model selection).
inline std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

inline ConfidenceVector confidence(const ProbabilityMatrix& probs) {
  probs.validate();
  ConfidenceVector conf(probs.rows());
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    const auto row = probs.row(n);
    conf[n] = row[argmax_lowest(row)];
  }
  return conf;
}

inline double mean_confidence(const ConfidenceVector& conf) {
  if (conf.empty()) throw ValidationError("mean_confidence: empty confidence vector");
  double sum = 0.0;
  for (double c : conf) sum += c;
  return sum / static_cast<double>(conf.size());
}

// Sample (Bessel-corrected) standard deviation; needs at least two entries.
inline double std_confidence(const ConfidenceVector& conf) {
  if (conf.size() < 2)
    throw ValidationError("std_confidence: need at least 2 entries, got " +
                          std::to_string(conf.size()));
  const double mean = mean_confidence(conf);
  double ss = 0.0;
  for (double c : conf) {
    const double d = c - mean;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(conf.size() - 1));
}

inline double lcb(const ProbabilityMatrix& probs) {
  const ConfidenceVector conf = confidence(probs);
  return mean_confidence(conf) - std_confidence(conf);
}

// Full CRC scoring across K models. All matrices must share N and C; K >= 2
// because each score subtracts the best of the *other* models.
inline ModelScoreReport crc_scores(const std::vector<ProbabilityMatrix>& per_model_probs,
                                   const std::vector<std::string>& model_ids = {}) {
  const std::size_t num_models = per_model_probs.size();
  if (num_models < 2)
    throw ValidationError("crc_scores: need at least 2 models, got " +
                          std::to_string(num_models));
  if (!model_ids.empty() && model_ids.size() != num_models)
    throw ValidationError("crc_scores: model_ids size mismatch");
  const std::size_t n = per_model_probs[0].rows();
  const std::size_t c = per_model_probs[0].cols();
  for (std::size_t k = 1; k < num_models; ++k) {
    if (per_model_probs[k].rows() != n || per_model_probs[k].cols() != c)
      throw ValidationError("crc_scores: model " + std::to_string(k) + " has shape " +
                            std::to_string(per_model_probs[k].rows()) + "x" +
                            std::to_string(per_model_probs[k].cols()) + ", expected " +
                            std::to_string(n) + "x" + std::to_string(c));
  }

  ModelScoreReport report;
  report.num_inputs = n;
  report.num_models = num_models;
  report.scores.resize(num_models);
  for (std::size_t k = 0; k < num_models; ++k) {
    ModelScore& s = report.scores[k];
    s.model_id = model_ids.empty() ? "M" + std::to_string(k) : model_ids[k];
    const ConfidenceVector conf = confidence(per_model_probs[k]);
    s.mean_confidence = mean_confidence(conf);
    s.std_confidence = std_confidence(conf);
    s.lcb = s.mean_confidence - s.std_confidence;
  }

  // Track the two largest LCBs so each model's "best of the others" is O(1).
  std::size_t top = 0;
  for (std::size_t k = 1; k < num_models; ++k)
    if (report.scores[k].lcb > report.scores[top].lcb) top = k;
  std::size_t second = top == 0 ? 1 : 0;
  for (std::size_t k = 0; k < num_models; ++k) {
    if (k == top) continue;
    if (report.scores[k].lcb > report.scores[second].lcb) second = k;
  }
  for (std::size_t k = 0; k < num_models; ++k) {
    const double best_other = (k == top) ? report.scores[second].lcb : report.scores[top].lcb;
    report.scores[k].crc_score = report.scores[k].lcb - best_other;
  }
  report.selected_index = top;
  return report;
}

// Fraction of inputs whose argmax prediction disagrees with the label.
inline double error_rate(const ProbabilityMatrix& probs, const LabelVector& labels) {
  if (labels.size() != probs.rows())
    throw ValidationError("error_rate: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(probs.rows()) + " rows");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= probs.cols())
      throw ValidationError("error_rate: label " + std::to_string(labels[i]) + " at row " +
                            std::to_string(i) + " out of range for C=" +
                            std::to_string(probs.cols()));
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < probs.rows(); ++i)
    if (argmax_lowest(probs.row(i)) != labels[i]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(probs.rows());
}

// Mean negative log-probability of the true class. Probabilities are clamped
// below at 1e-12 before the log: trained softmax outputs can underflow to
// exactly 0 in double arithmetic.
inline double cross_entropy(const ProbabilityMatrix& probs, const LabelVector& labels) {
  if (labels.size() != probs.rows())
    throw ValidationError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(probs.rows()) + " rows");
  constexpr double kFloor = 1e-12;
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    if (labels[i] >= probs.cols())
      throw ValidationError("cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                            std::to_string(i) + " out of range for C=" +
                            std::to_string(probs.cols()));
    sum += -std::log(std::max(probs.at(i, labels[i]), kFloor));
  }
  return sum / static_cast<double>(probs.rows());
}

}  // namespace crc
