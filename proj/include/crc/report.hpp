#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "crc/errors.hpp"
#include "crc/plan.hpp"

namespace crc {

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"CRC", "ER", "CE"};
  return names;
}

struct MetricResult {
  std::vector<double> per_model;
  std::size_t selected = 0;  // ties break to the lowest model index
};

// Selection verdicts for one (family, dataset, eval size, repeat) cell.
struct SelectionCell {
  std::string family;  // canonical name
  int dataset_index = 0;
  std::size_t eval_size = 0;
  int repeat = 0;  // 0 is the primary draw; >0 only with --repeats
  int ground_truth = 0;
  std::uint64_t subsample_seed = 0;
  MetricResult crc, er, ce;
  double selected_crc_score = 0.0;  // S of the CRC-selected model

  const MetricResult& metric(const std::string& name) const {
    if (name == "CRC") return crc;
    if (name == "ER") return er;
    if (name == "CE") return ce;
    throw ValidationError("unknown metric \"" + name + "\"");
  }

  std::string display_name() const { return family + "-D" + std::to_string(dataset_index); }
};

struct SelectionResultTable {
  int num_models = kModelsPerFamily;
  std::vector<SelectionCell> cells;
};

// Lowest value wins, ties to the lowest index (ER and CE selections).
inline std::size_t argmin_lowest(const std::vector<double>& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] < values[best]) best = i;
  return best;
}

// Shortest-round-trip double formatting, stable across runs.
inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --- JSON persistence of raw selection results (internal hand-off between
// --- the select and report stages)

inline void save_selection_table(const SelectionResultTable& table,
                                 const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["num_models"] = table.num_models;
  j["cells"] = nlohmann::ordered_json::array();
  for (const SelectionCell& cell : table.cells) {
    nlohmann::ordered_json c;
    c["family"] = cell.family;
    c["dataset_index"] = cell.dataset_index;
    c["eval_size"] = cell.eval_size;
    c["repeat"] = cell.repeat;
    c["ground_truth"] = cell.ground_truth;
    c["subsample_seed"] = cell.subsample_seed;
    c["selected_crc_score"] = cell.selected_crc_score;
    for (const std::string& metric : metric_names()) {
      const MetricResult& m = cell.metric(metric);
      c[metric] = {{"values", m.per_model}, {"selected", m.selected}};
    }
    j["cells"].push_back(std::move(c));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

inline SelectionResultTable load_selection_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + "; run the select stage first");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  SelectionResultTable table;
  table.num_models = j.at("num_models").get<int>();
  for (const auto& c : j.at("cells")) {
    SelectionCell cell;
    cell.family = c.at("family").get<std::string>();
    cell.dataset_index = c.at("dataset_index").get<int>();
    cell.eval_size = c.at("eval_size").get<std::size_t>();
    cell.repeat = c.at("repeat").get<int>();
    cell.ground_truth = c.at("ground_truth").get<int>();
    cell.subsample_seed = c.at("subsample_seed").get<std::uint64_t>();
    cell.selected_crc_score = c.at("selected_crc_score").get<double>();
    auto load_metric = [&](const char* name, MetricResult& m) {
      m.per_model = c.at(name).at("values").get<std::vector<double>>();
      m.selected = c.at(name).at("selected").get<std::size_t>();
    };
    load_metric("CRC", cell.crc);
    load_metric("ER", cell.er);
    load_metric("CE", cell.ce);
    table.cells.push_back(std::move(cell));
  }
  return table;
}

// --- report emission

// Machine-readable CSV, one row per (cell, metric, model). Only primary
// (repeat 0) cells; sensitivity repeats go to a separate file.
inline void write_results_csv(const SelectionResultTable& table,
                              const std::filesystem::path& path, bool repeats_file = false) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "family,dataset,eval_size,metric,model,value,selected,ground_truth";
  if (repeats_file) out << ",repeat";
  out << "\n";
  for (const SelectionCell& cell : table.cells) {
    if (repeats_file ? cell.repeat == 0 : cell.repeat != 0) continue;
    for (const std::string& metric : metric_names()) {
      const MetricResult& m = cell.metric(metric);
      for (std::size_t k = 0; k < m.per_model.size(); ++k) {
        out << cell.family << ',' << cell.display_name() << ',' << cell.eval_size << ','
            << metric << ",M" << k << ',' << format_value(m.per_model[k]) << ','
            << (k == m.selected ? 1 : 0) << ",M" << cell.ground_truth;
        if (repeats_file) out << ',' << cell.repeat;
        out << "\n";
      }
    }
  }
  if (!out) throw IoError("short write to " + path.string());
}

// Human-readable aligned table for one eval size, one block per dataset,
// selected models marked with '*'.
inline std::string render_text_table(const SelectionResultTable& table, std::size_t eval_size) {
  std::string out;
  char line[256];
  for (const SelectionCell& cell : table.cells) {
    if (cell.eval_size != eval_size || cell.repeat != 0) continue;
    std::snprintf(line, sizeof(line), "=== %s (N=%zu, ground truth M%d) ===\n",
                  cell.display_name().c_str(), cell.eval_size, cell.ground_truth);
    out += line;
    out += "metric ";
    for (int k = 0; k < table.num_models; ++k) {
      std::snprintf(line, sizeof(line), "          M%d", k);
      out += line;
    }
    out += "\n";
    for (const std::string& metric : metric_names()) {
      const MetricResult& m = cell.metric(metric);
      std::snprintf(line, sizeof(line), "%-6s ", metric.c_str());
      out += line;
      for (std::size_t k = 0; k < m.per_model.size(); ++k) {
        std::snprintf(line, sizeof(line), " %c%10.4f", k == m.selected ? '*' : ' ',
                      m.per_model[k]);
        out += line;
      }
      out += "\n";
    }
    out += "\n";
  }
  return out;
}

struct SelectionSummary {
  std::size_t datasets = 0;
  std::size_t crc_correct = 0;
  std::size_t er_correct = 0;
  std::size_t ce_correct = 0;
  std::size_t er_agrees_with_crc = 0;
  std::size_t ce_agrees_with_crc = 0;
};

inline SelectionSummary summarize(const SelectionResultTable& table, std::size_t eval_size) {
  SelectionSummary s;
  for (const SelectionCell& cell : table.cells) {
    if (cell.eval_size != eval_size || cell.repeat != 0) continue;
    ++s.datasets;
    const auto gt = static_cast<std::size_t>(cell.ground_truth);
    if (cell.crc.selected == gt) ++s.crc_correct;
    if (cell.er.selected == gt) ++s.er_correct;
    if (cell.ce.selected == gt) ++s.ce_correct;
    if (cell.er.selected == cell.crc.selected) ++s.er_agrees_with_crc;
    if (cell.ce.selected == cell.crc.selected) ++s.ce_agrees_with_crc;
  }
  return s;
}

// Range of the CRC-selected model's score across all primary cells, plus any
// cells falling outside [0, 1].
struct ScoreRange {
  double min_score = std::numeric_limits<double>::infinity();
  double max_score = -std::numeric_limits<double>::infinity();
  std::vector<std::string> violations;
};

inline ScoreRange selected_score_range(const SelectionResultTable& table) {
  ScoreRange r;
  for (const SelectionCell& cell : table.cells) {
    if (cell.repeat != 0) continue;
    r.min_score = std::min(r.min_score, cell.selected_crc_score);
    r.max_score = std::max(r.max_score, cell.selected_crc_score);
    if (cell.selected_crc_score < 0.0 || cell.selected_crc_score > 1.0) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%s N=%zu: selected score %.17g outside [0,1]",
                    cell.display_name().c_str(), cell.eval_size, cell.selected_crc_score);
      r.violations.push_back(buf);
    }
  }
  return r;
}

inline std::string render_summary(const SelectionResultTable& table,
                                  const std::vector<std::size_t>& eval_sizes) {
  std::string out;
  char line[256];
  for (std::size_t n : eval_sizes) {
    const SelectionSummary s = summarize(table, n);
    std::snprintf(line, sizeof(line),
                  "eval_size %zu: CRC correct in %zu/%zu datasets; ER in %zu/%zu; CE in %zu/%zu\n",
                  n, s.crc_correct, s.datasets, s.er_correct, s.datasets, s.ce_correct,
                  s.datasets);
    out += line;
    std::snprintf(line, sizeof(line),
                  "eval_size %zu: ER agrees with CRC on %zu/%zu datasets; CE on %zu/%zu\n", n,
                  s.er_agrees_with_crc, s.datasets, s.ce_agrees_with_crc, s.datasets);
    out += line;
  }
  const ScoreRange r = selected_score_range(table);
  if (r.min_score <= r.max_score) {
    std::snprintf(line, sizeof(line), "selected-score range across all cells: [%.6g, %.6g]\n",
                  r.min_score, r.max_score);
    out += line;
    if (r.violations.empty()) {
      out += "selected-score range violations: none\n";
    } else {
      out += "selected-score range violations:\n";
      for (const std::string& v : r.violations) out += "  " + v + "\n";
    }
  }
  return out;
}

}  // namespace crc
