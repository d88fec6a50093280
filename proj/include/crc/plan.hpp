#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "crc/errors.hpp"
#include "crc/rng.hpp"
#include "crc/train.hpp"

namespace crc {

inline constexpr int kDatasetsPerFamily = 5;  // D0 original + D1..D4 generated
inline constexpr int kModelsPerFamily = 5;

// Dataset family coordinates: canonical display name, lowercase token used in
// file names, and a stable index used in seed derivation.
struct Family {
  std::string canonical;
  std::string token;
  std::uint64_t index = 0;
};

inline const std::vector<Family>& known_families() {
  static const std::vector<Family> families = {
      {"MNIST", "mnist", 0},
      {"FashionMNIST", "fashionmnist", 1},
  };
  return families;
}

inline Family family_from_string(const std::string& s) {
  std::string lower;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c)) && c != '-' && c != '_')
      lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  for (const Family& f : known_families())
    if (lower == f.token) return f;
  throw ValidationError("unknown dataset family \"" + s + "\" (expected MNIST or FashionMNIST)");
}

// Declarative description of one experiment run: which families, where the
// original data lives, where outputs go, the master seed, and the evaluation
// plan. Everything else (per-model, per-operation, per-subsample seeds) is
// derived from the master seed and recorded in the run manifest.
struct ExperimentPlan {
  std::vector<std::string> families = {"MNIST", "FashionMNIST"};
  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 1;
  std::vector<std::size_t> eval_sizes = {10000, 160};
  int repeats = 1;  // subsample draws per eval size; >1 is a sensitivity study
  unsigned workers = 1;
  TrainConfig train;

  void validate() const {
    if (families.empty()) throw ValidationError("plan: no dataset families selected");
    for (const auto& f : families) (void)family_from_string(f);
    if (eval_sizes.empty()) throw ValidationError("plan: no evaluation sizes");
    for (std::size_t n : eval_sizes)
      if (n < 2) throw ValidationError("plan: evaluation size must be at least 2");
    if (repeats < 1) throw ValidationError("plan: repeats must be at least 1");
    if (workers < 1) throw ValidationError("plan: workers must be at least 1");
    train.validate();
  }

  // Seed derivations. Tags are part of the on-disk contract: the manifest
  // records the resulting values so stages can be replayed in isolation.
  std::uint64_t op_seed(const Family& f, int op_id) const {
    return derive_seed(seed, "generate", f.index, static_cast<std::uint64_t>(op_id));
  }
  std::uint64_t train_seed(const Family& f, int model_index) const {
    return derive_seed(seed, "train", f.index, static_cast<std::uint64_t>(model_index));
  }
  std::uint64_t subsample_seed(const Family& f, int dataset_index, std::size_t eval_size,
                               int repeat = 0) const {
    return derive_seed(seed, "subsample",
                       f.index * 16 + static_cast<std::uint64_t>(dataset_index), eval_size,
                       static_cast<std::uint64_t>(repeat));
  }

  // Directory layout under out_dir.
  std::filesystem::path datasets_dir() const { return out_dir / "datasets"; }
  std::filesystem::path checkpoints_dir() const { return out_dir / "checkpoints"; }
  std::filesystem::path probs_dir() const { return out_dir / "probs"; }
  std::filesystem::path reports_dir() const { return out_dir / "reports"; }
  std::filesystem::path manifest_path() const { return out_dir / "manifest.json"; }
  std::filesystem::path selection_path() const { return out_dir / "selection.json"; }

  std::string dataset_name(const Family& f, int i) const {
    return f.token + "-D" + std::to_string(i);
  }
  std::string display_dataset_name(const Family& f, int i) const {
    return f.canonical + "-D" + std::to_string(i);
  }
  std::filesystem::path checkpoint_path(const Family& f, int i) const {
    return checkpoints_dir() / (f.token + "-M" + std::to_string(i) + ".ckpt");
  }
  std::filesystem::path prob_matrix_path(const Family& f, int dataset_index,
                                         std::size_t eval_size, int model_index,
                                         int repeat = 0) const {
    std::string name = f.token + "-D" + std::to_string(dataset_index) + "-N" +
                       std::to_string(eval_size) + "-M" + std::to_string(model_index);
    if (repeat > 0) name += "-r" + std::to_string(repeat);
    return probs_dir() / (name + ".pmat");
  }

  // Canonical distribution filenames of the original datasets, looked for
  // under data_dir/<family token>/.
  std::filesystem::path original_path(const Family& f, Split split, bool images) const {
    const char* name = nullptr;
    if (split == Split::kTrain)
      name = images ? "train-images-idx3-ubyte" : "train-labels-idx1-ubyte";
    else
      name = images ? "t10k-images-idx3-ubyte" : "t10k-labels-idx1-ubyte";
    return data_dir / f.token / name;
  }
};

// Plain-text key=value configuration. Lines starting with '#' and blank
// lines are ignored; whitespace around keys and values is trimmed. Every key
// maps 1:1 to a CLI flag (see the tool's --help).
inline std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto begin = s.find_first_not_of(" \t\r");
    const auto end = s.find_last_not_of(" \t\r");
    return begin == std::string::npos ? std::string() : s.substr(begin, end - begin + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected key=value, got \"" + stripped + "\"");
    kv[trim(stripped.substr(0, eq))] = trim(stripped.substr(eq + 1));
  }
  return kv;
}

inline std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(static_cast<std::size_t>(std::stoull(item)));
  }
  if (out.empty()) throw ValidationError("empty size list \"" + s + "\"");
  return out;
}

inline std::vector<std::string> parse_family_list(const std::string& s) {
  std::string lower;
  for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "both" || lower == "all") return {"MNIST", "FashionMNIST"};
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(family_from_string(item).canonical);
  }
  if (out.empty()) throw ValidationError("empty family list \"" + s + "\"");
  return out;
}

// Applies config-file entries to a plan. CLI flags are applied on top by the
// tool, so flags win over the file.
inline void apply_config(ExperimentPlan& plan, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "family" || key == "families") plan.families = parse_family_list(value);
    else if (key == "data_dir") plan.data_dir = value;
    else if (key == "out_dir") plan.out_dir = value;
    else if (key == "seed") plan.seed = std::stoull(value);
    else if (key == "eval_sizes") plan.eval_sizes = parse_size_list(value);
    else if (key == "repeats") plan.repeats = std::stoi(value);
    else if (key == "workers") plan.workers = static_cast<unsigned>(std::stoul(value));
    else if (key == "epochs") plan.train.epochs = std::stoi(value);
    else if (key == "batch_size") plan.train.batch_size = std::stoi(value);
    else if (key == "initial_lr") plan.train.initial_lr = std::stod(value);
    else if (key == "momentum") plan.train.momentum = std::stod(value);
    else if (key == "train_subset") plan.train.train_subset = std::stoull(value);
    else throw ValidationError("unknown config key \"" + key + "\"");
  }
}

}  // namespace crc
