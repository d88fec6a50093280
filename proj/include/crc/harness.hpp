#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crc/checkpoint.hpp"
#include "crc/dataset.hpp"
#include "crc/errors.hpp"
#include "crc/idx.hpp"
#include "crc/imageops.hpp"
#include "crc/plan.hpp"
#include "crc/report.hpp"
#include "crc/selection.hpp"
#include "crc/train.hpp"
#include "crc/version.hpp"

namespace crc {

// Orchestrates the selection study end to end:
//   generate  derive D1..D4 from the original D0 of each family
//   train     one model per dataset, train split only
//   select    run every model over each dataset's (sub)sampled test split,
//             score with CRC (label-free) and with ER/CE (label-based)
//   report    CSV, aligned text tables, summary lines
// Every stage appends to <out_dir>/manifest.json: derived seeds, file
// checksums, configuration echoes. Identical plan + seed reproduce identical
// bytes everywhere.

using ProgressFn = std::function<void(const std::string&)>;

inline void default_progress(const std::string& msg) { std::cout << msg << "\n"; }

namespace detail {

inline nlohmann::ordered_json load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    nlohmann::ordered_json j;
    j["tool"] = "crcselect";
    j["version"] = std::string(kVersion);
    return j;
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return j;
}

inline void save_manifest(const nlohmann::ordered_json& j, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << j.dump(2) << "\n";
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Manifest entries hold paths relative to out_dir, so identical plans produce
// identical manifests no matter where the output tree lives.
inline std::string rel_to_out(const ExperimentPlan& plan, const std::filesystem::path& p) {
  return std::filesystem::relative(p, plan.out_dir).generic_string();
}

inline LabeledDataset read_original(const ExperimentPlan& plan, const Family& f, Split split) {
  const auto images_path = plan.original_path(f, split, true);
  const auto labels_path = plan.original_path(f, split, false);
  for (const auto& p : {images_path, labels_path}) {
    if (!std::filesystem::exists(p))
      throw IoError("original dataset file missing: " + p.string() +
                    "\nPlace the four canonical IDX files of " + f.canonical + " under " +
                    (plan.data_dir / f.token).string() +
                    "/ (train-images-idx3-ubyte, train-labels-idx1-ubyte, "
                    "t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte).");
  }
  return read_idx_dataset(images_path, labels_path, plan.dataset_name(f, 0), split);
}

}  // namespace detail

// --- generate -------------------------------------------------------------

inline void run_generate(const ExperimentPlan& plan, const ProgressFn& progress = default_progress) {
  plan.validate();
  auto manifest = detail::load_manifest(plan.manifest_path());
  manifest["seed"] = plan.seed;
  auto& gen = manifest["generate"];
  gen = nlohmann::ordered_json::object();

  for (const std::string& family_name : plan.families) {
    const Family f = family_from_string(family_name);
    for (Split split : {Split::kTrain, Split::kTest}) {
      LabeledDataset original = detail::read_original(plan, f, split);
      original.validate();
      progress("generate: " + f.canonical + " " + split_token(split) + " original loaded (" +
               std::to_string(original.size()) + " samples)");

      // D0 is re-persisted through the same quantized IDX path as D1..D4 so
      // all later stages have a single ingestion route.
      for (int i = 0; i < kDatasetsPerFamily; ++i) {
        const std::string name = plan.dataset_name(f, i);
        LabeledDataset derived;
        std::uint64_t op_seed = 0;
        if (i == 0) {
          derived = original;
        } else {
          op_seed = plan.op_seed(f, i);
          derived = apply_operation(original, i, op_seed);
        }
        derived.name = name;
        write_idx(derived, plan.datasets_dir());

        const auto images_file = plan.datasets_dir() / idx_images_filename(name, split);
        const auto labels_file = plan.datasets_dir() / idx_labels_filename(name, split);
        auto& entry = gen[name + "-" + split_token(split)];
        entry["images"] = detail::rel_to_out(plan, images_file);
        entry["labels"] = detail::rel_to_out(plan, labels_file);
        entry["samples"] = derived.size();
        entry["images_checksum"] = detail::hex64(file_checksum(images_file));
        entry["labels_checksum"] = detail::hex64(file_checksum(labels_file));
        if (i > 0) entry["op_seed"] = op_seed;
        progress("generate: wrote " + name + " " + split_token(split));
      }
    }
  }
  detail::save_manifest(manifest, plan.manifest_path());
}

// --- train ----------------------------------------------------------------

inline void run_train(const ExperimentPlan& plan, const ProgressFn& progress = default_progress) {
  plan.validate();
  auto manifest = detail::load_manifest(plan.manifest_path());
  auto& tr = manifest["train"];
  tr = nlohmann::ordered_json::object();

  for (const std::string& family_name : plan.families) {
    const Family f = family_from_string(family_name);
    for (int i = 0; i < kModelsPerFamily; ++i) {
      const std::string name = plan.dataset_name(f, i);
      LabeledDataset dataset;
      try {
        dataset = read_idx_dataset(plan.datasets_dir(), name, Split::kTrain);
      } catch (const IoError& e) {
        throw IoError(std::string(e.what()) + "\nRun the generate stage first.");
      }

      TrainConfig cfg = plan.train;
      cfg.seed = plan.train_seed(f, i);
      cfg.workers = plan.workers;
      TrainLog log;
      progress("train: " + f.canonical + " M" + std::to_string(i) + " on " + name + " (" +
               std::to_string(dataset.size()) + " samples, " + cfg.summary() + ")");
      const CnnModel model = train(dataset, cfg, CnnArch{}, &log);

      CheckpointMeta meta;
      meta.dataset = name + "-train";
      meta.seed = cfg.seed;
      meta.config = cfg.summary();
      const auto ckpt_path = plan.checkpoint_path(f, i);
      save_model(model, meta, ckpt_path);

      auto& entry = tr[f.token + "-M" + std::to_string(i)];
      entry["path"] = detail::rel_to_out(plan, ckpt_path);
      entry["dataset"] = meta.dataset;
      entry["seed"] = meta.seed;
      entry["config"] = meta.config;
      entry["samples_used"] = log.samples_used;
      entry["initial_probe_loss"] = log.initial_loss;
      entry["epoch_probe_loss"] = log.epoch_loss;
      entry["epoch_batch_loss"] = log.epoch_batch_loss;
      entry["checksum"] = detail::hex64(file_checksum(ckpt_path));
      progress("train: saved " + ckpt_path.string() + " (probe loss " +
               std::to_string(log.initial_loss) + " -> " +
               std::to_string(log.epoch_loss.empty() ? log.initial_loss
                                                     : log.epoch_loss.back()) +
               ")");
    }
  }
  detail::save_manifest(manifest, plan.manifest_path());
}

// --- select ---------------------------------------------------------------

// Label-free CRC selection over softmax outputs only; the single entry point
// the harness uses, so no label can leak into the CRC path by construction.
inline ModelScoreReport select_by_crc(const std::vector<ProbabilityMatrix>& per_model_probs) {
  return crc_scores(per_model_probs);
}

inline SelectionResultTable run_select(const ExperimentPlan& plan,
                                       const ProgressFn& progress = default_progress) {
  plan.validate();
  auto manifest = detail::load_manifest(plan.manifest_path());
  auto& sel = manifest["select"];
  sel = nlohmann::ordered_json::object();
  sel["eval_sizes"] = plan.eval_sizes;
  sel["repeats"] = plan.repeats;

  SelectionResultTable table;
  table.num_models = kModelsPerFamily;

  for (const std::string& family_name : plan.families) {
    const Family f = family_from_string(family_name);

    std::vector<CnnModel> models;
    for (int k = 0; k < kModelsPerFamily; ++k) {
      const auto path = plan.checkpoint_path(f, k);
      if (!std::filesystem::exists(path))
        throw IoError("checkpoint missing: " + path.string() + "\nRun the train stage first.");
      LoadedCheckpoint loaded = load_model(path);
      // Provenance check: a checkpoint trained on another family or dataset
      // index must never be scored as this family's M_k.
      const std::string expected = plan.dataset_name(f, k) + "-train";
      if (loaded.meta.dataset != expected)
        throw ValidationError("checkpoint " + path.string() + " was trained on \"" +
                              loaded.meta.dataset + "\", expected \"" + expected + "\"");
      models.push_back(std::move(loaded.model));
    }

    for (int i = 0; i < kDatasetsPerFamily; ++i) {
      const std::string name = plan.dataset_name(f, i);
      const LabeledDataset test = read_idx_dataset(plan.datasets_dir(), name, Split::kTest);

      for (std::size_t eval_size : plan.eval_sizes) {
        if (eval_size > test.size())
          throw ValidationError("eval size " + std::to_string(eval_size) + " exceeds " + name +
                                " test split of " + std::to_string(test.size()));
        const int repeats = eval_size == test.size() ? 1 : plan.repeats;
        for (int rep = 0; rep < repeats; ++rep) {
          const std::uint64_t sub_seed = plan.subsample_seed(f, i, eval_size, rep);
          LabeledDataset eval_set;
          if (eval_size == test.size()) {
            eval_set = test;
          } else {
            Rng rng(sub_seed);
            eval_set = take_indices(test, sample_without_replacement(test.size(), eval_size, rng));
          }

          std::vector<ProbabilityMatrix> per_model;
          per_model.reserve(kModelsPerFamily);
          for (int k = 0; k < kModelsPerFamily; ++k) {
            ProbabilityMatrix probs = forward(models[k], eval_set.images, plan.workers);
            save_probability_matrix(probs,
                                    plan.prob_matrix_path(f, i, eval_size, k, rep));
            per_model.push_back(std::move(probs));
          }

          SelectionCell cell;
          cell.family = f.canonical;
          cell.dataset_index = i;
          cell.eval_size = eval_size;
          cell.repeat = rep;
          cell.ground_truth = i;
          cell.subsample_seed = eval_size == test.size() ? 0 : sub_seed;

          const ModelScoreReport crc_report = select_by_crc(per_model);
          cell.crc.per_model.resize(kModelsPerFamily);
          for (int k = 0; k < kModelsPerFamily; ++k)
            cell.crc.per_model[k] = crc_report.scores[k].crc_score;
          cell.crc.selected = crc_report.selected_index;
          cell.selected_crc_score = crc_report.scores[crc_report.selected_index].crc_score;

          for (int k = 0; k < kModelsPerFamily; ++k) {
            cell.er.per_model.push_back(error_rate(per_model[k], eval_set.labels));
            cell.ce.per_model.push_back(cross_entropy(per_model[k], eval_set.labels));
          }
          cell.er.selected = argmin_lowest(cell.er.per_model);
          cell.ce.selected = argmin_lowest(cell.ce.per_model);

          table.cells.push_back(cell);
          if (rep == 0)
            progress("select: " + cell.display_name() + " N=" + std::to_string(eval_size) +
                     " -> CRC M" + std::to_string(cell.crc.selected) + " (S=" +
                     format_value(cell.selected_crc_score) + "), ER M" +
                     std::to_string(cell.er.selected) + ", CE M" +
                     std::to_string(cell.ce.selected));

          auto& entry = sel[name + "-N" + std::to_string(eval_size) +
                            (rep > 0 ? "-r" + std::to_string(rep) : "")];
          entry["subsample_seed"] = cell.subsample_seed;
          entry["crc_selected"] = cell.crc.selected;
          entry["er_selected"] = cell.er.selected;
          entry["ce_selected"] = cell.ce.selected;
          entry["selected_crc_score"] = cell.selected_crc_score;
        }
      }
    }
  }

  save_selection_table(table, plan.selection_path());
  detail::save_manifest(manifest, plan.manifest_path());
  return table;
}

// --- report ---------------------------------------------------------------

inline std::string run_report(const ExperimentPlan& plan, const SelectionResultTable& table,
                              const ProgressFn& progress = default_progress) {
  plan.validate();
  const auto dir = plan.reports_dir();
  std::filesystem::create_directories(dir);

  // Report whatever the select stage actually produced; the table is the
  // source of truth for eval sizes so a standalone `report` run needs no
  // knowledge of the original plan.
  std::vector<std::size_t> eval_sizes;
  for (const SelectionCell& c : table.cells)
    if (std::find(eval_sizes.begin(), eval_sizes.end(), c.eval_size) == eval_sizes.end())
      eval_sizes.push_back(c.eval_size);

  write_results_csv(table, dir / "results.csv", false);
  progress("report: wrote " + (dir / "results.csv").string());

  bool has_repeats = false;
  for (const SelectionCell& c : table.cells) has_repeats |= c.repeat != 0;
  if (has_repeats) {
    write_results_csv(table, dir / "results_repeats.csv", true);
    progress("report: wrote " + (dir / "results_repeats.csv").string());
  }

  for (std::size_t n : eval_sizes) {
    const std::string text = render_text_table(table, n);
    const auto path = dir / ("table_n" + std::to_string(n) + ".txt");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    progress("report: wrote " + path.string());
  }

  const std::string summary = render_summary(table, eval_sizes);
  {
    const auto path = dir / "summary.txt";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << summary;
  }
  return summary;
}

inline std::string run_report(const ExperimentPlan& plan,
                              const ProgressFn& progress = default_progress) {
  return run_report(plan, load_selection_table(plan.selection_path()), progress);
}

// --- full pipeline ----------------------------------------------------------

inline std::string run_all(const ExperimentPlan& plan,
                           const ProgressFn& progress = default_progress) {
  run_generate(plan, progress);
  run_train(plan, progress);
  const SelectionResultTable table = run_select(plan, progress);
  return run_report(plan, table, progress);
}

}  // namespace crc
