#pragma once

#include "mmt/harness/training.hpp"

#include <functional>

namespace mmt::harness {

struct FoldResult {
  std::string subject;
  std::set<std::string> train_subjects;
  std::vector<std::string> test_ids;
  EvalReport report;
};

struct LosocvResult {
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
  double mean_precision_macro = 0.0;
  double mean_recall_macro = 0.0;
  double mean_f1_macro = 0.0;
};

/// One fold per subject (sorted by id). Each fold recomputes fill and
/// normalization statistics from its training subjects and reports the
/// final parameters on the held-out subject.
LosocvResult losocv(std::span<const data::ActionSample> dataset, const RunConfig& run_template);

/// `fold,subject,accuracy,precision_macro,recall_macro,f1_macro,f1_class_<k>...`
/// plus a final `mean` row.
std::string losocv_csv(const LosocvResult& result, int classes);

struct AblationRow {
  model::Variant variant = model::Variant::skeleton;
  bool asam = false;
  double best_val_accuracy = 0.0;
  EvalReport report;  // final parameters on the validation split
};

/// Hyperparameters for one ablation cell; the default applies variant_preset.
using CellConfig = std::function<void(model::Variant, bool asam, RunConfig&)>;

/// All four variants x {ASAM on, off} on one prepared split, in a fixed
/// order with matched seeds and epochs.
std::vector<AblationRow> ablation_suite(const data::PreparedSplit& split, const RunConfig& base,
                                        const CellConfig& cell = {});

/// `variant,asam,accuracy,precision_macro,recall_macro,f1_macro,best_val_accuracy,f1_class_<k>...`
std::string ablation_csv(const std::vector<AblationRow>& rows, int classes);

}  // namespace mmt::harness
