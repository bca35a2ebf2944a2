#pragma once

#include "mmt/dataio/sample.hpp"
#include "mmt/model/params.hpp"

#include <span>

namespace mmt::harness {

/// Rows are true classes, columns predicted classes.
using ConfusionMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

ConfusionMatrix confusion_matrix(std::span<const int> labels, std::span<const int> predictions, int classes);

struct ClassMetrics {
  Eigen::VectorXd precision;
  Eigen::VectorXd recall;
  Eigen::VectorXd f1;
  double precision_macro = 0.0;
  double recall_macro = 0.0;
  double f1_macro = 0.0;
};

/// Per-class and macro precision/recall/F1. A zero denominator yields 0.
ClassMetrics metrics(const ConfusionMatrix& confusion);

struct EvalReport {
  double accuracy = 0.0;
  ClassMetrics per_class;
  ConfusionMatrix confusion;
  Index samples = 0;
};

EvalReport make_report(std::span<const int> labels, std::span<const int> predictions, int classes);

/// Index of the largest logit; ties go to the lowest index.
int argmax(const Matrix& logits);

/// Eval-mode predictions and report over a processed dataset.
EvalReport evaluate(const model::ModelParams& params, const model::ModelConfig& config,
                    std::span<const data::ProcessedSample> dataset);

}  // namespace mmt::harness
