#pragma once

#include "mmt/dataio/csv_io.hpp"
#include "mmt/dataio/preprocess.hpp"
#include "mmt/dataio/synthetic.hpp"
#include "mmt/harness/metrics.hpp"
#include "mmt/model/checkpoint.hpp"
#include "mmt/optim/optimizer.hpp"

#include <filesystem>
#include <optional>

namespace mmt::harness {

/// Per-variant learning rate and regularization rates.
struct VariantPreset {
  double lr = 0.0;
  double drop = 0.0;
  double stochastic_depth = 0.0;
  double attn_drop = 0.0;
};

VariantPreset variant_preset(model::Variant variant);
void apply_preset(model::Variant variant, model::ModelConfig& model, optim::OptimConfig& optim);

/// Where samples come from: manifests on disk or the synthetic generator.
struct DataConfig {
  enum class Source { files, synthetic };
  Source source = Source::files;
  std::filesystem::path manifest;
  std::filesystem::path val_manifest;       // empty: split by val_subjects
  std::vector<std::string> val_subjects;
  data::LoadOptions load;
  data::SyntheticConfig synthetic;
};

struct RunConfig {
  model::ModelConfig model;
  optim::OptimConfig optim;
  data::PreprocessConfig preprocess;
  DataConfig data;
  Index batch_size = 16;
  int epochs = 30;
  std::uint64_t seed = 0;
  /// Evaluate on the validation split every this many epochs (and always
  /// after the last one); 0 evaluates after the last epoch only.
  int validate_every = 1;
  std::filesystem::path out = "run";

  /// Copies preprocessing sizes into the model config and checks everything.
  void resolve();
  void validate() const;
};

struct RawSplit {
  std::vector<data::ActionSample> train;
  std::vector<data::ActionSample> val;
};

RawSplit load_raw_split(const DataConfig& config);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;
};

struct RunLog {
  /// Eval-mode accuracies of the initial parameters.
  double initial_train_loss = 0.0;
  double initial_val_accuracy = 0.0;
  std::vector<EpochRecord> epochs;
  std::int64_t steps = 0;
  std::int64_t gradient_evaluations = 0;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  /// Evaluation of the final parameters on the validation split.
  EvalReport final_report;
};

struct TrainResult {
  RunLog log;
  model::Checkpoint best;
  model::Checkpoint last;
  /// Wall-clock seconds per epoch; kept out of RunLog so logs compare bitwise.
  std::vector<double> epoch_seconds;
};

/// Raised when a loss or gradient turns non-finite; carries the last
/// parameters that produced a finite step.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, model::Checkpoint last_good)
      : NumericalError(what), last_good_(std::move(last_good)) {}
  const model::Checkpoint& last_good() const { return last_good_; }

 private:
  model::Checkpoint last_good_;
};

/// Seeded mini-batch training with cosine-annealed SGD or ASAM and
/// best-validation checkpointing. `run.optim.total_steps` is derived from
/// epochs and batch count.
TrainResult train(const RunConfig& run, std::span<const data::ProcessedSample> train_set,
                  std::span<const data::ProcessedSample> val_set);

/// Batch-order permutation for an epoch.
std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n);

std::string run_log_json(const RunLog& log);
std::string eval_report_json(const EvalReport& report);
/// Header row of class ids, then one row of counts per true class.
std::string confusion_csv(const ConfusionMatrix& confusion);

}  // namespace mmt::harness
