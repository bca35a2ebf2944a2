#include "mmt/harness/experiments.hpp"

#include <cstdio>

namespace mmt::harness {

LosocvResult losocv(std::span<const data::ActionSample> dataset, const RunConfig& run_template) {
  const std::set<std::string> subjects = data::subjects_of(dataset);
  if (subjects.size() < 2) throw data::DataError("losocv needs at least 2 subjects, found " + std::to_string(subjects.size()));
  LosocvResult result;
  for (const std::string& subject : subjects) {
    std::vector<data::ActionSample> train_raw, test_raw;
    for (const auto& s : dataset) (s.subject == subject ? test_raw : train_raw).push_back(s);
    RunConfig run = run_template;
    run.resolve();
    const data::PreparedSplit split = data::prepare_split(train_raw, test_raw, run.preprocess);
    FoldResult fold;
    fold.subject = subject;
    fold.train_subjects = data::subjects_of(std::span<const data::ActionSample>(train_raw));
    if (split.norm.provenance != fold.train_subjects || split.norm.provenance.count(subject) != 0)
      throw std::logic_error("losocv: normalization statistics for fold " + subject + " leak held-out data");
    for (const auto& s : test_raw) fold.test_ids.push_back(s.id);
    run.validate_every = 0;
    fold.report = train(run, split.train, split.eval).log.final_report;
    result.folds.push_back(std::move(fold));
  }
  const double k = double(result.folds.size());
  for (const auto& f : result.folds) {
    result.mean_accuracy += f.report.accuracy / k;
    result.mean_precision_macro += f.report.per_class.precision_macro / k;
    result.mean_recall_macro += f.report.per_class.recall_macro / k;
    result.mean_f1_macro += f.report.per_class.f1_macro / k;
  }
  return result;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string class_header(int classes) {
  std::string h;
  for (int c = 0; c < classes; ++c) h += ",f1_class_" + std::to_string(c);
  return h;
}

std::string class_f1(const EvalReport& r, int classes) {
  std::string out;
  for (int c = 0; c < classes; ++c) out += "," + num(c < r.per_class.f1.size() ? r.per_class.f1(c) : 0.0);
  return out;
}

}  // namespace

std::string losocv_csv(const LosocvResult& result, int classes) {
  std::string out = "fold,subject,accuracy,precision_macro,recall_macro,f1_macro" + class_header(classes) + "\n";
  Eigen::VectorXd mean_f1 = Eigen::VectorXd::Zero(classes);
  for (std::size_t i = 0; i < result.folds.size(); ++i) {
    const FoldResult& f = result.folds[i];
    const auto& m = f.report.per_class;
    out += std::to_string(i) + "," + f.subject + "," + num(f.report.accuracy) + "," + num(m.precision_macro) + "," +
           num(m.recall_macro) + "," + num(m.f1_macro) + class_f1(f.report, classes) + "\n";
    for (int c = 0; c < classes && c < m.f1.size(); ++c) mean_f1(c) += m.f1(c) / double(result.folds.size());
  }
  out += "mean,all," + num(result.mean_accuracy) + "," + num(result.mean_precision_macro) + "," +
         num(result.mean_recall_macro) + "," + num(result.mean_f1_macro);
  for (int c = 0; c < classes; ++c) out += "," + num(mean_f1(c));
  return out + "\n";
}

std::vector<AblationRow> ablation_suite(const data::PreparedSplit& split, const RunConfig& base, const CellConfig& cell) {
  std::vector<AblationRow> rows;
  for (model::Variant v : model::kAllVariants) {
    for (bool asam : {true, false}) {
      RunConfig run = base;
      if (cell) {
        run.model.variant = v;
        cell(v, asam, run);
      } else {
        apply_preset(v, run.model, run.optim);
      }
      run.model.variant = v;
      run.optim.asam_enabled = asam;
      const TrainResult r = train(run, split.train, split.eval);
      rows.push_back({v, asam, r.log.best_val_accuracy, r.log.final_report});
    }
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows, int classes) {
  std::string out = "variant,asam,accuracy,precision_macro,recall_macro,f1_macro,best_val_accuracy" +
                    class_header(classes) + "\n";
  for (const auto& r : rows) {
    const auto& m = r.report.per_class;
    out += model::to_string(r.variant) + "," + (r.asam ? "on" : "off") + "," + num(r.report.accuracy) + "," +
           num(m.precision_macro) + "," + num(m.recall_macro) + "," + num(m.f1_macro) + "," +
           num(r.best_val_accuracy) + class_f1(r.report, classes) + "\n";
  }
  return out;
}

}  // namespace mmt::harness
