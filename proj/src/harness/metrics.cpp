#include "mmt/harness/metrics.hpp"

#include "mmt/model/network.hpp"

#include <stdexcept>

namespace mmt::harness {

ConfusionMatrix confusion_matrix(std::span<const int> labels, std::span<const int> predictions, int classes) {
  if (labels.size() != predictions.size()) throw std::invalid_argument("confusion_matrix: label/prediction count differ");
  if (classes < 1) throw std::invalid_argument("confusion_matrix: classes must be positive");
  ConfusionMatrix m = ConfusionMatrix::Zero(classes, classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes || predictions[i] < 0 || predictions[i] >= classes)
      throw std::out_of_range("confusion_matrix: class index outside [0, " + std::to_string(classes) + ")");
    ++m(labels[i], predictions[i]);
  }
  return m;
}

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

ClassMetrics metrics(const ConfusionMatrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("metrics: confusion matrix must be square");
  if ((m.array() < 0).any()) throw std::invalid_argument("metrics: negative confusion entry");
  const Index C = m.rows();
  ClassMetrics r;
  r.precision.resize(C);
  r.recall.resize(C);
  r.f1.resize(C);
  for (Index c = 0; c < C; ++c) {
    const double tp = double(m(c, c));
    r.precision(c) = ratio(tp, double(m.col(c).sum()));
    r.recall(c) = ratio(tp, double(m.row(c).sum()));
    r.f1(c) = ratio(2.0 * r.precision(c) * r.recall(c), r.precision(c) + r.recall(c));
  }
  r.precision_macro = r.precision.mean();
  r.recall_macro = r.recall.mean();
  r.f1_macro = r.f1.mean();
  return r;
}

EvalReport make_report(std::span<const int> labels, std::span<const int> predictions, int classes) {
  if (labels.empty()) throw std::invalid_argument("evaluate: empty dataset");
  EvalReport r;
  r.confusion = confusion_matrix(labels, predictions, classes);
  r.per_class = metrics(r.confusion);
  r.samples = Index(labels.size());
  r.accuracy = double(r.confusion.trace()) / double(r.confusion.sum());
  return r;
}

int argmax(const Matrix& logits) {
  if (logits.size() == 0) throw std::invalid_argument("argmax: empty logits");
  Index best = 0;
  for (Index i = 1; i < logits.size(); ++i)
    if (logits.data()[i] > logits.data()[best]) best = i;
  return int(best);
}

EvalReport evaluate(const model::ModelParams& params, const model::ModelConfig& config,
                    std::span<const data::ProcessedSample> dataset) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<int> labels, predictions;
  labels.reserve(dataset.size());
  predictions.reserve(dataset.size());
  for (const auto& s : dataset) {
    labels.push_back(s.label);
    predictions.push_back(argmax(model::predict_logits(params, config, s)));
  }
  return make_report(labels, predictions, int(config.classes));
}

}  // namespace mmt::harness
