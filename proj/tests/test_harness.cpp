#include "doctest.h"

#include "mmt/harness/experiments.hpp"
#include "mmt/model/network.hpp"

#include <algorithm>
#include <map>

using namespace mmt;
using namespace mmt::harness;

namespace {

// Tiny synthetic run: a few seconds end to end on one core.
RunConfig tiny_run(model::Variant v, data::SyntheticMode mode = data::SyntheticMode::separable) {
  RunConfig run;
  run.data.source = DataConfig::Source::synthetic;
  auto& s = run.data.synthetic;
  s.mode = mode;
  s.classes = 3;
  s.subjects = 3;
  s.val_subjects = 1;
  s.samples_per_class = 2;
  s.joints = 4;
  s.duration_s = 4.0;
  s.skeleton_rate_hz = 10.0;
  s.seed = 5;
  run.preprocess.target_frames = 6;
  run.preprocess.accel_tokens = 6;
  run.preprocess.moving_average_window = 3;
  run.model = model::ModelConfig::small(v);
  run.model.joints = 4;
  run.model.classes = mode == data::SyntheticMode::xor_task ? 2 : 3;
  run.optim.base_lr = 0.01;
  run.batch_size = 4;
  run.epochs = 2;
  run.seed = 11;
  run.resolve();
  return run;
}

data::PreparedSplit prepared(const RunConfig& run) {
  const RawSplit raw = load_raw_split(run.data);
  return data::prepare_split(raw.train, raw.val, run.preprocess);
}

}  // namespace

TEST_CASE("metrics closed forms") {
  ConfusionMatrix diag = ConfusionMatrix::Zero(2, 2);
  diag(0, 0) = 5;
  diag(1, 1) = 5;
  const ClassMetrics d = metrics(diag);
  CHECK(d.precision_macro == 1.0);
  CHECK(d.recall_macro == 1.0);
  CHECK(d.f1_macro == 1.0);

  ConfusionMatrix m(2, 2);
  m << 0, 5, 0, 5;
  const ClassMetrics r = metrics(m);
  CHECK(r.precision(0) == 0.0);
  CHECK(r.recall(0) == 0.0);
  CHECK(r.f1(0) == 0.0);
  CHECK(r.precision(1) == 0.5);
  CHECK(r.recall(1) == 1.0);
  CHECK(r.f1(1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  // Swapping class order swaps per-class values and keeps the macros.
  ConfusionMatrix p(2, 2);
  p << 5, 0, 5, 0;
  const ClassMetrics q = metrics(p);
  CHECK(q.f1(0) == r.f1(1));
  CHECK(q.f1(1) == r.f1(0));
  CHECK(q.f1_macro == r.f1_macro);
  CHECK(q.precision_macro == r.precision_macro);
}

TEST_CASE("single predicted class on a balanced two-class set") {
  const std::vector<int> labels = {0, 1, 0, 1, 0, 1};
  const std::vector<int> preds(6, 1);
  const EvalReport r = make_report(labels, preds, 2);
  CHECK(r.accuracy == 0.5);
  CHECK(r.per_class.f1_macro == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.samples == 6);
}

TEST_CASE("perfect predictions") {
  const std::vector<int> labels = {0, 1, 2, 2, 1};
  const EvalReport r = make_report(labels, labels, 3);
  CHECK(r.accuracy == 1.0);
  CHECK((r.per_class.f1.array() == 1.0).all());
  CHECK(r.confusion.diagonal().sum() == 5);
  CHECK(r.confusion.sum() == 5);
}

TEST_CASE("confusion matrix matches a counting oracle") {
  Rng rng(17);
  const int C = 5;
  std::vector<int> labels, preds;
  for (int i = 0; i < 1000; ++i) {
    labels.push_back(int(rng.below(C)));
    preds.push_back(int(rng.below(C)));
  }
  const EvalReport r = make_report(labels, preds, C);
  std::map<std::pair<int, int>, std::int64_t> counts;
  for (std::size_t i = 0; i < labels.size(); ++i) ++counts[{labels[i], preds[i]}];
  for (int a = 0; a < C; ++a)
    for (int b = 0; b < C; ++b) CHECK(r.confusion(a, b) == counts[{a, b}]);
  for (int c = 0; c < C; ++c) {
    CHECK(r.confusion.row(c).sum() == std::count(labels.begin(), labels.end(), c));
    CHECK(r.confusion.col(c).sum() == std::count(preds.begin(), preds.end(), c));
  }
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += labels[i] == preds[i];
  CHECK(r.accuracy == double(r.confusion.trace()) / double(r.confusion.sum()));
  CHECK(r.accuracy == double(hits) / 1000.0);
  for (double v : {r.per_class.precision_macro, r.per_class.recall_macro, r.per_class.f1_macro}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("argmax ties and evaluation errors") {
  Matrix z(1, 4);
  z << 0.5, 2.0, 2.0, -1.0;
  CHECK(argmax(z) == 1);
  z.setConstant(3.0);
  CHECK(argmax(z) == 0);
  CHECK_THROWS_WITH(make_report({}, {}, 2), doctest::Contains("empty"));
  const std::vector<int> l = {0}, p = {2};
  CHECK_THROWS_AS(make_report(l, p, 2), std::out_of_range);
}

TEST_CASE("presets") {
  CHECK(variant_preset(model::Variant::skeleton).lr == 0.02);
  CHECK(variant_preset(model::Variant::accel).lr == 0.02);
  CHECK(variant_preset(model::Variant::simple_fusion).lr == 0.0025);
  CHECK(variant_preset(model::Variant::simple_fusion).drop == 0.05);
  CHECK(variant_preset(model::Variant::simple_fusion).attn_drop == 0.05);
  CHECK(variant_preset(model::Variant::crossview_fusion).lr == 0.0025);
  CHECK(variant_preset(model::Variant::crossview_fusion).drop == 0.0);
  for (model::Variant v : model::kAllVariants) CHECK(variant_preset(v).stochastic_depth == 0.2);
}

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = epoch_order(3, 1, 20), b = epoch_order(3, 1, 20), c = epoch_order(3, 2, 20);
  CHECK(a == b);
  CHECK(a != c);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}

TEST_CASE("train: zero epochs, determinism, gradient evaluation count") {
  RunConfig run = tiny_run(model::Variant::crossview_fusion);
  const data::PreparedSplit split = prepared(run);

  run.epochs = 0;
  const TrainResult none = train(run, split.train, split.eval);
  CHECK(none.log.epochs.empty());
  CHECK(none.log.steps == 0);
  Rng init = Rng(run.seed).fork("init");
  const model::ModelParams fresh = model::init_params(run.model, init);
  for (std::size_t i = 0; i < fresh.size(); ++i) CHECK(none.last.params[i].value.data() == fresh[i].value.data());

  run.epochs = 2;
  const TrainResult a = train(run, split.train, split.eval);
  const TrainResult b = train(run, split.train, split.eval);
  CHECK(a.log.epochs.size() == 2);
  CHECK(run_log_json(a.log) == run_log_json(b.log));
  const std::int64_t batches = (std::int64_t(split.train.size()) + run.batch_size - 1) / run.batch_size;
  CHECK(a.log.steps == 2 * batches);
  CHECK(a.log.gradient_evaluations == 2 * a.log.steps);
  CHECK(a.log.epochs[0].lr == run.optim.base_lr);

  run.optim.asam_enabled = false;
  const TrainResult s = train(run, split.train, split.eval);
  CHECK(s.log.gradient_evaluations == s.log.steps);
  CHECK(run_log_json(s.log) != run_log_json(a.log));

  run.seed = 12;
  CHECK(run_log_json(train(run, split.train, split.eval).log) != run_log_json(s.log));
}

TEST_CASE("train rejects mismatched data") {
  RunConfig run = tiny_run(model::Variant::skeleton);
  const data::PreparedSplit split = prepared(run);
  run.model.joints = 5;
  CHECK_THROWS_WITH_AS(train(run, split.train, split.eval), doctest::Contains("model.joints"), data::DataError);
  run = tiny_run(model::Variant::skeleton);
  run.model.classes = 2;
  CHECK_THROWS_WITH(train(run, split.train, split.eval), doctest::Contains("label"));
  CHECK_THROWS_WITH(train(run, split.train, {}), doctest::Contains("empty"));
}

TEST_CASE("train reports divergence with the last good parameters") {
  RunConfig run = tiny_run(model::Variant::skeleton);
  run.optim.base_lr = 1e200;
  run.optim.asam_enabled = false;
  run.epochs = 3;
  const data::PreparedSplit split = prepared(run);
  try {
    train(run, split.train, split.eval);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    for (const auto& p : e.last_good().params) CHECK(p.value.all_finite());
  }
}

TEST_CASE("losocv partitions subjects without leakage") {
  RunConfig run = tiny_run(model::Variant::skeleton);
  run.epochs = 1;
  const RawSplit raw = load_raw_split(run.data);
  std::vector<data::ActionSample> all = raw.train;
  all.insert(all.end(), raw.val.begin(), raw.val.end());
  const LosocvResult r = losocv(all, run);
  const auto subjects = data::subjects_of(std::span<const data::ActionSample>(all));
  CHECK(r.folds.size() == subjects.size());
  std::map<std::string, int> seen;
  for (const auto& f : r.folds) {
    CHECK(f.train_subjects.count(f.subject) == 0);
    CHECK(f.train_subjects.size() + 1 == subjects.size());
    for (const auto& id : f.test_ids) ++seen[id];
    for (const auto& s : all)
      if (std::find(f.test_ids.begin(), f.test_ids.end(), s.id) != f.test_ids.end()) CHECK(s.subject == f.subject);
  }
  CHECK(seen.size() == all.size());
  for (const auto& [id, n] : seen) CHECK(n == 1);
  const std::string csv = losocv_csv(r, 3);
  CHECK(csv.rfind("fold,subject,accuracy,precision_macro,recall_macro,f1_macro,f1_class_0,f1_class_1,f1_class_2\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == long(r.folds.size()) + 2);
  CHECK_THROWS(losocv(raw.val, run));
}

TEST_CASE("ablation suite has eight matched rows") {
  RunConfig run = tiny_run(model::Variant::skeleton, data::SyntheticMode::xor_task);
  run.epochs = 1;
  const data::PreparedSplit split = prepared(run);
  const auto rows = ablation_suite(split, run);
  REQUIRE(rows.size() == 8);
  CHECK(rows[0].variant == model::Variant::skeleton);
  CHECK(rows[0].asam);
  CHECK_FALSE(rows[1].asam);
  CHECK(rows[7].variant == model::Variant::crossview_fusion);
  const std::string csv = ablation_csv(rows, 2);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
  CHECK(ablation_csv(ablation_suite(split, run), 2) == csv);
}

TEST_CASE("confusion csv layout") {
  ConfusionMatrix m(2, 2);
  m << 3, 1, 0, 4;
  CHECK(confusion_csv(m) == "0,1\n3,1\n0,4\n");
}
