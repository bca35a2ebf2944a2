#include "mmt/harness/training.hpp"

#include "mmt/model/network.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

namespace mmt::harness {

using data::ProcessedSample;
using model::Variant;

VariantPreset variant_preset(Variant variant) {
  switch (variant) {
    case Variant::skeleton:
    case Variant::accel:
      return {0.02, 0.0, 0.2, 0.0};
    case Variant::simple_fusion:
      return {0.0025, 0.05, 0.2, 0.05};
    case Variant::crossview_fusion:
      return {0.0025, 0.0, 0.2, 0.0};
  }
  throw std::invalid_argument("unknown variant");
}

void apply_preset(Variant variant, model::ModelConfig& model, optim::OptimConfig& optim) {
  const VariantPreset p = variant_preset(variant);
  model.variant = variant;
  model.drop = p.drop;
  model.stochastic_depth = p.stochastic_depth;
  model.attn_drop = p.attn_drop;
  optim.base_lr = p.lr;
}

void RunConfig::resolve() {
  model.frames = preprocess.target_frames;
  model.accel_tokens = preprocess.accel_tokens;
  preprocess.seed = seed;
}

void RunConfig::validate() const {
  model.validate();
  optim.validate();
  preprocess.validate();
  if (batch_size < 1) throw std::invalid_argument("run.batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("run.epochs must be >= 0");
  if (validate_every < 0) throw std::invalid_argument("run.validate_every must be >= 0");
  if (model.frames != preprocess.target_frames || model.accel_tokens != preprocess.accel_tokens)
    throw std::invalid_argument("model.frames/accel_tokens must equal preprocess.target_frames/accel_tokens");
}

RawSplit load_raw_split(const DataConfig& config) {
  RawSplit split;
  if (config.source == DataConfig::Source::synthetic) {
    data::SyntheticSplit s = data::generate_synthetic(config.synthetic);
    split.train = std::move(s.train);
    split.val = std::move(s.val);
    return split;
  }
  if (config.manifest.empty()) throw data::DataError("data.manifest is not set");
  std::vector<data::ActionSample> all = data::load_samples(config.manifest, config.load);
  if (!config.val_manifest.empty()) {
    data::LoadOptions opts = config.load;
    if (opts.joints == 0 && !all.empty()) opts.joints = all.front().skeleton.num_joints();
    split.train = std::move(all);
    split.val = data::load_samples(config.val_manifest, opts);
  } else {
    const std::set<std::string> held(config.val_subjects.begin(), config.val_subjects.end());
    for (auto& s : all) (held.count(s.subject) ? split.val : split.train).push_back(std::move(s));
  }
  if (split.train.empty()) throw data::DataError("training split is empty");
  return split;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng(seed).fork("shuffle").fork(std::uint64_t(epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

namespace {

void check_dataset(const model::ModelConfig& c, std::span<const ProcessedSample> set, const char* what) {
  for (const auto& s : set) {
    if (s.label < 0 || s.label >= c.classes)
      throw data::DataError(std::string(what) + " sample " + s.id + ": label " + std::to_string(s.label) +
                            " outside [0, model.classes=" + std::to_string(c.classes) + ")");
    if (s.skeleton.shape() != Shape{c.frames, c.joints, 3})
      throw data::DataError(std::string(what) + " sample " + s.id + ": skeleton " + shape_string(s.skeleton.shape()) +
                            " does not match model.frames x model.joints x 3");
  }
}

model::Checkpoint snapshot(const RunConfig& run, const model::ModelParams& params, const optim::OptimState& state) {
  return {run.model, run.seed, std::uint64_t(state.step), params, state.momentum};
}

double eval_loss(const model::ModelParams& params, const model::ModelConfig& c, std::span<const ProcessedSample> set) {
  double total = 0.0;
  for (const auto& s : set) {
    const Matrix z = model::predict_logits(params, c, s);
    const double m = z.maxCoeff();
    total += m + std::log((z.array() - m).exp().sum()) - z(0, s.label);
  }
  return total / double(set.size());
}

}  // namespace

TrainResult train(const RunConfig& run_in, std::span<const ProcessedSample> train_set,
                  std::span<const ProcessedSample> val_set) {
  RunConfig run = run_in;
  run.validate();
  if (train_set.empty()) throw data::DataError("training split is empty");
  if (val_set.empty()) throw data::DataError("validation split is empty");
  check_dataset(run.model, train_set, "train");
  check_dataset(run.model, val_set, "validation");

  const std::size_t n = train_set.size();
  const std::size_t B = std::size_t(run.batch_size);
  const std::size_t batches = (n + B - 1) / B;
  run.optim.total_steps = std::int64_t(run.epochs) * std::int64_t(batches);

  const Rng root(run.seed);
  Rng init_rng = root.fork("init");
  model::ModelParams params = model::init_params(run.model, init_rng);
  optim::OptimState state = optim::OptimState::for_params(params);

  TrainResult result;
  RunLog& log = result.log;
  log.initial_train_loss = eval_loss(params, run.model, train_set);
  log.final_report = evaluate(params, run.model, val_set);
  log.initial_val_accuracy = log.final_report.accuracy;
  log.best_val_accuracy = log.initial_val_accuracy;
  result.best = snapshot(run, params, state);

  const Rng step_root = root.fork("step");
  for (int epoch = 1; epoch <= run.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::size_t> order = epoch_order(run.seed, epoch, n);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = optim::cosine_lr(state.step, run.optim);
    double loss_sum = 0.0;
    std::size_t correct = 0;

    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * B, hi = std::min(n, lo + B);
      const double weight = 1.0 / double(hi - lo);
      const Rng batch_rng = step_root.fork(std::uint64_t(state.step));
      int calls = 0;
      const optim::LossClosure closure = [&](const model::ModelParams& p, model::Gradients& grads) {
        const bool first = calls++ == 0;
        double loss = 0.0;
        for (std::size_t k = lo; k < hi; ++k) {
          const ProcessedSample& s = train_set[order[k]];
          model::ForwardOptions opts;
          opts.training = true;
          opts.rng = batch_rng.fork(std::string_view(s.id));
          const model::LossAndGradients lg = model::loss_and_gradients(p, run.model, s, opts, weight);
          loss += lg.loss;
          for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += lg.gradients[i];
          if (first) {
            loss_sum += lg.loss / weight;
            if (argmax(lg.logits) == s.label) ++correct;
          }
        }
        return loss;
      };
      const double lr = optim::cosine_lr(state.step, run.optim);
      try {
        const optim::StepReport report = optim::asam_step(params, closure, state, lr, run.optim);
        log.gradient_evaluations += report.gradient_evaluations;
      } catch (const NumericalError& e) {
        throw TrainingDiverged(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", step " +
                                   std::to_string(state.step),
                               snapshot(run, params, state));
      }
    }
    rec.train_loss = loss_sum / double(n);
    rec.train_accuracy = double(correct) / double(n);

    const bool validate = epoch == run.epochs || (run.validate_every > 0 && epoch % run.validate_every == 0);
    if (validate) {
      log.final_report = evaluate(params, run.model, val_set);
      rec.val_accuracy = log.final_report.accuracy;
      if (log.final_report.accuracy > log.best_val_accuracy) {
        log.best_val_accuracy = log.final_report.accuracy;
        log.best_epoch = epoch;
        result.best = snapshot(run, params, state);
      }
    }
    log.epochs.push_back(rec);
    result.epoch_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  log.steps = state.step;
  result.last = snapshot(run, params, state);
  return result;
}

namespace {

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["samples"] = r.samples;
  j["accuracy"] = r.accuracy;
  j["precision_macro"] = r.per_class.precision_macro;
  j["recall_macro"] = r.per_class.recall_macro;
  j["f1_macro"] = r.per_class.f1_macro;
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  j["precision"] = vec(r.per_class.precision);
  j["recall"] = vec(r.per_class.recall);
  j["f1"] = vec(r.per_class.f1);
  std::vector<std::vector<std::int64_t>> m(std::size_t(r.confusion.rows()));
  for (Index i = 0; i < r.confusion.rows(); ++i)
    for (Index k = 0; k < r.confusion.cols(); ++k) m[std::size_t(i)].push_back(r.confusion(i, k));
  j["confusion"] = m;
  return j;
}

}  // namespace

std::string eval_report_json(const EvalReport& report) { return report_to_json(report).dump(2) + "\n"; }

std::string run_log_json(const RunLog& log) {
  nlohmann::ordered_json j;
  j["initial_train_loss"] = log.initial_train_loss;
  j["initial_val_accuracy"] = log.initial_val_accuracy;
  auto& epochs = j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : log.epochs) {
    nlohmann::ordered_json r;
    r["epoch"] = e.epoch;
    r["lr"] = e.lr;
    r["train_loss"] = e.train_loss;
    r["train_accuracy"] = e.train_accuracy;
    r["val_accuracy"] = e.val_accuracy ? nlohmann::ordered_json(*e.val_accuracy) : nlohmann::ordered_json(nullptr);
    epochs.push_back(r);
  }
  j["steps"] = log.steps;
  j["gradient_evaluations"] = log.gradient_evaluations;
  j["best_epoch"] = log.best_epoch;
  j["best_val_accuracy"] = log.best_val_accuracy;
  j["final"] = report_to_json(log.final_report);
  return j.dump(2) + "\n";
}

std::string confusion_csv(const ConfusionMatrix& m) {
  auto line = [](auto cell, Index n) {
    std::string s;
    for (Index c = 0; c < n; ++c) s += (c ? "," : "") + std::to_string(cell(c));
    return s + "\n";
  };
  std::string out = line([](Index c) { return c; }, m.cols());
  for (Index r = 0; r < m.rows(); ++r) out += line([&](Index c) { return m(r, c); }, m.cols());
  return out;
}

}  // namespace mmt::harness
