#include "mmt/cli/commands.hpp"

#include "mmt/cli/config_file.hpp"
#include "mmt/harness/experiments.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <ostream>

namespace mmt::cli {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "run configuration file (key = value)");
  cmd->add_option("--set", o.overrides, "override a config key, e.g. --set optim.asam_rho=0.5 (repeatable)");
  cmd->add_option("--seed", o.seed, "seed; overrides run.seed");
  cmd->add_option("--out", o.out, "output directory; overrides run.out");
}

LoadedConfig resolve_config(const CommonOptions& o) {
  ConfigBuilder b;
  if (!o.config.empty()) b.load_file(o.config);
  for (const auto& s : o.overrides) b.apply_override(s);
  if (o.seed) b.apply({"run.seed", std::to_string(*o.seed), "--seed"});
  if (!o.out.empty()) b.apply({"run.out", o.out, "--out"});
  return b.finish();
}

/// Files are staged in memory and written only once the command succeeded.
class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}
  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }
  void commit(std::ostream& out) const {
    fs::create_directories(dir_);
    for (const auto& [name, content] : files_) {
      data::write_file_atomic(dir_ / name, content);
      out << "wrote " << (dir_ / name).string() << "\n";
    }
  }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Fills model.joints and model.classes from the data unless given.
void fit_model_to_data(LoadedConfig& cfg, const harness::RawSplit& split) {
  if (!cfg.explicit_keys.count("model.joints") && !split.train.empty())
    cfg.run.model.joints = split.train.front().skeleton.num_joints();
  if (!cfg.explicit_keys.count("model.classes")) {
    int top = 0;
    for (const auto* set : {&split.train, &split.val})
      for (const auto& s : *set) top = std::max(top, s.label);
    cfg.run.model.classes = top + 1;
  }
  cfg.run.validate();
}

harness::RawSplit load_split(LoadedConfig& cfg) {
  harness::RawSplit split = harness::load_raw_split(cfg.run.data);
  if (split.val.empty()) throw data::DataError("validation split is empty; set data.val_manifest or data.val_subjects");
  fit_model_to_data(cfg, split);
  return split;
}

int cmd_synth(const CommonOptions& o, const std::string& mode, std::ostream& out) {
  CommonOptions opts = o;
  if (!mode.empty()) opts.overrides.push_back("synth.mode=" + mode);
  LoadedConfig cfg = resolve_config(opts);
  data::SyntheticConfig sc = cfg.run.data.synthetic;
  sc.seed = cfg.run.seed;
  const data::SyntheticSplit split = data::generate_synthetic(sc);
  const fs::path dir = cfg.run.out;
  data::write_samples(split.train, dir, "train.csv");
  data::write_samples(split.val, dir, "val.csv");
  Artifacts a(dir);
  a.add("resolved_config.cfg", resolved_config_text(cfg.run));
  a.commit(out);
  out << "synthesized " << split.train.size() << " training and " << split.val.size() << " validation samples\n";
  return kOk;
}

std::string processed_skeleton_csv(std::span<const data::ProcessedSample> set) {
  std::string s = "sample_id,frame,joint,x,y,z\n";
  for (const auto& p : set) {
    const Index J = p.skeleton.shape()[1];
    for (Index r = 0; r < p.skeleton.rows(); ++r) {
      s += p.id + "," + std::to_string(r / J) + "," + std::to_string(r % J);
      for (int c = 0; c < 3; ++c) s += "," + num(p.skeleton.data()(r, c));
      s += "\n";
    }
  }
  return s;
}

std::string processed_accel_csv(std::span<const data::ProcessedSample> set) {
  std::string s = "sample_id,token,ax,ay,az,filled\n";
  for (const auto& p : set) {
    for (Index r = 0; r < p.accel.rows(); ++r) {
      s += p.id + "," + std::to_string(r);
      for (int c = 0; c < 3; ++c) s += "," + num(p.accel.data()(r, c));
      s += std::string(",") + (p.accel_filled ? "1" : "0") + "\n";
    }
  }
  return s;
}

int cmd_preprocess(const CommonOptions& o, std::ostream& out) {
  LoadedConfig cfg = resolve_config(o);
  const harness::RawSplit raw = load_split(cfg);
  const data::PreparedSplit split = data::prepare_split(raw.train, raw.val, cfg.run.preprocess);
  nlohmann::ordered_json stats;
  stats["skeleton_std"] = split.norm.skeleton_std;
  stats["accel_mean"] = std::vector<double>(split.norm.accel_mean.data(), split.norm.accel_mean.data() + 3);
  stats["accel_std"] = std::vector<double>(split.norm.accel_std.data(), split.norm.accel_std.data() + 3);
  stats["root_joint"] = split.norm.root_joint;
  stats["provenance"] = std::vector<std::string>(split.norm.provenance.begin(), split.norm.provenance.end());
  Artifacts a(cfg.run.out);
  a.add("train_skeleton.csv", processed_skeleton_csv(split.train));
  a.add("train_accel.csv", processed_accel_csv(split.train));
  a.add("val_skeleton.csv", processed_skeleton_csv(split.eval));
  a.add("val_accel.csv", processed_accel_csv(split.eval));
  a.add("norm_stats.json", stats.dump(2) + "\n");
  a.add("resolved_config.cfg", resolved_config_text(cfg.run));
  a.commit(out);
  return kOk;
}

int cmd_train(const CommonOptions& o, std::ostream& out) {
  LoadedConfig cfg = resolve_config(o);
  const harness::RawSplit raw = load_split(cfg);
  const data::PreparedSplit split = data::prepare_split(raw.train, raw.val, cfg.run.preprocess);
  const harness::TrainResult r = harness::train(cfg.run, split.train, split.eval);
  nlohmann::ordered_json timing;
  timing["epoch_seconds"] = r.epoch_seconds;
  Artifacts a(cfg.run.out);
  a.add("run_log.json", harness::run_log_json(r.log));
  a.add("timing.json", timing.dump(2) + "\n");
  a.add("best.ckpt", model::encode_checkpoint(r.best));
  a.add("last.ckpt", model::encode_checkpoint(r.last));
  a.add("eval_report.json", harness::eval_report_json(r.log.final_report));
  a.add("confusion.csv", harness::confusion_csv(r.log.final_report.confusion));
  a.add("resolved_config.cfg", resolved_config_text(cfg.run));
  a.commit(out);
  out << "final val accuracy " << num(r.log.final_report.accuracy) << ", best " << num(r.log.best_val_accuracy)
      << " at epoch " << r.log.best_epoch << "\n";
  return kOk;
}

int cmd_evaluate(const CommonOptions& o, const std::string& checkpoint, std::ostream& out) {
  if (checkpoint.empty()) throw ConfigError("evaluate needs --checkpoint");
  LoadedConfig cfg = resolve_config(o);
  const model::Checkpoint ck = model::load_checkpoint(checkpoint);
  if (ck.config.frames != cfg.run.preprocess.target_frames || ck.config.accel_tokens != cfg.run.preprocess.accel_tokens)
    throw ConfigError("checkpoint frames/accel_tokens differ from preprocess.target_frames/accel_tokens");
  const harness::RawSplit raw = load_split(cfg);
  // Statistics come from the training split exactly as during training.
  const data::PreparedSplit split = data::prepare_split(raw.train, raw.val, cfg.run.preprocess);
  const harness::EvalReport report = harness::evaluate(ck.params, ck.config, split.eval);
  Artifacts a(cfg.run.out);
  a.add("eval_report.json", harness::eval_report_json(report));
  a.add("confusion.csv", harness::confusion_csv(report.confusion));
  a.add("resolved_config.cfg", resolved_config_text(cfg.run));
  a.commit(out);
  out << "accuracy " << num(report.accuracy) << " on " << report.samples << " samples\n";
  return kOk;
}

int cmd_losocv(const CommonOptions& o, std::ostream& out) {
  LoadedConfig cfg = resolve_config(o);
  harness::RawSplit raw = harness::load_raw_split(cfg.run.data);
  fit_model_to_data(cfg, raw);
  std::vector<data::ActionSample> all = std::move(raw.train);
  for (auto& s : raw.val) all.push_back(std::move(s));
  const harness::LosocvResult r = harness::losocv(all, cfg.run);
  Artifacts a(cfg.run.out);
  a.add("losocv.csv", harness::losocv_csv(r, int(cfg.run.model.classes)));
  a.add("resolved_config.cfg", resolved_config_text(cfg.run));
  a.commit(out);
  out << "mean accuracy " << num(r.mean_accuracy) << " over " << r.folds.size() << " folds\n";
  return kOk;
}

int cmd_ablate(const CommonOptions& o, std::ostream& out) {
  LoadedConfig cfg = resolve_config(o);
  const harness::RawSplit raw = load_split(cfg);
  const data::PreparedSplit split = data::prepare_split(raw.train, raw.val, cfg.run.preprocess);
  const std::set<std::string> given = cfg.explicit_keys;
  const auto cell = [&given](model::Variant v, bool, harness::RunConfig& run) {
    const harness::VariantPreset p = harness::variant_preset(v);
    if (!given.count("optim.base_lr")) run.optim.base_lr = p.lr;
    if (!given.count("model.drop")) run.model.drop = p.drop;
    if (!given.count("model.attn_drop")) run.model.attn_drop = p.attn_drop;
    if (!given.count("model.stochastic_depth")) run.model.stochastic_depth = p.stochastic_depth;
  };
  const auto rows = harness::ablation_suite(split, cfg.run, cell);
  Artifacts a(cfg.run.out);
  a.add("ablation.csv", harness::ablation_csv(rows, int(cfg.run.model.classes)));
  a.add("resolved_config.cfg", resolved_config_text(cfg.run));
  a.commit(out);
  for (const auto& r : rows)
    out << model::to_string(r.variant) << (r.asam ? " asam " : " sgd  ") << num(r.report.accuracy) << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal skeleton + acceleration transformer toolkit"};
  app.footer(
      "Configuration precedence: --seed/--out, then --set overrides, then the --config file, then defaults.\n"
      "Learning rate and drop rates default to the per-variant preset unless given.\n"
      "Exit codes: 0 success, 1 configuration or data error, 2 numerical failure.");
  app.require_subcommand(1);
  CommonOptions common;
  std::string mode, checkpoint;
  bool show_keys = false;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset (train.csv, val.csv)");
  add_common(synth, common);
  synth->add_option("--mode", mode, "separable | xor");
  CLI::App* preprocess = app.add_subcommand("preprocess", "write normalized tensors and statistics");
  add_common(preprocess, common);
  CLI::App* train = app.add_subcommand("train", "train one model; writes run_log.json, checkpoints, reports");
  add_common(train, common);
  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on the validation split");
  add_common(evaluate, common);
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  CLI::App* losocv = app.add_subcommand("losocv", "leave-one-subject-out cross validation");
  add_common(losocv, common);
  CLI::App* ablate = app.add_subcommand("ablate", "4 variants x ASAM on/off comparison");
  add_common(ablate, common);
  CLI::App* keys = app.add_subcommand("config-keys", "list every configuration key with its default");
  keys->callback([&] { show_keys = true; });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigOrDataError;
  }

  try {
    if (show_keys) {
      out << config_reference();
      return kOk;
    }
    if (synth->parsed()) return cmd_synth(common, mode, out);
    if (preprocess->parsed()) return cmd_preprocess(common, out);
    if (train->parsed()) return cmd_train(common, out);
    if (evaluate->parsed()) return cmd_evaluate(common, checkpoint, out);
    if (losocv->parsed()) return cmd_losocv(common, out);
    if (ablate->parsed()) return cmd_ablate(common, out);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kConfigOrDataError;
  }
  return kConfigOrDataError;
}

}  // namespace mmt::cli
