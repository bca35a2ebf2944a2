#include "mmt/cli/config_file.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace mmt::cli {

namespace fs = std::filesystem;
using harness::RunConfig;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ConfigError(key + ": expected a number, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_list(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

struct Key {
  std::string name;
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& value, const fs::path& base)> set;
};

template <typename T>
Key number(std::string name, std::string doc, T& (*ref)(RunConfig&)) {
  return {name, std::move(doc),
          [ref](const RunConfig& r) {
            const T& v = ref(const_cast<RunConfig&>(r));
            if constexpr (std::is_floating_point_v<T>) return fmt(v);
            else return std::to_string(v);
          },
          [ref, name](RunConfig& r, const std::string& v, const fs::path&) { ref(r) = parse_number<T>(name, v); }};
}

Key flag(std::string name, std::string doc, bool& (*ref)(RunConfig&)) {
  return {name, std::move(doc), [ref](const RunConfig& r) { return std::string(ref(const_cast<RunConfig&>(r)) ? "true" : "false"); },
          [ref, name](RunConfig& r, const std::string& v, const fs::path&) { ref(r) = parse_bool(name, v); }};
}

Key path(std::string name, std::string doc, fs::path& (*ref)(RunConfig&)) {
  return {name, std::move(doc),
          [ref](const RunConfig& r) {
            const fs::path& p = ref(const_cast<RunConfig&>(r));
            return p.empty() ? std::string() : fs::absolute(p).lexically_normal().string();
          },
          [ref](RunConfig& r, const std::string& v, const fs::path& base) {
            fs::path p(v);
            ref(r) = (p.is_relative() && !base.empty() && !v.empty()) ? base / p : p;
          }};
}

Key model_key(const std::string& field, std::string doc) {
  return {"model." + field, std::move(doc),
          [field](const RunConfig& r) {
            for (const auto& [k, v] : model::fields(r.model))
              if (k == field) return v;
            return std::string();
          },
          [field](RunConfig& r, const std::string& v, const fs::path&) {
            try {
              model::set_field(r.model, field, v);
            } catch (const std::invalid_argument& e) {
              throw ConfigError(e.what());
            }
          }};
}

const std::vector<Key>& schema() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    k.push_back(model_key("variant", "skeleton | accel | simple_fusion | crossview_fusion (crossview_fusion)"));
    k.push_back(model_key("joints", "joints per frame; must match the data (29)"));
    k.push_back(model_key("d_spatial", "spatial embedding width (16)"));
    k.push_back(model_key("d_model", "temporal and acceleration width (64)"));
    k.push_back(model_key("heads", "attention heads (4)"));
    k.push_back(model_key("depth_spatial", "spatial encoder layers (2)"));
    k.push_back(model_key("depth_temporal", "temporal encoder layers (3)"));
    k.push_back(model_key("depth_accel", "acceleration encoder layers (3)"));
    k.push_back(model_key("mlp_ratio", "feed-forward width multiple (2)"));
    k.push_back(model_key("drop", "dropout rate (variant preset)"));
    k.push_back(model_key("attn_drop", "attention dropout rate (variant preset)"));
    k.push_back(model_key("stochastic_depth", "stochastic depth rate at the last layer (variant preset)"));
    k.push_back(model_key("classes", "number of classes (6)"));
    k.push_back(model_key("cva_heads", "CrossView attention heads (1)"));
    k.push_back(number<double>("optim.base_lr", "initial learning rate (variant preset)", [](RunConfig& r) -> double& { return r.optim.base_lr; }));
    k.push_back(number<double>("optim.weight_decay", "L2 weight decay (5e-4)", [](RunConfig& r) -> double& { return r.optim.weight_decay; }));
    k.push_back(number<double>("optim.momentum", "SGD momentum (0.9)", [](RunConfig& r) -> double& { return r.optim.momentum; }));
    k.push_back(number<double>("optim.asam_rho", "ASAM neighborhood size (0.5)", [](RunConfig& r) -> double& { return r.optim.asam_rho; }));
    k.push_back(flag("optim.asam_enabled", "ASAM on or plain SGD (true)", [](RunConfig& r) -> bool& { return r.optim.asam_enabled; }));
    k.push_back(number<double>("optim.min_lr", "cosine schedule floor (0)", [](RunConfig& r) -> double& { return r.optim.min_lr; }));
    k.push_back(number<Index>("preprocess.target_frames", "skeleton frames after resampling (120)", [](RunConfig& r) -> Index& { return r.preprocess.target_frames; }));
    k.push_back(number<Index>("preprocess.accel_tokens", "acceleration tokens after interpolation (120)", [](RunConfig& r) -> Index& { return r.preprocess.accel_tokens; }));
    k.push_back(number<Index>("preprocess.moving_average_window", "smoothing window in tokens (40)", [](RunConfig& r) -> Index& { return r.preprocess.moving_average_window; }));
    k.push_back(flag("preprocess.normalize", "normalize with training statistics (true)", [](RunConfig& r) -> bool& { return r.preprocess.normalize; }));
    k.push_back(number<Index>("preprocess.root_joint", "joint subtracted per frame (0)", [](RunConfig& r) -> Index& { return r.preprocess.root_joint; }));
    k.push_back(number<double>("preprocess.fill_noise", "noise on filled acceleration, in axis std units (0.01)", [](RunConfig& r) -> double& { return r.preprocess.fill_noise; }));
    k.push_back({"data.source", "files | synthetic (files)",
                 [](const RunConfig& r) { return std::string(r.data.source == harness::DataConfig::Source::files ? "files" : "synthetic"); },
                 [](RunConfig& r, const std::string& v, const fs::path&) {
                   if (v == "files") r.data.source = harness::DataConfig::Source::files;
                   else if (v == "synthetic") r.data.source = harness::DataConfig::Source::synthetic;
                   else throw ConfigError("data.source: expected files or synthetic, got '" + v + "'");
                 }});
    k.push_back(path("data.manifest", "training manifest, or the whole dataset for losocv", [](RunConfig& r) -> fs::path& { return r.data.manifest; }));
    k.push_back(path("data.val_manifest", "validation manifest (empty: use data.val_subjects)", [](RunConfig& r) -> fs::path& { return r.data.val_manifest; }));
    k.push_back({"data.val_subjects", "comma-separated subjects held out for validation",
                 [](const RunConfig& r) { return join_list(r.data.val_subjects); },
                 [](RunConfig& r, const std::string& v, const fs::path&) { r.data.val_subjects = split_list(v); }});
    k.push_back(number<double>("data.skeleton_rate_hz", "skeleton frame rate of loaded files (100)", [](RunConfig& r) -> double& { return r.data.load.skeleton_rate_hz; }));
    k.push_back(number<double>("data.accel_rate_hz", "acceleration rate of loaded files (4)", [](RunConfig& r) -> double& { return r.data.load.accel_rate_hz; }));
    k.push_back({"synth.mode", "separable | xor (separable)",
                 [](const RunConfig& r) { return data::to_string(r.data.synthetic.mode); },
                 [](RunConfig& r, const std::string& v, const fs::path&) {
                   try {
                     r.data.synthetic.mode = data::parse_synthetic_mode(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(e.what());
                   }
                 }});
    k.push_back(number<int>("synth.classes", "classes in separable mode (6)", [](RunConfig& r) -> int& { return r.data.synthetic.classes; }));
    k.push_back(number<int>("synth.subjects", "subjects (8)", [](RunConfig& r) -> int& { return r.data.synthetic.subjects; }));
    k.push_back(number<int>("synth.val_subjects", "trailing subjects in the validation split (2)", [](RunConfig& r) -> int& { return r.data.synthetic.val_subjects; }));
    k.push_back(number<int>("synth.samples_per_class", "samples per class per subject (6)", [](RunConfig& r) -> int& { return r.data.synthetic.samples_per_class; }));
    k.push_back(number<Index>("synth.joints", "joints (29)", [](RunConfig& r) -> Index& { return r.data.synthetic.joints; }));
    k.push_back(number<double>("synth.duration_s", "sequence length in seconds (10)", [](RunConfig& r) -> double& { return r.data.synthetic.duration_s; }));
    k.push_back(number<double>("synth.skeleton_rate_hz", "skeleton rate (25)", [](RunConfig& r) -> double& { return r.data.synthetic.skeleton_rate_hz; }));
    k.push_back(number<double>("synth.accel_rate_hz", "acceleration rate (4)", [](RunConfig& r) -> double& { return r.data.synthetic.accel_rate_hz; }));
    k.push_back(number<double>("synth.noise", "additive noise (0.05)", [](RunConfig& r) -> double& { return r.data.synthetic.noise; }));
    k.push_back(number<double>("synth.subject_jitter", "per-subject amplitude spread (0.05)", [](RunConfig& r) -> double& { return r.data.synthetic.subject_jitter; }));
    k.push_back(number<double>("synth.accel_gap_fraction", "fraction of blank acceleration fields (0)", [](RunConfig& r) -> double& { return r.data.synthetic.accel_gap_fraction; }));
    k.push_back(number<int>("synth.missing_accel_samples", "training samples without acceleration (0)", [](RunConfig& r) -> int& { return r.data.synthetic.missing_accel_samples; }));
    k.push_back(number<Index>("run.batch_size", "mini-batch size (16)", [](RunConfig& r) -> Index& { return r.batch_size; }));
    k.push_back(number<int>("run.epochs", "training epochs (30)", [](RunConfig& r) -> int& { return r.epochs; }));
    k.push_back(number<std::uint64_t>("run.seed", "seed for every random draw (0)", [](RunConfig& r) -> std::uint64_t& { return r.seed; }));
    k.push_back(number<int>("run.validate_every", "epochs between validation passes, 0 = last only (1)", [](RunConfig& r) -> int& { return r.validate_every; }));
    k.push_back(path("run.out", "output directory (run)", [](RunConfig& r) -> fs::path& { return r.out; }));
    return k;
  }();
  return keys;
}

const Key* find_key(const std::string& name) {
  for (const Key& k : schema())
    if (k.name == name) return &k;
  return nullptr;
}

}  // namespace

std::vector<Setting> parse_config_text(const std::string& text, const std::string& source) {
  std::vector<Setting> out;
  std::istringstream in(text);
  std::string line, section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = source + ":" + std::to_string(number);
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": missing key");
    if (!section.empty()) key = section + "." + key;
    out.push_back({key, trim(line.substr(eq + 1)), where});
  }
  return out;
}

bool is_preset_key(const std::string& key) {
  return key == "optim.base_lr" || key == "model.drop" || key == "model.attn_drop" || key == "model.stochastic_depth";
}

void ConfigBuilder::load_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const fs::path base = file.parent_path();
  for (const Setting& s : parse_config_text(ss.str(), file.string())) apply(s, base);
}

void ConfigBuilder::apply(const Setting& s, const fs::path& base) {
  const Key* k = find_key(s.key);
  if (k == nullptr) {
    if (s.key == "model.frames" || s.key == "model.accel_tokens")
      throw ConfigError(s.origin + ": " + s.key + " follows preprocess.target_frames / preprocess.accel_tokens");
    throw ConfigError(s.origin + ": unknown key '" + s.key + "'");
  }
  try {
    k->set(state_.run, s.value, base);
  } catch (const ConfigError& e) {
    throw ConfigError(s.origin + ": " + e.what());
  }
  state_.explicit_keys.insert(s.key);
}

void ConfigBuilder::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  apply({trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), "--set " + assignment});
}

LoadedConfig ConfigBuilder::finish() const {
  LoadedConfig out = state_;
  RunConfig& r = out.run;
  const harness::VariantPreset p = harness::variant_preset(r.model.variant);
  if (!out.explicit_keys.count("optim.base_lr")) r.optim.base_lr = p.lr;
  if (!out.explicit_keys.count("model.drop")) r.model.drop = p.drop;
  if (!out.explicit_keys.count("model.attn_drop")) r.model.attn_drop = p.attn_drop;
  if (!out.explicit_keys.count("model.stochastic_depth")) r.model.stochastic_depth = p.stochastic_depth;
  r.resolve();
  try {
    r.validate();
    r.data.synthetic.seed = r.seed;
    if (r.data.source == harness::DataConfig::Source::synthetic) r.data.synthetic.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return out;
}

std::string config_reference() {
  const RunConfig defaults;
  std::string out;
  for (const Key& k : schema()) out += k.name + " = " + k.get(defaults) + "    # " + k.doc + "\n";
  return out;
}

std::string resolved_config_text(const RunConfig& run) {
  std::string out;
  std::string section;
  for (const Key& k : schema()) {
    const std::string s = k.name.substr(0, k.name.find('.'));
    if (s != section) {
      out += (section.empty() ? "" : "\n") + ("[" + s + "]\n");
      section = s;
    }
    out += k.name.substr(s.size() + 1) + " = " + k.get(run) + "\n";
  }
  return out;
}

}  // namespace mmt::cli
