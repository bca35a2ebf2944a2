#include "doctest.h"

#include "mmt/cli/commands.hpp"
#include "mmt/cli/config_file.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

using namespace mmt;
using namespace mmt::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mmt_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Result {
  int code;
  std::string out, err;
};

Result mmt_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

LoadedConfig load_text(const std::string& text) {
  const fs::path dir = scratch("cfg");
  write(dir / "run.cfg", text);
  ConfigBuilder b;
  b.load_file(dir / "run.cfg");
  return b.finish();
}

const char* kTinySynthetic = R"(# small synthetic run
[data]
source = synthetic
[synth]
classes = 3
subjects = 3
val_subjects = 1
samples_per_class = 2
joints = 4
duration_s = 4
skeleton_rate_hz = 10
[preprocess]
target_frames = 6
accel_tokens = 6
moving_average_window = 3
[model]
d_spatial = 8
d_model = 16
heads = 2
depth_spatial = 1
depth_temporal = 1
depth_accel = 1
classes = 3
joints = 4
[run]
epochs = 2
batch_size = 4
)";

}  // namespace

TEST_CASE("empty config gives the crossview preset") {
  const LoadedConfig c = load_text("");
  CHECK(c.run.model.variant == model::Variant::crossview_fusion);
  CHECK(c.run.optim.base_lr == 0.0025);
  CHECK(c.run.model.drop == 0.0);
  CHECK(c.run.model.stochastic_depth == 0.2);
  CHECK(c.run.model.attn_drop == 0.0);
  CHECK(c.run.optim.weight_decay == 5e-4);
  CHECK(c.run.optim.asam_rho == 0.5);
  CHECK(c.run.batch_size == 16);
  CHECK(c.run.model.frames == c.run.preprocess.target_frames);
}

TEST_CASE("config parsing") {
  SUBCASE("qualified keys and sections") {
    const LoadedConfig c = load_text("optim.asam_rho = 0.5\n[model]\nvariant = simple_fusion  # comment\n");
    CHECK(c.run.optim.asam_rho == 0.5);
    CHECK(c.run.model.variant == model::Variant::simple_fusion);
    CHECK(c.run.optim.base_lr == 0.0025);
    CHECK(c.run.model.drop == 0.05);
    CHECK(c.run.model.attn_drop == 0.05);
  }
  SUBCASE("explicit values beat the preset") {
    const LoadedConfig c = load_text("[model]\nvariant = skeleton\ndrop = 0.1\n[optim]\nbase_lr = 0.5\n");
    CHECK(c.run.optim.base_lr == 0.5);
    CHECK(c.run.model.drop == 0.1);
    CHECK(c.run.model.stochastic_depth == 0.2);
  }
  SUBCASE("unknown key names its line") {
    CHECK_THROWS_WITH_AS(load_text("[model]\nvariant = skeleton\n\nbogus = 1\n"), doctest::Contains("run.cfg:4"), ConfigError);
    CHECK_THROWS_WITH(load_text("model.bogus = 1\n"), doctest::Contains("unknown key 'model.bogus'"));
  }
  SUBCASE("bad variant lists the allowed values") {
    CHECK_THROWS_WITH(load_text("model.variant = bogus\n"),
                      doctest::Contains("skeleton, accel, simple_fusion, crossview_fusion"));
  }
  SUBCASE("syntax errors") {
    CHECK_THROWS_WITH(load_text("just words\n"), doctest::Contains("run.cfg:1"));
    CHECK_THROWS_WITH(load_text("[model\n"), doctest::Contains("section"));
    CHECK_THROWS_WITH(load_text("optim.asam_rho = half\n"), doctest::Contains("optim.asam_rho"));
    CHECK_THROWS_WITH(load_text("optim.asam_enabled = maybe\n"), doctest::Contains("true or false"));
  }
  SUBCASE("derived keys are rejected") {
    CHECK_THROWS_WITH(load_text("model.frames = 10\n"), doctest::Contains("preprocess.target_frames"));
  }
  SUBCASE("invalid combinations") {
    CHECK_THROWS_WITH(load_text("model.heads = 5\n"), doctest::Contains("divisible"));
    CHECK_THROWS(load_text("optim.asam_rho = -1\n"));
  }
  SUBCASE("overrides") {
    ConfigBuilder b;
    b.apply_override("optim.asam_rho=0.25");
    b.apply_override("run.epochs = 7");
    const LoadedConfig c = b.finish();
    CHECK(c.run.optim.asam_rho == 0.25);
    CHECK(c.run.epochs == 7);
    CHECK_THROWS_AS(b.apply_override("no_equals"), ConfigError);
  }
  SUBCASE("relative data paths follow the config file") {
    const LoadedConfig c = load_text("data.manifest = sub/train.csv\n");
    CHECK(c.run.data.manifest == scratch("cfg").parent_path() / "mmt_cli_test_cfg" / "sub" / "train.csv");
  }
}

TEST_CASE("resolved config reloads to the same configuration") {
  const LoadedConfig a = load_text(kTinySynthetic);
  const std::string text = resolved_config_text(a.run);
  const LoadedConfig b = load_text(text);
  CHECK(resolved_config_text(b.run) == text);
  CHECK(text.find("[optim]\nbase_lr = 0.0025\n") != std::string::npos);
}

TEST_CASE("synth writes reproducible files") {
  const fs::path dir = scratch("synth");
  const Result r1 = mmt_cli({"synth", "--mode", "xor", "--seed", "3", "--out", (dir / "a").string(), "--set",
                             "synth.subjects=2", "--set", "synth.val_subjects=1", "--set", "synth.samples_per_class=2",
                             "--set", "synth.joints=3"});
  REQUIRE(r1.code == 0);
  const Result r2 = mmt_cli({"synth", "--mode", "xor", "--seed", "3", "--out", (dir / "b").string(), "--set",
                             "synth.subjects=2", "--set", "synth.val_subjects=1", "--set", "synth.samples_per_class=2",
                             "--set", "synth.joints=3"});
  REQUIRE(r2.code == 0);
  CHECK(fs::exists(dir / "a" / "train.csv"));
  CHECK(fs::exists(dir / "a" / "val.csv"));
  CHECK(read(dir / "a" / "train.csv") == read(dir / "b" / "train.csv"));
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file() || e.path().filename() == "resolved_config.cfg") continue;
    const fs::path other = dir / "b" / fs::relative(e.path(), dir / "a");
    CHECK(read(e.path()) == read(other));
  }
  CHECK(mmt_cli({"synth", "--mode", "nonsense", "--out", (dir / "c").string()}).code == 1);
}

TEST_CASE("train, evaluate, preprocess end to end on files") {
  const fs::path dir = scratch("train");
  REQUIRE(mmt_cli({"synth", "--config", "", "--out", (dir / "data").string(), "--set", "synth.subjects=3", "--set",
                   "synth.val_subjects=1", "--set", "synth.samples_per_class=2", "--set", "synth.joints=4", "--set",
                   "synth.classes=3", "--set", "synth.duration_s=4", "--set", "synth.skeleton_rate_hz=10"})
              .code == 0);
  std::string cfg = kTinySynthetic;
  cfg.replace(cfg.find("source = synthetic"), 18, "manifest = data/train.csv\nval_manifest = data/val.csv");
  write(dir / "run.cfg", cfg);

  const Result t = mmt_cli({"train", "--config", (dir / "run.cfg").string(), "--out", (dir / "run1").string()});
  CAPTURE(t.err);
  REQUIRE(t.code == 0);
  for (const char* f : {"run_log.json", "timing.json", "best.ckpt", "last.ckpt", "eval_report.json", "confusion.csv",
                        "resolved_config.cfg"})
    CHECK(fs::exists(dir / "run1" / f));
  const auto log = nlohmann::json::parse(read(dir / "run1" / "run_log.json"));
  CHECK(log["epochs"].size() == 2);

  // Same config and seed: identical run log.
  REQUIRE(mmt_cli({"train", "--config", (dir / "run.cfg").string(), "--out", (dir / "run2").string()}).code == 0);
  CHECK(read(dir / "run1" / "run_log.json") == read(dir / "run2" / "run_log.json"));

  // The resolved config reproduces the run.
  REQUIRE(mmt_cli({"train", "--config", (dir / "run1" / "resolved_config.cfg").string(), "--out",
                   (dir / "run3").string()})
              .code == 0);
  CHECK(read(dir / "run1" / "run_log.json") == read(dir / "run3" / "run_log.json"));

  const Result e = mmt_cli({"evaluate", "--config", (dir / "run.cfg").string(), "--checkpoint",
                            (dir / "run1" / "last.ckpt").string(), "--out", (dir / "eval").string()});
  CAPTURE(e.err);
  REQUIRE(e.code == 0);
  const auto rep = nlohmann::json::parse(read(dir / "eval" / "eval_report.json"));
  CHECK(rep["accuracy"].get<double>() == log["final"]["accuracy"].get<double>());

  const Result p = mmt_cli({"preprocess", "--config", (dir / "run.cfg").string(), "--out", (dir / "prep").string()});
  REQUIRE(p.code == 0);
  CHECK(fs::exists(dir / "prep" / "norm_stats.json"));
  CHECK(read(dir / "prep" / "train_skeleton.csv").rfind("sample_id,frame,joint,x,y,z\n", 0) == 0);
}

TEST_CASE("failures exit non-zero and leave no artifacts") {
  const fs::path dir = scratch("fail");
  write(dir / "run.cfg", "data.manifest = missing.csv\n");
  const Result r = mmt_cli({"train", "--config", (dir / "run.cfg").string(), "--out", (dir / "out").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("missing.csv") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out"));

  CHECK(mmt_cli({"train", "--bogus-flag"}).code == 1);
  CHECK(mmt_cli({}).code == 1);
  CHECK(mmt_cli({"train", "--set", "model.variant=bogus"}).code == 1);

  std::string cfg = kTinySynthetic;
  cfg += "[optim]\nbase_lr = 1e200\nasam_enabled = false\n";
  write(dir / "diverge.cfg", cfg);
  const Result d = mmt_cli({"train", "--config", (dir / "diverge.cfg").string(), "--out", (dir / "div").string()});
  CHECK(d.code == 2);
  CHECK(d.err.find("non-finite") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "div"));
}

TEST_CASE("losocv and ablate commands") {
  const fs::path dir = scratch("exp");
  write(dir / "run.cfg", std::string(kTinySynthetic) + "[run]\nepochs = 1\n");
  const Result l = mmt_cli({"losocv", "--config", (dir / "run.cfg").string(), "--out", (dir / "l").string()});
  CAPTURE(l.err);
  REQUIRE(l.code == 0);
  const std::string csv = read(dir / "l" / "losocv.csv");
  CHECK(csv.rfind("fold,subject,accuracy,precision_macro,recall_macro,f1_macro,f1_class_0", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3 + 2);

  const Result a = mmt_cli({"ablate", "--config", (dir / "run.cfg").string(), "--out", (dir / "a").string()});
  REQUIRE(a.code == 0);
  const std::string table = read(dir / "a" / "ablation.csv");
  CHECK(std::count(table.begin(), table.end(), '\n') == 9);
}

TEST_CASE("config-keys lists documented defaults") {
  const Result r = mmt_cli({"config-keys"});
  CHECK(r.code == 0);
  CHECK(r.out.find("optim.asam_rho = 0.5") != std::string::npos);
  CHECK(r.out.find("run.batch_size = 16") != std::string::npos);
}
