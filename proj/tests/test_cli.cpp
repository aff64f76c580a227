#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "mrt/cli.hpp"
#include "mrt/data.hpp"
#include "support.hpp"

using namespace mrt;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mrt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

const std::vector<std::string> kMicroModel = {"--d-model", "8", "--d-ff", "8", "--layers", "1",
                                              "--heads", "2"};

std::vector<std::string> train_args(const test::TempDir& d, const std::string& data,
                                    const std::string& out, const std::string& steps) {
  std::vector<std::string> a = {"train", "--data", (d / data).string(), "--out", (d / out).string(),
                                "--steps", steps, "--batch-size", "2", "--seed", "3"};
  a.insert(a.end(), kMicroModel.begin(), kMicroModel.end());
  return a;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("gen-data writes a reproducible corpus") {
  test::TempDir d("cli-gen");
  for (const char* out : {"a", "b"})
    CHECK(run_cli({"gen-data", "--persons", "3", "--scenes", "8", "--steps", "30", "--seed", "4",
                   "--out", (d / out).string()}) == cli::kOk);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(d / "a")) {
    ++files;
    CHECK(bytes(e.path()) == bytes(d / "b" / e.path().filename().string()));
  }
  CHECK(files == 9);
  const CorpusManifest m = read_manifest(d / "a");
  CHECK(m.train.size() + m.test.size() == 8);
  CHECK(load_split(d / "a", "train").front().person_count() == 3);

  CHECK(run_cli({"gen-data", "--persons", "15", "--scenes", "1", "--steps", "30", "--out",
                 (d / "big").string()}) == cli::kOk);
  CHECK(read_manifest(d / "big").info["placement_area_m2"] == 100.0);
}

TEST_CASE("train, resume, predict, eval and export") {
  test::TempDir d("cli-flow");
  REQUIRE(run_cli({"gen-data", "--persons", "2", "--scenes", "4", "--steps", "60", "--joints",
                   "15", "--seed", "1", "--out", (d / "corpus").string()}) == cli::kOk);
  REQUIRE(run_cli(train_args(d, "corpus", "run", "4")) == cli::kOk);
  const auto metrics = lines(d / "run" / "metrics.csv");
  REQUIRE(metrics.size() == 5);
  CHECK(metrics[0] == "step,L_P,L_rec,L_adv,L_D");
  CHECK(metrics[4].rfind("4,", 0) == 0);
  CHECK(fs::exists(d / "run" / "checkpoint_final.mrtc"));

  // The effective config reproduces the run byte for byte.
  const fs::path cfg = d / "run" / "effective_config.json";
  const auto effective = nlohmann::json::parse(bytes(cfg));
  CHECK(effective["model"]["d_model"] == 8);
  CHECK(run_cli({"train", "--config", cfg.string(), "--out", (d / "rerun").string()}) == cli::kOk);
  CHECK(bytes(d / "rerun" / "checkpoint_final.mrtc") == bytes(d / "run" / "checkpoint_final.mrtc"));

  // Resume continues the step counter.
  std::vector<std::string> resume = train_args(d, "corpus", "run", "6");
  resume.push_back("--resume");
  resume.push_back((d / "run" / "checkpoint_final.mrtc").string());
  REQUIRE(run_cli(resume) == cli::kOk);
  const auto resumed = lines(d / "run" / "metrics.csv");
  REQUIRE(resumed.size() == 7);
  CHECK(resumed[5].rfind("5,", 0) == 0);

  // Predict three chunks from the first 15 steps of a test scene.
  const CorpusManifest m = read_manifest(d / "corpus");
  const fs::path scene = d / "corpus" / (m.test.empty() ? m.train.front() : m.test.front());
  const std::string ckpt = (d / "run" / "checkpoint_final.mrtc").string();
  for (const char* out : {"p1.mrts", "p2.mrts"})
    REQUIRE(run_cli({"predict", "--checkpoint", ckpt, "--scene", scene.string(), "--chunks", "3",
                     "--out", (d / out).string()}) == cli::kOk);
  const Scene pred = load_scene(d / "p1.mrts");
  CHECK(pred.steps() == 45);
  CHECK(pred.person_count() == 2);
  CHECK(bytes(d / "p1.mrts") == bytes(d / "p2.mrts"));
  const auto records = nlohmann::json::parse(bytes(d / "p1.mrts.attention.json"));
  CHECK(records["history_lengths"] == nlohmann::json::array({15, 30, 45}));

  // Evaluating the truth against itself gives zeros.
  const fs::path truth_dir = d / "truth";
  fs::create_directories(truth_dir);
  save_scene(truth_dir / "t.mrts", load_scene(scene).window(15, 45));
  REQUIRE(run_cli({"eval", "--pred", (truth_dir / "t.mrts").string(), "--truth",
                   (truth_dir / "t.mrts").string(), "--out", (d / "self").string()}) == cli::kOk);
  const auto report = nlohmann::json::parse(bytes(d / "self" / "report.json"));
  for (const auto& h : report["corpus"]) {
    CHECK(h["meters"]["mpjpe"] == 0.0);
    CHECK(h["meters"]["root_error"] == 0.0);
    CHECK(h["meters"]["pose_error"] == 0.0);
  }
  const auto header = lines(d / "self" / "report.csv").front();
  CHECK(header.find("horizon_s") != std::string::npos);
  const auto hist = lines(d / "self" / "movement_truth.csv");
  std::size_t total = 0;
  for (const auto& l : hist) {
    if (l.empty() || l[0] == '#' || l.rfind("bin_left", 0) == 0) continue;
    total += std::stoul(l.substr(l.rfind(',') + 1));
  }
  CHECK(total == 2);

  // Prediction vs truth through --truth-start on the full scene.
  CHECK(run_cli({"eval", "--pred", (d / "p1.mrts").string(), "--truth", scene.string(),
                 "--truth-start", "15", "--out", (d / "ev").string()}) == cli::kOk);
  // Horizon mismatch.
  CHECK(run_cli({"eval", "--pred", (d / "p1.mrts").string(), "--truth", scene.string(), "--out",
                 (d / "bad").string()}) == cli::kDataError);

  REQUIRE(run_cli({"export-attention", "--pred-records", (d / "p1.mrts.attention.json").string(),
                   "--layer", "1", "--out", (d / "att").string()}) == cli::kOk);
  const auto table = lines(d / "att" / "person0_layer1.csv");
  CHECK(table.size() == 3);  // header + 2 heads
  CHECK(fs::exists(d / "att" / "similarity_layer1.csv"));
  CHECK(run_cli({"export-attention", "--pred-records", (d / "p1.mrts.attention.json").string(),
                 "--layer", "9", "--out", (d / "att").string()}) != cli::kOk);
}

TEST_CASE("exit codes") {
  test::TempDir d("cli-exit");
  CHECK(run_cli({}) == cli::kUsage);
  CHECK(run_cli({"train", "--no-such-flag"}) == cli::kUsage);
  CHECK(run_cli({"train", "--data", (d / "missing").string(), "--out", (d / "o").string()}) ==
        cli::kDataError);
  {
    std::ofstream bad(d / "bad.json");
    bad << "{not json";
  }
  CHECK(run_cli({"train", "--config", (d / "bad.json").string()}) == cli::kUsage);

  REQUIRE(run_cli({"gen-data", "--persons", "2", "--scenes", "2", "--steps", "30", "--joints", "3",
                   "--test-fraction", "0", "--out", (d / "c3").string()}) == cli::kOk);
  REQUIRE(run_cli(train_args(d, "c3", "r3", "1")) == cli::kOk);
  REQUIRE(run_cli({"gen-data", "--persons", "2", "--scenes", "1", "--steps", "30", "--joints", "15",
                   "--test-fraction", "0", "--out", (d / "c15").string()}) == cli::kOk);
  CHECK(run_cli({"predict", "--checkpoint", (d / "r3" / "checkpoint_final.mrtc").string(), "--scene",
                 (d / "c15" / "scene_0000.mrts").string(), "--out", (d / "x.mrts").string()}) ==
        cli::kUsage);

  // A diverging run aborts with the numerical exit code.
  std::vector<std::string> boom = train_args(d, "c3", "r4", "3");
  boom.insert(boom.end(), {"--lr-p", "1e300"});
  CHECK(run_cli(boom) == cli::kNumericalAbort);
}

TEST_CASE("config file and environment overrides") {
  test::TempDir d("cli-env");
  {
    std::ofstream cfg(d / "run.json");
    cfg << R"({"model": {"d_model": 16, "heads": 4}, "train": {"max_steps": 7, "batch_size": 3}, "seed": 9})";
  }
  cli::RunConfig rc = cli::load_run_config(d / "run.json");
  CHECK(rc.model.d_model == 16);
  CHECK(rc.model.layers == 3);
  CHECK(rc.train.max_steps == 7);
  CHECK(rc.train.seed == 9);
  CHECK_FALSE(rc.batch_size_auto);

  setenv("MRT_SEED", "21", 1);
  setenv("MRT_MAX_STEPS", "2", 1);
  cli::apply_env_overrides(rc);
  CHECK(rc.train.seed == 21);
  CHECK(rc.train.max_steps == 2);
  setenv("MRT_SEED", "abc", 1);
  CHECK_THROWS(cli::apply_env_overrides(rc));
  unsetenv("MRT_SEED");
  unsetenv("MRT_MAX_STEPS");

  cli::RunConfig defaults;
  CHECK(defaults.batch_size_auto);
  CHECK(cli::run_config_from_json(cli::to_json(rc)).model == rc.model);
}

}  // TEST_SUITE
