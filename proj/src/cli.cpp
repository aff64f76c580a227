#include "mrt/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "mrt/error.hpp"
#include "mrt/eval.hpp"

namespace mrt::cli {

namespace fs = std::filesystem;

nlohmann::json to_json(const RunConfig& c) {
  return {{"model", c.model},
          {"train", c.train},
          {"data_dir", c.data_dir},
          {"out_dir", c.out_dir},
          {"seed", c.train.seed},
          {"batch_size_auto", c.batch_size_auto}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    c.data_dir = j.value("data_dir", c.data_dir);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("seed")) c.train.seed = j.at("seed").get<std::uint64_t>();
    c.batch_size_auto = j.value("batch_size_auto", !(j.contains("train") && j.at("train").contains("batch_size")));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return run_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

namespace {

std::optional<std::string> env(const char* name) {
  if (const char* v = std::getenv(name)) return std::string(v);
  return std::nullopt;
}

std::uint64_t parse_uint(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string(what) + " must be a non-negative integer, got '" + s + "'");
  }
}

}  // namespace

void apply_env_overrides(RunConfig& c) {
  if (auto v = env("MRT_SEED")) c.train.seed = parse_uint(*v, "MRT_SEED");
  if (auto v = env("MRT_MAX_STEPS")) c.train.max_steps = parse_uint(*v, "MRT_MAX_STEPS");
  if (auto v = env("MRT_BATCH_SIZE")) {
    c.train.batch_size = parse_uint(*v, "MRT_BATCH_SIZE");
    c.batch_size_auto = false;
  }
  if (auto v = env("MRT_DATA_DIR")) c.data_dir = *v;
  if (auto v = env("MRT_OUT_DIR")) c.out_dir = *v;
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InvalidInput("cannot create output directory " + dir.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string scene_name(std::size_t i) {
  std::ostringstream os;
  os << "scene_" << std::setw(4) << std::setfill('0') << i << ".mrts";
  return os.str();
}

// --- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  std::size_t persons = 3;
  std::size_t steps = 60;
  std::size_t scenes = 8;
  std::size_t joints = 15;
  std::uint64_t seed = 0;
  double test_fraction = 0.25;
  std::string out;
};

void cmd_gen_data(const GenDataArgs& a) {
  ensure_dir(a.out);
  // Small groups go in a 25 m^2 square, crowds in 100 m^2.
  const double area = a.persons <= 3 ? 25.0 : 100.0;
  SyntheticOptions opts;
  opts.area = area;
  opts.interacting_pairs = std::max<std::size_t>(1, a.persons / 3);
  CorpusManifest manifest;
  const auto test_count = static_cast<std::size_t>(
      std::llround(a.test_fraction * static_cast<double>(a.scenes)));
  for (std::size_t i = 0; i < a.scenes; ++i) {
    Scene raw = generate_synthetic(a.persons, a.steps, a.joints,
                                   derive_seed(a.seed, "data.scene" + std::to_string(i)), opts);
    PreprocessOptions pre;
    pre.seed = derive_seed(a.seed, "data.place" + std::to_string(i));
    pre.placement_area = area;
    Scene scene = preprocess(raw, pre);
    scene.id = "scene-" + std::to_string(i);
    const std::string name = scene_name(i);
    save_scene(fs::path(a.out) / name, scene);
    (i + test_count >= a.scenes && test_count > 0 ? manifest.test : manifest.train).push_back(name);
  }
  manifest.info = {{"generator", "synthetic"}, {"persons", a.persons}, {"steps", a.steps},
                   {"joints", a.joints},       {"seed", a.seed},       {"placement_area_m2", area}};
  write_manifest(a.out, manifest);
  std::cout << "wrote " << a.scenes << " scenes (" << manifest.train.size() << " train, "
            << manifest.test.size() << " test) to " << a.out << '\n';
}

// --- train --------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string resume;
  std::optional<std::string> data, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps, batch_size, d_model, d_ff, layers, heads;
  std::optional<double> lambda_adv, lr_p, lr_d;
  std::optional<std::size_t> checkpoint_every;
  bool no_disc = false;
};

void cmd_train(const TrainArgs& a) {
  RunConfig rc = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  apply_env_overrides(rc);
  if (a.data) rc.data_dir = *a.data;
  if (a.out) rc.out_dir = *a.out;
  if (a.seed) rc.train.seed = *a.seed;
  if (a.steps) rc.train.max_steps = *a.steps;
  if (a.batch_size) {
    rc.train.batch_size = *a.batch_size;
    rc.batch_size_auto = false;
  }
  if (a.d_model) rc.model.d_model = *a.d_model;
  if (a.d_ff) rc.model.d_ff = *a.d_ff;
  if (a.layers) rc.model.layers = *a.layers;
  if (a.heads) rc.model.heads = *a.heads;
  if (a.lambda_adv) rc.train.lambda_adv = *a.lambda_adv;
  if (a.lr_p) rc.train.lr_predictor = *a.lr_p;
  if (a.lr_d) rc.train.lr_discriminator = *a.lr_d;
  if (a.checkpoint_every) rc.train.checkpoint_every = *a.checkpoint_every;
  if (a.no_disc) rc.train.train_discriminator = false;

  std::vector<Scene> corpus = load_split(rc.data_dir, "train");
  if (corpus.empty()) throw InvalidInput("corpus " + rc.data_dir + " has no training scenes");
  rc.model.joints = corpus.front().joints();
  rc.model.frame_rate = corpus.front().frame_rate();
  if (rc.batch_size_auto) {
    std::size_t max_persons = 0;
    for (const auto& s : corpus) max_persons = std::max(max_persons, s.person_count());
    rc.train.batch_size = max_persons <= 3 ? 32 : 8;
  }
  rc.model.validate();
  rc.train.validate();

  const fs::path out = rc.out_dir;
  ensure_dir(out);
  std::unique_ptr<Trainer> trainer;
  if (!a.resume.empty()) {
    TrainingState state = load_checkpoint(a.resume);
    if (state.predictor.config != rc.model) {
      throw ConfigError("checkpoint " + a.resume + " was trained with a different model config");
    }
    trainer = std::make_unique<Trainer>(std::move(corpus), std::move(state), rc.train);
  } else {
    trainer = std::make_unique<Trainer>(std::move(corpus), rc.model, rc.train);
  }
  // Effective config; re-running `train --config` on it reproduces the run.
  nlohmann::json effective = to_json(rc);
  effective["batch_size_auto"] = false;
  write_json(out / "effective_config.json", effective);

  const fs::path metrics_path = out / "metrics.csv";
  const bool append = !a.resume.empty() && fs::exists(metrics_path);
  std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
  if (!metrics) throw InvalidInput("cannot write " + metrics_path.string());
  if (!append) metrics << "step,L_P,L_rec,L_adv,L_D\n";
  metrics << std::setprecision(10);

  TrainingState& state = trainer->state();
  while (static_cast<std::size_t>(state.step) < rc.train.max_steps) {
    const TrainMetrics m = trainer->step();
    metrics << m.step << ',' << m.loss_p << ',' << m.loss_rec << ',' << m.loss_adv << ','
            << m.loss_d << '\n';
    if (rc.train.checkpoint_every && m.step % static_cast<long>(rc.train.checkpoint_every) == 0)
      save_checkpoint(out / ("checkpoint_" + std::to_string(m.step) + ".mrtc"), state, rc.train);
  }
  metrics.flush();
  save_checkpoint(out / "checkpoint_final.mrtc", state, rc.train);
  std::cout << "trained to step " << state.step << "; checkpoint " << (out / "checkpoint_final.mrtc").string()
            << '\n';
}

// --- predict ------------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::string scene;
  std::size_t chunks = 3;
  std::string out;
  std::string records;
};

void cmd_predict(const PredictArgs& a) {
  MrtParams params = load_predictor(a.checkpoint);
  const Scene scene = load_scene(a.scene);
  if (scene.joints() != params.config.joints) {
    throw ConfigError("checkpoint expects J=" + std::to_string(params.config.joints) +
                      " but scene " + a.scene + " has J=" + std::to_string(scene.joints()));
  }
  const std::size_t k = params.config.history;
  if (scene.steps() < k) {
    throw InvalidInput("scene has " + std::to_string(scene.steps()) + " steps; the model observes " +
                       std::to_string(k));
  }
  const Scene observed = scene.window(0, k);
  const AutoregressiveResult result = predict_autoregressive(observed, a.chunks, params);

  Scene pred{{}, "prediction", scene.id};
  for (const auto& p : result.predictions) pred.persons.push_back({p, scene.frame_rate()});
  save_scene(a.out, pred);
  const fs::path records = a.records.empty() ? fs::path(a.out + ".attention.json") : fs::path(a.records);
  nlohmann::json j = attention_records_json(result.passes);
  j["history_lengths"] = result.history_lengths;
  j["scene"] = scene.id;
  write_json(records, j);
  std::cout << "predicted " << pred.steps() << " steps for " << pred.person_count()
            << " persons -> " << a.out << '\n';
}

// --- eval ---------------------------------------------------------------------

std::vector<fs::path> scene_files(const std::string& path) {
  if (!fs::is_directory(path)) return {path};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path))
    if (e.is_regular_file() && e.path().extension() == ".mrts") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

struct EvalArgs {
  std::vector<std::string> pred;
  std::vector<std::string> truth;
  std::string out;
  std::size_t truth_start = 0;
  std::size_t root_joint = kDefaultRootJoint;
};

void cmd_eval(const EvalArgs& a) {
  std::vector<fs::path> pred_files, truth_files;
  for (const auto& p : a.pred)
    for (auto& f : scene_files(p)) pred_files.push_back(f);
  for (const auto& p : a.truth)
    for (auto& f : scene_files(p)) truth_files.push_back(f);
  if (pred_files.size() != truth_files.size()) {
    throw InvalidInput("eval: " + std::to_string(pred_files.size()) + " prediction files vs " +
                       std::to_string(truth_files.size()) + " truth files");
  }
  std::vector<Scene> preds, truths;
  for (std::size_t i = 0; i < pred_files.size(); ++i) {
    Scene p = load_scene(pred_files[i]);
    Scene t = load_scene(truth_files[i]);
    if (t.steps() != a.truth_start + p.steps()) {
      throw InvalidInput("eval: horizon mismatch for " + pred_files[i].string() + ": prediction has " +
                         std::to_string(p.steps()) + " steps, truth " + truth_files[i].string() +
                         " has " + std::to_string(t.steps()) + " steps from offset " +
                         std::to_string(a.truth_start));
    }
    truths.push_back(t.window(a.truth_start, p.steps()));
    preds.push_back(std::move(p));
  }
  ensure_dir(a.out);
  EvalOptions opts;
  opts.root_joint = a.root_joint;
  const MetricReport report = evaluate(preds, truths, opts);
  write_report_csv(fs::path(a.out) / "report.csv", report);
  write_json(fs::path(a.out) / "report.json", report_json(report));
  write_histogram_csv(fs::path(a.out) / "movement_pred.csv",
                      movement_histogram(movement_distances(preds), "prediction"));
  write_histogram_csv(fs::path(a.out) / "movement_truth.csv",
                      movement_histogram(movement_distances(truths), "ground_truth"));
  std::cout << std::setprecision(4);
  for (const auto& h : report.corpus) {
    if (!h.available) continue;
    std::cout << h.seconds << " s: MPJPE " << h.mpjpe << " m, root " << h.root_error << " m, pose "
              << h.pose_error << " m\n";
  }
}

// --- export-attention ---------------------------------------------------------

struct ExportArgs {
  std::string records;
  std::size_t layer = 1;
  std::size_t pass = 0;
  std::string out;
};

void cmd_export_attention(const ExportArgs& a) {
  std::ifstream in(a.records);
  if (!in) throw InvalidInput("cannot open attention records " + a.records);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(a.records + ": " + e.what());
  }
  if (!j.contains("passes")) throw UnsupportedOperation(a.records + " carries no attention records");
  const auto passes = attention_records_from_json(j);
  if (a.pass >= passes.size()) {
    throw InvalidInput("pass " + std::to_string(a.pass) + " requested, records hold " +
                       std::to_string(passes.size()));
  }
  if (a.layer < 1) throw ConfigError("--layer is 1-based");
  ensure_dir(a.out);
  std::vector<AttentionTable> tables;
  for (std::size_t n = 0; n < passes[a.pass].size(); ++n) {
    AttentionTable t = attention_table(passes[a.pass][n], n, a.layer - 1);
    write_attention_csv(fs::path(a.out) / ("person" + std::to_string(n) + "_layer" +
                                           std::to_string(a.layer) + ".csv"),
                        t);
    tables.push_back(std::move(t));
  }
  const Tensor sim = attention_similarity(tables);
  std::ofstream out(fs::path(a.out) / ("similarity_layer" + std::to_string(a.layer) + ".csv"));
  out << "person";
  for (std::size_t n = 0; n < sim.cols(); ++n) out << ",p" << n;
  out << '\n' << std::setprecision(9);
  for (std::size_t r = 0; r < sim.rows(); ++r) {
    out << 'p' << r;
    for (std::size_t c = 0; c < sim.cols(); ++c) out << ',' << sim(r, c);
    out << '\n';
  }
  std::cout << "exported " << tables.size() << " attention tables to " << a.out << '\n';
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Multi-range transformer for multi-person motion prediction"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Write a synthetic scene corpus with a manifest");
  g->add_option("--persons", gen.persons, "Persons per scene")->check(CLI::PositiveNumber);
  g->add_option("--steps", gen.steps, "Steps per scene")->check(CLI::PositiveNumber);
  g->add_option("--scenes", gen.scenes, "Number of scenes")->check(CLI::PositiveNumber);
  g->add_option("--joints", gen.joints, "Joints per skeleton")->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--test-fraction", gen.test_fraction, "Fraction of scenes in the test split")
      ->check(CLI::Range(0.0, 1.0));
  g->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train predictor and discriminator");
  t->add_option("--config", tr.config, "Run config JSON");
  t->add_option("--data", tr.data, "Corpus directory");
  t->add_option("--out", tr.out, "Output directory");
  t->add_option("--seed", tr.seed);
  t->add_option("--steps", tr.steps, "Total training steps");
  t->add_option("--batch-size", tr.batch_size);
  t->add_option("--d-model", tr.d_model);
  t->add_option("--d-ff", tr.d_ff);
  t->add_option("--layers", tr.layers);
  t->add_option("--heads", tr.heads);
  t->add_option("--lambda-adv", tr.lambda_adv);
  t->add_option("--lr-p", tr.lr_p);
  t->add_option("--lr-d", tr.lr_d);
  t->add_option("--checkpoint-every", tr.checkpoint_every);
  t->add_flag("--no-disc", tr.no_disc, "Disable discriminator updates");
  t->add_option("--resume", tr.resume, "Continue from a checkpoint");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Autoregressive prediction for one scene");
  p->add_option("--checkpoint", pr.checkpoint)->required();
  p->add_option("--scene", pr.scene)->required();
  p->add_option("--chunks", pr.chunks, "Decoder passes")->check(CLI::PositiveNumber);
  p->add_option("--out", pr.out, "Predicted scene file")->required();
  p->add_option("--records", pr.records, "Attention record file (default <out>.attention.json)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Metrics and movement histograms");
  e->add_option("--pred", ev.pred, "Predicted scene files or directories")->required();
  e->add_option("--truth", ev.truth, "Ground-truth scene files or directories")->required();
  e->add_option("--truth-start", ev.truth_start, "First truth step aligned with prediction step 0");
  e->add_option("--root-joint", ev.root_joint);
  e->add_option("--out", ev.out, "Output directory")->required();

  ExportArgs ex;
  auto* x = app.add_subcommand("export-attention", "Decoder attention tables as CSV");
  x->add_option("--pred-records", ex.records)->required();
  x->add_option("--layer", ex.layer, "Decoder layer, 1-based");
  x->add_option("--pass", ex.pass, "Autoregressive pass, 0-based");
  x->add_option("--out", ex.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? kOk : kUsage;
  }

  try {
    if (*g) cmd_gen_data(gen);
    else if (*t) cmd_train(tr);
    else if (*p) cmd_predict(pr);
    else if (*e) cmd_eval(ev);
    else if (*x) cmd_export_attention(ex);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return kUsage;
  } catch (const NumericalError& err) {
    std::cerr << "numerical abort: " << err.what() << '\n';
    return kNumericalAbort;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kDataError;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kDataError;
  }
  return kOk;
}

}  // namespace mrt::cli
