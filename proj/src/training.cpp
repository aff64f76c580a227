#include "mrt/training.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "mrt/archive.hpp"
#include "mrt/error.hpp"

namespace mrt {

void TrainConfig::validate() const {
  if (!(lr_predictor > 0.0) || !(lr_discriminator > 0.0))
    throw ConfigError("learning rates must be positive");
  if (!(lambda_rec > 0.0)) throw ConfigError("lambda_rec must be positive");
  if (lambda_adv < 0.0) throw ConfigError("lambda_adv must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr_predictor", c.lr_predictor},
       {"lr_discriminator", c.lr_discriminator},
       {"lambda_rec", c.lambda_rec},
       {"lambda_adv", c.lambda_adv},
       {"batch_size", c.batch_size},
       {"max_steps", c.max_steps},
       {"seed", c.seed},
       {"train_discriminator", c.train_discriminator},
       {"scheduled_sampling", c.scheduled_sampling},
       {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.lr_predictor = j.value("lr_predictor", d.lr_predictor);
  c.lr_discriminator = j.value("lr_discriminator", d.lr_discriminator);
  c.lambda_rec = j.value("lambda_rec", d.lambda_rec);
  c.lambda_adv = j.value("lambda_adv", d.lambda_adv);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.seed = j.value("seed", d.seed);
  c.train_discriminator = j.value("train_discriminator", d.train_discriminator);
  c.scheduled_sampling = j.value("scheduled_sampling", d.scheduled_sampling);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  // FNV-1a over the stream name, mixed into the seed with splitmix64.
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<TrainSample> make_samples(const Scene& scene, const ModelConfig& config) {
  scene.validate();
  const std::size_t total = scene.steps();
  const std::size_t k = config.history;
  std::vector<TrainSample> out;
  if (total < k + config.k_out) {
    std::cerr << "warning: scene " << scene.id << " has " << total << " steps; need at least "
              << k + config.k_out << " for one training sample\n";
    return out;
  }
  for (std::size_t kappa = k; kappa + config.k_out <= total; kappa += k) {
    TrainSample s;
    s.history = scene.window(0, kappa);
    s.history_steps = kappa;
    for (const auto& person : scene.persons) {
      Tensor poses(config.k_out, person.poses.cols());
      Tensor offsets(config.k_out, person.poses.cols());
      for (std::size_t i = 0; i < config.k_out; ++i) {
        for (std::size_t c = 0; c < poses.cols(); ++c) {
          poses(i, c) = person.poses(kappa + i, c);
          offsets(i, c) = person.poses(kappa + i, c) - person.poses(kappa + i - 1, c);
        }
      }
      s.target_poses.push_back(std::move(poses));
      s.target_offsets.push_back(std::move(offsets));
      s.queries.push_back(person.pose(kappa - 1));
    }
    out.push_back(std::move(s));
  }
  return out;
}

Var loss_rec(const Var& pred_offsets, const Tensor& true_offsets) {
  if (pred_offsets.value().shape() != true_offsets.shape()) {
    throw DimensionError("loss_rec: prediction " + shape_string(pred_offsets.value().shape()) +
                         " vs target " + shape_string(true_offsets.shape()));
  }
  Tape& tape = pred_offsets.tape();
  return (1.0 / static_cast<double>(true_offsets.rows())) *
         sum_squares(pred_offsets - tape.constant(true_offsets));
}

double loss_rec(const Tensor& pred_offsets, const Tensor& true_offsets) {
  Tape tape;
  return loss_rec(tape.constant(pred_offsets), true_offsets).value()[0];
}

Var loss_adv(const Var& scores) {
  Tape& tape = scores.tape();
  return (1.0 / static_cast<double>(scores.value().size())) *
         sum_squares(scores - tape.constant(Tensor(scores.value().shape(), 1.0)));
}

double loss_adv(const Tensor& scores) {
  Tape tape;
  return loss_adv(tape.constant(scores)).value()[0];
}

Var loss_disc(const Var& fake_scores, const Var& real_scores) {
  if (fake_scores.value().size() != real_scores.value().size()) {
    throw DimensionError("loss_disc: fake and real score counts differ (" +
                         std::to_string(fake_scores.value().size()) + " vs " +
                         std::to_string(real_scores.value().size()) + ")");
  }
  const double inv_m = 1.0 / static_cast<double>(fake_scores.value().size());
  Tape& tape = fake_scores.tape();
  return inv_m * sum_squares(fake_scores) +
         inv_m * sum_squares(real_scores - tape.constant(Tensor(real_scores.value().shape(), 1.0)));
}

double loss_disc(const Tensor& fake_scores, const Tensor& real_scores) {
  Tape tape;
  return loss_disc(tape.constant(fake_scores), tape.constant(real_scores)).value()[0];
}

RealMotionPool::RealMotionPool(std::vector<Scene> scenes, std::size_t window)
    : scenes_(std::move(scenes)), window_(window) {
  for (std::size_t s = 0; s < scenes_.size(); ++s) {
    const std::size_t steps = scenes_[s].steps();
    if (steps < window_) continue;
    for (std::size_t p = 0; p < scenes_[s].person_count(); ++p)
      for (std::size_t start = 0; start + window_ <= steps; ++start) slots_.push_back({s, p, start});
  }
}

Tensor RealMotionPool::sample(std::mt19937_64& rng) const {
  if (slots_.empty()) throw InvalidInput("real motion pool is empty");
  std::uniform_int_distribution<std::size_t> pick(0, slots_.size() - 1);
  const Slot& slot = slots_[pick(rng)];
  return scenes_[slot.scene].window(slot.start, window_).persons[slot.person].poses;
}

namespace {

void require_finite(double v, const char* what, long step) {
  if (!std::isfinite(v)) {
    throw NumericalError(std::string(what) + " became non-finite (" + std::to_string(v) +
                         ") at training step " + std::to_string(step));
  }
}

// Replaces the history beyond the first k steps with the model's own
// autoregressive predictions.
TrainSample with_predicted_history(const TrainSample& sample, MrtParams& params) {
  const std::size_t k = params.config.history;
  if (sample.history_steps <= k) return sample;
  const std::size_t extra = sample.history_steps - k;
  const std::size_t chunks = (extra + params.config.k_out - 1) / params.config.k_out;
  const auto result = predict_autoregressive(sample.history.window(0, k), chunks, params);
  TrainSample out = sample;
  for (std::size_t n = 0; n < out.history.person_count(); ++n) {
    Tensor& hist = out.history.persons[n].poses;
    for (std::size_t t = k; t < sample.history_steps; ++t)
      for (std::size_t c = 0; c < hist.cols(); ++c) hist(t, c) = result.predictions[n](t - k, c);
    out.queries[n] = out.history.persons[n].pose(sample.history_steps - 1);
  }
  return out;
}

}  // namespace

PredictorLoss predictor_loss(Tape& tape, const TrainSample& sample, MrtParams& P,
                             DiscriminatorParams& D, const TrainConfig& config, double weight,
                             bool score_adversarial) {
  PredictorLoss out;
  GlobalContext ctx = global_encode(tape, sample.history, P);
  std::vector<Var> terms;
  for (std::size_t n = 0; n < sample.history.person_count(); ++n) {
    Var local = local_encode(tape, sample.history.persons[n].poses, P);
    DecodedChunk chunk = decode_person(tape, local, ctx, sample.history, n,
                                       sample.queries[n].coords, P);
    Var rec = loss_rec(chunk.offsets, sample.target_offsets[n]);
    Var lp = config.lambda_rec * rec;
    double adv_v = 0.0;
    if (score_adversarial || config.lambda_adv > 0.0) {
      Var adv = loss_adv(discriminate(tape, chunk.poses, D, /*trainable=*/false));
      adv_v = adv.value()[0];
      if (config.lambda_adv > 0.0) lp = lp + config.lambda_adv * adv;
    }
    out.rec.push_back(rec.value()[0]);
    out.adv.push_back(adv_v);
    out.person.push_back(lp.value()[0]);
    out.poses.push_back(chunk.poses.value());
    terms.push_back(lp);
  }
  Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = total + terms[i];
  out.total = weight * total;
  return out;
}

Var discriminator_loss(Tape& tape, const Tensor& fake, const Tensor& real, DiscriminatorParams& D) {
  return loss_disc(discriminate(tape, tape.constant(fake), D),
                   discriminate(tape, tape.constant(real), D));
}

TrainMetrics train_step(std::span<const TrainSample> batch, TrainingState& state,
                        const TrainConfig& config, const RealMotionPool* pool,
                        std::mt19937_64& rng) {
  if (batch.empty()) throw InvalidInput("train_step: empty batch");
  const long step = state.step + 1;
  MrtParams& P = state.predictor;
  DiscriminatorParams& D = state.discriminator;
  const bool use_disc = config.lambda_adv > 0.0 || config.train_discriminator;
  const bool update_disc = config.train_discriminator && pool && !pool->empty();

  std::size_t entries = 0;
  for (const auto& s : batch) entries += s.history.person_count();
  const double inv_entries = 1.0 / static_cast<double>(entries);

  ParamSet p_params = P.param_set();
  p_params.zero_grad();
  TrainMetrics m;
  m.step = step;
  double sum_p = 0.0;
  std::vector<Tensor> fakes;
  for (const TrainSample& raw : batch) {
    const TrainSample sample = config.scheduled_sampling ? with_predicted_history(raw, P) : raw;
    Tape tape;
    const PredictorLoss loss = predictor_loss(tape, sample, P, D, config, inv_entries, use_disc);
    for (std::size_t n = 0; n < loss.rec.size(); ++n) {
      const double expected = config.lambda_rec * loss.rec[n] + config.lambda_adv * loss.adv[n];
      if (std::abs(loss.person[n] - expected) > 1e-12 * std::max(1.0, std::abs(expected))) {
        throw NumericalError("L_P decomposition mismatch at step " + std::to_string(step));
      }
      m.loss_rec += loss.rec[n] * inv_entries;
      m.loss_adv += loss.adv[n] * inv_entries;
      sum_p += loss.person[n] * inv_entries;
      if (update_disc) fakes.push_back(loss.poses[n]);
    }
    require_finite(loss.total.value()[0], "predictor loss", step);
    tape.backward(loss.total);
  }
  m.loss_p = config.lambda_rec * m.loss_rec + config.lambda_adv * m.loss_adv;
  require_finite(m.loss_p, "L_P", step);
  if (std::abs(m.loss_p - sum_p) > 1e-9 * std::max(1.0, std::abs(sum_p)))
    throw NumericalError("L_P aggregate mismatch at step " + std::to_string(step));

  state.opt_predictor.lr = config.lr_predictor;
  adam_step(p_params, state.opt_predictor);

  if (update_disc) {
    ParamSet d_params = D.param_set();
    d_params.zero_grad();
    for (const Tensor& fake : fakes) {
      Tape tape;
      Var ld = discriminator_loss(tape, fake, pool->sample(rng), D);
      m.loss_d += ld.value()[0] * inv_entries;
      tape.backward(inv_entries * ld);
    }
    require_finite(m.loss_d, "L_D", step);
    state.opt_discriminator.lr = config.lr_discriminator;
    adam_step(d_params, state.opt_discriminator);
  }
  state.step = step;
  return m;
}

TrainingState initial_state(const ModelConfig& model, const TrainConfig& config) {
  TrainingState state(model);
  initialize(state.predictor.param_set(), derive_seed(config.seed, "init.predictor"));
  initialize(state.discriminator.param_set(), derive_seed(config.seed, "init.discriminator"));
  state.opt_predictor.lr = config.lr_predictor;
  state.opt_discriminator.lr = config.lr_discriminator;
  return state;
}

Trainer::Trainer(std::vector<Scene> corpus, const ModelConfig& model, const TrainConfig& config)
    : config_(config), state_(initial_state(model, config)) {
  build(std::move(corpus));
}

Trainer::Trainer(std::vector<Scene> corpus, TrainingState state, const TrainConfig& config)
    : config_(config), state_(std::move(state)) {
  build(std::move(corpus));
}

void Trainer::build(std::vector<Scene> corpus) {
  config_.validate();
  for (const auto& scene : corpus) {
    auto s = make_samples(scene, state_.predictor.config);
    std::move(s.begin(), s.end(), std::back_inserter(samples_));
  }
  if (samples_.empty()) throw InvalidInput("training corpus yields no samples");
  pool_ = std::make_unique<RealMotionPool>(std::move(corpus), state_.predictor.config.k_out);
}

std::vector<std::size_t> Trainer::batch_indices(long step) const {
  // Step s (1-based) covers positions [(s-1)*B, s*B) of an endless sequence
  // of per-epoch shuffles.
  const std::size_t n = samples_.size();
  const std::size_t bs = config_.batch_size;
  std::vector<std::size_t> out;
  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < bs; ++i) {
    const std::size_t pos = static_cast<std::size_t>(step - 1) * bs + i;
    const std::size_t epoch = pos / n;
    if (epoch != cached_epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 rng(derive_seed(config_.seed, "sampling.epoch" + std::to_string(epoch)));
      std::shuffle(order.begin(), order.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(order[pos % n]);
  }
  return out;
}

TrainMetrics Trainer::step() {
  const long next = state_.step + 1;
  std::vector<TrainSample> batch;
  for (auto i : batch_indices(next)) batch.push_back(samples_[i]);
  std::mt19937_64 rng(derive_seed(config_.seed, "disc.step" + std::to_string(next)));
  return train_step(batch, state_, config_, pool_.get(), rng);
}

AutoregressiveResult predict_autoregressive(const Scene& observed, std::size_t chunks,
                                            MrtParams& params) {
  if (chunks < 1) throw InvalidInput("horizon_chunks must be >= 1");
  observed.validate();
  const std::size_t k_out = params.config.k_out;
  AutoregressiveResult result;
  Scene current = observed;
  for (std::size_t n = 0; n < observed.person_count(); ++n)
    result.predictions.emplace_back(chunks * k_out, observed.persons[n].poses.cols());

  for (std::size_t c = 0; c < chunks; ++c) {
    result.history_lengths.push_back(current.steps());
    auto pass = predict_scene(current, params);
    for (std::size_t n = 0; n < pass.size(); ++n) {
      const Tensor& poses = pass[n].poses;
      Tensor& pred = result.predictions[n];
      for (std::size_t t = 0; t < k_out; ++t)
        for (std::size_t j = 0; j < poses.cols(); ++j) pred(c * k_out + t, j) = poses(t, j);
    }
    if (c + 1 < chunks) {
      for (std::size_t n = 0; n < pass.size(); ++n) {
        const Tensor& old = current.persons[n].poses;
        Tensor grown(old.rows() + k_out, old.cols());
        std::copy(old.data().begin(), old.data().end(), grown.data().begin());
        std::copy(pass[n].poses.data().begin(), pass[n].poses.data().end(),
                  grown.data().begin() + static_cast<std::ptrdiff_t>(old.size()));
        current.persons[n].poses = std::move(grown);
      }
    }
    result.passes.push_back(std::move(pass));
  }
  return result;
}

void save_checkpoint(const std::filesystem::path& path, const TrainingState& state,
                     const TrainConfig& config) {
  Archive archive;
  archive.meta["format"] = "mrt-checkpoint";
  archive.meta["version"] = 1;
  archive.meta["model"] = state.predictor.config;
  archive.meta["train"] = config;
  archive.meta["step"] = state.step;
  // ParamSet needs mutable pointers; the archive only reads through them.
  auto& mutable_state = const_cast<TrainingState&>(state);
  store_params(archive, mutable_state.predictor.param_set(), "P.");
  store_params(archive, mutable_state.discriminator.param_set(), "D.");
  store_adam(archive, state.opt_predictor, "adam.P");
  store_adam(archive, state.opt_discriminator, "adam.D");
  write_archive(path, archive);
}

namespace {

ModelConfig checkpoint_model(const Archive& archive, const std::filesystem::path& path) {
  if (archive.meta.value("format", "") != "mrt-checkpoint")
    throw ParseError(path.string() + " is not a training checkpoint");
  ModelConfig model = archive.meta.at("model").get<ModelConfig>();
  model.validate();
  return model;
}

}  // namespace

TrainingState load_checkpoint(const std::filesystem::path& path, TrainConfig* config) {
  const Archive archive = read_archive(path);
  TrainingState state(checkpoint_model(archive, path));
  restore_params(archive, state.predictor.param_set(), "P.");
  restore_params(archive, state.discriminator.param_set(), "D.");
  restore_adam(archive, state.opt_predictor, "adam.P");
  restore_adam(archive, state.opt_discriminator, "adam.D");
  state.step = archive.meta.value("step", 0L);
  if (config) *config = archive.meta.value("train", nlohmann::json::object()).get<TrainConfig>();
  return state;
}

MrtParams load_predictor(const std::filesystem::path& path) {
  const Archive archive = read_archive(path);
  MrtParams params(checkpoint_model(archive, path));
  restore_params(archive, params.param_set(), "P.");
  return params;
}

}  // namespace mrt
