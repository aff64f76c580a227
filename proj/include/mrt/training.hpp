#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mrt/model.hpp"
#include "mrt/optim.hpp"

namespace mrt {

struct TrainConfig {
  double lr_predictor = 3e-4;
  double lr_discriminator = 5e-4;
  double lambda_rec = 1.0;
  double lambda_adv = 5e-4;
  std::size_t batch_size = 32;
  std::size_t max_steps = 1000;
  std::uint64_t seed = 0;
  bool train_discriminator = true;
  /// Use the model's own predictions for the part of longer histories beyond
  /// the first k steps (and as their query pose). Off: teacher forcing.
  bool scheduled_sampling = false;
  /// Write a checkpoint every this many steps; 0 writes only the final one.
  std::size_t checkpoint_every = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Independent seed for a named random stream ("init", "sampling", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

/// One progressive-length training example: the first `history_steps` steps
/// of a scene and the next k_out ground-truth steps of every person.
struct TrainSample {
  Scene history;
  std::size_t history_steps = 0;
  std::vector<Tensor> target_offsets;  // per person, k_out x 3J
  std::vector<Tensor> target_poses;    // per person, k_out x 3J
  std::vector<Pose> queries;           // per person, pose at the last history step
};

/// Samples for every prefix length k, 2k, 3k, ... whose target window fits
/// in the scene. Too-short scenes give an empty list and a warning on stderr.
std::vector<TrainSample> make_samples(const Scene& scene, const ModelConfig& config);

/// (1 / rows) * sum over rows of the squared L2 error.
Var loss_rec(const Var& pred_offsets, const Tensor& true_offsets);
double loss_rec(const Tensor& pred_offsets, const Tensor& true_offsets);
/// Least-squares generator loss: mean of (score - 1)^2.
Var loss_adv(const Var& scores);
double loss_adv(const Tensor& scores);
/// Least-squares discriminator loss: mean(fake^2) + mean((real - 1)^2).
Var loss_disc(const Var& fake_scores, const Var& real_scores);
double loss_disc(const Tensor& fake_scores, const Tensor& real_scores);

/// Uniformly sampled k_out-step windows of real motion for the discriminator.
class RealMotionPool {
 public:
  RealMotionPool(std::vector<Scene> scenes, std::size_t window);
  Tensor sample(std::mt19937_64& rng) const;
  bool empty() const { return slots_.empty(); }

 private:
  struct Slot {
    std::size_t scene, person, start;
  };
  std::vector<Scene> scenes_;
  std::size_t window_;
  std::vector<Slot> slots_;
};

struct TrainMetrics {
  long step = 0;
  double loss_p = 0.0;
  double loss_rec = 0.0;
  double loss_adv = 0.0;
  double loss_d = 0.0;
};

/// Everything a checkpoint restores.
struct TrainingState {
  explicit TrainingState(const ModelConfig& config)
      : predictor(config), discriminator(config) {}

  MrtParams predictor;
  DiscriminatorParams discriminator;
  AdamState opt_predictor;
  AdamState opt_discriminator;
  long step = 0;
};

/// Predictor objective of one sample, built on `tape`.
struct PredictorLoss {
  Var total;                  // weight * sum over persons of L_P
  std::vector<double> person; // L_P = lambda_rec * L_rec + lambda_adv * L_adv
  std::vector<double> rec;
  std::vector<double> adv;    // 0 when the discriminator is not consulted
  std::vector<Tensor> poses;  // predicted absolute poses per person
};
/// The discriminator is always frozen here. It is consulted when
/// lambda_adv > 0 or `score_adversarial` asks for L_adv as a metric.
PredictorLoss predictor_loss(Tape& tape, const TrainSample& sample, MrtParams& predictor,
                             DiscriminatorParams& discriminator, const TrainConfig& config,
                             double weight = 1.0, bool score_adversarial = false);
/// L_D on one detached fake motion and one real window.
Var discriminator_loss(Tape& tape, const Tensor& fake, const Tensor& real,
                       DiscriminatorParams& discriminator);

/// One joint update: predictor on lambda_rec * L_rec + lambda_adv * L_adv
/// with the discriminator frozen, then (if enabled) the discriminator on
/// L_D over detached predictions and real windows from `pool`.
/// Throws NumericalError on a non-finite loss.
TrainMetrics train_step(std::span<const TrainSample> batch, TrainingState& state,
                        const TrainConfig& config, const RealMotionPool* pool,
                        std::mt19937_64& rng);

/// Owns the sample list and batch schedule. Batches and discriminator
/// windows are a pure function of (seed, step), so resuming from a
/// checkpoint continues the same schedule.
class Trainer {
 public:
  Trainer(std::vector<Scene> corpus, const ModelConfig& model, const TrainConfig& config);
  Trainer(std::vector<Scene> corpus, TrainingState state, const TrainConfig& config);

  TrainMetrics step();
  TrainingState& state() { return state_; }
  const TrainConfig& config() const { return config_; }
  std::size_t sample_count() const { return samples_.size(); }

 private:
  void build(std::vector<Scene> corpus);
  std::vector<std::size_t> batch_indices(long step) const;

  TrainConfig config_;
  TrainingState state_;
  std::vector<TrainSample> samples_;
  std::unique_ptr<RealMotionPool> pool_;
};

/// Fresh parameters, Xavier-initialized from derive_seed(seed, "init").
TrainingState initial_state(const ModelConfig& model, const TrainConfig& config);

struct AutoregressiveResult {
  std::vector<Tensor> predictions;                   // per person, chunks*k_out x 3J
  std::vector<std::vector<PredictionChunk>> passes;  // passes[c][person]
  std::vector<std::size_t> history_lengths;          // encoder input steps per pass
};

/// Chunk 1 from the observed scene; every later chunk re-encodes the whole
/// observed + predicted history with the last predicted pose as query.
AutoregressiveResult predict_autoregressive(const Scene& observed, std::size_t chunks,
                                            MrtParams& params);

void save_checkpoint(const std::filesystem::path& path, const TrainingState& state,
                     const TrainConfig& config);
/// Restores parameters, optimizer moments and the step counter. The
/// training config stored in the header is returned through `config`.
TrainingState load_checkpoint(const std::filesystem::path& path, TrainConfig* config = nullptr);
/// Predictor only; used by inference.
MrtParams load_predictor(const std::filesystem::path& path);

}  // namespace mrt
