#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "mrt/attention.hpp"
#include "mrt/data.hpp"
#include "mrt/params.hpp"

namespace mrt {

struct ModelConfig {
  std::size_t joints = 15;
  /// Observed steps per first chunk (k). Later chunks see 2k, 3k, ...
  std::size_t history = 15;
  /// Steps emitted per decoder pass.
  std::size_t k_out = 15;
  std::size_t layers = 3;
  std::size_t heads = 8;
  std::size_t d_model = 128;
  std::size_t d_ff = 256;
  double frame_rate = 15.0;

  std::size_t pose_dim() const { return 3 * joints; }
  /// Throws ConfigError on any violated invariant.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Every learnable weight of the predictor.
struct MrtParams {
  explicit MrtParams(const ModelConfig& config);

  /// Fresh view over all parameters; take a new one after moving/copying.
  ParamSet param_set();

  ModelConfig config;
  Linear local_embed;
  std::vector<EncoderLayerParams> local_layers;
  Linear global_embed;
  std::vector<EncoderLayerParams> global_layers;
  Linear query_embed;
  std::vector<DecoderLayerParams> decoder_layers;
  Linear head_fc1;
  Linear head_fc2;
};

/// Local-range-shaped encoder plus a per-token two-layer scoring head.
struct DiscriminatorParams {
  explicit DiscriminatorParams(const ModelConfig& config);

  ParamSet param_set();

  ModelConfig config;
  Linear embed;
  std::vector<EncoderLayerParams> layers;
  Linear fc1;
  Linear fc2;
};

/// Output of the global-range encoder for one scene, computed once and
/// shared by every queried person.
struct GlobalContext {
  Var tokens;  // (persons * steps) x d_model, person-major
  std::vector<TokenLabel> labels;
  std::size_t persons = 0;
  std::size_t steps = 0;
};

/// Differentiable result of one decoder pass.
struct DecodedChunk {
  Var offsets;  // k_out x 3J
  Var poses;    // k_out x 3J, integrated from the query pose
  std::vector<AttentionRecord> attention;  // one per decoder layer
};

/// Plain-value copy of a DecodedChunk.
struct PredictionChunk {
  Tensor offsets;
  Tensor poses;
  std::vector<AttentionRecord> attention;
};

PredictionChunk to_chunk(const DecodedChunk& chunk);

/// Zero offset followed by x[t] - x[t-1]; same row count as `history`.
Tensor motion_offsets(const Tensor& history);

/// Offsets -> DCT -> embed -> temporal PE -> encoder stack. Returns
/// steps x d_model features. Requires at least 2 steps.
Var local_encode(Tape& tape, const Tensor& history, MrtParams& params, bool trainable = true);

/// Absolute poses of every person -> embed -> per-person temporal PE ->
/// encoder stack over all persons * steps tokens.
GlobalContext global_encode(Tape& tape, const Scene& scene, MrtParams& params,
                            bool trainable = true);

/// One decoder pass for the person whose local features are `local`.
/// `query_pose` (3J) seeds both the query token and the integration of
/// predicted offsets; SPE is computed against every pose of `scene`.
DecodedChunk decode_person(Tape& tape, const Var& local, const GlobalContext& context,
                           const Scene& scene, std::size_t person,
                           std::span<const double> query_pose, MrtParams& params,
                           bool trainable = true);

/// Full forward pass for every person of `scene`, using each person's last
/// observed pose as query.
std::vector<PredictionChunk> predict_scene(const Scene& scene, MrtParams& params);

/// Per-step realness scores (m x 1) for an m x 3J absolute motion.
Var discriminate(Tape& tape, const Var& motion, DiscriminatorParams& params,
                 bool trainable = true);
Tensor discriminate(const Tensor& motion, DiscriminatorParams& params);

}  // namespace mrt
