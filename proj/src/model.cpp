#include "mrt/model.hpp"

#include "mrt/error.hpp"
#include "mrt/transforms.hpp"

namespace mrt {

void ModelConfig::validate() const {
  if (joints < 1) throw ConfigError("joints must be >= 1");
  if (history < 2) throw ConfigError("history must be >= 2 steps");
  if (k_out < 2) throw ConfigError("k_out must be >= 2");
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (heads < 1 || d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " must be divisible by heads " +
                      std::to_string(heads));
  }
  if (d_model % 2 != 0) throw ConfigError("d_model must be even for the positional encoding");
  if (d_ff < 1) throw ConfigError("d_ff must be >= 1");
  if (!(frame_rate > 0.0)) throw ConfigError("frame_rate must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"joints", c.joints},   {"history", c.history}, {"k_out", c.k_out},
       {"layers", c.layers},   {"heads", c.heads},     {"d_model", c.d_model},
       {"d_ff", c.d_ff},       {"frame_rate", c.frame_rate}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.joints = j.value("joints", d.joints);
  c.history = j.value("history", d.history);
  c.k_out = j.value("k_out", d.k_out);
  c.layers = j.value("layers", d.layers);
  c.heads = j.value("heads", d.heads);
  c.d_model = j.value("d_model", d.d_model);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.frame_rate = j.value("frame_rate", d.frame_rate);
}

namespace {

std::vector<EncoderLayerParams> make_stack(const std::string& name, const ModelConfig& c) {
  std::vector<EncoderLayerParams> layers;
  for (std::size_t l = 0; l < c.layers; ++l)
    layers.emplace_back(name + ".layer" + std::to_string(l), c.d_model, c.heads, c.d_ff);
  return layers;
}

const ModelConfig& validated(const ModelConfig& c) {
  c.validate();
  return c;
}

Var encode_stack(Tape& tape, Var tokens, std::vector<EncoderLayerParams>& layers, bool trainable) {
  for (auto& layer : layers) tokens = encoder_layer(tape, tokens, layer, trainable);
  return tokens;
}

}  // namespace

MrtParams::MrtParams(const ModelConfig& c)
    : config(validated(c)),
      local_embed("local_enc.embed", c.pose_dim(), c.d_model),
      local_layers(make_stack("local_enc", c)),
      global_embed("global_enc.embed", c.pose_dim(), c.d_model),
      global_layers(make_stack("global_enc", c)),
      query_embed("decoder.query_embed", c.pose_dim(), c.d_model),
      decoder_layers(make_stack("decoder", c)),
      head_fc1("head.fc1", c.d_model, c.d_ff),
      head_fc2("head.fc2", c.d_ff, c.k_out * c.pose_dim()) {}

ParamSet MrtParams::param_set() {
  std::vector<ParamTensor*> out;
  local_embed.collect(out);
  for (auto& l : local_layers) l.collect(out);
  global_embed.collect(out);
  for (auto& l : global_layers) l.collect(out);
  query_embed.collect(out);
  for (auto& l : decoder_layers) l.collect(out);
  head_fc1.collect(out);
  head_fc2.collect(out);
  return ParamSet(std::move(out));
}

DiscriminatorParams::DiscriminatorParams(const ModelConfig& c)
    : config(validated(c)),
      embed("disc.embed", c.pose_dim(), c.d_model),
      layers(make_stack("disc", c)),
      fc1("disc.fc1", c.d_model, c.d_ff),
      fc2("disc.fc2", c.d_ff, 1) {}

ParamSet DiscriminatorParams::param_set() {
  std::vector<ParamTensor*> out;
  embed.collect(out);
  for (auto& l : layers) l.collect(out);
  fc1.collect(out);
  fc2.collect(out);
  return ParamSet(std::move(out));
}

PredictionChunk to_chunk(const DecodedChunk& chunk) {
  return {chunk.offsets.value(), chunk.poses.value(), chunk.attention};
}

Tensor motion_offsets(const Tensor& history) {
  Tensor out(history.rows(), history.cols());
  for (std::size_t t = 1; t < history.rows(); ++t)
    for (std::size_t c = 0; c < history.cols(); ++c) out(t, c) = history(t, c) - history(t - 1, c);
  return out;
}

Var local_encode(Tape& tape, const Tensor& history, MrtParams& params, bool trainable) {
  const ModelConfig& c = params.config;
  if (history.rank() != 2 || history.rows() < 2) {
    throw InvalidInput("local_encode needs at least 2 observed steps, got " +
                       shape_string(history.shape()));
  }
  if (history.cols() != c.pose_dim()) {
    throw DimensionError("local_encode: pose width " + std::to_string(history.cols()) +
                         " does not match 3J = " + std::to_string(c.pose_dim()));
  }
  Var coeffs = tape.constant(dct_forward(motion_offsets(history)));
  Var tokens = params.local_embed(tape, coeffs, trainable) +
               tape.constant(temporal_pe(history.rows(), c.d_model));
  return encode_stack(tape, tokens, params.local_layers, trainable);
}

GlobalContext global_encode(Tape& tape, const Scene& scene, MrtParams& params, bool trainable) {
  scene.validate();
  const ModelConfig& c = params.config;
  if (scene.joints() != c.joints) {
    throw DimensionError("global_encode: scene has " + std::to_string(scene.joints()) +
                         " joints, model expects " + std::to_string(c.joints));
  }
  GlobalContext ctx;
  ctx.persons = scene.person_count();
  ctx.steps = scene.steps();
  const Var pe = tape.constant(temporal_pe(ctx.steps, c.d_model));
  std::vector<Var> blocks;
  blocks.reserve(ctx.persons);
  for (std::size_t n = 0; n < ctx.persons; ++n) {
    blocks.push_back(params.global_embed(tape, tape.constant(scene.persons[n].poses), trainable) + pe);
    for (std::size_t t = 0; t < ctx.steps; ++t)
      ctx.labels.push_back({TokenLabel::Source::Global, n, t});
  }
  ctx.tokens = encode_stack(tape, concat_rows(blocks), params.global_layers, trainable);
  return ctx;
}

DecodedChunk decode_person(Tape& tape, const Var& local, const GlobalContext& context,
                           const Scene& scene, std::size_t person,
                           std::span<const double> query_pose, MrtParams& params,
                           bool trainable) {
  const ModelConfig& c = params.config;
  if (context.persons != scene.person_count() || context.steps != scene.steps()) {
    throw InvalidInput("decode_person: context covers " + std::to_string(context.persons) +
                       " persons x " + std::to_string(context.steps) + " steps, scene has " +
                       std::to_string(scene.person_count()) + " x " + std::to_string(scene.steps()));
  }
  if (context.persons == 0) throw InvalidInput("decode_person: empty memory");
  if (query_pose.size() != c.pose_dim()) {
    throw DimensionError("decode_person: query pose has " + std::to_string(query_pose.size()) +
                         " values, expected " + std::to_string(c.pose_dim()));
  }

  // f = o + SPE, with each scalar broadcast over its token's channels.
  const auto histories = scene.histories();
  const SpeMatrix spe = spatial_pe(histories, query_pose);
  Tensor spe_tokens(context.persons * context.steps, c.d_model);
  for (std::size_t n = 0; n < context.persons; ++n)
    for (std::size_t t = 0; t < context.steps; ++t)
      for (std::size_t d = 0; d < c.d_model; ++d)
        spe_tokens(n * context.steps + t, d) = spe.values(n, t);
  const Var global = context.tokens + tape.constant(std::move(spe_tokens));
  const Var memory_parts[] = {local, global};
  const Var memory = concat_rows(memory_parts);

  std::vector<TokenLabel> labels;
  labels.reserve(memory.rows());
  for (std::size_t t = 0; t < local.rows(); ++t)
    labels.push_back({TokenLabel::Source::Local, person, t});
  labels.insert(labels.end(), context.labels.begin(), context.labels.end());

  const Var query_row = tape.constant(Tensor({1, c.pose_dim()}, {query_pose.begin(), query_pose.end()}));
  QueryToken q(params.query_embed(tape, query_row, trainable));
  DecodedChunk out;
  for (auto& layer : params.decoder_layers) {
    DecoderOutput step = decoder_layer(tape, q, memory, layer, trainable);
    step.record.keys = labels;
    out.attention.push_back(std::move(step.record));
    q = step.query;
  }

  Var hidden = relu(params.head_fc1(tape, q.var(), trainable));
  Var coeffs = reshape(params.head_fc2(tape, hidden, trainable), c.k_out, c.pose_dim());
  out.offsets = dct_inverse(coeffs);
  const Var integrate_parts[] = {query_row, out.offsets};
  out.poses = slice_rows(cumsum_rows(concat_rows(integrate_parts)), 1, c.k_out);
  return out;
}

std::vector<PredictionChunk> predict_scene(const Scene& scene, MrtParams& params) {
  Tape tape;
  const GlobalContext ctx = global_encode(tape, scene, params, false);
  std::vector<PredictionChunk> chunks;
  const std::size_t last = scene.steps() - 1;
  for (std::size_t n = 0; n < scene.person_count(); ++n) {
    const Tensor& history = scene.persons[n].poses;
    Var local = local_encode(tape, history, params, false);
    chunks.push_back(
        to_chunk(decode_person(tape, local, ctx, scene, n, history.row(last), params, false)));
  }
  return chunks;
}

Var discriminate(Tape& tape, const Var& motion, DiscriminatorParams& params, bool trainable) {
  const ModelConfig& c = params.config;
  if (motion.cols() != c.pose_dim()) {
    throw DimensionError("discriminate: motion width " + std::to_string(motion.cols()) +
                         " does not match 3J = " + std::to_string(c.pose_dim()));
  }
  Var tokens = params.embed(tape, dct_forward(motion), trainable) +
               tape.constant(temporal_pe(motion.rows(), c.d_model));
  tokens = encode_stack(tape, tokens, params.layers, trainable);
  return params.fc2(tape, relu(params.fc1(tape, tokens, trainable)), trainable);
}

Tensor discriminate(const Tensor& motion, DiscriminatorParams& params) {
  Tape tape;
  return discriminate(tape, tape.constant(motion), params, false).value();
}

}  // namespace mrt
