#include "mrt/attention.hpp"

#include <cmath>

#include "mrt/error.hpp"

namespace mrt {

AttentionParams::AttentionParams(const std::string& name, std::size_t d_model_,
                                 std::size_t heads_)
    : d_model(d_model_), heads(heads_) {
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by head count " +
                      std::to_string(heads));
  }
  d_key = d_model / heads;
  for (std::size_t i = 0; i < heads; ++i) {
    const std::string suffix = ".head" + std::to_string(i);
    wq.emplace_back(name + ".Wq" + suffix, Tensor(d_model, d_key));
    wk.emplace_back(name + ".Wk" + suffix, Tensor(d_model, d_key));
    wv.emplace_back(name + ".Wv" + suffix, Tensor(d_model, d_key));
  }
  wo = ParamTensor(name + ".Wo", Tensor(heads * d_key, d_model));
}

void AttentionParams::collect(std::vector<ParamTensor*>& out) {
  for (std::size_t i = 0; i < heads; ++i) {
    out.push_back(&wq[i]);
    out.push_back(&wk[i]);
    out.push_back(&wv[i]);
  }
  out.push_back(&wo);
}

EncoderLayerParams::EncoderLayerParams(const std::string& name, std::size_t d_model,
                                       std::size_t heads, std::size_t d_ff)
    : attn(name + ".attn", d_model, heads),
      norm1(name + ".norm1", d_model),
      ff1(name + ".ff1", d_model, d_ff),
      ff2(name + ".ff2", d_ff, d_model),
      norm2(name + ".norm2", d_model) {}

void EncoderLayerParams::collect(std::vector<ParamTensor*>& out) {
  attn.collect(out);
  norm1.collect(out);
  ff1.collect(out);
  ff2.collect(out);
  norm2.collect(out);
}

AttentionOutput multi_head_attention(Tape& tape, const Var& queries, const Var& keys_values,
                                     AttentionParams& params, bool trainable) {
  if (queries.cols() != params.d_model || keys_values.cols() != params.d_model) {
    throw DimensionError("multi_head_attention: token widths " + std::to_string(queries.cols()) +
                         " / " + std::to_string(keys_values.cols()) + " do not match d_model " +
                         std::to_string(params.d_model));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.d_key));
  AttentionOutput result;
  std::vector<Var> heads;
  heads.reserve(params.heads);
  for (std::size_t i = 0; i < params.heads; ++i) {
    Var q = matmul(queries, tape.param(params.wq[i], trainable));
    Var k = matmul(keys_values, tape.param(params.wk[i], trainable));
    Var v = matmul(keys_values, tape.param(params.wv[i], trainable));
    Var weights = softmax_rows(scale * matmul(q, transpose(k)));
    result.record.heads.push_back(weights.value());
    heads.push_back(matmul(weights, v));
  }
  result.out = matmul(concat_cols(heads), tape.param(params.wo, trainable));
  return result;
}

Var encoder_layer(Tape& tape, const Var& tokens, EncoderLayerParams& params, bool trainable) {
  Var attended = multi_head_attention(tape, tokens, tokens, params.attn, trainable).out;
  Var x = params.norm1(tape, tokens + attended, trainable);
  Var ff = params.ff2(tape, relu(params.ff1(tape, x, trainable)), trainable);
  return params.norm2(tape, x + ff, trainable);
}

QueryToken::QueryToken(Var token) : token_(token) {
  if (token.rows() != 1) {
    throw DimensionError("decoder query must be a single token, got " +
                         shape_string(token.value().shape()));
  }
}

DecoderOutput decoder_layer(Tape& tape, const QueryToken& query, const Var& memory,
                            DecoderLayerParams& params, bool trainable) {
  if (memory.value().rank() != 2) throw InvalidInput("decoder memory must be a token matrix");
  AttentionOutput cross = multi_head_attention(tape, query.var(), memory, params.attn, trainable);
  Var x = params.norm1(tape, query.var() + cross.out, trainable);
  Var ff = params.ff2(tape, relu(params.ff1(tape, x, trainable)), trainable);
  return {QueryToken(params.norm2(tape, x + ff, trainable)), std::move(cross.record)};
}

}  // namespace mrt
