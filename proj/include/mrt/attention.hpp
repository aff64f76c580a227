#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mrt/autodiff.hpp"
#include "mrt/params.hpp"

namespace mrt {

/// Per-head query/key/value projections (d_model x d_key each) and the
/// shared output projection ((heads * d_key) x d_model). No biases.
struct AttentionParams {
  AttentionParams() = default;
  AttentionParams(const std::string& name, std::size_t d_model, std::size_t heads);

  void collect(std::vector<ParamTensor*>& out);

  std::size_t d_model = 0;
  std::size_t heads = 0;
  std::size_t d_key = 0;
  std::vector<ParamTensor> wq;
  std::vector<ParamTensor> wk;
  std::vector<ParamTensor> wv;
  ParamTensor wo;
};

/// Attention block + feed-forward block, each followed by residual add and
/// layer norm. Decoder layers reuse the same shapes with cross-attention.
struct EncoderLayerParams {
  EncoderLayerParams() = default;
  EncoderLayerParams(const std::string& name, std::size_t d_model, std::size_t heads,
                     std::size_t d_ff);

  void collect(std::vector<ParamTensor*>& out);

  AttentionParams attn;
  LayerNormParams norm1;
  Linear ff1;
  Linear ff2;
  LayerNormParams norm2;
};

using DecoderLayerParams = EncoderLayerParams;

/// Where a key token came from. Filled in by the model; plain attention
/// calls leave it empty.
struct TokenLabel {
  enum class Source { Local, Global };
  Source source = Source::Local;
  std::size_t person = 0;
  std::size_t time = 0;

  friend bool operator==(const TokenLabel&, const TokenLabel&) = default;
};

/// Post-softmax attention weights captured during a forward pass.
struct AttentionRecord {
  std::vector<Tensor> heads;  // one (queries x keys) matrix per head
  std::vector<TokenLabel> keys;
};

struct AttentionOutput {
  Var out;
  AttentionRecord record;
};

/// [head_1; ...; head_h] W_O with head_i = softmax(Q_i K_i^T / sqrt(d_key)) V_i.
AttentionOutput multi_head_attention(Tape& tape, const Var& queries, const Var& keys_values,
                                     AttentionParams& params, bool trainable = true);

/// Post-norm self-attention encoder layer; output shape equals input shape.
Var encoder_layer(Tape& tape, const Var& tokens, EncoderLayerParams& params,
                  bool trainable = true);

/// A single d_model feature row. Construction rejects anything with more
/// than one row, so a decoder layer can never see a query sequence.
class QueryToken {
 public:
  explicit QueryToken(Var token);
  const Var& var() const { return token_; }

 private:
  Var token_;
};

struct DecoderOutput {
  QueryToken query;
  AttentionRecord record;
};

/// Cross-attention from the query token over `memory`, then the same
/// residual/norm/feed-forward stack as an encoder layer.
DecoderOutput decoder_layer(Tape& tape, const QueryToken& query, const Var& memory,
                            DecoderLayerParams& params, bool trainable = true);

}  // namespace mrt
