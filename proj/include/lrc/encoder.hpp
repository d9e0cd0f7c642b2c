#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lrc/autograd.hpp"

namespace lrc {

struct EncoderConfig {
  int vocab_size = 8;
  int max_len = 16;
  int num_layers = 2;
  int hidden_size = 16;
  int num_heads = 2;
  int ffn_size = 32;
  int num_classes = 2;  // 1 selects a regression head

  // Throws ConfigError naming the first invalid field.
  void validate() const;
  bool regression() const { return num_classes == 1; }
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Number of scalar parameters, in closed form:
//   V*H + L*H + 2H                                   embeddings + embedding LN
//   + N * (4(H*H + H) + 2H + H*F + F + F*H + H + 2H) attention, LN1, FFN, LN2
//   + H*C + C                                        classifier head
std::size_t param_count(const EncoderConfig& config);

struct EncoderLayer {
  Parameter wq, bq, wk, bk, wv, bv, wo, bo;
  Parameter ln1_gain, ln1_bias;
  Parameter w1, b1, w2, b2;
  Parameter ln2_gain, ln2_bias;
};

// Post-norm BERT-style encoder with learned positions, GELU FFN and a
// classifier on the first position.
class EncoderModel {
 public:
  // Weight matrices and embeddings ~ U(-0.08, 0.08) drawn in parameter order;
  // biases 0; layer-norm gains 1. Deterministic in (config, seed).
  static EncoderModel init(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }

  // Fixed enumeration order; checkpoints and optimizers rely on it.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  Parameter& token_embedding() { return tok_emb_; }
  Parameter& classifier_weight() { return cls_w_; }
  Parameter& classifier_bias() { return cls_b_; }
  std::vector<EncoderLayer>& layers() { return layers_; }

  const Parameter& token_embedding() const { return tok_emb_; }
  const Parameter& position_embedding() const { return pos_emb_; }
  const Parameter& embedding_ln_gain() const { return emb_ln_gain_; }
  const Parameter& embedding_ln_bias() const { return emb_ln_bias_; }
  const std::vector<EncoderLayer>& layers() const { return layers_; }
  const Parameter& classifier_weight() const { return cls_w_; }
  const Parameter& classifier_bias() const { return cls_b_; }

 private:
  explicit EncoderModel(const EncoderConfig& config);

  EncoderConfig config_;
  Parameter tok_emb_, pos_emb_, emb_ln_gain_, emb_ln_bias_;
  std::vector<EncoderLayer> layers_;
  Parameter cls_w_, cls_b_;
};

struct ForwardTrace {
  Var emb_out;                // [l x hidden], input to layer 1
  std::vector<Var> ffn_outs;  // per layer, [l x hidden]
  Var logits;                 // [num_classes]
};

// Detached copy of a trace, used for frozen-teacher outputs.
struct TraceValues {
  Tensor emb_out;
  std::vector<Tensor> ffn_outs;
  Tensor logits;
};

struct ForwardOptions {
  // Replaces the embedding block entirely; its parameters get no gradient.
  const Tensor* inject_emb = nullptr;
  // Constant added to the embedding output; gradients still reach the
  // embedding parameters.
  const Tensor* emb_offset = nullptr;
};

// Records the forward pass on `tape` with the model's parameters as
// trainable leaves.
ForwardTrace forward(Tape& tape, EncoderModel& model, std::span<const int> tokens, ForwardOptions options = {});
// Same computation with parameters recorded as constants.
ForwardTrace forward(Tape& tape, const EncoderModel& model, std::span<const int> tokens, ForwardOptions options = {});

TraceValues values_of(const ForwardTrace& trace);
// Gradient-free evaluation.
TraceValues evaluate_trace(const EncoderModel& model, std::span<const int> tokens);
Tensor predict_logits(const EncoderModel& model, std::span<const int> tokens);

}  // namespace lrc
