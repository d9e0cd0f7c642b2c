#include "lrc/encoder.hpp"

#include <cmath>
#include <string>

#include "lrc/error.hpp"
#include "lrc/rng.hpp"
#include "lrc/vocab.hpp"

namespace lrc {

void EncoderConfig::validate() const {
  auto positive = [](const char* field, int v) {
    if (v <= 0) throw ConfigError(std::string(field) + " must be positive, got " + std::to_string(v));
  };
  positive("vocab_size", vocab_size);
  positive("max_len", max_len);
  positive("num_layers", num_layers);
  positive("hidden_size", hidden_size);
  positive("num_heads", num_heads);
  positive("ffn_size", ffn_size);
  positive("num_classes", num_classes);
  if (hidden_size % num_heads != 0) {
    throw ConfigError("num_heads (" + std::to_string(num_heads) + ") must divide hidden_size (" +
                      std::to_string(hidden_size) + ")");
  }
}

std::size_t param_count(const EncoderConfig& c) {
  const std::size_t V = c.vocab_size, L = c.max_len, N = c.num_layers, H = c.hidden_size, F = c.ffn_size,
                    C = c.num_classes;
  return V * H + L * H + 2 * H + N * (4 * (H * H + H) + 2 * H + H * F + F + F * H + H + 2 * H) + H * C + C;
}

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

Parameter make(const std::string& name, Shape shape, double fill = 0.0) {
  return Parameter(name, Tensor(std::move(shape), fill));
}

EncoderLayer make_layer(int index, std::size_t H, std::size_t F) {
  const std::string p = "layer" + std::to_string(index) + ".";
  return EncoderLayer{
      make(p + "attn.query.weight", {H, H}),   make(p + "attn.query.bias", {H}),
      make(p + "attn.key.weight", {H, H}),     make(p + "attn.key.bias", {H}),
      make(p + "attn.value.weight", {H, H}),   make(p + "attn.value.bias", {H}),
      make(p + "attn.output.weight", {H, H}),  make(p + "attn.output.bias", {H}),
      make(p + "attn.ln.gain", {H}, 1.0),      make(p + "attn.ln.bias", {H}),
      make(p + "ffn.in.weight", {H, F}),       make(p + "ffn.in.bias", {F}),
      make(p + "ffn.out.weight", {F, H}),      make(p + "ffn.out.bias", {H}),
      make(p + "ffn.ln.gain", {H}, 1.0),       make(p + "ffn.ln.bias", {H}),
  };
}

bool is_gain(const std::string& name) { return name.ends_with(".gain"); }
bool is_bias(const std::string& name) { return name.ends_with(".bias"); }

}  // namespace

EncoderModel::EncoderModel(const EncoderConfig& config)
    : config_(config),
      tok_emb_(make("embeddings.token", {sz(config.vocab_size), sz(config.hidden_size)})),
      pos_emb_(make("embeddings.position", {sz(config.max_len), sz(config.hidden_size)})),
      emb_ln_gain_(make("embeddings.ln.gain", {sz(config.hidden_size)}, 1.0)),
      emb_ln_bias_(make("embeddings.ln.bias", {sz(config.hidden_size)})),
      cls_w_(make("classifier.weight", {sz(config.hidden_size), sz(config.num_classes)})),
      cls_b_(make("classifier.bias", {sz(config.num_classes)})) {
  layers_.reserve(sz(config.num_layers));
  for (int i = 0; i < config.num_layers; ++i) layers_.push_back(make_layer(i, sz(config.hidden_size), sz(config.ffn_size)));
}

EncoderModel EncoderModel::init(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  EncoderModel model(config);
  Rng rng(seed);
  for (Parameter* p : model.parameters()) {
    if (is_gain(p->name()) || is_bias(p->name())) continue;
    for (double& v : p->value().data()) v = rng.uniform(-0.08, 0.08);
  }
  return model;
}

std::vector<Parameter*> EncoderModel::parameters() {
  std::vector<Parameter*> out{&tok_emb_, &pos_emb_, &emb_ln_gain_, &emb_ln_bias_};
  for (EncoderLayer& l : layers_) {
    for (Parameter* p : {&l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln1_gain, &l.ln1_bias, &l.w1,
                         &l.b1, &l.w2, &l.b2, &l.ln2_gain, &l.ln2_bias})
      out.push_back(p);
  }
  out.push_back(&cls_w_);
  out.push_back(&cls_b_);
  return out;
}

std::vector<const Parameter*> EncoderModel::parameters() const {
  auto mut = const_cast<EncoderModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

namespace {

template <typename Bind>
ForwardTrace forward_impl(Tape& tape, const EncoderModel& model, std::span<const int> tokens, ForwardOptions opt,
                          Bind bind) {
  const EncoderConfig& cfg = model.config();
  const std::size_t l = tokens.size();
  const std::size_t H = sz(cfg.hidden_size);
  if (l == 0 || l > sz(cfg.max_len)) {
    throw InputError("sequence length " + std::to_string(l) + " outside [1, " + std::to_string(cfg.max_len) + "]");
  }
  for (int id : tokens) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw InputError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                       std::to_string(cfg.vocab_size));
    }
  }
  const Shape emb_shape{l, H};
  if (opt.inject_emb && opt.inject_emb->shape() != emb_shape) {
    throw DimensionError("inject_emb has shape " + shape_string(opt.inject_emb->shape()) + ", expected " +
                         shape_string(emb_shape));
  }
  if (opt.emb_offset && opt.emb_offset->shape() != emb_shape) {
    throw DimensionError("emb_offset has shape " + shape_string(opt.emb_offset->shape()) + ", expected " +
                         shape_string(emb_shape));
  }

  ForwardTrace trace;
  Var x;
  if (opt.inject_emb) {
    x = tape.input(*opt.inject_emb, true);
  } else {
    std::vector<int> positions(l);
    for (std::size_t i = 0; i < l; ++i) positions[i] = static_cast<int>(i);
    Var tok = embedding(bind(model.token_embedding()), tokens);
    Var pos = embedding(bind(model.position_embedding()), positions);
    x = layer_norm(add(tok, pos), bind(model.embedding_ln_gain()), bind(model.embedding_ln_bias()));
    if (opt.emb_offset) x = add(x, tape.constant(*opt.emb_offset));
  }
  trace.emb_out = x;

  // Additive key mask hiding padding positions.
  bool has_pad = false;
  for (int id : tokens) has_pad = has_pad || id == kPadToken;
  Var mask;
  if (has_pad) {
    Tensor m(Shape{l, l}, 0.0);
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < l; ++j)
        if (tokens[j] == kPadToken) m.at(i, j) = -1e30;
    mask = tape.constant(std::move(m));
  }

  const std::size_t heads = sz(cfg.num_heads);
  const std::size_t dh = H / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const EncoderLayer& layer : model.layers()) {
    Var q = add_bias(matmul(x, bind(layer.wq)), bind(layer.bq));
    Var k = add_bias(matmul(x, bind(layer.wk)), bind(layer.bk));
    Var v = add_bias(matmul(x, bind(layer.wv)), bind(layer.bv));
    std::vector<Var> ctx;
    ctx.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      Var qh = columns(q, h * dh, dh);
      Var kh = columns(k, h * dh, dh);
      Var vh = columns(v, h * dh, dh);
      Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
      if (has_pad) scores = add(scores, mask);
      ctx.push_back(matmul(softmax(scores), vh));
    }
    Var attn = heads == 1 ? ctx[0] : concat_columns(ctx);
    attn = add_bias(matmul(attn, bind(layer.wo)), bind(layer.bo));
    Var x1 = layer_norm(add(x, attn), bind(layer.ln1_gain), bind(layer.ln1_bias));
    Var f = add_bias(matmul(gelu(add_bias(matmul(x1, bind(layer.w1)), bind(layer.b1))), bind(layer.w2)),
                     bind(layer.b2));
    x = layer_norm(add(x1, f), bind(layer.ln2_gain), bind(layer.ln2_bias));
    trace.ffn_outs.push_back(x);
  }

  Var pooled = reshape(row(x, 0), Shape{1, H});
  Var logits = reshape(matmul(pooled, bind(model.classifier_weight())), Shape{sz(cfg.num_classes)});
  trace.logits = add_bias(logits, bind(model.classifier_bias()));
  return trace;
}

}  // namespace

ForwardTrace forward(Tape& tape, EncoderModel& model, std::span<const int> tokens, ForwardOptions options) {
  // `model` is mutable here, so binding its parameters as trainable leaves is sound.
  return forward_impl(tape, model, tokens, options,
                      [&tape](const Parameter& p) { return tape.param(const_cast<Parameter&>(p)); });
}

ForwardTrace forward(Tape& tape, const EncoderModel& model, std::span<const int> tokens, ForwardOptions options) {
  return forward_impl(tape, model, tokens, options, [&tape](const Parameter& p) { return tape.frozen(p); });
}

TraceValues values_of(const ForwardTrace& trace) {
  TraceValues out;
  out.emb_out = trace.emb_out.value();
  out.ffn_outs.reserve(trace.ffn_outs.size());
  for (Var v : trace.ffn_outs) out.ffn_outs.push_back(v.value());
  out.logits = trace.logits.value();
  return out;
}

TraceValues evaluate_trace(const EncoderModel& model, std::span<const int> tokens) {
  Tape tape(GradMode::Disabled);
  return values_of(forward(tape, model, tokens));
}

Tensor predict_logits(const EncoderModel& model, std::span<const int> tokens) {
  Tape tape(GradMode::Disabled);
  return forward(tape, model, tokens).logits.value();
}

}  // namespace lrc
