#include "lrc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "lrc/distiller.hpp"
#include "lrc/encoder.hpp"
#include "lrc/error.hpp"
#include "lrc/losses.hpp"
#include "lrc/rng.hpp"

namespace lrc {
namespace {

constexpr double kCorruptOffset = 1e-2;

void compare(GradCheckResult& r, std::size_t input, std::size_t index, double analytic, double numeric,
             const GradCheckOptions& o) {
  ++r.elements;
  const double diff = std::abs(analytic - numeric);
  if (diff <= o.abs_tolerance) return;
  const double rel = diff / std::max(std::abs(analytic), std::abs(numeric));
  if (rel > r.max_rel_error) {
    r.max_rel_error = rel;
    r.worst_input = input;
    r.worst_index = index;
    r.analytic = analytic;
    r.numeric = numeric;
  }
  if (rel > o.rel_tolerance) r.passed = false;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

}  // namespace

GradCheckResult check_gradient(const std::string& op, const LossBuilder& build, std::vector<Tensor> inputs,
                               const GradCheckOptions& options, std::vector<bool> differentiable) {
  if (differentiable.empty()) differentiable.assign(inputs.size(), true);
  if (differentiable.size() != inputs.size()) throw ContractError("check_gradient: flag count != input count");

  auto evaluate = [&](bool with_grad, std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      vars.push_back(tape.input(inputs[i], with_grad && differentiable[i]));
    Var loss = build(tape, vars);
    const double value = loss.item();
    if (grads) {
      tape.backward(loss, GradSink::NodesOnly);
      for (Var v : vars) grads->push_back(tape.grad(v));
    }
    return value;
  };

  std::vector<Tensor> analytic;
  evaluate(true, &analytic);

  GradCheckResult r;
  r.op = op;
  const double h = options.step;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!differentiable[i]) continue;
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double saved = inputs[i][j];
      inputs[i][j] = saved + h;
      const double up = evaluate(false, nullptr);
      inputs[i][j] = saved - h;
      const double down = evaluate(false, nullptr);
      inputs[i][j] = saved;
      double a = analytic[i][j];
      if (options.corrupt == op) a += kCorruptOffset;
      compare(r, i, j, a, (up - down) / (2 * h), options);
    }
  }
  return r;
}

GradCheckResult check_parameter_gradient(const std::string& op, const ParamLossBuilder& build,
                                         std::span<Parameter* const> params, const GradCheckOptions& options) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = build(tape);
    tape.backward(loss);
  }
  std::vector<Tensor> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad());

  auto loss_value = [&] {
    Tape tape(GradMode::Disabled);
    return build(tape).item();
  };

  GradCheckResult r;
  r.op = op;
  const double h = options.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& v = params[i]->value();
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double saved = v[j];
      v[j] = saved + h;
      const double up = loss_value();
      v[j] = saved - h;
      const double down = loss_value();
      v[j] = saved;
      double a = analytic[i][j];
      if (options.corrupt == op) a += kCorruptOffset;
      compare(r, i, j, a, (up - down) / (2 * h), options);
    }
    params[i]->zero_grad();
  }
  return r;
}

std::string to_string(GradCheckScope s) {
  switch (s) {
    case GradCheckScope::Losses: return "losses";
    case GradCheckScope::Encoder: return "encoder";
    case GradCheckScope::End2End: return "end2end";
  }
  return "?";
}

GradCheckScope grad_check_scope_from_string(const std::string& s) {
  if (s == "losses") return GradCheckScope::Losses;
  if (s == "encoder") return GradCheckScope::Encoder;
  if (s == "end2end") return GradCheckScope::End2End;
  throw ConfigError("unknown grad-check scope '" + s + "' (expected losses|encoder|end2end)");
}

namespace {

std::vector<GradCheckResult> loss_suite(Rng& rng, const GradCheckOptions& o) {
  std::vector<GradCheckResult> out;
  auto run = [&](const std::string& name, std::vector<Tensor> inputs, LossBuilder fn,
                 std::vector<bool> diff = {}) { out.push_back(check_gradient(name, fn, std::move(inputs), o, diff)); };
  // A fixed, non-symmetric weighting so every output element matters.
  auto weigh = [](Var y) {
    Tensor w(y.shape());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.17 * static_cast<double>(i % 7);
    return sum(mul(y, y.tape->constant(std::move(w))));
  };

  run("add", {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)},
      [&](Tape&, std::span<const Var> v) { return weigh(add(v[0], v[1])); });
  run("sub", {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)},
      [&](Tape&, std::span<const Var> v) { return weigh(sub(v[0], v[1])); });
  run("mul", {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)},
      [&](Tape&, std::span<const Var> v) { return weigh(mul(v[0], v[1])); });
  run("div", {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng, 0.5, 2.0)},
      [&](Tape&, std::span<const Var> v) { return weigh(div(v[0], v[1])); });
  run("scale", {random_tensor({4}, rng)}, [&](Tape&, std::span<const Var> v) { return weigh(scale(v[0], -1.7)); });
  run("add_scalar", {random_tensor({4}, rng)},
      [&](Tape&, std::span<const Var> v) { return weigh(add_scalar(v[0], 0.4)); });
  run("square", {random_tensor({4}, rng)}, [&](Tape&, std::span<const Var> v) { return weigh(square(v[0])); });
  run("log", {random_tensor({4}, rng, 0.5, 2.0)}, [&](Tape&, std::span<const Var> v) { return weigh(log(v[0])); });
  run("exp", {random_tensor({4}, rng)}, [&](Tape&, std::span<const Var> v) { return weigh(exp(v[0])); });
  run("gelu", {random_tensor({6}, rng, -3.0, 3.0)},
      [&](Tape&, std::span<const Var> v) { return weigh(gelu(v[0])); });
  run("sum", {random_tensor({2, 3}, rng)}, [&](Tape&, std::span<const Var> v) { return square(sum(v[0])); });
  run("mean", {random_tensor({2, 3}, rng)}, [&](Tape&, std::span<const Var> v) { return square(mean(v[0])); });
  run("dot", {random_tensor({5}, rng), random_tensor({5}, rng)},
      [&](Tape&, std::span<const Var> v) { return dot(v[0], v[1]); });
  run("l2_norm", {random_tensor({5}, rng)}, [&](Tape&, std::span<const Var> v) { return l2_norm(v[0]); });
  run("matmul", {random_tensor({2, 3}, rng), random_tensor({3, 4}, rng)},
      [&](Tape&, std::span<const Var> v) { return weigh(matmul(v[0], v[1])); });
  run("transpose", {random_tensor({2, 3}, rng)},
      [&](Tape&, std::span<const Var> v) { return weigh(transpose(v[0])); });
  run("reshape", {random_tensor({2, 3}, rng)},
      [&](Tape&, std::span<const Var> v) { return weigh(reshape(v[0], {3, 2})); });
  run("add_bias", {random_tensor({3, 4}, rng), random_tensor({4}, rng)},
      [&](Tape&, std::span<const Var> v) { return weigh(add_bias(v[0], v[1])); });
  run("softmax", {random_tensor({2, 4}, rng, -2.0, 2.0)},
      [&](Tape&, std::span<const Var> v) { return weigh(softmax(v[0], 1.1)); });
  run("log_softmax", {random_tensor({2, 4}, rng, -2.0, 2.0)},
      [&](Tape&, std::span<const Var> v) { return weigh(log_softmax(v[0], 1.1)); });
  run("layer_norm", {random_tensor({3, 4}, rng), random_tensor({4}, rng, 0.5, 1.5), random_tensor({4}, rng)},
      [&](Tape&, std::span<const Var> v) { return weigh(layer_norm(v[0], v[1], v[2])); });
  {
    const std::vector<int> ids{2, 0, 2, 1};
    run("embedding", {random_tensor({3, 4}, rng)},
        [&, ids](Tape&, std::span<const Var> v) { return weigh(embedding(v[0], ids)); });
  }
  run("row", {random_tensor({3, 4}, rng)}, [&](Tape&, std::span<const Var> v) { return weigh(row(v[0], 1)); });
  run("columns", {random_tensor({3, 5}, rng)},
      [&](Tape&, std::span<const Var> v) { return weigh(columns(v[0], 1, 3)); });
  run("concat_columns", {random_tensor({3, 2}, rng), random_tensor({3, 3}, rng)},
      [&](Tape&, std::span<const Var> v) { return weigh(concat_columns(v)); });

  run("angular_distance", {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)},
      [&](Tape&, std::span<const Var> v) { return angular_distance(v[0], v[1]); });
  {
    const Tensor z_t = random_tensor({6}, rng);
    const std::vector<Tensor> negs{random_tensor({6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)};
    run("cos_nce", {random_tensor({6}, rng)},
        [&, z_t, negs](Tape&, std::span<const Var> v) { return cos_nce(v[0], z_t, negs); });
  }
  {
    const Tensor y_t = random_tensor({3}, rng, -2.0, 2.0);
    run("soft_loss", {random_tensor({3}, rng, -2.0, 2.0)},
        [&, y_t](Tape&, std::span<const Var> v) { return soft_loss(v[0], y_t, 1.1); });
  }
  run("hard_loss", {random_tensor({3}, rng, -2.0, 2.0)},
      [&](Tape&, std::span<const Var> v) { return hard_loss(v[0], one_hot(1, 3), 1.1, true); });
  run("hard_loss_onehot", {random_tensor({3}, rng, -2.0, 2.0)},
      [&](Tape&, std::span<const Var> v) { return hard_loss(v[0], one_hot(2, 3), 1.1, false); });
  run("regression", {random_tensor({1}, rng)}, [&](Tape&, std::span<const Var> v) {
    RegressionLosses r = regression_losses(v[0], 0.3, 0.6);
    return add(r.l_soft, scale(r.l_hard, 3.0));
  });
  {
    const Tensor h_t = random_tensor({2, 5}, rng);
    run("mse_layer_loss", {random_tensor({2, 5}, rng)},
        [&, h_t](Tape&, std::span<const Var> v) { return mse_layer_loss(v[0], h_t); });
  }
  return out;
}

EncoderConfig small_encoder(int num_classes) {
  EncoderConfig c;
  c.vocab_size = 6;
  c.max_len = 4;
  c.num_layers = 2;
  c.hidden_size = 4;
  c.num_heads = 2;
  c.ffn_size = 6;
  c.num_classes = num_classes;
  return c;
}

std::vector<GradCheckResult> encoder_suite(std::uint64_t seed, const GradCheckOptions& o) {
  std::vector<GradCheckResult> out;
  // The last position is padding so the attention mask is exercised.
  const std::vector<int> tokens{2, 4, 3, 0};
  for (int classes : {3, 1}) {
    EncoderModel model = EncoderModel::init(small_encoder(classes), derive_seed(seed, 10 + classes));
    // Spread the weights so layer norms and GELUs see non-trivial inputs.
    Rng rng(derive_seed(seed, 20 + classes));
    for (Parameter* p : model.parameters())
      for (double& x : p->value().data()) x += rng.uniform(-0.3, 0.3);
    auto params = model.parameters();
    const std::string name = classes == 1 ? "encoder_regression" : "encoder";
    out.push_back(check_parameter_gradient(
        name,
        [&](Tape& tape) {
          ForwardTrace t = forward(tape, model, tokens);
          Var loss = classes == 1 ? square(add_scalar(reshape(t.logits, {}), -0.5))
                                  : hard_loss(t.logits, one_hot(2, classes), 1.0, false);
          // Pull every layer output into the loss as well.
          for (Var h : t.ffn_outs) loss = add(loss, scale(sum(square(h)), 0.01));
          return loss;
        },
        params, o));
  }
  return out;
}

std::vector<GradCheckResult> end2end_suite(std::uint64_t seed, const GradCheckOptions& o) {
  std::vector<GradCheckResult> out;
  // l = 2, student d = 3, teacher d' = 4, K = 2, one student and one teacher layer.
  EncoderConfig sc{6, 2, 1, 3, 1, 5, 2};
  EncoderConfig tc{6, 2, 1, 4, 2, 6, 2};
  EncoderModel student = EncoderModel::init(sc, derive_seed(seed, 31));
  const EncoderModel teacher = EncoderModel::init(tc, derive_seed(seed, 32));
  Projection proj = Projection::init(1, 3, 4, derive_seed(seed, 33));
  Rng rng(derive_seed(seed, 34));
  for (Parameter* p : student.parameters())
    for (double& x : p->value().data()) x += rng.uniform(-0.3, 0.3);
  for (Parameter* p : proj.parameters())
    for (double& x : p->value().data()) x += rng.uniform(-0.5, 0.5);

  const std::vector<std::vector<int>> inputs{{2, 3}, {2, 4}, {2, 5}};
  const TraceValues t0 = evaluate_trace(teacher, inputs[0]);
  const TraceValues t1 = evaluate_trace(teacher, inputs[1]);
  const TraceValues t2 = evaluate_trace(teacher, inputs[2]);
  const std::vector<const TraceValues*> negs{&t1, &t2};
  const std::vector<int> layer_map{1};

  for (Ablation ablation : {Ablation::Full, Ablation::MseIntermediate}) {
    DistillConfig cfg;
    cfg.ablation = ablation;
    cfg.negatives = 2;
    const std::string suffix = ablation == Ablation::Full ? "" : "_mse";

    std::vector<Parameter*> w = proj.parameters();
    out.push_back(check_parameter_gradient(
        "transformer_loss_projection" + suffix,
        [&](Tape& tape) {
          ForwardTrace s = forward(tape, std::as_const(student), inputs[0]);
          return transformer_stage_loss(s, t0, negs, proj, layer_map, cfg);
        },
        w, o));

    std::vector<Parameter*> all = student.parameters();
    for (Parameter* p : proj.parameters()) all.push_back(p);
    out.push_back(check_parameter_gradient(
        "distill_total" + suffix,
        [&](Tape& tape) {
          ForwardTrace s = forward(tape, student, inputs[0]);
          Var lt = transformer_stage_loss(s, t0, negs, proj, layer_map, cfg);
          Var ls = soft_loss(s.logits, t0.logits, cfg.tau);
          Var lh = hard_loss(s.logits, one_hot(1, 2), cfg.tau, true);
          return add(add(lt, ls), scale(lh, 3.0));
        },
        all, o));
  }

  // Gradient with respect to the embedding output, the quantity the
  // perturbation is built from. Numerically, the embedding output is injected.
  {
    DistillConfig cfg;
    cfg.negatives = 2;
    auto loss_of = [&](const ForwardTrace& s) {
      Var lt = transformer_stage_loss(s, t0, negs, proj, layer_map, cfg);
      return add(lt, scale(hard_loss(s.logits, one_hot(0, 2), cfg.tau, true), 3.0));
    };
    Tensor analytic;
    Tensor emb;
    {
      Tape tape;
      ForwardTrace s = forward(tape, student, inputs[0]);
      emb = s.emb_out.value();
      Var loss = loss_of(s);
      tape.backward(loss, GradSink::NodesOnly);
      analytic = tape.grad(s.emb_out);
    }
    GradCheckResult r;
    r.op = "embedding_output";
    for (std::size_t j = 0; j < emb.size(); ++j) {
      auto at = [&](double delta) {
        Tensor e = emb;
        e[j] += delta;
        Tape tape(GradMode::Disabled);
        ForwardOptions fo;
        fo.inject_emb = &e;
        ForwardTrace s = forward(tape, std::as_const(student), inputs[0], fo);
        return loss_of(s).item();
      };
      double a = analytic[j];
      if (o.corrupt == r.op) a += kCorruptOffset;
      compare(r, 0, j, a, (at(o.step) - at(-o.step)) / (2 * o.step), o);
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace

std::vector<GradCheckResult> run_grad_suite(GradCheckScope scope, std::uint64_t seed, const GradCheckOptions& options) {
  Rng rng(derive_seed(seed, 0));
  switch (scope) {
    case GradCheckScope::Losses: return loss_suite(rng, options);
    case GradCheckScope::Encoder: return encoder_suite(seed, options);
    case GradCheckScope::End2End: return end2end_suite(seed, options);
  }
  return {};
}

}  // namespace lrc
