#include "lrc/distiller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lrc/error.hpp"

namespace lrc {

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& field, const std::string& s, const std::array<std::pair<const char*, E>, N>& table) {
  std::string options;
  for (const auto& [name, value] : table) {
    if (s == name) return value;
    options += options.empty() ? name : std::string("|") + name;
  }
  throw ConfigError(field + " must be one of " + options + ", got '" + s + "'");
}

constexpr std::array<std::pair<const char*, Ablation>, 7> kAblations{{
    {"full", Ablation::Full},
    {"drop-cosnce", Ablation::DropCosNce},
    {"drop-soft", Ablation::DropSoft},
    {"drop-hard", Ablation::DropHard},
    {"mse-intermediate", Ablation::MseIntermediate},
    {"no-two-stage", Ablation::NoTwoStage},
    {"no-perturbation", Ablation::NoPerturbation},
}};

}  // namespace

std::string to_string(Ablation a) {
  for (const auto& [name, value] : kAblations)
    if (value == a) return name;
  return "unknown";
}

Ablation ablation_from_string(const std::string& s) { return parse_enum("distill.ablation", s, kAblations); }

std::string to_string(CosineGranularity g) { return g == CosineGranularity::Whole ? "whole" : "per_token_mean"; }

CosineGranularity cosine_granularity_from_string(const std::string& s) {
  return parse_enum("distill.cosine_granularity", s,
                    std::array<std::pair<const char*, CosineGranularity>, 2>{
                        {{"whole", CosineGranularity::Whole}, {"per_token_mean", CosineGranularity::PerTokenMean}}});
}

std::string to_string(PerturbationScope s) { return s == PerturbationScope::Sample ? "sample" : "per_token"; }

PerturbationScope perturbation_scope_from_string(const std::string& s) {
  return parse_enum("distill.perturbation_scope", s,
                    std::array<std::pair<const char*, PerturbationScope>, 2>{
                        {{"sample", PerturbationScope::Sample}, {"per_token", PerturbationScope::PerToken}}});
}

std::string to_string(ReforwardMode m) { return m == ReforwardMode::Offset ? "offset" : "inject"; }

ReforwardMode reforward_mode_from_string(const std::string& s) {
  return parse_enum("distill.reforward", s,
                    std::array<std::pair<const char*, ReforwardMode>, 2>{
                        {{"offset", ReforwardMode::Offset}, {"inject", ReforwardMode::Inject}}});
}

void DistillConfig::validate() const {
  if (batch_size < 2) throw ConfigError("distill.batch_size must be at least 2");
  if (negatives < 1) throw ConfigError("distill.negatives must be at least 1");
  if (negatives >= batch_size) {
    throw ConfigError("distill.negatives (" + std::to_string(negatives) + ") must be smaller than batch_size (" +
                      std::to_string(batch_size) + ")");
  }
  if (!(tau > 0.0)) throw ConfigError("distill.tau must be positive");
  if (!(stage_split >= 0.0 && stage_split <= 1.0)) throw ConfigError("distill.stage_split must be in [0, 1]");
  for (double w : stage2_weights)
    if (!(w >= 0.0)) throw ConfigError("distill.stage2_weights must be non-negative");
  if (stage2_weights[0] == 0.0 && stage2_weights[1] == 0.0 && stage2_weights[2] == 0.0) {
    throw ConfigError("distill.stage2_weights must not all be zero");
  }
  if (total_steps < 1) throw ConfigError("distill.total_steps must be positive");
  optimizer.validate();
}

std::vector<int> default_layer_map(int teacher_layers, int student_layers) {
  if (student_layers < 1 || teacher_layers < student_layers) {
    throw ConfigError("layer map needs N >= M >= 1, got N=" + std::to_string(teacher_layers) +
                      ", M=" + std::to_string(student_layers));
  }
  if (teacher_layers % student_layers != 0) {
    throw ConfigError("teacher depth " + std::to_string(teacher_layers) + " is not a multiple of student depth " +
                      std::to_string(student_layers) + "; supply distill.layer_map explicitly");
  }
  std::vector<int> map(static_cast<std::size_t>(student_layers));
  for (int i = 0; i < student_layers; ++i) map[static_cast<std::size_t>(i)] = (i + 1) * teacher_layers / student_layers;
  return map;
}

std::vector<int> resolve_layer_map(const DistillConfig& cfg, int teacher_layers, int student_layers) {
  if (cfg.layer_map.empty()) return default_layer_map(teacher_layers, student_layers);
  const auto& map = cfg.layer_map;
  if (static_cast<int>(map.size()) != student_layers) {
    throw ConfigError("distill.layer_map has " + std::to_string(map.size()) + " entries but the student has " +
                      std::to_string(student_layers) + " layers");
  }
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] < 1 || map[i] > teacher_layers) {
      throw ConfigError("distill.layer_map[" + std::to_string(i) + "] = " + std::to_string(map[i]) +
                        " outside teacher layers [1, " + std::to_string(teacher_layers) + "]");
    }
    if (i > 0 && map[i] <= map[i - 1]) throw ConfigError("distill.layer_map must be strictly increasing");
  }
  return map;
}

std::vector<std::size_t> sample_negatives(std::size_t batch_size, std::size_t index, std::size_t k, Rng& rng) {
  if (index >= batch_size) throw ContractError("sample_negatives: index outside batch");
  if (k < 1 || k >= batch_size) {
    throw ConfigError("negatives K=" + std::to_string(k) + " must be in [1, batch_size-1] for batch_size " +
                      std::to_string(batch_size));
  }
  std::vector<std::size_t> others;
  others.reserve(batch_size - 1);
  for (std::size_t i = 0; i < batch_size; ++i)
    if (i != index) others.push_back(i);
  if (k == others.size()) return others;
  // Partial Fisher-Yates over the candidates.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(others.size() - i));
    std::swap(others[i], others[j]);
  }
  others.resize(k);
  std::sort(others.begin(), others.end());
  return others;
}

Projection Projection::init(int student_layers, int student_hidden, int teacher_hidden, std::uint64_t seed) {
  Projection p;
  Rng rng(seed);
  for (int i = 0; i < student_layers; ++i) {
    Tensor w(Shape{static_cast<std::size_t>(student_hidden), static_cast<std::size_t>(teacher_hidden)});
    for (double& v : w.data()) v = rng.uniform(-0.08, 0.08);
    p.weights.emplace_back("projection" + std::to_string(i), std::move(w));
  }
  return p;
}

std::vector<Parameter*> Projection::parameters() {
  std::vector<Parameter*> out;
  for (Parameter& w : weights) out.push_back(&w);
  return out;
}

Var transformer_stage_loss(const ForwardTrace& student, const TraceValues& teacher,
                           std::span<const TraceValues* const> negatives, Projection& projection,
                           const std::vector<int>& layer_map, const DistillConfig& cfg) {
  const std::size_t m = student.ffn_outs.size();
  if (layer_map.size() != m || projection.weights.size() != m) {
    throw ContractError("transformer_stage_loss: layer map, projections and student depth disagree");
  }
  const bool mse = cfg.ablation == Ablation::MseIntermediate;
  if (!mse && negatives.empty()) throw ContractError("transformer_stage_loss: COS-NCE needs negatives");
  Tape& tape = *student.emb_out.tape;

  Var total;
  std::vector<const Tensor*> negs(negatives.size());
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t t_layer = static_cast<std::size_t>(layer_map[i] - 1);
    if (t_layer >= teacher.ffn_outs.size()) throw ContractError("transformer_stage_loss: teacher trace too shallow");
    const Tensor& target = teacher.ffn_outs[t_layer];
    Var projected = matmul(student.ffn_outs[i], tape.param(projection.weights[i]));
    Var term;
    if (mse) {
      term = mse_layer_loss(projected, target);
    } else if (cfg.cosine_granularity == CosineGranularity::Whole) {
      for (std::size_t k = 0; k < negatives.size(); ++k) negs[k] = &negatives[k]->ffn_outs[t_layer];
      term = cos_nce(projected, target, std::span<const Tensor* const>(negs));
    } else {
      // Mean over positions of the per-row contrastive loss.
      const std::size_t rows = target.dim(0), cols = target.dim(1);
      std::vector<Tensor> neg_rows(negatives.size());
      for (std::size_t r = 0; r < rows; ++r) {
        Tensor t_row(Shape{cols});
        std::copy_n(target.data().data() + r * cols, cols, t_row.data().data());
        for (std::size_t k = 0; k < negatives.size(); ++k) {
          neg_rows[k] = Tensor(Shape{cols});
          std::copy_n(negatives[k]->ffn_outs[t_layer].data().data() + r * cols, cols, neg_rows[k].data().data());
        }
        Var row_term = cos_nce(row(projected, r), t_row, std::span<const Tensor>(neg_rows));
        term = r == 0 ? row_term : add(term, row_term);
      }
      term = scale(term, 1.0 / static_cast<double>(rows));
    }
    total = i == 0 ? term : add(total, term);
  }
  return total;
}

int stage_boundary(const DistillConfig& cfg) {
  return static_cast<int>(std::floor(cfg.stage_split * static_cast<double>(cfg.total_steps)));
}

Stage stage_at(int step, const DistillConfig& cfg) {
  if (cfg.ablation == Ablation::NoTwoStage) return Stage::Stage2;
  return step < stage_boundary(cfg) ? Stage::Stage1 : Stage::Stage2;
}

LossWeights stage_weights(int step, const DistillConfig& cfg) {
  if (stage_at(step, cfg) == Stage::Stage1) return LossWeights{1.0, 0.0, 0.0, cfg.tau};
  return LossWeights{cfg.stage2_weights[0], cfg.stage2_weights[1], cfg.stage2_weights[2], cfg.tau};
}

// ---------------------------------------------------------------------------
// Distiller

namespace {

std::vector<Parameter*> trainables(EncoderModel& student, Projection& projection) {
  std::vector<Parameter*> out = student.parameters();
  for (Parameter* p : projection.parameters()) out.push_back(p);
  return out;
}

}  // namespace

Distiller::Distiller(const EncoderModel& teacher, EncoderModel& student, Projection& projection, DistillConfig cfg)
    : teacher_(teacher),
      student_(student),
      projection_(projection),
      cfg_(std::move(cfg)),
      layer_map_(resolve_layer_map(cfg_, teacher.config().num_layers, student.config().num_layers)),
      optimizer_(cfg_.optimizer, trainables(student, projection)),
      negative_rng_(derive_seed(cfg_.seed, 4)) {
  cfg_.validate();
  const EncoderConfig& t = teacher.config();
  const EncoderConfig& s = student.config();
  if (t.vocab_size != s.vocab_size) throw ConfigError("teacher and student vocab_size differ");
  if (t.num_classes != s.num_classes) throw ConfigError("teacher and student num_classes differ");
  if (projection.weights.size() != static_cast<std::size_t>(s.num_layers)) {
    throw ConfigError("projection count does not match student depth");
  }
  for (const Parameter& w : projection.weights) {
    if (w.value().shape() != Shape{static_cast<std::size_t>(s.hidden_size), static_cast<std::size_t>(t.hidden_size)}) {
      throw DimensionError("projection shape " + shape_string(w.value().shape()) + " is not student_hidden x teacher_hidden");
    }
  }
}

Distiller::SampleLoss Distiller::sample_loss(const ForwardTrace& trace, const Sample& sample,
                                             const TraceValues& teacher, std::span<const TraceValues* const> negatives,
                                             const LossWeights& w) {
  SampleLoss out;
  Tape& tape = *trace.logits.tape;
  const bool regression = student_.config().regression();
  std::vector<Var> terms;

  if (cfg_.ablation != Ablation::DropCosNce) {
    Var lt = transformer_stage_loss(trace, teacher, negatives, projection_, layer_map_, cfg_);
    out.l_transformer = lt.item();
    if (w.alpha != 0.0) terms.push_back(scale(lt, w.alpha));
  }
  std::optional<RegressionLosses> reg;
  if (regression) reg = regression_losses(trace.logits, teacher.logits[0], sample.target);
  if (cfg_.ablation != Ablation::DropSoft) {
    Var ls = regression ? reg->l_soft : soft_loss(trace.logits, teacher.logits, w.tau);
    out.l_soft = ls.item();
    if (w.beta != 0.0) terms.push_back(scale(ls, w.beta));
  }
  if (cfg_.ablation != Ablation::DropHard) {
    Var lh = regression ? reg->l_hard
                        : hard_loss(trace.logits, one_hot(sample.label, student_.config().num_classes), w.tau,
                                    cfg_.hard_loss_literal);
    out.l_hard = lh.item();
    if (w.gamma != 0.0) terms.push_back(scale(lh, w.gamma));
  }
  if (terms.empty()) {
    out.total = tape.constant(Tensor::scalar(0.0));
  } else {
    out.total = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) out.total = add(out.total, terms[i]);
  }
  return out;
}

Tensor Distiller::perturbation(const Tensor& grad, double& norm_min, double& norm_max, bool& applied) const {
  Tensor delta(grad.shape(), 0.0);
  applied = false;
  auto record = [&](double n) {
    norm_min = std::min(norm_min, n);
    norm_max = std::max(norm_max, n);
  };
  if (cfg_.perturbation_scope == PerturbationScope::Sample) {
    const double n = frobenius_norm(grad);
    if (n == 0.0 || !std::isfinite(n)) return delta;
    for (std::size_t i = 0; i < grad.size(); ++i) delta[i] = grad[i] / n;
    applied = true;
    record(frobenius_norm(delta));
    return delta;
  }
  const std::size_t rows = grad.dim(0), cols = grad.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += grad.at(r, c) * grad.at(r, c);
    const double n = std::sqrt(s);
    if (n == 0.0 || !std::isfinite(n)) continue;
    double rs = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      delta.at(r, c) = grad.at(r, c) / n;
      rs += delta.at(r, c) * delta.at(r, c);
    }
    applied = true;
    record(std::sqrt(rs));
  }
  return delta;
}

StepRecord Distiller::step(std::span<const Sample> batch, int step_index) {
  const std::size_t b = batch.size();
  if (b < 2) throw ContractError("distillation batch needs at least two samples");
  if (static_cast<std::size_t>(cfg_.negatives) >= b) throw ConfigError("negatives must be smaller than the batch");

  StepRecord rec;
  rec.step = step_index;
  rec.stage = stage_at(step_index, cfg_);
  rec.weights = stage_weights(step_index, cfg_);

  // Frozen teacher outputs for the whole batch; negatives index into these.
  std::vector<TraceValues> teacher;
  teacher.reserve(b);
  for (const Sample& s : batch) teacher.push_back(evaluate_trace(teacher_, s.tokens));

  const bool perturb = cfg_.perturbs();
  const double inv_b = 1.0 / static_cast<double>(b);
  double lt = 0.0, ls = 0.0, lh = 0.0, perturbed = 0.0;
  double norm_min = std::numeric_limits<double>::infinity();
  double norm_max = 0.0;
  optimizer_.zero_grad();

  std::vector<const TraceValues*> negs;
  for (std::size_t i = 0; i < b; ++i) {
    const Sample& sample = batch[i];
    negs.clear();
    for (std::size_t k : sample_negatives(b, i, static_cast<std::size_t>(cfg_.negatives), negative_rng_))
      negs.push_back(&teacher[k]);

    Tape tape;
    ForwardTrace trace = forward(tape, student_, sample.tokens);
    SampleLoss loss = sample_loss(trace, sample, teacher[i], negs, rec.weights);
    lt += loss.l_transformer;
    ls += loss.l_soft;
    lh += loss.l_hard;
    if (!std::isfinite(loss.total.item())) {
      throw NumericError("non-finite loss at step " + std::to_string(step_index));
    }

    if (!perturb) {
      tape.backward(scale(loss.total, inv_b));
      continue;
    }

    // Gradient of L_total w.r.t. the embedding output only.
    tape.backward(loss.total, GradSink::NodesOnly);
    bool applied = false;
    const Tensor delta = perturbation(tape.grad(trace.emb_out), norm_min, norm_max, applied);
    if (applied) {
      ++rec.perturbations_applied;
    } else {
      ++rec.perturbations_skipped;
    }

    Tape tape2;
    ForwardOptions opt;
    Tensor injected;
    if (cfg_.reforward == ReforwardMode::Inject) {
      injected = trace.emb_out.value();
      for (std::size_t k = 0; k < injected.size(); ++k) injected[k] += delta[k];
      opt.inject_emb = &injected;
    } else {
      opt.emb_offset = &delta;
    }
    ForwardTrace trace2 = forward(tape2, student_, sample.tokens, opt);
    SampleLoss loss2 = sample_loss(trace2, sample, teacher[i], negs, rec.weights);
    if (!std::isfinite(loss2.total.item())) {
      throw NumericError("non-finite perturbed loss at step " + std::to_string(step_index));
    }
    perturbed += loss2.total.item();
    tape2.backward(scale(loss2.total, inv_b));
  }

  rec.loss = combine(lt * inv_b, ls * inv_b, lh * inv_b, rec.weights, rec.stage);
  if (perturb) {
    rec.perturbed_loss = perturbed * inv_b;
    if (rec.perturbations_applied > 0) {
      rec.perturbation_norm_min = norm_min;
      rec.perturbation_norm_max = norm_max;
    }
  }
  rec.grad_norm = optimizer_.grad_norm();
  optimizer_.step();
  return rec;
}

DistillResult distill(const EncoderModel& teacher, const EncoderConfig& student_config, const DistillConfig& cfg,
                      const std::vector<Sample>& train, const StepCallback& on_step) {
  cfg.validate();
  student_config.validate();
  resolve_layer_map(cfg, teacher.config().num_layers, student_config.num_layers);
  if (train.size() < static_cast<std::size_t>(cfg.batch_size)) {
    throw ConfigError("training set has fewer samples than distill.batch_size");
  }
  DistillResult result{EncoderModel::init(student_config, derive_seed(cfg.seed, 1)),
                       Projection::init(student_config.num_layers, student_config.hidden_size,
                                        teacher.config().hidden_size, derive_seed(cfg.seed, 2)),
                       {}};
  Distiller distiller(teacher, result.student, result.projection, cfg);
  BatchStream stream(train.size(), static_cast<std::size_t>(cfg.batch_size), derive_seed(cfg.seed, 3));
  std::vector<Sample> batch;
  result.log.reserve(static_cast<std::size_t>(cfg.total_steps));
  for (int step = 0; step < cfg.total_steps; ++step) {
    batch.clear();
    for (std::size_t idx : stream.next()) batch.push_back(train[idx]);
    result.log.push_back(distiller.step(batch, step));
    if (on_step) on_step(result.log.back());
  }
  return result;
}

EncoderModel train_teacher(const EncoderConfig& config, const TaskSpec& task, const TeacherTrainConfig& train_cfg,
                           const std::vector<Sample>& train, const std::function<void(int, double)>& on_step) {
  config.validate();
  task.validate();
  if (config.num_classes != task.num_classes) throw ConfigError("teacher num_classes does not match the task");
  if (config.vocab_size < task.vocab_size) throw ConfigError("teacher vocab_size is smaller than the task's");
  if (config.max_len < task.seq_len) throw ConfigError("teacher max_len is shorter than task.seq_len");
  if (train_cfg.steps < 0) throw ConfigError("teacher.steps must be non-negative");

  EncoderModel model = EncoderModel::init(config, derive_seed(train_cfg.seed, 1));
  if (train_cfg.steps == 0) return model;
  Optimizer opt(train_cfg.optimizer, model.parameters());
  BatchStream stream(train.size(), static_cast<std::size_t>(train_cfg.batch_size), derive_seed(train_cfg.seed, 3));
  for (int step = 0; step < train_cfg.steps; ++step) {
    const auto& idx = stream.next();
    const double inv_b = 1.0 / static_cast<double>(idx.size());
    double total = 0.0;
    for (std::size_t i : idx) {
      const Sample& s = train[i];
      Tape tape;
      Var logits = forward(tape, model, s.tokens).logits;
      Var loss = config.regression() ? regression_losses(logits, 0.0, s.target).l_hard
                                     : hard_loss(logits, one_hot(s.label, config.num_classes), 1.0, false);
      total += loss.item();
      tape.backward(scale(loss, inv_b));
    }
    total *= inv_b;
    if (!std::isfinite(total)) throw NumericError("teacher training diverged at step " + std::to_string(step));
    opt.step();
    if (on_step) on_step(step, total);
  }
  return model;
}

}  // namespace lrc
