#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lrc/data.hpp"
#include "lrc/encoder.hpp"
#include "lrc/losses.hpp"
#include "lrc/optimizer.hpp"
#include "lrc/rng.hpp"

namespace lrc {

enum class Ablation {
  Full,
  DropCosNce,       // no intermediate-layer term
  DropSoft,         // no soft prediction term
  DropHard,         // no hard prediction term
  MseIntermediate,  // Euclidean MSE replaces the angular contrastive term
  NoTwoStage,       // stage-2 weights from step 0
  NoPerturbation,   // plain updates from L_total
};

enum class CosineGranularity { Whole, PerTokenMean };
enum class PerturbationScope { Sample, PerToken };
// How the perturbed embedding re-enters the encoder. Offset adds the
// perturbation as a constant on top of the recomputed embedding output, so the
// embedding block still trains; Inject feeds emb + delta as a detached input.
enum class ReforwardMode { Offset, Inject };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);
std::string to_string(CosineGranularity g);
CosineGranularity cosine_granularity_from_string(const std::string& s);
std::string to_string(PerturbationScope s);
PerturbationScope perturbation_scope_from_string(const std::string& s);
std::string to_string(ReforwardMode m);
ReforwardMode reforward_mode_from_string(const std::string& s);

struct DistillConfig {
  std::vector<int> layer_map;  // 1-indexed teacher layers; empty selects default_layer_map
  int negatives = 15;          // K
  int batch_size = 16;
  double tau = 1.1;
  double stage_split = 0.8;
  std::array<double, 3> stage2_weights{1.0, 1.0, 3.0};  // alpha, beta, gamma
  bool perturbation_enabled = true;
  Ablation ablation = Ablation::Full;
  OptimizerConfig optimizer{};
  int total_steps = 1000;
  std::uint64_t seed = 1;
  CosineGranularity cosine_granularity = CosineGranularity::Whole;
  bool hard_loss_literal = true;
  PerturbationScope perturbation_scope = PerturbationScope::Sample;
  ReforwardMode reforward = ReforwardMode::Offset;

  bool perturbs() const { return perturbation_enabled && ablation != Ablation::NoPerturbation; }
  // Checks everything except the layer map against model depths.
  void validate() const;
};

// Uniform skip: phi(i) = (i+1) * N / M for i in [0, M). Requires N % M == 0.
std::vector<int> default_layer_map(int teacher_layers, int student_layers);
// Returns cfg.layer_map if set (after checking it), else the default.
std::vector<int> resolve_layer_map(const DistillConfig& cfg, int teacher_layers, int student_layers);

// K distinct in-batch indices other than `index`. With K == batch_size - 1
// this is every other index in order; otherwise a uniform draw without
// replacement, returned in ascending order.
std::vector<std::size_t> sample_negatives(std::size_t batch_size, std::size_t index, std::size_t k, Rng& rng);

// One trainable d x d' matrix per student layer.
struct Projection {
  std::vector<Parameter> weights;

  static Projection init(int student_layers, int student_hidden, int teacher_hidden, std::uint64_t seed);
  std::vector<Parameter*> parameters();
};

// Sum over student layers i of the contrastive loss between h_i^S W_i and the
// mapped teacher layer output, with the negatives' teacher outputs at the same
// layer. Under MseIntermediate, the per-layer MSE is used and negatives are
// ignored. `layer_map` must already be resolved.
Var transformer_stage_loss(const ForwardTrace& student, const TraceValues& teacher,
                           std::span<const TraceValues* const> negatives, Projection& projection,
                           const std::vector<int>& layer_map, const DistillConfig& cfg);

// Stage-1 boundary: floor(stage_split * total_steps).
int stage_boundary(const DistillConfig& cfg);
Stage stage_at(int step, const DistillConfig& cfg);
LossWeights stage_weights(int step, const DistillConfig& cfg);

struct StepRecord {
  int step = 0;
  Stage stage = Stage::Stage1;
  LossWeights weights;
  LossReport loss;                       // batch means
  std::optional<double> perturbed_loss;  // batch mean of L'_total
  double grad_norm = 0.0;
  int perturbations_applied = 0;
  int perturbations_skipped = 0;  // zero gradient at the embedding output
  double perturbation_norm_min = 0.0;
  double perturbation_norm_max = 0.0;
};

// Stateful trainer for one student against one frozen teacher.
class Distiller {
 public:
  Distiller(const EncoderModel& teacher, EncoderModel& student, Projection& projection, DistillConfig cfg);

  // One optimizer update on `batch`; perturbed when the config says so.
  StepRecord step(std::span<const Sample> batch, int step_index);

  const std::vector<int>& layer_map() const { return layer_map_; }
  Optimizer& optimizer() { return optimizer_; }

 private:
  struct SampleLoss {
    Var total;
    double l_transformer = 0.0;
    double l_soft = 0.0;
    double l_hard = 0.0;
  };

  SampleLoss sample_loss(const ForwardTrace& trace, const Sample& sample, const TraceValues& teacher,
                         std::span<const TraceValues* const> negatives, const LossWeights& w);
  Tensor perturbation(const Tensor& grad, double& norm_min, double& norm_max, bool& applied) const;

  const EncoderModel& teacher_;
  EncoderModel& student_;
  Projection& projection_;
  DistillConfig cfg_;
  std::vector<int> layer_map_;
  Optimizer optimizer_;
  Rng negative_rng_;
};

struct DistillResult {
  EncoderModel student;
  Projection projection;
  std::vector<StepRecord> log;
};

using StepCallback = std::function<void(const StepRecord&)>;

// Full pipeline: initialize student and projections from cfg.seed, then run
// cfg.total_steps updates over seeded batches of `train`.
DistillResult distill(const EncoderModel& teacher, const EncoderConfig& student_config, const DistillConfig& cfg,
                      const std::vector<Sample>& train, const StepCallback& on_step = {});

struct TeacherTrainConfig {
  int steps = 5000;
  int batch_size = 16;
  OptimizerConfig optimizer{OptimizerKind::Adam, 3e-4};
  std::uint64_t seed = 1;
};

// Trains a teacher from scratch with cross-entropy (MSE for regression).
// steps == 0 returns the initialized model. Throws NumericError naming the
// step if the loss becomes non-finite.
EncoderModel train_teacher(const EncoderConfig& config, const TaskSpec& task, const TeacherTrainConfig& train_cfg,
                           const std::vector<Sample>& train, const std::function<void(int, double)>& on_step = {});

}  // namespace lrc
