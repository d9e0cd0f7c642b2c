#include "config.hpp"

#include <fstream>
#include <set>

#include "lrc/checkpoint.hpp"
#include "lrc/error.hpp"

namespace lrc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads one JSON object, tracking the dotted path for diagnostics and
// rejecting keys nobody asked for (typos should not pass silently).
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("field '" + path_ + "' must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  T required(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing required field '" + name(key) + "'");
    return read<T>(key);
  }

  template <typename T>
  void optional(const std::string& key, T& out) {
    if (j_.contains(key)) out = read<T>(key);
  }

  Section child(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError("missing required field '" + name(key) + "'");
    seen_.insert(key);
    return Section(j_.at(key), name(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown field '" + name(it.key()) + "'");
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  template <typename T>
  T read(const std::string& key) {
    seen_.insert(key);
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("field '" + name(key) + "' must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("field '" + name(key) + "' must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<long long>() < 0) throw ConfigError("field '" + name(key) + "' must be non-negative");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("field '" + name(key) + "' must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("field '" + name(key) + "' must be a string");
    }
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError("field '" + name(key) + "' has the wrong type");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

EncoderConfig read_encoder(Section s) {
  EncoderConfig c;
  c.vocab_size = s.required<int>("vocab_size");
  c.max_len = s.required<int>("max_len");
  c.num_layers = s.required<int>("num_layers");
  c.hidden_size = s.required<int>("hidden_size");
  c.num_heads = s.required<int>("num_heads");
  c.ffn_size = s.required<int>("ffn_size");
  c.num_classes = s.required<int>("num_classes");
  s.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(s.name("") + " " + e.what());
  }
  return c;
}

OptimizerConfig read_optimizer(Section s, OptimizerConfig o) {
  if (s.has("kind")) o.kind = optimizer_kind_from_string(s.required<std::string>("kind"));
  s.optional("learning_rate", o.learning_rate);
  s.optional("momentum", o.momentum);
  s.optional("beta1", o.beta1);
  s.optional("beta2", o.beta2);
  s.optional("epsilon", o.epsilon);
  s.finish();
  return o;
}

TaskSpec read_task(Section s, int& train_size, int& eval_size) {
  TaskSpec t;
  t.name = s.required<std::string>("name");
  t.kind = task_kind_from_string(s.required<std::string>("kind"));
  t.vocab_size = s.required<int>("vocab_size");
  t.seq_len = s.required<int>("seq_len");
  t.num_classes = s.required<int>("num_classes");
  s.optional("generator_seed", t.generator_seed);
  s.optional("one_probability", t.one_probability);
  s.optional("train_size", train_size);
  s.optional("eval_size", eval_size);
  s.finish();
  if (train_size < 1 || eval_size < 1) throw ConfigError("task.train_size and task.eval_size must be positive");
  t.validate();
  return t;
}

DistillConfig read_distill(Section s) {
  DistillConfig d;
  s.optional("layer_map", d.layer_map);
  s.optional("negatives", d.negatives);
  s.optional("batch_size", d.batch_size);
  s.optional("tau", d.tau);
  s.optional("stage_split", d.stage_split);
  if (s.has("stage2_weights")) {
    auto w = s.required<std::vector<double>>("stage2_weights");
    if (w.size() != 3) throw ConfigError("field 'distill.stage2_weights' must hold [alpha, beta, gamma]");
    d.stage2_weights = {w[0], w[1], w[2]};
  }
  s.optional("perturbation_enabled", d.perturbation_enabled);
  if (s.has("ablation")) d.ablation = ablation_from_string(s.required<std::string>("ablation"));
  if (s.has("optimizer")) d.optimizer = read_optimizer(s.child("optimizer"), d.optimizer);
  s.optional("total_steps", d.total_steps);
  s.optional("seed", d.seed);
  if (s.has("cosine_granularity"))
    d.cosine_granularity = cosine_granularity_from_string(s.required<std::string>("cosine_granularity"));
  s.optional("hard_loss_literal", d.hard_loss_literal);
  if (s.has("perturbation_scope"))
    d.perturbation_scope = perturbation_scope_from_string(s.required<std::string>("perturbation_scope"));
  if (s.has("reforward")) d.reforward = reforward_mode_from_string(s.required<std::string>("reforward"));
  s.finish();
  d.validate();
  return d;
}

TeacherTrainConfig read_teacher_training(Section s) {
  TeacherTrainConfig t;
  s.optional("steps", t.steps);
  s.optional("batch_size", t.batch_size);
  if (s.has("optimizer")) t.optimizer = read_optimizer(s.child("optimizer"), t.optimizer);
  s.optional("seed", t.seed);
  s.finish();
  if (t.steps < 0) throw ConfigError("teacher_training.steps must be non-negative");
  if (t.batch_size < 1) throw ConfigError("teacher_training.batch_size must be positive");
  t.optimizer.validate();
  return t;
}

}  // namespace

RunConfig config_from_json(const json& root) {
  if (root.is_object() && root.contains("config") && root.contains("manifest_version")) {
    return config_from_json(root.at("config"));
  }
  Section s(root, "");
  RunConfig c;
  c.task = read_task(s.child("task"), c.train_size, c.eval_size);
  if (s.has("teacher")) c.teacher = read_encoder(s.child("teacher"));
  if (s.has("teacher_training")) c.teacher_training = read_teacher_training(s.child("teacher_training"));
  if (s.has("student")) c.student = read_encoder(s.child("student"));
  if (s.has("distill")) c.distill = read_distill(s.child("distill"));
  s.optional("output_dir", c.output_dir);
  s.optional("teacher_checkpoint", c.teacher_checkpoint);
  s.finish();
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

json to_json(const TaskSpec& t) {
  return json{{"name", t.name},
              {"kind", to_string(t.kind)},
              {"vocab_size", t.vocab_size},
              {"seq_len", t.seq_len},
              {"num_classes", t.num_classes},
              {"generator_seed", t.generator_seed},
              {"one_probability", t.one_probability}};
}

json to_json(const OptimizerConfig& o) {
  return json{{"kind", to_string(o.kind)}, {"learning_rate", o.learning_rate}, {"momentum", o.momentum},
              {"beta1", o.beta1},          {"beta2", o.beta2},                 {"epsilon", o.epsilon}};
}

json to_json(const DistillConfig& d) {
  return json{{"layer_map", d.layer_map},
              {"negatives", d.negatives},
              {"batch_size", d.batch_size},
              {"tau", d.tau},
              {"stage_split", d.stage_split},
              {"stage2_weights", d.stage2_weights},
              {"perturbation_enabled", d.perturbation_enabled},
              {"ablation", to_string(d.ablation)},
              {"optimizer", to_json(d.optimizer)},
              {"total_steps", d.total_steps},
              {"seed", d.seed},
              {"cosine_granularity", to_string(d.cosine_granularity)},
              {"hard_loss_literal", d.hard_loss_literal},
              {"perturbation_scope", to_string(d.perturbation_scope)},
              {"reforward", to_string(d.reforward)}};
}

json to_json(const RunConfig& c) {
  json task = to_json(c.task);
  task["train_size"] = c.train_size;
  task["eval_size"] = c.eval_size;
  json j{{"task", task},
         {"teacher_training",
          {{"steps", c.teacher_training.steps},
           {"batch_size", c.teacher_training.batch_size},
           {"optimizer", to_json(c.teacher_training.optimizer)},
           {"seed", c.teacher_training.seed}}},
         {"distill", to_json(c.distill)},
         {"output_dir", c.output_dir},
         {"teacher_checkpoint", c.teacher_checkpoint}};
  if (c.teacher) j["teacher"] = lrc::to_json(*c.teacher);
  if (c.student) j["student"] = lrc::to_json(*c.student);
  return j;
}

fs::path teacher_checkpoint_path(const RunConfig& c) {
  if (!c.teacher_checkpoint.empty()) return c.teacher_checkpoint;
  return fs::path(c.output_dir) / "teacher";
}

}  // namespace lrc::cli
