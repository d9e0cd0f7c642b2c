#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "lrc/data.hpp"
#include "lrc/distiller.hpp"
#include "lrc/encoder.hpp"

namespace lrc::cli {

// Everything a run needs. Sections a command does not use may be absent from
// the file; the ones it does use are checked field by field.
struct RunConfig {
  TaskSpec task;
  int train_size = 8000;
  int eval_size = 1000;

  std::optional<EncoderConfig> teacher;
  TeacherTrainConfig teacher_training;
  std::optional<EncoderConfig> student;
  DistillConfig distill;

  std::string output_dir = "runs/default";
  // Teacher checkpoint used by distill and bench; defaults to
  // <output_dir>/teacher when empty.
  std::string teacher_checkpoint;
};

// Parses a config file. A run manifest is accepted too: its embedded config
// snapshot is used, so any finished run can be replayed. Throws ConfigError
// naming the offending field.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

nlohmann::json to_json(const TaskSpec& t);
nlohmann::json to_json(const OptimizerConfig& o);
nlohmann::json to_json(const DistillConfig& d);

std::filesystem::path teacher_checkpoint_path(const RunConfig& c);

}  // namespace lrc::cli
