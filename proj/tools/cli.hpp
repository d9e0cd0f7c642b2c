#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "lrc/distiller.hpp"

namespace lrc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // verification or metric failure, bad input data
inline constexpr int kExitConfig = 2;   // invalid configuration or usage

inline constexpr int kManifestVersion = 1;

// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Flag values that replace file values; unset members leave the file alone.
struct Overrides {
  std::optional<std::string> ablation;
  bool no_perturbation = false;
  std::optional<double> stage_split;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<std::string> output_dir;
  std::optional<std::string> teacher_checkpoint;
};
void apply_teacher_overrides(RunConfig& c, const Overrides& o);
void apply_distill_overrides(RunConfig& c, const Overrides& o);

// Writes teacher.{json,bin}, teacher_log.csv, teacher_metrics.json and
// teacher_manifest.json into output_dir. Returns the manifest.
nlohmann::json train_teacher_command(const RunConfig& c, std::ostream& progress);

// Writes student.{json,bin}, steps.csv, metrics.json and manifest.json into
// output_dir. Returns the manifest.
nlohmann::json distill_command(const RunConfig& c, std::ostream& progress);

// Step log: one row per optimizer update. perturbed_loss is empty when no
// perturbation ran. Numbers use round-trip precision.
std::string step_log_header();
std::string step_log_row(const StepRecord& r);

struct CompareRow {
  std::string run;
  std::string task;
  std::map<std::string, double> metrics;
};

// Reads run manifests (.json) or tables written by compare (.csv).
std::vector<CompareRow> read_compare_inputs(const std::vector<std::filesystem::path>& paths);
// Throws InputError when rows come from different tasks.
void check_same_task(const std::vector<CompareRow>& rows);
// Fixed-width table; a metric a run does not report renders as "—".
std::string render_compare_table(const std::vector<CompareRow>& rows);
std::string compare_csv(const std::vector<CompareRow>& rows);

}  // namespace lrc::cli
