#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "lrc/checkpoint.hpp"
#include "lrc/error.hpp"
#include "lrc/evaluation.hpp"
#include "lrc/gradcheck.hpp"

namespace lrc::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw InputError("failed writing '" + path.string() + "'");
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

json metrics_json(const Metrics& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

EncoderModel load_model(const fs::path& path, const char* what) {
  fs::path manifest = path;
  if (manifest.extension() != ".json") manifest += ".json";
  if (!fs::exists(manifest)) throw ConfigError(std::string(what) + " checkpoint '" + manifest.string() + "' not found");
  return load_checkpoint(path);
}

void check_fits_task(const EncoderConfig& m, const TaskSpec& t, const char* what) {
  const std::string w = what;
  if (m.num_classes != t.num_classes) throw ConfigError(w + ".num_classes does not match task.num_classes");
  if (m.vocab_size < t.vocab_size) throw ConfigError(w + ".vocab_size is smaller than task.vocab_size");
  if (m.max_len < t.seq_len) throw ConfigError(w + ".max_len is shorter than task.seq_len");
}

json manifest(const std::string& command, const std::string& run_name, const RunConfig& c) {
  return json{{"manifest_version", kManifestVersion},
              {"command", command},
              {"run_name", run_name},
              {"config", to_json(c)}};
}

std::string run_name(const DistillConfig& d) {
  if (d.ablation == Ablation::Full && !d.perturbation_enabled) return "no-perturbation";
  return to_string(d.ablation);
}

}  // namespace

void apply_teacher_overrides(RunConfig& c, const Overrides& o) {
  if (o.seed) c.teacher_training.seed = *o.seed;
  if (o.steps) {
    if (*o.steps < 0) throw ConfigError("--steps must be non-negative");
    c.teacher_training.steps = *o.steps;
  }
  if (o.output_dir) c.output_dir = *o.output_dir;
}

void apply_distill_overrides(RunConfig& c, const Overrides& o) {
  if (o.ablation) c.distill.ablation = ablation_from_string(*o.ablation);
  if (o.no_perturbation) c.distill.perturbation_enabled = false;
  if (o.stage_split) c.distill.stage_split = *o.stage_split;
  if (o.seed) c.distill.seed = *o.seed;
  if (o.steps) c.distill.total_steps = *o.steps;
  // The teacher stays where the config's own output_dir put it.
  if (o.output_dir && c.teacher_checkpoint.empty()) c.teacher_checkpoint = teacher_checkpoint_path(c).string();
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.teacher_checkpoint) c.teacher_checkpoint = *o.teacher_checkpoint;
  c.distill.validate();
}

std::string step_log_header() {
  return "step,stage,alpha,beta,gamma,l_transformer,l_soft,l_hard,l_total,perturbed_loss,grad_norm,"
         "perturbations_applied,perturbations_skipped,perturbation_norm_min,perturbation_norm_max\n";
}

std::string step_log_row(const StepRecord& r) {
  std::string s;
  s += std::to_string(r.step) + ',' + std::to_string(static_cast<int>(r.stage)) + ',';
  s += num(r.weights.alpha) + ',' + num(r.weights.beta) + ',' + num(r.weights.gamma) + ',';
  s += num(r.loss.l_transformer) + ',' + num(r.loss.l_soft) + ',' + num(r.loss.l_hard) + ',' + num(r.loss.l_total) + ',';
  s += (r.perturbed_loss ? num(*r.perturbed_loss) : std::string()) + ',';
  s += num(r.grad_norm) + ',';
  s += std::to_string(r.perturbations_applied) + ',' + std::to_string(r.perturbations_skipped) + ',';
  if (r.perturbations_applied > 0) s += num(r.perturbation_norm_min) + ',' + num(r.perturbation_norm_max);
  else s += ',';
  s += '\n';
  return s;
}

json train_teacher_command(const RunConfig& c, std::ostream& progress) {
  if (!c.teacher) throw ConfigError("missing required field 'teacher'");
  check_fits_task(*c.teacher, c.task, "teacher");
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);

  const auto t0 = Clock::now();
  const Splits splits = make_splits(c.task, c.train_size, c.eval_size);
  std::string log = "step,loss\n";
  const int every = std::max(1, c.teacher_training.steps / 10);
  EncoderModel model = train_teacher(*c.teacher, c.task, c.teacher_training, splits.train, [&](int step, double loss) {
    log += std::to_string(step) + ',' + num(loss) + '\n';
    if ((step + 1) % every == 0) progress << "teacher step " << step + 1 << " loss " << loss << '\n' << std::flush;
  });
  const double train_seconds = seconds_since(t0);
  const Metrics metrics = evaluate(model, splits.eval);

  const fs::path ckpt = save_checkpoint(model, dir / "teacher");
  write_text(dir / "teacher_log.csv", log);
  write_text(dir / "teacher_metrics.json", metrics_json(metrics).dump(2) + "\n");
  json m = manifest("train-teacher", "teacher", c);
  m["artifacts"] = {{"checkpoint", ckpt.string()},
                    {"log", (dir / "teacher_log.csv").string()},
                    {"metrics", (dir / "teacher_metrics.json").string()}};
  m["timings"] = {{"wall_seconds", seconds_since(t0)},
                  {"train_seconds", train_seconds},
                  {"mean_step_ms", c.teacher_training.steps ? 1e3 * train_seconds / c.teacher_training.steps : 0.0}};
  m["metrics"] = metrics_json(metrics);
  write_text(dir / "teacher_manifest.json", m.dump(2) + "\n");
  return m;
}

json distill_command(const RunConfig& c, std::ostream& progress) {
  if (!c.student) throw ConfigError("missing required field 'student'");
  c.distill.validate();
  check_fits_task(*c.student, c.task, "student");
  const EncoderModel teacher = load_model(teacher_checkpoint_path(c), "teacher");
  check_fits_task(teacher.config(), c.task, "teacher checkpoint");
  if (teacher.config().vocab_size != c.student->vocab_size) {
    throw ConfigError("student.vocab_size differs from the teacher checkpoint's");
  }
  const std::vector<int> layer_map = resolve_layer_map(c.distill, teacher.config().num_layers, c.student->num_layers);

  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  const auto t0 = Clock::now();
  const Splits splits = make_splits(c.task, c.train_size, c.eval_size);

  std::ofstream log(dir / "steps.csv", std::ios::binary);
  if (!log) throw InputError("cannot write '" + (dir / "steps.csv").string() + "'");
  log << step_log_header();
  const int every = std::max(1, c.distill.total_steps / 10);
  DistillResult result = distill(teacher, *c.student, c.distill, splits.train, [&](const StepRecord& r) {
    log << step_log_row(r);
    if ((r.step + 1) % every == 0) {
      progress << "distill step " << r.step + 1 << " stage " << static_cast<int>(r.stage) << " loss "
               << r.loss.l_total << '\n'
               << std::flush;
    }
  });
  log.close();
  const double train_seconds = seconds_since(t0);

  const Metrics metrics = evaluate(result.student, splits.eval, &teacher);
  const Metrics teacher_metrics = evaluate(teacher, splits.eval);
  const fs::path ckpt = save_checkpoint(result.student, dir / "student");
  write_text(dir / "metrics.json", metrics_json(metrics).dump(2) + "\n");

  json m = manifest("distill", run_name(c.distill), c);
  m["layer_map"] = layer_map;
  m["stage_boundary"] = stage_boundary(c.distill);
  m["teacher_config"] = to_json(teacher.config());
  m["artifacts"] = {{"checkpoint", ckpt.string()},
                    {"teacher_checkpoint", teacher_checkpoint_path(c).string()},
                    {"step_log", (dir / "steps.csv").string()},
                    {"metrics", (dir / "metrics.json").string()}};
  m["timings"] = {{"wall_seconds", seconds_since(t0)},
                  {"train_seconds", train_seconds},
                  {"mean_step_ms", 1e3 * train_seconds / c.distill.total_steps}};
  m["metrics"] = metrics_json(metrics);
  m["teacher_metrics"] = metrics_json(teacher_metrics);
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  return m;
}

// ---- compare ----

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char ch : s) w += (ch & 0xC0) != 0x80;
  return w;
}

std::vector<std::string> metric_names(const std::vector<CompareRow>& rows) {
  std::set<std::string> names;
  for (const auto& r : rows)
    for (const auto& [k, v] : r.metrics) names.insert(k);
  return {names.begin(), names.end()};
}

void read_csv_rows(const fs::path& path, std::vector<CompareRow>& rows) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw InputError("'" + path.string() + "' is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "run" || header[1] != "task") {
    throw InputError("'" + path.string() + "' is not a compare table (expected a run,task,... header)");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                       " cells, got " + std::to_string(cells.size()));
    }
    CompareRow row{cells[0], cells[1], {}};
    for (std::size_t i = 2; i < cells.size(); ++i) {
      if (cells[i].empty()) continue;
      try {
        std::size_t used = 0;
        row.metrics[header[i]] = std::stod(cells[i], &used);
        if (used != cells[i].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw InputError(path.string() + ":" + std::to_string(lineno) + ": '" + cells[i] + "' is not a number");
      }
    }
    rows.push_back(std::move(row));
  }
}

CompareRow read_manifest_row(const fs::path& path) {
  const json j = read_json(path);
  if (!j.is_object() || !j.contains("manifest_version")) {
    throw InputError("'" + path.string() + "' is not a run manifest");
  }
  CompareRow row;
  row.run = j.value("run_name", path.stem().string());
  row.task = j.at("config").at("task").at("name").get<std::string>();
  if (j.contains("metrics")) {
    for (auto it = j.at("metrics").begin(); it != j.at("metrics").end(); ++it)
      if (it.value().is_number()) row.metrics[it.key()] = it.value().get<double>();
  }
  return row;
}

}  // namespace

std::vector<CompareRow> read_compare_inputs(const std::vector<fs::path>& paths) {
  std::vector<CompareRow> rows;
  for (const auto& p : paths) {
    if (p.extension() == ".csv") read_csv_rows(p, rows);
    else rows.push_back(read_manifest_row(p));
  }
  return rows;
}

void check_same_task(const std::vector<CompareRow>& rows) {
  for (const auto& r : rows) {
    if (r.task != rows.front().task) {
      throw InputError("cannot compare runs on different tasks: '" + rows.front().task + "' (" + rows.front().run +
                       ") vs '" + r.task + "' (" + r.run + ")");
    }
  }
}

std::string render_compare_table(const std::vector<CompareRow>& rows) {
  const auto names = metric_names(rows);
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"run", "task"};
  header.insert(header.end(), names.begin(), names.end());
  cells.push_back(header);
  for (const auto& r : rows) {
    std::vector<std::string> line{r.run, r.task};
    for (const auto& n : names) {
      auto it = r.metrics.find(n);
      if (it == r.metrics.end()) {
        line.emplace_back("—");
      } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", it->second);
        line.emplace_back(buf);
      }
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], display_width(line[i]));
  std::string out;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      out += line[i];
      if (i + 1 < line.size()) out += std::string(width[i] - display_width(line[i]) + 2, ' ');
    }
    out += '\n';
  }
  return out;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  const auto names = metric_names(rows);
  std::string out = "run,task";
  for (const auto& n : names) out += ',' + n;
  out += '\n';
  for (const auto& r : rows) {
    out += r.run + ',' + r.task;
    for (const auto& n : names) {
      out += ',';
      auto it = r.metrics.find(n);
      if (it != r.metrics.end()) out += num(it->second);
    }
    out += '\n';
  }
  return out;
}

// ---- command dispatch ----

namespace {

int grad_check(const std::string& scope, std::uint64_t seed, const std::string& corrupt, std::ostream& out) {
  std::vector<GradCheckScope> scopes;
  if (scope == "all") scopes = {GradCheckScope::Losses, GradCheckScope::Encoder, GradCheckScope::End2End};
  else scopes = {grad_check_scope_from_string(scope)};
  GradCheckOptions options;
  options.corrupt = corrupt;

  bool ok = true;
  out << std::left << std::setw(34) << "op" << std::setw(10) << "elements" << std::setw(16) << "max_rel_error"
      << "status\n";
  std::vector<GradCheckResult> failures;
  for (GradCheckScope s : scopes) {
    for (const GradCheckResult& r : run_grad_suite(s, seed, options)) {
      char err[32];
      std::snprintf(err, sizeof err, "%.3e", r.max_rel_error);
      out << std::setw(34) << (to_string(s) + "/" + r.op) << std::setw(10) << r.elements << std::setw(16) << err
          << (r.passed ? "ok" : "FAIL") << '\n';
      if (!r.passed) failures.push_back(r);
    }
  }
  for (const auto& r : failures) {
    ok = false;
    out << "FAIL op=" << r.op << " input=" << r.worst_input << " index=" << r.worst_index
        << " analytic=" << num(r.analytic) << " numeric=" << num(r.numeric) << " rel=" << num(r.max_rel_error)
        << '\n';
  }
  return ok ? kExitOk : kExitFailure;
}

int eval_command(const RunConfig& c, const std::string& model_path, const std::string& reference_path,
                 const std::string& split, const std::string& output, std::ostream& out) {
  const fs::path model_p = model_path.empty() ? fs::path(c.output_dir) / "student" : fs::path(model_path);
  const EncoderModel model = load_model(model_p, "model");
  check_fits_task(model.config(), c.task, "model");
  std::optional<EncoderModel> reference;
  if (!reference_path.empty()) reference = load_model(reference_path, "reference");
  if (split != "eval" && split != "train") throw ConfigError("--split must be eval or train");
  const Splits splits = make_splits(c.task, c.train_size, c.eval_size);
  const auto& data = split == "eval" ? splits.eval : splits.train;
  const json j = metrics_json(evaluate(model, data, reference ? &*reference : nullptr));
  out << j.dump(2) << '\n';
  if (!output.empty()) write_text(output, j.dump(2) + "\n");
  return kExitOk;
}

double tokens_per_second(const EncoderModel& m, const std::vector<Sample>& data) {
  const auto t0 = Clock::now();
  std::size_t tokens = 0;
  double sink = 0.0;
  for (const Sample& s : data) {
    sink += predict_logits(m, s.tokens)[0];
    tokens += s.tokens.size();
  }
  const double secs = std::max(seconds_since(t0), 1e-9);
  if (!std::isfinite(sink)) throw NumericError("bench: non-finite model output");
  return static_cast<double>(tokens) / secs;
}

int bench_command(const RunConfig& c, const std::string& teacher_path, const std::string& student_path, int samples,
                  std::ostream& out) {
  if (samples < 1) throw ConfigError("--samples must be positive");
  const EncoderModel teacher = load_model(teacher_path.empty() ? teacher_checkpoint_path(c) : fs::path(teacher_path),
                                          "teacher");
  const fs::path sp = student_path.empty() ? fs::path(c.output_dir) / "student" : fs::path(student_path);
  fs::path sp_manifest = sp;
  if (sp_manifest.extension() != ".json") sp_manifest += ".json";
  // Throughput does not depend on weight values, so an untrained student of
  // the configured shape is good enough when no checkpoint exists yet.
  EncoderModel student = fs::exists(sp_manifest) || !c.student ? load_model(sp, "student")
                                                                : EncoderModel::init(*c.student, 1);
  const std::vector<Sample> data = generate(c.task, samples, c.task.generator_seed);
  const double t = tokens_per_second(teacher, data);
  const double s = tokens_per_second(student, data);
  const json j{{"samples", samples},
               {"teacher_parameters", param_count(teacher.config())},
               {"student_parameters", param_count(student.config())},
               {"teacher_tokens_per_second", t},
               {"student_tokens_per_second", s},
               {"speedup", s / t}};
  out << j.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"LRC distillation engine: train teachers, distill students, verify gradients", "lrc"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;
  std::string ablation, teacher_ckpt, output_dir;
  double stage_split = 0;
  std::uint64_t seed = 0;
  int steps = 0;

  auto* teach = app.add_subcommand("train-teacher", "Train a teacher from scratch on the configured task");
  teach->add_option("config", config_path, "Config file or run manifest")->required();
  auto* t_seed = teach->add_option("--seed", seed, "Override teacher_training.seed");
  auto* t_steps = teach->add_option("--steps", steps, "Override teacher_training.steps");
  auto* t_out = teach->add_option("--output-dir", output_dir, "Override output_dir");

  auto* dist = app.add_subcommand("distill", "Distill a student from a trained teacher");
  dist->add_option("config", config_path, "Config file or run manifest")->required();
  auto* d_abl = dist->add_option("--ablation", ablation,
                                 "full|drop-cosnce|drop-soft|drop-hard|mse-intermediate|no-two-stage|no-perturbation");
  dist->add_flag("--no-perturbation", ov.no_perturbation, "Plain updates from the total loss");
  auto* d_split = dist->add_option("--stage-split", stage_split, "Fraction of steps in stage 1");
  auto* d_seed = dist->add_option("--seed", seed, "Override distill.seed");
  auto* d_steps = dist->add_option("--steps", steps, "Override distill.total_steps");
  auto* d_out = dist->add_option("--output-dir", output_dir, "Override output_dir");
  auto* d_teacher = dist->add_option("--teacher", teacher_ckpt, "Teacher checkpoint (manifest path or stem)");

  std::string model_path, reference_path, split = "eval", metrics_out;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the task's eval split");
  ev->add_option("config", config_path, "Config file or run manifest")->required();
  ev->add_option("--model", model_path, "Checkpoint to evaluate (default <output_dir>/student)");
  ev->add_option("--reference", reference_path, "Reference checkpoint for teacher agreement");
  ev->add_option("--split", split, "eval or train");
  ev->add_option("--output", metrics_out, "Also write the metrics JSON here");

  std::string scope = "all", corrupt;
  std::uint64_t gc_seed = 1;
  auto* gc = app.add_subcommand("grad-check", "Compare analytic gradients with central finite differences");
  gc->add_option("--scope", scope, "losses|encoder|end2end|all");
  gc->add_option("--seed", gc_seed, "Seed for the random fixtures");
  gc->add_option("--corrupt", corrupt, "Test hook: offset the analytic gradient of this check");

  std::vector<std::string> inputs;
  std::string compare_out = "compare.csv";
  auto* cmp = app.add_subcommand("compare", "Tabulate metrics from run manifests or compare CSVs");
  cmp->add_option("inputs", inputs, "manifest.json or compare .csv files")->required();
  cmp->add_option("--output", compare_out, "CSV output path");

  std::string bench_teacher, bench_student;
  int samples = 200;
  auto* bench = app.add_subcommand("bench", "Measure teacher and student inference throughput");
  bench->add_option("config", config_path, "Config file or run manifest")->required();
  bench->add_option("--teacher", bench_teacher, "Teacher checkpoint");
  bench->add_option("--student", bench_student, "Student checkpoint");
  bench->add_option("--samples", samples, "Number of sequences to time");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    if (*teach) {
      RunConfig c = load_config(config_path);
      if (*t_seed) ov.seed = seed;
      if (*t_steps) ov.steps = steps;
      if (*t_out) ov.output_dir = output_dir;
      apply_teacher_overrides(c, ov);
      json m = train_teacher_command(c, err);
      out << "teacher accuracy " << m["metrics"].value("accuracy", m["metrics"].value("pearson", 0.0))
          << "  manifest " << (fs::path(c.output_dir) / "teacher_manifest.json").string() << '\n';
      return kExitOk;
    }
    if (*dist) {
      RunConfig c = load_config(config_path);
      if (*d_abl) ov.ablation = ablation;
      if (*d_split) ov.stage_split = stage_split;
      if (*d_seed) ov.seed = seed;
      if (*d_steps) ov.steps = steps;
      if (*d_out) ov.output_dir = output_dir;
      if (*d_teacher) ov.teacher_checkpoint = teacher_ckpt;
      apply_distill_overrides(c, ov);
      json m = distill_command(c, err);
      out << "agreement " << m["metrics"].value("agreement", 0.0) << "  manifest "
          << (fs::path(c.output_dir) / "manifest.json").string() << '\n';
      return kExitOk;
    }
    if (*ev) return eval_command(load_config(config_path), model_path, reference_path, split, metrics_out, out);
    if (*gc) return grad_check(scope, gc_seed, corrupt, out);
    if (*cmp) {
      std::vector<fs::path> paths(inputs.begin(), inputs.end());
      const auto rows = read_compare_inputs(paths);
      if (rows.size() < 2) throw ConfigError("compare needs at least two runs");
      check_same_task(rows);
      out << render_compare_table(rows);
      write_text(compare_out, compare_csv(rows));
      return kExitOk;
    }
    if (*bench) return bench_command(load_config(config_path), bench_teacher, bench_student, samples, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitConfig;
}

}  // namespace lrc::cli
