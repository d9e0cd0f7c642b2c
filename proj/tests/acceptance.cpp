// Acceptance gate: checks each criterion and prints one PASS/FAIL line per
// criterion. Exit status is 0 only when all of them pass.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "lrc/gradcheck.hpp"
#include "lrc/losses.hpp"
#include "oracle.hpp"
#include "reference.hpp"

namespace {

namespace fs = std::filesystem;
using namespace lrc;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::vector<std::pair<int, Outcome>> g_results;

void report(int id, const std::string& title, const Outcome& o) {
  g_results.emplace_back(id, o);
  std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << title << ": " << o.detail
            << std::endl;
}

// Runs a criterion, turning any exception into a failure.
void criterion(int id, const std::string& title, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(id, title, o);
}

Tensor vec(const oracle::Vec& v) { return Tensor::vector(v); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw std::runtime_error("step log has no column " + name);
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  oracle::Gen gen(2024);
  double worst = 0.0;
  const int fixtures = 1000;
  for (int c = 0; c < fixtures; ++c) {
    const std::size_t d = static_cast<std::size_t>(gen.integer(2, 16));
    const int k = gen.integer(1, 15);
    auto zs = gen.nonzero(d), zt = gen.nonzero(d);
    std::vector<oracle::Vec> negs;
    std::vector<Tensor> tnegs;
    for (int i = 0; i < k; ++i) {
      negs.push_back(gen.nonzero(d));
      tnegs.push_back(vec(negs.back()));
    }
    worst = std::max(worst, std::abs(angular_distance(vec(zs), vec(zt)) - oracle::angular(zs, zt)));
    worst = std::max(worst, std::abs(cos_nce(vec(zs), vec(zt), tnegs) - oracle::cos_nce(zs, zt, negs)));

    const int n = gen.integer(2, 8);
    auto ys = gen.vec(static_cast<std::size_t>(n), -5, 5), yt = gen.vec(static_cast<std::size_t>(n), -5, 5);
    const double tau = gen.uniform(0.2, 4.0);
    const Tensor target = one_hot(gen.integer(0, n - 1), n);
    worst = std::max(worst, std::abs(soft_loss(vec(ys), vec(yt), tau) - oracle::kl(yt, ys, tau)));
    worst = std::max(worst, std::abs(hard_loss(vec(ys), target, tau) - oracle::hard(ys, target.values(), tau)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 5.0, std::to_string(fixtures) + " fixtures x 4 losses, max |diff| " +
                                            fmt("%.2e", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome anchors() {
  const std::vector<Tensor> orth{Tensor::vector({0, 1})};
  const double a = cos_nce(Tensor::vector({1, 0}), Tensor::vector({1, 0}), orth);
  const double b = cos_nce(Tensor::vector({0, 1}), Tensor::vector({1, 0}), orth);
  const double g = angular_distance(Tensor::vector({1, 0}), Tensor::vector({-1, 0}));
  return {a == 0.5 && b == 2.5 && g == 2.0,
          "cos_nce " + fmt("%.17g", a) + ", " + fmt("%.17g", b) + "; g " + fmt("%.17g", g)};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const int seeds = 20;
  int checks = 0, failures = 0;
  std::set<std::string> ops;
  std::string first_failure;
  for (int seed = 1; seed <= seeds; ++seed) {
    for (auto scope : {GradCheckScope::Losses, GradCheckScope::Encoder, GradCheckScope::End2End}) {
      for (const GradCheckResult& r : run_grad_suite(scope, static_cast<std::uint64_t>(seed))) {
        ++checks;
        ops.insert(r.op);
        if (!r.passed) {
          ++failures;
          if (first_failure.empty()) first_failure = r.op + " seed " + std::to_string(seed);
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool projection = ops.count("transformer_loss_projection") == 1;
  std::string d = std::to_string(checks) + " checks over " + std::to_string(ops.size()) + " ops x " +
                  std::to_string(seeds) + " seeds, " + std::to_string(failures) + " failures, " + fmt("%.1f", secs) +
                  " s";
  if (!first_failure.empty()) d += ", first failure " + first_failure;
  if (!projection) d += ", projection check missing";
  return {failures == 0 && projection && secs < 60.0, d};
}

Outcome properties() {
  const int cases = 1000;
  oracle::Gen gen(77);
  int violations = 0;
  double worst_scale = 0.0;
  for (int c = 0; c < cases; ++c) {
    const std::size_t d = static_cast<std::size_t>(gen.integer(1, 16));
    auto x = gen.nonzero(d), y = gen.nonzero(d);
    const double g = angular_distance(vec(x), vec(y));
    violations += !(g >= 0.0 && g <= 2.0);
    const double s1 = std::exp(gen.uniform(-6, 6)), s2 = std::exp(gen.uniform(-6, 6));
    auto xs = x, ys = y;
    for (double& v : xs) v *= s1;
    for (double& v : ys) v *= s2;
    worst_scale = std::max(worst_scale, std::abs(angular_distance(vec(xs), vec(ys)) - g));
  }
  int nce_range = 0;
  for (int c = 0; c < cases; ++c) {
    const std::size_t d = static_cast<std::size_t>(gen.integer(2, 12));
    const int k = gen.integer(1, 15);
    std::vector<Tensor> negs;
    for (int i = 0; i < k; ++i) negs.push_back(vec(gen.nonzero(d)));
    const double v = cos_nce(vec(gen.nonzero(d)), vec(gen.nonzero(d)), negs);
    nce_range += !(v >= 0.0 && v <= 4.0);
  }
  int monotone = 0, checked = 0;
  while (checked < cases) {
    const std::size_t d = static_cast<std::size_t>(gen.integer(2, 10));
    const int k = gen.integer(1, 8);
    auto zs = gen.nonzero(d), zt = gen.nonzero(d);
    std::vector<oracle::Vec> negs;
    for (int i = 0; i < k; ++i) negs.push_back(gen.nonzero(d));
    const auto j = static_cast<std::size_t>(gen.integer(0, k - 1));
    auto moved = gen.nonzero(d);
    if (oracle::angular(moved, zs) <= oracle::angular(negs[j], zs) + 1e-9) continue;
    std::vector<Tensor> before, after;
    for (const auto& n : negs) before.push_back(vec(n));
    negs[j] = moved;
    for (const auto& n : negs) after.push_back(vec(n));
    monotone += !(cos_nce(vec(zs), vec(zt), after) < cos_nce(vec(zs), vec(zt), before));
    ++checked;
  }
  const bool pass = violations == 0 && nce_range == 0 && monotone == 0 && worst_scale <= 1e-12;
  return {pass, std::to_string(cases) + " cases each: g range violations " + std::to_string(violations) +
                    ", cos_nce range violations " + std::to_string(nce_range) + ", scale drift " +
                    fmt("%.1e", worst_scale) + ", monotonicity violations " + std::to_string(monotone)};
}

Outcome stage_boundary_check() {
  // Tiny models keep the 100-step run fast; the schedule does not depend on
  // model size.
  const EncoderConfig tc{8, 8, 2, 8, 2, 12, 2}, sc{8, 8, 1, 4, 1, 8, 2};
  const EncoderModel teacher = EncoderModel::init(tc, 1);
  DistillConfig cfg;
  cfg.total_steps = 100;
  cfg.stage_split = 0.8;
  cfg.negatives = 3;
  cfg.batch_size = 4;
  int wrong = 0;
  std::vector<std::string> rows;
  distill(teacher, sc, cfg, gen_parity(64, 8, 1, 0.4), [&](const StepRecord& r) {
    const LossWeights expected = r.step < 80 ? LossWeights{1, 0, 0, 1.1} : LossWeights{1, 1, 3, 1.1};
    wrong += !(r.weights == expected);
    rows.push_back(cli::step_log_row(r));
  });
  // The CSV rows carry the same weights.
  for (int s : {0, 79, 80, 99}) {
    const std::string prefix = std::to_string(s) + (s < 80 ? ",1,1,0,0," : ",2,1,1,3,");
    wrong += rows[static_cast<std::size_t>(s)].rfind(prefix, 0) != 0;
  }
  return {wrong == 0 && rows.size() == 100, "steps 0-79 weights (1,0,0), steps 80-99 (1,1,3), " +
                                                std::to_string(wrong) + " mismatches"};
}

Outcome disabled_perturbation_path() {
  const EncoderConfig tc{8, 8, 2, 8, 2, 12, 2}, sc{8, 8, 1, 4, 1, 8, 2};
  const EncoderModel teacher = EncoderModel::init(tc, 3);
  EncoderModel student = EncoderModel::init(sc, 4);
  Projection proj = Projection::init(1, 4, 8, 5);
  EncoderModel ref_student = student;
  Projection ref_proj = proj;
  DistillConfig cfg;
  cfg.negatives = 3;
  cfg.batch_size = 4;
  cfg.stage_split = 0.0;
  cfg.perturbation_enabled = false;
  cfg.optimizer = {OptimizerKind::Sgd, 0.05};
  const auto data = gen_parity(4, 8, 9, 0.4);
  Distiller d(teacher, student, proj, cfg);
  const StepRecord rec = d.step(data, 0);
  reference::reference_update(teacher, ref_student, ref_proj, data, stage_weights(0, cfg), false, 0.05);
  double diff = 0.0;
  auto a = student.parameters(), b = ref_student.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, max_abs_diff(a[i]->value(), b[i]->value()));
  for (std::size_t i = 0; i < proj.weights.size(); ++i)
    diff = std::max(diff, max_abs_diff(proj.weights[i].value(), ref_proj.weights[i].value()));
  const bool ok = !rec.perturbed_loss && rec.perturbations_applied == 0 && rec.perturbations_skipped == 0 && diff < 1e-12;
  return {ok, std::string("perturbed_loss ") + (rec.perturbed_loss ? "present" : "absent") +
                  ", update vs L_total replay max diff " + fmt("%.1e", diff)};
}

// ---------------------------------------------------------------------------

struct Pinned {
  cli::RunConfig config;
  fs::path root;
};

cli::RunConfig distill_run(const Pinned& p, const std::string& name, Ablation ablation, std::uint64_t seed) {
  cli::RunConfig c = p.config;
  cli::Overrides o;
  o.ablation = to_string(ablation);
  o.seed = seed;
  o.output_dir = (p.root / name).string();
  cli::apply_distill_overrides(c, o);
  return c;
}

}  // namespace

int main() {
  std::cout << std::unitbuf;
  criterion(1, "loss oracle equivalence", oracle_equivalence);
  criterion(2, "hand-computed anchors", anchors);
  criterion(3, "finite-difference gradient suite", gradient_suite);
  criterion(4, "range and invariance properties", properties);

  Pinned pinned;
  pinned.root = fs::temp_directory_path() / ("lrc_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(pinned.root);
  fs::create_directories(pinned.root);
  pinned.config = cli::load_config(fs::path(LRC_SOURCE_DIR) / "configs" / "parity.json");
  pinned.config.output_dir = (pinned.root / "teacher_run").string();
  std::ostringstream progress;

  // Criterion 7 run: teacher, then the Full pipeline on seed 1.
  nlohmann::json teacher_manifest, full_manifest;
  double c7_seconds = 0.0;
  std::string c7_error;
  try {
    const auto t0 = Clock::now();
    teacher_manifest = cli::train_teacher_command(pinned.config, progress);
    full_manifest = cli::distill_command(distill_run(pinned, "full_1", Ablation::Full, 1), progress);
    c7_seconds = seconds_since(t0);
  } catch (const std::exception& e) {
    c7_error = e.what();
  }

  criterion(5, "perturbation contract", [&] {
    if (!c7_error.empty()) return Outcome{false, "pinned run failed: " + c7_error};
    const auto rows = read_csv(pinned.root / "full_1" / "steps.csv");
    const auto& h = rows.at(0);
    const std::size_t applied = column(h, "perturbations_applied"), lo = column(h, "perturbation_norm_min"),
                      hi = column(h, "perturbation_norm_max"), pl = column(h, "perturbed_loss");
    long total = 0;
    int bad = 0;
    double worst = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      bad += r[pl].empty();
      const int n = std::stoi(r[applied]);
      total += n;
      if (n == 0) continue;
      worst = std::max({worst, std::abs(std::stod(r[lo]) - 1.0), std::abs(std::stod(r[hi]) - 1.0)});
    }
    Outcome path = disabled_perturbation_path();
    return Outcome{bad == 0 && total > 0 && worst <= 1e-9 && path.pass,
                   std::to_string(total) + " perturbations over " + std::to_string(rows.size() - 1) +
                       " steps, max |norm-1| " + fmt("%.1e", worst) + "; disabled: " + path.detail};
  });

  criterion(6, "two-stage boundary", stage_boundary_check);

  double full_agreement_1 = 0.0;
  criterion(7, "desk-scale distillation", [&] {
    if (!c7_error.empty()) return Outcome{false, "pinned run failed: " + c7_error};
    const double teacher_acc = teacher_manifest.at("metrics").at("accuracy");
    full_agreement_1 = full_manifest.at("metrics").at("agreement");
    const int steps = pinned.config.distill.total_steps;
    return Outcome{teacher_acc >= 0.95 && full_agreement_1 >= 0.90 && steps <= 10000 && c7_seconds < 600.0,
                   "teacher accuracy " + fmt("%.4f", teacher_acc) + ", student agreement " +
                       fmt("%.4f", full_agreement_1) + " after " + std::to_string(steps) + " steps, " +
                       fmt("%.0f", c7_seconds) + " s"};
  });

  criterion(8, "DropCosNce below Full", [&] {
    if (!c7_error.empty()) return Outcome{false, "pinned run failed: " + c7_error};
    int wins = 0;
    std::string d;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const double full =
          seed == 1 ? full_agreement_1
                    : cli::distill_command(distill_run(pinned, "full_" + std::to_string(seed), Ablation::Full, seed),
                                           progress)
                          .at("metrics")
                          .at("agreement")
                          .get<double>();
      const double drop =
          cli::distill_command(distill_run(pinned, "dropc_" + std::to_string(seed), Ablation::DropCosNce, seed),
                               progress)
              .at("metrics")
              .at("agreement")
              .get<double>();
      wins += drop < full;
      d += (seed > 1 ? "; " : "") + std::string("seed ") + std::to_string(seed) + " full " + fmt("%.4f", full) +
           " drop-cosnce " + fmt("%.4f", drop);
    }
    return Outcome{wins >= 2, d + " (" + std::to_string(wins) + "/3 seeds)"};
  });

  criterion(9, "determinism", [&] {
    if (!c7_error.empty()) return Outcome{false, "pinned run failed: " + c7_error};
    // The whole run again, teacher included, into fresh directories.
    Pinned again = pinned;
    again.config.output_dir = (pinned.root / "teacher_run_again").string();
    cli::train_teacher_command(again.config, progress);
    cli::distill_command(distill_run(again, "full_1_again", Ablation::Full, 1), progress);
    std::string d;
    bool same = true;
    auto compare = [&](const fs::path& a, const fs::path& b) {
      const bool eq = slurp(a) == slurp(b);
      same = same && eq;
      d += std::string(d.empty() ? "" : ", ") + a.filename().string() + (eq ? " identical" : " differs");
    };
    compare(pinned.root / "teacher_run" / "teacher.bin", pinned.root / "teacher_run_again" / "teacher.bin");
    for (const char* f : {"student.bin", "student.json", "steps.csv"})
      compare(pinned.root / "full_1" / f, pinned.root / "full_1_again" / f);
    return Outcome{same, d};
  });

  fs::remove_all(pinned.root);
  int failed = 0;
  for (const auto& [id, o] : g_results) failed += !o.pass;
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
