#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lrc/checkpoint.hpp"
#include "lrc/distiller.hpp"
#include "lrc/error.hpp"
#include "lrc/evaluation.hpp"
#include "lrc/gradcheck.hpp"
#include "lrc/losses.hpp"

namespace py = pybind11;
using namespace lrc;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor(std::move(shape), std::move(data));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<Tensor> to_tensors(const std::vector<Array>& arrays) {
  std::vector<Tensor> out;
  out.reserve(arrays.size());
  for (const auto& a : arrays) out.push_back(to_tensor(a));
  return out;
}

py::dict record_dict(const StepRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["stage"] = static_cast<int>(r.stage);
  d["alpha"] = r.weights.alpha;
  d["beta"] = r.weights.beta;
  d["gamma"] = r.weights.gamma;
  d["l_transformer"] = r.loss.l_transformer;
  d["l_soft"] = r.loss.l_soft;
  d["l_hard"] = r.loss.l_hard;
  d["l_total"] = r.loss.l_total;
  d["perturbed_loss"] = r.perturbed_loss ? py::cast(*r.perturbed_loss) : py::none();
  d["grad_norm"] = r.grad_norm;
  d["perturbations_applied"] = r.perturbations_applied;
  d["perturbations_skipped"] = r.perturbations_skipped;
  d["perturbation_norm_min"] = r.perturbation_norm_min;
  d["perturbation_norm_max"] = r.perturbation_norm_max;
  return d;
}

}  // namespace

PYBIND11_MODULE(_lrc, m) {
  m.doc() = "Contrastive layer-wise distillation for small transformer encoders";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<StateError>(m, "StateError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  // Losses, value only.
  m.def("angular_distance", [](const Array& x, const Array& y) { return angular_distance(to_tensor(x), to_tensor(y)); },
        py::arg("x"), py::arg("y"));
  m.def(
      "cos_nce",
      [](const Array& zs, const Array& zt, const std::vector<Array>& negatives) {
        return cos_nce(to_tensor(zs), to_tensor(zt), to_tensors(negatives));
      },
      py::arg("z_s"), py::arg("z_t"), py::arg("negatives"));
  m.def("soft_loss", [](const Array& ys, const Array& yt, double tau) { return soft_loss(to_tensor(ys), to_tensor(yt), tau); },
        py::arg("y_s"), py::arg("y_t"), py::arg("tau"));
  m.def(
      "hard_loss",
      [](const Array& ys, const Array& onehot, double tau, bool literal) {
        return hard_loss(to_tensor(ys), to_tensor(onehot), tau, literal);
      },
      py::arg("y_s"), py::arg("one_hot"), py::arg("tau"), py::arg("literal_target") = true);
  m.def(
      "regression_losses",
      [](double ys, double yt, double y) {
        Tape tape(GradMode::Disabled);
        RegressionLosses r = regression_losses(tape.constant(Tensor::scalar(ys)), yt, y);
        return py::make_tuple(r.l_soft.item(), r.l_hard.item());
      },
      py::arg("y_s"), py::arg("y_t"), py::arg("y"));
  m.def(
      "mse_layer_loss",
      [](const Array& hs, const Array& ht) {
        Tape tape(GradMode::Disabled);
        return mse_layer_loss(tape.constant(to_tensor(hs)), to_tensor(ht)).item();
      },
      py::arg("h_s"), py::arg("h_t"));
  m.def("softmax", [](const Array& x, double t) { return to_array(softmax_values(to_tensor(x), t)); }, py::arg("x"),
        py::arg("temperature") = 1.0);

  // Data.
  py::class_<Sample>(m, "Sample")
      .def(py::init<>())
      .def(py::init([](std::vector<int> tokens, int label, double target) { return Sample{std::move(tokens), label, target}; }),
           py::arg("tokens"), py::arg("label") = 0, py::arg("target") = 0.0)
      .def_readwrite("tokens", &Sample::tokens)
      .def_readwrite("label", &Sample::label)
      .def_readwrite("target", &Sample::target)
      .def("__repr__", [](const Sample& s) {
        return "Sample(len=" + std::to_string(s.tokens.size()) + ", label=" + std::to_string(s.label) + ")";
      });
  m.def("gen_parity", &gen_parity, py::arg("n"), py::arg("l"), py::arg("seed"), py::arg("one_probability") = 0.15);
  m.def("gen_pair_match", &gen_pair_match, py::arg("n"), py::arg("l"), py::arg("vocab"), py::arg("seed"));
  m.def("gen_regression", &gen_regression, py::arg("n"), py::arg("l"), py::arg("seed"),
        py::arg("one_probability") = 0.15);
  m.def("parity_label", &parity_label);

  // Models.
  py::class_<EncoderConfig>(m, "EncoderConfig")
      .def(py::init([](int vocab, int max_len, int layers, int hidden, int heads, int ffn, int classes) {
             EncoderConfig c{vocab, max_len, layers, hidden, heads, ffn, classes};
             c.validate();
             return c;
           }),
           py::arg("vocab_size") = 8, py::arg("max_len") = 16, py::arg("num_layers") = 2, py::arg("hidden_size") = 16,
           py::arg("num_heads") = 2, py::arg("ffn_size") = 32, py::arg("num_classes") = 2)
      .def_readwrite("vocab_size", &EncoderConfig::vocab_size)
      .def_readwrite("max_len", &EncoderConfig::max_len)
      .def_readwrite("num_layers", &EncoderConfig::num_layers)
      .def_readwrite("hidden_size", &EncoderConfig::hidden_size)
      .def_readwrite("num_heads", &EncoderConfig::num_heads)
      .def_readwrite("ffn_size", &EncoderConfig::ffn_size)
      .def_readwrite("num_classes", &EncoderConfig::num_classes)
      .def("__eq__", [](const EncoderConfig& a, const EncoderConfig& b) { return a == b; });
  m.def("param_count", &param_count);

  py::class_<EncoderModel>(m, "EncoderModel")
      .def_static("init", &EncoderModel::init, py::arg("config"), py::arg("seed"))
      .def_property_readonly("config", &EncoderModel::config)
      .def("predict_logits", [](const EncoderModel& mdl, const std::vector<int>& t) { return to_array(predict_logits(mdl, t)); })
      .def("ffn_outputs",
           [](const EncoderModel& mdl, const std::vector<int>& t) {
             std::vector<Array> out;
             for (const Tensor& h : evaluate_trace(mdl, t).ffn_outs) out.push_back(to_array(h));
             return out;
           })
      .def("parameters",
           [](const EncoderModel& mdl) {
             py::dict d;
             for (const Parameter* p : mdl.parameters()) d[py::str(p->name())] = to_array(p->value());
             return d;
           })
      .def("save", [](const EncoderModel& mdl, const std::filesystem::path& stem) { return save_checkpoint(mdl, stem); })
      .def_static("load", &load_checkpoint);

  m.def(
      "train_teacher",
      [](const EncoderConfig& config, const std::vector<Sample>& train, int steps, int batch_size, double lr,
         std::uint64_t seed, int num_classes) {
        TaskSpec task;
        task.num_classes = num_classes;
        task.kind = num_classes == 1 ? TaskKind::Regression : TaskKind::SingleClassify;
        task.vocab_size = config.vocab_size;
        task.seq_len = config.max_len;
        TeacherTrainConfig tc;
        tc.steps = steps;
        tc.batch_size = batch_size;
        tc.optimizer = {OptimizerKind::Adam, lr};
        tc.seed = seed;
        py::gil_scoped_release release;
        return train_teacher(config, task, tc, train);
      },
      py::arg("config"), py::arg("train"), py::arg("steps") = 5000, py::arg("batch_size") = 16,
      py::arg("learning_rate") = 3e-4, py::arg("seed") = 1, py::arg("num_classes") = 2);

  m.def(
      "distill",
      [](const EncoderModel& teacher, const EncoderConfig& student, const std::vector<Sample>& train, int steps,
         const std::string& ablation, bool perturbation, double stage_split, int negatives, int batch_size,
         double tau, double lr, std::uint64_t seed) {
        DistillConfig cfg;
        cfg.total_steps = steps;
        cfg.ablation = ablation_from_string(ablation);
        cfg.perturbation_enabled = perturbation;
        cfg.stage_split = stage_split;
        cfg.negatives = negatives;
        cfg.batch_size = batch_size;
        cfg.tau = tau;
        cfg.optimizer = {OptimizerKind::Adam, lr};
        cfg.seed = seed;
        DistillResult r = [&] {
          py::gil_scoped_release release;
          return distill(teacher, student, cfg, train);
        }();
        py::list log;
        for (const StepRecord& rec : r.log) log.append(record_dict(rec));
        return py::make_tuple(std::move(r.student), log);
      },
      py::arg("teacher"), py::arg("student_config"), py::arg("train"), py::arg("steps") = 1000,
      py::arg("ablation") = "full", py::arg("perturbation") = true, py::arg("stage_split") = 0.8,
      py::arg("negatives") = 15, py::arg("batch_size") = 16, py::arg("tau") = 1.1, py::arg("learning_rate") = 1e-3,
      py::arg("seed") = 1);

  m.def(
      "evaluate",
      [](const EncoderModel& model, const std::vector<Sample>& data, const EncoderModel* reference) {
        return evaluate(model, data, reference);
      },
      py::arg("model"), py::arg("dataset"), py::arg("reference") = nullptr);

  // Schedule helpers.
  m.def("default_layer_map", &default_layer_map, py::arg("teacher_layers"), py::arg("student_layers"));
  m.def(
      "stage_weights",
      [](int step, int total_steps, double stage_split) {
        DistillConfig c;
        c.total_steps = total_steps;
        c.stage_split = stage_split;
        LossWeights w = stage_weights(step, c);
        return py::make_tuple(w.alpha, w.beta, w.gamma);
      },
      py::arg("step"), py::arg("total_steps"), py::arg("stage_split") = 0.8);

  m.def(
      "grad_check",
      [](const std::string& scope, std::uint64_t seed, const std::string& corrupt) {
        GradCheckOptions opt;
        opt.corrupt = corrupt;
        py::list out;
        for (const GradCheckResult& r : run_grad_suite(grad_check_scope_from_string(scope), seed, opt)) {
          py::dict d;
          d["op"] = r.op;
          d["max_rel_error"] = r.max_rel_error;
          d["elements"] = r.elements;
          d["passed"] = r.passed;
          out.append(d);
        }
        return out;
      },
      py::arg("scope") = "losses", py::arg("seed") = 1, py::arg("corrupt") = "");
}
