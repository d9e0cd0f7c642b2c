#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lrc/tensor.hpp"

namespace lrc {

// Trainable leaf. Lives outside any tape; a tape records it by reference and
// adds its gradient into `grad` on backward.
class Parameter {
 public:
  Parameter(std::string name, Tensor value);

  const std::string& name() const { return name_; }
  Tensor& value() { return value_; }
  const Tensor& value() const { return value_; }
  Tensor& grad() { return grad_; }
  const Tensor& grad() const { return grad_; }
  void zero_grad() { grad_.fill(0.0); }

 private:
  std::string name_;
  Tensor value_;
  Tensor grad_;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives and
// has not been reset.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
};

enum class GradMode { Enabled, Disabled };

// Where backward() delivers leaf gradients.
enum class GradSink {
  Parameters,  // accumulate into Parameter::grad
  NodesOnly,   // keep on the tape only; read them with Tape::grad()
};

// Ordered record of one forward episode. Nodes are appended in evaluation
// order, so node ids are already a topological order and backward is a single
// reverse sweep. One backward per episode; reset() starts a new one.
class Tape {
 public:
  // Adds the upstream gradient of this node into its inputs' gradients.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(GradMode mode = GradMode::Enabled) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  GradMode mode() const { return mode_; }

  Var constant(Tensor value);
  Var input(Tensor value, bool requires_grad = true);
  // Trainable leaf. The same parameter always maps to the same node on a tape.
  Var param(Parameter& p);
  // Read-only reference to a parameter's value; never receives a gradient.
  Var frozen(const Parameter& p);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  // Gradient of the last backward's loss w.r.t. v (zeros if unreached).
  Tensor grad(Var v) const;

  // Gradient buffer of an input during backward; nullptr if it needs none.
  Tensor* grad_slot(Var v);

  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  void backward(Var loss, GradSink sink = GradSink::Parameters);
  void reset();
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Parameter* ref = nullptr;  // value lives in the parameter
    Parameter* param = nullptr;      // set for trainable leaves only
    bool requires_grad = false;
    Tensor grad;  // allocated lazily during backward
    BackwardFn backward;
  };

  void check_owned(Var v) const;
  const Node& node(Var v) const;

  GradMode mode_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_ids_;
};

// Primitive differentiable operations. All operands must live on one tape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var square(Var a);
Var log(Var a);
Var exp(Var a);
Var gelu(Var a);
Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);
Var l2_norm(Var a);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);
Var add_bias(Var a, Var bias);
Var softmax(Var x, double temperature = 1.0);
Var log_softmax(Var x, double temperature = 1.0);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-12);
Var embedding(Var table, std::span<const int> ids);
Var row(Var x, std::size_t index);
Var columns(Var x, std::size_t begin, std::size_t count);
Var concat_columns(std::span<const Var> parts);

// Value-only helpers (no tape).
Tensor softmax_values(const Tensor& x, double temperature = 1.0);

}  // namespace lrc
