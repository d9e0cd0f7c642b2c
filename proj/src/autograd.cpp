#include "lrc/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "lrc/error.hpp"

namespace lrc {

Parameter::Parameter(std::string name, Tensor value)
    : name_(std::move(name)), value_(std::move(value)), grad_(value_.shape(), 0.0) {}

const Tensor& Var::value() const {
  if (tape == nullptr) throw StateError("use of an unbound Var");
  return tape->value(*this);
}

// ---------------------------------------------------------------------------
// Tape

void Tape::check_owned(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) throw ContractError("Var does not belong to this tape");
}

const Tape::Node& Tape::node(Var v) const {
  check_owned(v);
  return nodes_[v.id];
}

Var Tape::constant(Tensor value) { return input(std::move(value), false); }

Var Tape::input(Tensor value, bool requires_grad) {
  if (consumed_) throw StateError("tape reused after backward without reset");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && mode_ == GradMode::Enabled;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  if (consumed_) throw StateError("tape reused after backward without reset");
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var{this, it->second};
  Node n;
  n.ref = &p;
  n.param = &p;
  n.requires_grad = mode_ == GradMode::Enabled;
  nodes_.push_back(std::move(n));
  param_ids_.emplace(&p, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

Var Tape::frozen(const Parameter& p) {
  if (consumed_) throw StateError("tape reused after backward without reset");
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var{this, it->second};
  Node n;
  n.ref = &p;
  nodes_.push_back(std::move(n));
  param_ids_.emplace(&p, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.ref ? n.ref->value() : n.value;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0) return Tensor(value(v).shape(), 0.0);
  return n.grad;
}

Tensor* Tape::grad_slot(Var v) {
  check_owned(v);
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.size() == 0) n.grad = Tensor(value(v).shape(), 0.0);
  return &n.grad;
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (consumed_) throw StateError("tape reused after backward without reset");
  bool needs = false;
  for (Var in : inputs) {
    check_owned(in);
    needs = needs || nodes_[in.id].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs && mode_ == GradMode::Enabled;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

void Tape::backward(Var loss, GradSink sink) {
  check_owned(loss);
  if (consumed_) throw StateError("backward called twice on the same tape");
  if (mode_ == GradMode::Disabled) throw StateError("backward on a tape recorded without gradients");
  if (value(loss).size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_string(value(loss).shape()));
  }
  consumed_ = true;
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad = Tensor(value(loss).shape(), 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, n.grad);
  }
  if (sink == GradSink::Parameters) {
    for (Node& n : nodes_) {
      if (n.param == nullptr || n.grad.size() == 0) continue;
      auto dst = n.param->grad().data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  param_ids_.clear();
  consumed_ = false;
}

// ---------------------------------------------------------------------------
// Primitive operations

namespace {

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw StateError("use of an unbound Var");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
  return tape_of(a);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(a.shape()));
  }
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  auto yd = y.data();
  auto xd = x.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += alpha * xd[i];
}

// C(m×n) += A(m×k) · B(k×n), all row-major.
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C(m×k) += G(m×n) · B(k×n)ᵀ
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* g, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
      c[i * k + p] += s;
    }
  }
}

// C(k×n) += A(m×k)ᵀ · G(m×n)
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* g, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * gi[j];
    }
  }
}

template <typename F, typename D>
Var unary(Var a, F f, D dfdx) {
  Tape& t = tape_of(a);
  const Tensor& x = t.value(a);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return t.record(std::move(y), {a}, [a, dfdx](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) {
      const Tensor& x = tp.value(a);
      for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += g[i] * dfdx(x[i]);
    }
  });
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("add", t.value(a), t.value(b));
  Tensor y = t.value(a);
  axpy(1.0, t.value(b), y);
  return t.record(std::move(y), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) axpy(1.0, g, *ga);
    if (Tensor* gb = tp.grad_slot(b)) axpy(1.0, g, *gb);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("sub", t.value(a), t.value(b));
  Tensor y = t.value(a);
  axpy(-1.0, t.value(b), y);
  return t.record(std::move(y), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) axpy(1.0, g, *ga);
    if (Tensor* gb = tp.grad_slot(b)) axpy(-1.0, g, *gb);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& x = t.value(a);
  const Tensor& z = t.value(b);
  require_same_shape("mul", x, z);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * z[i];
  return t.record(std::move(y), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    const Tensor& z = tp.value(b);
    if (Tensor* ga = tp.grad_slot(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * z[i];
    if (Tensor* gb = tp.grad_slot(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * x[i];
  });
}

Var div(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& x = t.value(a);
  const Tensor& z = t.value(b);
  require_same_shape("div", x, z);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] / z[i];
  return t.record(std::move(y), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    const Tensor& x = tp.value(a);
    const Tensor& z = tp.value(b);
    if (Tensor* ga = tp.grad_slot(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / z[i];
    if (Tensor* gb = tp.grad_slot(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i] * x[i] / (z[i] * z[i]);
  });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var gelu(Var a) {
  return unary(
      a, [](double x) { return x * normal_cdf(x); },
      [](double x) { return normal_cdf(x) + x * normal_pdf(x); });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : t.value(a).data()) s += v;
  return t.record(Tensor::scalar(s), {a}, [a](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a))
      for (auto& v : ga->data()) v += g[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(tape_of(a).value(a).size())); }

Var dot(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& x = t.value(a);
  const Tensor& z = t.value(b);
  if (x.size() != z.size()) {
    throw DimensionError("dot: length mismatch " + shape_string(x.shape()) + " vs " + shape_string(z.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * z[i];
  return t.record(Tensor::scalar(s), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) axpy(g[0], tp.value(b), *ga);
    if (Tensor* gb = tp.grad_slot(b)) axpy(g[0], tp.value(a), *gb);
  });
}

Var l2_norm(Var a) {
  Tape& t = tape_of(a);
  const double n = frobenius_norm(t.value(a));
  return t.record(Tensor::scalar(n), {a}, [a, n](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) {
      if (n == 0.0) throw NumericError("l2_norm: gradient undefined at the zero vector");
      axpy(g[0] / n, tp.value(a), *ga);
    }
  });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& x = t.value(a);
  const Tensor& z = t.value(b);
  require_rank("matmul", x, 2);
  require_rank("matmul", z, 2);
  if (x.dim(1) != z.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(x.shape()) + " x " +
                         shape_string(z.shape()));
  }
  const std::size_t m = x.dim(0), k = x.dim(1), n = z.dim(1);
  Tensor y(Shape{m, n});
  gemm_nn(m, k, n, x.data().data(), z.data().data(), y.data().data());
  return t.record(std::move(y), {a, b}, [a, b, m, k, n](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) gemm_nt(m, n, k, g.data().data(), tp.value(b).data().data(), ga->data().data());
    if (Tensor* gb = tp.grad_slot(b)) gemm_tn(m, k, n, tp.value(a).data().data(), g.data().data(), gb->data().data());
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = t.value(a);
  require_rank("transpose", x, 2);
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor y(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y.at(j, i) = x.at(i, j);
  return t.record(std::move(y), {a}, [a, m, n](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga->at(i, j) += g.at(j, i);
  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  Tensor y = t.value(a).reshaped(std::move(shape));
  return t.record(std::move(y), {a}, [a](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) {
      auto d = ga->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
  });
}

Var add_bias(Var a, Var bias) {
  Tape& t = tape_of(a, bias);
  const Tensor& x = t.value(a);
  const Tensor& b = t.value(bias);
  require_rank("add_bias", b, 1);
  const std::size_t n = b.dim(0);
  if (x.last_dim() != n || x.rank() == 0) {
    throw DimensionError("add_bias: " + shape_string(x.shape()) + " + " + shape_string(b.shape()));
  }
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i % n];
  return t.record(std::move(y), {a, bias}, [a, bias, n](Tape& tp, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(a)) axpy(1.0, g, *ga);
    if (Tensor* gb = tp.grad_slot(bias))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % n] += g[i];
  });
}

Tensor softmax_values(const Tensor& x, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("softmax: temperature must be positive");
  const std::size_t n = x.last_dim();
  Tensor y(x.shape());
  for (std::size_t r = 0; r < x.size() / n; ++r) {
    const double* xr = x.data().data() + r * n;
    double* yr = y.data().data() + r * n;
    double mx = xr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp((xr[j] - mx) / temperature);
      s += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= s;
  }
  return y;
}

Var softmax(Var x, double temperature) {
  Tape& t = tape_of(x);
  Tensor y = softmax_values(t.value(x), temperature);
  auto out = std::make_shared<Tensor>(y);
  return t.record(std::move(y), {x}, [x, out, temperature](Tape& tp, const Tensor& g) {
    Tensor* gx = tp.grad_slot(x);
    if (!gx) return;
    const std::size_t n = out->last_dim();
    for (std::size_t r = 0; r < out->size() / n; ++r) {
      const double* yr = out->data().data() + r * n;
      const double* gr = g.data().data() + r * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += gr[j] * yr[j];
      for (std::size_t j = 0; j < n; ++j) (*gx)[r * n + j] += yr[j] * (gr[j] - s) / temperature;
    }
  });
}

Var log_softmax(Var x, double temperature) {
  Tape& t = tape_of(x);
  const Tensor& v = t.value(x);
  auto probs = std::make_shared<Tensor>(softmax_values(v, temperature));
  const std::size_t n = v.last_dim();
  Tensor y(v.shape());
  for (std::size_t r = 0; r < v.size() / n; ++r) {
    const double* xr = v.data().data() + r * n;
    double mx = xr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp((xr[j] - mx) / temperature);
    const double lse = std::log(s);
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = (xr[j] - mx) / temperature - lse;
  }
  return t.record(std::move(y), {x}, [x, probs, temperature, n](Tape& tp, const Tensor& g) {
    Tensor* gx = tp.grad_slot(x);
    if (!gx) return;
    for (std::size_t r = 0; r < probs->size() / n; ++r) {
      const double* gr = g.data().data() + r * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += gr[j];
      for (std::size_t j = 0; j < n; ++j)
        (*gx)[r * n + j] += (gr[j] - (*probs)[r * n + j] * s) / temperature;
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x, gain);
  tape_of(x, bias);
  const Tensor& v = t.value(x);
  const Tensor& gv = t.value(gain);
  const Tensor& bv = t.value(bias);
  require_rank("layer_norm", gv, 1);
  require_same_shape("layer_norm", gv, bv);
  const std::size_t n = gv.dim(0);
  if (v.last_dim() != n || v.rank() == 0) {
    throw DimensionError("layer_norm: input " + shape_string(v.shape()) + " vs gain " + shape_string(gv.shape()));
  }
  const std::size_t rows = v.size() / n;
  auto xhat = std::make_shared<Tensor>(v.shape());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor y(v.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = v.data().data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mu) * is;
      (*xhat)[r * n + j] = h;
      y[r * n + j] = gv[j] * h + bv[j];
    }
  }
  return t.record(std::move(y), {x, gain, bias}, [x, gain, bias, xhat, inv_std, n, rows](Tape& tp, const Tensor& g) {
    const Tensor& gv = tp.value(gain);
    if (Tensor* gg = tp.grad_slot(gain))
      for (std::size_t i = 0; i < g.size(); ++i) (*gg)[i % n] += g[i] * (*xhat)[i];
    if (Tensor* gb = tp.grad_slot(bias))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % n] += g[i];
    if (Tensor* gx = tp.grad_slot(x)) {
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < rows; ++r) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = g[r * n + j] * gv[j];
          m1 += dh;
          m2 += dh * (*xhat)[r * n + j];
        }
        m1 *= inv_n;
        m2 *= inv_n;
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = g[r * n + j] * gv[j];
          (*gx)[r * n + j] += (*inv_std)[r] * (dh - m1 - (*xhat)[r * n + j] * m2);
        }
      }
    }
  });
}

Var embedding(Var table, std::span<const int> ids) {
  Tape& t = tape_of(table);
  const Tensor& w = t.value(table);
  require_rank("embedding", w, 2);
  const std::size_t vocab = w.dim(0), h = w.dim(1);
  auto rows = std::make_shared<std::vector<std::size_t>>();
  rows->reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw InputError("token id " + std::to_string(id) + " out of range for vocabulary of " + std::to_string(vocab));
    }
    rows->push_back(static_cast<std::size_t>(id));
  }
  if (rows->empty()) throw InputError("embedding: empty token sequence");
  Tensor y(Shape{rows->size(), h});
  for (std::size_t r = 0; r < rows->size(); ++r)
    std::copy_n(w.data().data() + (*rows)[r] * h, h, y.data().data() + r * h);
  return t.record(std::move(y), {table}, [table, rows, h](Tape& tp, const Tensor& g) {
    if (Tensor* gw = tp.grad_slot(table))
      for (std::size_t r = 0; r < rows->size(); ++r)
        for (std::size_t j = 0; j < h; ++j) gw->data()[(*rows)[r] * h + j] += g[r * h + j];
  });
}

Var row(Var x, std::size_t index) {
  Tape& t = tape_of(x);
  const Tensor& v = t.value(x);
  require_rank("row", v, 2);
  if (index >= v.dim(0)) throw DimensionError("row: index " + std::to_string(index) + " outside " + shape_string(v.shape()));
  const std::size_t n = v.dim(1);
  Tensor y(Shape{n});
  std::copy_n(v.data().data() + index * n, n, y.data().data());
  return t.record(std::move(y), {x}, [x, index, n](Tape& tp, const Tensor& g) {
    if (Tensor* gx = tp.grad_slot(x))
      for (std::size_t j = 0; j < n; ++j) (*gx)[index * n + j] += g[j];
  });
}

Var columns(Var x, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(x);
  const Tensor& v = t.value(x);
  require_rank("columns", v, 2);
  const std::size_t m = v.dim(0), n = v.dim(1);
  if (count == 0 || begin + count > n) {
    throw DimensionError("columns: range [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                         ") outside " + shape_string(v.shape()));
  }
  Tensor y(Shape{m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) y.at(i, j) = v.at(i, begin + j);
  return t.record(std::move(y), {x}, [x, begin, count, m](Tape& tp, const Tensor& g) {
    if (Tensor* gx = tp.grad_slot(x))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) gx->at(i, begin + j) += g.at(i, j);
  });
}

Var concat_columns(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_columns: no inputs");
  Tape& t = tape_of(parts[0]);
  const std::size_t m = t.value(parts[0]).dim(0);
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor& v = tape_of(parts[0], p).value(p);
    require_rank("concat_columns", v, 2);
    if (v.dim(0) != m) throw DimensionError("concat_columns: row count mismatch " + shape_string(v.shape()));
    total += v.dim(1);
  }
  Tensor y(Shape{m, total});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < v.dim(1); ++j) y.at(i, off + j) = v.at(i, j);
    off += v.dim(1);
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record(std::move(y), parts, [ps, m](Tape& tp, const Tensor& g) {
    const std::size_t total = g.dim(1);
    std::size_t off = 0;
    for (Var p : ps) {
      const std::size_t c = tp.value(p).dim(1);
      if (Tensor* gp = tp.grad_slot(p))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) gp->at(i, j) += g[i * total + off + j];
      off += c;
    }
  });
}

}  // namespace lrc
