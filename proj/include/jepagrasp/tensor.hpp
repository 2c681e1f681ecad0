#pragma once

// Minimal dense tensors with tape-based reverse-mode differentiation.
//
// A Graph<T> records every op as it is evaluated. Values are computed eagerly;
// Graph::backward walks the tape in reverse and each op accumulates its exact
// analytic gradient into its inputs. Learnable state lives outside the graph in
// a ParameterSet<T>; a graph binds parameters as leaves and, after backward,
// deposits their gradients into a Gradients<T> buffer aligned with the set.
//
// All tensors are interpreted as row-major 2-D: rows() is the leading
// dimension and cols() the product of the rest. The only broadcast is bias-add
// (a [m,n] + b [n]).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "jepagrasp/error.hpp"

namespace jepagrasp::tc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value) { return Tensor({1}, std::vector<T>{value}); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  std::size_t cols() const { return rows() == 0 ? 0 : data_.size() / rows(); }

  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  T at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool flag) { requires_grad_ = flag; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    out.set_requires_grad(requires_grad_);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
  bool requires_grad_ = false;
};

// Parameter groups select the learning rate applied by Adam.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  int group = 0;
  bool trainable = true;
};

template <typename T>
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor<T> value, int group = 0);
  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  Parameter<T>& get(std::string_view name) { return params_[index_of(name)]; }
  const Parameter<T>& get(std::string_view name) const { return params_[index_of(name)]; }

  std::size_t size() const { return params_.size(); }
  bool empty() const { return params_.empty(); }
  std::size_t total_elements() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Copy values of every parameter whose name starts with `prefix` from
  // `source`; shapes must match. Returns the number of tensors copied.
  std::size_t copy_from(const ParameterSet& source, std::string_view prefix = {});
  void set_group(std::string_view prefix, int group);
  void set_trainable(std::string_view prefix, bool trainable);

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& p : params_) {
      const std::size_t i = out.add(p.name, p.value.template cast<U>(), p.group);
      out[i].trainable = p.trainable;
    }
    return out;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// One gradient buffer per parameter of a ParameterSet, same order and sizes.
template <typename T>
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet<T>& params);

  std::vector<T>& operator[](std::size_t i) { return slots_[i]; }
  const std::vector<T>& operator[](std::size_t i) const { return slots_[i]; }
  std::size_t size() const { return slots_.size(); }

  void zero();
  void add(const Gradients& other);
  void scale(T factor);
  T max_abs() const;

 private:
  std::vector<std::vector<T>> slots_;
};

template <typename T>
class Graph;

template <typename T>
class Var {
 public:
  Var() = default;

  Graph<T>* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;
  const std::vector<T>& value() const;
  T item() const;
  bool requires_grad() const;

 private:
  friend class Graph<T>;
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  // With grad disabled no backward closures are recorded (inference).
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> leaf(Tensor<T> value, bool requires_grad = true);

  // Binds a parameter as a leaf. Repeated bindings of the same parameter in
  // one graph return the same node. Non-trainable bindings are constants.
  Var<T> parameter(const ParameterSet<T>& set, std::size_t index, bool trainable = true);
  Var<T> parameter(const ParameterSet<T>& set, std::string_view name, bool trainable = true);

  // Seeds d(loss)/d(loss) = 1 and runs the tape in reverse. `loss` must hold
  // exactly one element.
  void backward(Var<T> loss);

  // Gradient of a node after backward; empty if the node needs no gradient.
  const std::vector<T>& grad(Var<T> v) const { return nodes_[v.id()].grad; }

  // Adds the gradients of every parameter of `set` bound in this graph.
  void accumulate_into(const ParameterSet<T>& set, Gradients<T>& grads) const;

  std::size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

  // Op plumbing. `emit` checks the value for NaN/Inf and records the node.
  Var<T> emit(const char* op, Shape shape, std::vector<T> value,
              const std::vector<Var<T>>& inputs, BackwardFn backward);
  const Shape& shape_of(std::size_t id) const { return nodes_[id].shape; }
  const std::vector<T>& value_of(std::size_t id) const { return nodes_[id].value; }
  const std::vector<T>& grad_of(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::vector<T>& grad_buffer(std::size_t id) { return nodes_[id].grad; }

 private:
  struct Node {
    const char* op;
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool needs_grad = false;
    BackwardFn backward;
  };
  struct Binding {
    const ParameterSet<T>* set;
    std::size_t index;
    std::size_t node;
  };

  Var<T> push(const char* op, Shape shape, std::vector<T> value, bool needs_grad);

  std::vector<Node> nodes_;
  std::vector<Binding> bindings_;
  bool grad_enabled_;
};

template <typename T>
const Shape& Var<T>::shape() const { return graph_->shape_of(id_); }
template <typename T>
std::size_t Var<T>::size() const { return graph_->value_of(id_).size(); }
template <typename T>
std::size_t Var<T>::rows() const {
  const auto& s = shape();
  return s.empty() ? 1 : s[0];
}
template <typename T>
std::size_t Var<T>::cols() const {
  const std::size_t r = rows();
  return r == 0 ? 0 : size() / r;
}
template <typename T>
const std::vector<T>& Var<T>::value() const { return graph_->value_of(id_); }
template <typename T>
bool Var<T>::requires_grad() const { return graph_->needs_grad(id_); }
template <typename T>
T Var<T>::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ConfigError("item() on tensor of shape " + shape_str(shape()));
  return v[0];
}

// ---- ops ------------------------------------------------------------------

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
// a + b for equal shapes, or bias-add when b has cols(a) elements.
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T factor);
// y[i,j] = x[i,j] * mult[j] + shift[j] with constant per-column coefficients.
template <typename T> Var<T> affine_cols(Var<T> x, std::vector<T> mult, std::vector<T> shift);
template <typename T> Var<T> relu(Var<T> x);
template <typename T> Var<T> gelu(Var<T> x);
template <typename T> Var<T> tanh(Var<T> x);
// Row-wise normalization over the last axis with learned gain/bias [cols].
template <typename T> Var<T> layernorm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5));
template <typename T> Var<T> softmax(Var<T> x);
// axis 0 -> [1, cols], axis 1 -> [rows, 1].
template <typename T> Var<T> mean_over_axis(Var<T> x, int axis);
template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> sum_squares(Var<T> x);
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, int axis);
template <typename T> Var<T> gather_rows(Var<T> x, std::vector<std::size_t> indices);
template <typename T> Var<T> slice_cols(Var<T> x, std::size_t start, std::size_t count);
template <typename T> Var<T> reshape(Var<T> x, Shape shape);
// Multi-head softmax(q k^T / sqrt(d_head)) v. q [m, h*d], k [n, h*d],
// v [n, h*dv] -> [m, h*dv].
template <typename T> Var<T> scaled_dot_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads = 1);
// Max over consecutive row groups: x [g*s, d] -> [g, d]. First max wins ties.
template <typename T> Var<T> segment_max(Var<T> x, std::size_t group_size);
template <typename T> Var<T> mse(Var<T> a, Var<T> b);
template <typename T> Var<T> smooth_l1(Var<T> a, Var<T> b, T beta = T(1));
// Softmax cross-entropy of a single logit row against a hard label.
template <typename T> Var<T> cross_entropy_from_logits(Var<T> logits, std::size_t label);

// ---- gradient check -----------------------------------------------------

struct GradCheckOffender {
  std::string parameter;
  std::size_t element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  double max_error = 0.0;
  std::vector<GradCheckOffender> offenders;
  bool passed() const { return offenders.empty(); }
};

// Rebuilds the graph with `build` for every central difference, comparing
// |analytic - numeric| / max(1, |numeric|) against `eps` for each element of
// every trainable parameter in `params`.
using LossBuilder = std::function<Var<double>(Graph<double>&)>;
GradCheckReport grad_check(ParameterSet<double>& params, const LossBuilder& build,
                           double eps = 1e-4, double h = 1e-5);

// ---- optimizer ----------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with one learning rate per parameter group.
template <typename T>
class Adam {
 public:
  Adam(const ParameterSet<T>& params, std::vector<double> group_lrs, AdamConfig cfg = {});

  void set_group_lr(int group, double lr);
  double group_lr(int group) const;
  void step(ParameterSet<T>& params, const Gradients<T>& grads);
  std::size_t steps() const { return t_; }

 private:
  std::vector<double> lrs_;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::size_t t_ = 0;
};

// ---- checkpoints --------------------------------------------------------

// Layout: "JGCKPT\0\0", u32 version, u32 count, then per tensor:
// u32 name length, name bytes, u32 rank, u32 dims..., float32 values.
// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<char> checkpoint_bytes(const ParameterSet<float>& params);
ParameterSet<float> checkpoint_from_bytes(std::span<const char> bytes, const std::string& origin = "<memory>");
void save_checkpoint(const std::string& path, const ParameterSet<float>& params);
ParameterSet<float> load_checkpoint(const std::string& path);

}  // namespace jepagrasp::tc
