#include "jepagrasp/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace jepagrasp::tc {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor ---------------------------------------------------------------

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw ConfigError("tensor shape " + shape_str(shape_) + " does not match " +
                      std::to_string(data_.size()) + " values");
  }
}

// ---- ParameterSet ---------------------------------------------------------

template <typename T>
std::size_t ParameterSet<T>::add(std::string name, Tensor<T> value, int group) {
  if (index_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
  const std::size_t i = params_.size();
  index_.emplace(name, i);
  params_.push_back(Parameter<T>{std::move(name), std::move(value), group, true});
  return i;
}

template <typename T>
bool ParameterSet<T>::contains(std::string_view name) const {
  return index_.find(name) != index_.end();
}

template <typename T>
std::size_t ParameterSet<T>::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

template <typename T>
std::size_t ParameterSet<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
std::size_t ParameterSet<T>::copy_from(const ParameterSet& source, std::string_view prefix) {
  std::size_t copied = 0;
  for (auto& p : params_) {
    if (!p.name.starts_with(prefix)) continue;
    if (!source.contains(p.name)) continue;
    const auto& src = source.get(p.name).value;
    if (src.shape() != p.value.shape()) {
      throw ConfigError("parameter '" + p.name + "' has shape " + shape_str(p.value.shape()) +
                        " but source has " + shape_str(src.shape()));
    }
    p.value.values() = src.values();
    ++copied;
  }
  return copied;
}

template <typename T>
void ParameterSet<T>::set_group(std::string_view prefix, int group) {
  for (auto& p : params_) {
    if (p.name.starts_with(prefix)) p.group = group;
  }
}

template <typename T>
void ParameterSet<T>::set_trainable(std::string_view prefix, bool trainable) {
  for (auto& p : params_) {
    if (p.name.starts_with(prefix)) p.trainable = trainable;
  }
}

// ---- Gradients ------------------------------------------------------------

template <typename T>
Gradients<T>::Gradients(const ParameterSet<T>& params) {
  slots_.reserve(params.size());
  for (const auto& p : params) slots_.emplace_back(p.value.size(), T{0});
}

template <typename T>
void Gradients<T>::zero() {
  for (auto& s : slots_) std::fill(s.begin(), s.end(), T{0});
}

template <typename T>
void Gradients<T>::add(const Gradients& other) {
  if (other.slots_.size() != slots_.size()) throw ConfigError("gradient buffers not aligned");
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    auto& dst = slots_[i];
    const auto& src = other.slots_[i];
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

template <typename T>
void Gradients<T>::scale(T factor) {
  for (auto& s : slots_) {
    for (auto& x : s) x *= factor;
  }
}

template <typename T>
T Gradients<T>::max_abs() const {
  T m{0};
  for (const auto& s : slots_) {
    for (T x : s) m = std::max(m, std::abs(x));
  }
  return m;
}

// ---- Graph ----------------------------------------------------------------

template <typename T>
Var<T> Graph<T>::push(const char* op, Shape shape, std::vector<T> value, bool needs_grad) {
  nodes_.push_back(Node{op, std::move(shape), std::move(value), {}, needs_grad && grad_enabled_, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  const Shape shape = value.shape();
  return push("constant", shape, std::move(value.values()), false);
}

template <typename T>
Var<T> Graph<T>::leaf(Tensor<T> value, bool requires_grad) {
  const Shape shape = value.shape();
  return push("leaf", shape, std::move(value.values()), requires_grad);
}

template <typename T>
Var<T> Graph<T>::parameter(const ParameterSet<T>& set, std::size_t index, bool trainable) {
  for (const auto& b : bindings_) {
    if (b.set == &set && b.index == index) return Var<T>(this, b.node);
  }
  const auto& p = set[index];
  Var<T> v = push("parameter", p.value.shape(), p.value.values(), trainable && p.trainable);
  bindings_.push_back(Binding{&set, index, v.id()});
  return v;
}

template <typename T>
Var<T> Graph<T>::parameter(const ParameterSet<T>& set, std::string_view name, bool trainable) {
  return parameter(set, set.index_of(name), trainable);
}

template <typename T>
Var<T> Graph<T>::emit(const char* op, Shape shape, std::vector<T> value,
                      const std::vector<Var<T>>& inputs, BackwardFn backward) {
  for (T x : value) {
    if (!std::isfinite(x)) throw NumericError(op, "non-finite value in forward pass");
  }
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.graph() != this) throw ConfigError(std::string(op) + ": operand from another graph");
    needs = needs || nodes_[in.id()].needs_grad;
  }
  Var<T> out = push(op, std::move(shape), std::move(value), needs);
  if (nodes_.back().needs_grad) nodes_.back().backward = std::move(backward);
  return out;
}

template <typename T>
void Graph<T>::backward(Var<T> loss) {
  if (loss.graph() != this) throw ConfigError("backward: loss from another graph");
  if (loss.size() != 1) throw ConfigError("backward: loss must be a single element, got " + shape_str(loss.shape()));
  for (auto& n : nodes_) {
    if (n.needs_grad) n.grad.assign(n.value.size(), T{0});
  }
  if (!nodes_[loss.id()].needs_grad) return;
  nodes_[loss.id()].grad[0] = T{1};
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.needs_grad && n.backward) n.backward(*this, i);
  }
}

template <typename T>
void Graph<T>::accumulate_into(const ParameterSet<T>& set, Gradients<T>& grads) const {
  for (const auto& b : bindings_) {
    if (b.set != &set) continue;
    const auto& g = nodes_[b.node].grad;
    if (g.empty()) continue;
    auto& dst = grads[b.index];
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g[j];
  }
}

// ---- helpers --------------------------------------------------------------

namespace {

// C (m x n) = alpha * op(A) op(B) + beta * C, row-major with leading dims.
void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda, const float* b,
          int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k,
              alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b,
          int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k,
              alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ConfigError(std::string(op) + ": " + what);
}

template <typename T>
std::string shapes(Var<T> a, Var<T> b) {
  return shape_str(a.shape()) + " vs " + shape_str(b.shape());
}

template <typename T>
Shape matrix_shape(Var<T> x) {
  return {x.rows(), x.cols()};
}

}  // namespace

// ---- ops ------------------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  require<T>(b.rows() == k, "matmul", "inner dimensions differ " + shapes(a, b));
  std::vector<T> out(m * n, T{0});
  if (m && n && k) {
    gemm(false, false, int(m), int(n), int(k), T{1}, a.value().data(), int(k), b.value().data(), int(n), T{0},
         out.data(), int(n));
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->emit("matmul", {m, n}, std::move(out), {a, b}, [=](Graph<T>& g, std::size_t self) {
    const T* dc = g.grad_of(self).data();
    if (!m || !n || !k) return;
    if (g.needs_grad(ia)) {
      gemm(false, true, int(m), int(k), int(n), T{1}, dc, int(n), g.value_of(ib).data(), int(n), T{1},
           g.grad_buffer(ia).data(), int(k));
    }
    if (g.needs_grad(ib)) {
      gemm(true, false, int(k), int(n), int(m), T{1}, g.value_of(ia).data(), int(k), dc, int(n), T{1},
           g.grad_buffer(ib).data(), int(n));
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  const bool same = a.shape() == b.shape();
  const bool bias = !same && b.size() == a.cols() && a.size() > 0;
  require<T>(same || bias, "add", "incompatible shapes " + shapes(a, b));
  std::vector<T> out = a.value();
  const auto& bv = b.value();
  const std::size_t cols = a.cols();
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % cols];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->emit("add", a.shape(), std::move(out), {a, b}, [=](Graph<T>& g, std::size_t self) {
    const auto& dc = g.grad_of(self);
    if (g.needs_grad(ia)) {
      auto& da = g.grad_buffer(ia);
      for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i];
    }
    if (g.needs_grad(ib)) {
      auto& db = g.grad_buffer(ib);
      if (same) {
        for (std::size_t i = 0; i < dc.size(); ++i) db[i] += dc[i];
      } else {
        for (std::size_t i = 0; i < dc.size(); ++i) db[i % cols] += dc[i];
      }
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require<T>(a.shape() == b.shape(), "sub", "shape mismatch " + shapes(a, b));
  std::vector<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->emit("sub", a.shape(), std::move(out), {a, b}, [=](Graph<T>& g, std::size_t self) {
    const auto& dc = g.grad_of(self);
    if (g.needs_grad(ia)) {
      auto& da = g.grad_buffer(ia);
      for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i];
    }
    if (g.needs_grad(ib)) {
      auto& db = g.grad_buffer(ib);
      for (std::size_t i = 0; i < dc.size(); ++i) db[i] -= dc[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require<T>(a.shape() == b.shape(), "mul", "shape mismatch " + shapes(a, b));
  std::vector<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->emit("mul", a.shape(), std::move(out), {a, b}, [=](Graph<T>& g, std::size_t self) {
    const auto& dc = g.grad_of(self);
    const auto& av = g.value_of(ia);
    const auto& bv2 = g.value_of(ib);
    if (g.needs_grad(ia)) {
      auto& da = g.grad_buffer(ia);
      for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i] * bv2[i];
    }
    if (g.needs_grad(ib)) {
      auto& db = g.grad_buffer(ib);
      for (std::size_t i = 0; i < dc.size(); ++i) db[i] += dc[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  std::vector<T> out = a.value();
  for (auto& x : out) x *= factor;
  const std::size_t ia = a.id();
  return a.graph()->emit("scale", a.shape(), std::move(out), {a}, [=](Graph<T>& g, std::size_t self) {
    const auto& dc = g.grad_of(self);
    auto& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i] * factor;
  });
}

template <typename T>
Var<T> affine_cols(Var<T> x, std::vector<T> mult, std::vector<T> shift) {
  const std::size_t cols = x.cols();
  require<T>(mult.size() == cols && shift.size() == cols, "affine_cols",
             "coefficients must have " + std::to_string(cols) + " entries");
  std::vector<T> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * mult[i % cols] + shift[i % cols];
  const std::size_t ix = x.id();
  return x.graph()->emit("affine_cols", x.shape(), std::move(out), {x},
                         [=, mult = std::move(mult)](Graph<T>& g, std::size_t self) {
                           const auto& dc = g.grad_of(self);
                           auto& dx = g.grad_buffer(ix);
                           for (std::size_t i = 0; i < dc.size(); ++i) dx[i] += dc[i] * mult[i % cols];
                         });
}

template <typename T>
Var<T> relu(Var<T> x) {
  std::vector<T> out = x.value();
  for (auto& v : out) v = v > T{0} ? v : T{0};
  const std::size_t ix = x.id();
  return x.graph()->emit("relu", x.shape(), std::move(out), {x}, [=](Graph<T>& g, std::size_t self) {
    const auto& dc = g.grad_of(self);
    const auto& xv = g.value_of(ix);
    auto& dx = g.grad_buffer(ix);
    for (std::size_t i = 0; i < dc.size(); ++i) {
      if (xv[i] > T{0}) dx[i] += dc[i];
    }
  });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  std::vector<T> out = x.value();
  for (auto& v : out) v = T(0.5) * v * (T{1} + std::erf(v * inv_sqrt2));
  const std::size_t ix = x.id();
  return x.graph()->emit("gelu", x.shape(), std::move(out), {x}, [=](Graph<T>& g, std::size_t self) {
    constexpr T inv_sqrt_2pi = T(0.39894228040143267794);
    const auto& dc = g.grad_of(self);
    const auto& xv = g.value_of(ix);
    auto& dx = g.grad_buffer(ix);
    for (std::size_t i = 0; i < dc.size(); ++i) {
      const T v = xv[i];
      const T cdf = T(0.5) * (T{1} + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      dx[i] += dc[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  std::vector<T> out = x.value();
  for (auto& v : out) v = std::tanh(v);
  const std::size_t ix = x.id();
  return x.graph()->emit("tanh", x.shape(), out, {x}, [=](Graph<T>& g, std::size_t self) {
    const auto& dc = g.grad_of(self);
    const auto& y = g.value_of(self);
    auto& dx = g.grad_buffer(ix);
    for (std::size_t i = 0; i < dc.size(); ++i) dx[i] += dc[i] * (T{1} - y[i] * y[i]);
  });
}

template <typename T>
Var<T> layernorm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  const std::size_t m = x.rows(), n = x.cols();
  require<T>(gamma.size() == n && beta.size() == n, "layernorm", "gain/bias must have cols(x) entries");
  const auto& xv = x.value();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  std::vector<T> xhat(m * n);
  std::vector<T> inv_std(m);
  std::vector<T> out(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    const T* row = xv.data() + r * n;
    T mean{0};
    for (std::size_t c = 0; c < n; ++c) mean += row[c];
    mean /= T(n);
    T var{0};
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= T(n);
    const T is = T{1} / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < n; ++c) {
      const T h = (row[c] - mean) * is;
      xhat[r * n + c] = h;
      out[r * n + c] = h * gv[c] + bv[c];
    }
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.graph()->emit(
      "layernorm", x.shape(), std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<T>& g, std::size_t self) {
        const auto& dy = g.grad_of(self);
        if (g.needs_grad(ig)) {
          auto& dg = g.grad_buffer(ig);
          for (std::size_t i = 0; i < dy.size(); ++i) dg[i % n] += dy[i] * xhat[i];
        }
        if (g.needs_grad(ib)) {
          auto& db = g.grad_buffer(ib);
          for (std::size_t i = 0; i < dy.size(); ++i) db[i % n] += dy[i];
        }
        if (g.needs_grad(ix)) {
          const auto& gv2 = g.value_of(ig);
          auto& dx = g.grad_buffer(ix);
          for (std::size_t r = 0; r < m; ++r) {
            T mean_d{0}, mean_dh{0};
            for (std::size_t c = 0; c < n; ++c) {
              const T d = dy[r * n + c] * gv2[c];
              mean_d += d;
              mean_dh += d * xhat[r * n + c];
            }
            mean_d /= T(n);
            mean_dh /= T(n);
            for (std::size_t c = 0; c < n; ++c) {
              const T d = dy[r * n + c] * gv2[c];
              dx[r * n + c] += inv_std[r] * (d - mean_d - xhat[r * n + c] * mean_dh);
            }
          }
        }
      });
}

namespace {

template <typename T>
void softmax_row(const T* in, T* out, std::size_t n) {
  T mx = in[0];
  for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, in[c]);
  T s{0};
  for (std::size_t c = 0; c < n; ++c) {
    out[c] = std::exp(in[c] - mx);
    s += out[c];
  }
  for (std::size_t c = 0; c < n; ++c) out[c] /= s;
}

}  // namespace

template <typename T>
Var<T> softmax(Var<T> x) {
  const std::size_t m = x.rows(), n = x.cols();
  require<T>(n >= 1, "softmax", "needs at least one class");
  std::vector<T> out(m * n);
  for (std::size_t r = 0; r < m; ++r) softmax_row(x.value().data() + r * n, out.data() + r * n, n);
  const std::size_t ix = x.id();
  return x.graph()->emit("softmax", x.shape(), std::move(out), {x}, [=](Graph<T>& g, std::size_t self) {
    const auto& dy = g.grad_of(self);
    const auto& y = g.value_of(self);
    auto& dx = g.grad_buffer(ix);
    for (std::size_t r = 0; r < m; ++r) {
      T dot{0};
      for (std::size_t c = 0; c < n; ++c) dot += dy[r * n + c] * y[r * n + c];
      for (std::size_t c = 0; c < n; ++c) dx[r * n + c] += y[r * n + c] * (dy[r * n + c] - dot);
    }
  });
}

template <typename T>
Var<T> mean_over_axis(Var<T> x, int axis) {
  const std::size_t m = x.rows(), n = x.cols();
  require<T>(axis == 0 || axis == 1, "mean_over_axis", "axis must be 0 or 1");
  require<T>(m > 0 && n > 0, "mean_over_axis", "empty input");
  const auto& xv = x.value();
  const std::size_t ix = x.id();
  if (axis == 0) {
    std::vector<T> out(n, T{0});
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) out[c] += xv[r * n + c];
    for (auto& v : out) v /= T(m);
    return x.graph()->emit("mean_over_axis", {1, n}, std::move(out), {x}, [=](Graph<T>& g, std::size_t self) {
      const auto& dy = g.grad_of(self);
      auto& dx = g.grad_buffer(ix);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) dx[r * n + c] += dy[c] / T(m);
    });
  }
  std::vector<T> out(m, T{0});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r] += xv[r * n + c];
    out[r] /= T(n);
  }
  return x.graph()->emit("mean_over_axis", {m, 1}, std::move(out), {x}, [=](Graph<T>& g, std::size_t self) {
    const auto& dy = g.grad_of(self);
    auto& dx = g.grad_buffer(ix);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) dx[r * n + c] += dy[r] / T(n);
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T s{0};
  for (T v : x.value()) s += v;
  const std::size_t ix = x.id();
  return x.graph()->emit("sum", {1}, {s}, {x}, [=](Graph<T>& g, std::size_t self) {
    const T d = g.grad_of(self)[0];
    for (auto& v : g.grad_buffer(ix)) v += d;
  });
}

template <typename T>
Var<T> sum_squares(Var<T> x) {
  T s{0};
  for (T v : x.value()) s += v * v;
  const std::size_t ix = x.id();
  return x.graph()->emit("sum_squares", {1}, {s}, {x}, [=](Graph<T>& g, std::size_t self) {
    const T d = g.grad_of(self)[0];
    const auto& xv = g.value_of(ix);
    auto& dx = g.grad_buffer(ix);
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += T{2} * xv[i] * d;
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
  require<T>(!parts.empty(), "concat", "no operands");
  require<T>(axis == 0 || axis == 1, "concat", "axis must be 0 or 1");
  Graph<T>* graph = parts.front().graph();
  std::vector<std::size_t> ids, offsets;
  std::vector<T> out;
  if (axis == 0) {
    const std::size_t n = parts.front().cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
      require<T>(p.cols() == n, "concat", "column counts differ " + shapes(parts.front(), p));
      ids.push_back(p.id());
      offsets.push_back(out.size());
      out.insert(out.end(), p.value().begin(), p.value().end());
      rows += p.rows();
    }
    return graph->emit("concat", {rows, n}, std::move(out), parts, [=](Graph<T>& g, std::size_t self) {
      const auto& dy = g.grad_of(self);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!g.needs_grad(ids[i])) continue;
        auto& dx = g.grad_buffer(ids[i]);
        for (std::size_t j = 0; j < dx.size(); ++j) dx[j] += dy[offsets[i] + j];
      }
    });
  }
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require<T>(p.rows() == m, "concat", "row counts differ " + shapes(parts.front(), p));
    ids.push_back(p.id());
    offsets.push_back(total);
    total += p.cols();
  }
  out.resize(m * total);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::size_t w = parts[i].cols();
    const auto& v = parts[i].value();
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(v.data() + r * w, w, out.data() + r * total + offsets[i]);
  }
  return graph->emit("concat", {m, total}, std::move(out), parts, [=](Graph<T>& g, std::size_t self) {
    const auto& dy = g.grad_of(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!g.needs_grad(ids[i])) continue;
      auto& dx = g.grad_buffer(ids[i]);
      const std::size_t w = dx.size() / std::max<std::size_t>(m, 1);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < w; ++c) dx[r * w + c] += dy[r * total + offsets[i] + c];
    }
  });
}

template <typename T>
Var<T> gather_rows(Var<T> x, std::vector<std::size_t> indices) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(indices.size() * n);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require<T>(indices[i] < m, "gather_rows", "row index " + std::to_string(indices[i]) + " out of range");
    std::copy_n(x.value().data() + indices[i] * n, n, out.data() + i * n);
  }
  const std::size_t ix = x.id(), k = indices.size();
  return x.graph()->emit("gather_rows", {k, n}, std::move(out), {x},
                         [=, indices = std::move(indices)](Graph<T>& g, std::size_t self) {
                           const auto& dy = g.grad_of(self);
                           auto& dx = g.grad_buffer(ix);
                           for (std::size_t i = 0; i < indices.size(); ++i)
                             for (std::size_t c = 0; c < n; ++c) dx[indices[i] * n + c] += dy[i * n + c];
                         });
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t start, std::size_t count) {
  const std::size_t m = x.rows(), n = x.cols();
  require<T>(start + count <= n, "slice_cols", "slice past column " + std::to_string(n));
  std::vector<T> out(m * count);
  for (std::size_t r = 0; r < m; ++r) std::copy_n(x.value().data() + r * n + start, count, out.data() + r * count);
  const std::size_t ix = x.id();
  return x.graph()->emit("slice_cols", {m, count}, std::move(out), {x}, [=](Graph<T>& g, std::size_t self) {
    const auto& dy = g.grad_of(self);
    auto& dx = g.grad_buffer(ix);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < count; ++c) dx[r * n + start + c] += dy[r * count + c];
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  require<T>(shape_numel(shape) == x.size(), "reshape", shape_str(x.shape()) + " -> " + shape_str(shape));
  const std::size_t ix = x.id();
  return x.graph()->emit("reshape", std::move(shape), x.value(), {x}, [=](Graph<T>& g, std::size_t self) {
    const auto& dy = g.grad_of(self);
    auto& dx = g.grad_buffer(ix);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  });
}

template <typename T>
Var<T> scaled_dot_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads) {
  const std::size_t m = q.rows(), n = k.rows();
  require<T>(heads >= 1, "scaled_dot_attention", "heads must be >= 1");
  require<T>(q.cols() == k.cols(), "scaled_dot_attention", "query/key widths differ " + shapes(q, k));
  require<T>(v.rows() == n, "scaled_dot_attention", "key/value lengths differ " + shapes(k, v));
  require<T>(n >= 1, "scaled_dot_attention", "needs at least one key");
  require<T>(q.cols() % heads == 0 && v.cols() % heads == 0, "scaled_dot_attention",
             "widths not divisible by head count");
  const std::size_t dq = q.cols(), dv = v.cols();
  const std::size_t hq = dq / heads, hv = dv / heads;
  const T inv_scale = T{1} / std::sqrt(T(hq));
  std::vector<T> probs(heads * m * n);
  std::vector<T> out(m * dv, T{0});
  for (std::size_t h = 0; h < heads; ++h) {
    T* p = probs.data() + h * m * n;
    if (m) {
      gemm(false, true, int(m), int(n), int(hq), inv_scale, q.value().data() + h * hq, int(dq),
           k.value().data() + h * hq, int(dq), T{0}, p, int(n));
    }
    for (std::size_t r = 0; r < m; ++r) softmax_row(p + r * n, p + r * n, n);
    if (m) {
      gemm(false, false, int(m), int(hv), int(n), T{1}, p, int(n), v.value().data() + h * hv, int(dv), T{0},
           out.data() + h * hv, int(dv));
    }
  }
  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  return q.graph()->emit(
      "scaled_dot_attention", {m, dv}, std::move(out), {q, k, v},
      [=, probs = std::move(probs)](Graph<T>& g, std::size_t self) {
        if (!m) return;
        const T* dout = g.grad_of(self).data();
        std::vector<T> dp(m * n);
        for (std::size_t h = 0; h < heads; ++h) {
          const T* p = probs.data() + h * m * n;
          // dP = dO_h V_h^T
          gemm(false, true, int(m), int(n), int(hv), T{1}, dout + h * hv, int(dv), g.value_of(iv).data() + h * hv,
               int(dv), T{0}, dp.data(), int(n));
          if (g.needs_grad(iv)) {
            gemm(true, false, int(n), int(hv), int(m), T{1}, p, int(n), dout + h * hv, int(dv), T{1},
                 g.grad_buffer(iv).data() + h * hv, int(dv));
          }
          // dS = P * (dP - rowsum(dP * P))
          for (std::size_t r = 0; r < m; ++r) {
            T dot{0};
            for (std::size_t c = 0; c < n; ++c) dot += dp[r * n + c] * p[r * n + c];
            for (std::size_t c = 0; c < n; ++c) dp[r * n + c] = p[r * n + c] * (dp[r * n + c] - dot);
          }
          if (g.needs_grad(iq)) {
            gemm(false, false, int(m), int(hq), int(n), inv_scale, dp.data(), int(n),
                 g.value_of(ik).data() + h * hq, int(dq), T{1}, g.grad_buffer(iq).data() + h * hq, int(dq));
          }
          if (g.needs_grad(ik)) {
            gemm(true, false, int(n), int(hq), int(m), inv_scale, dp.data(), int(n),
                 g.value_of(iq).data() + h * hq, int(dq), T{1}, g.grad_buffer(ik).data() + h * hq, int(dq));
          }
        }
      });
}

template <typename T>
Var<T> segment_max(Var<T> x, std::size_t group_size) {
  const std::size_t rows = x.rows(), n = x.cols();
  require<T>(group_size >= 1 && rows % group_size == 0, "segment_max",
             "rows " + std::to_string(rows) + " not divisible by group size " + std::to_string(group_size));
  const std::size_t groups = rows / group_size;
  const auto& xv = x.value();
  std::vector<T> out(groups * n);
  std::vector<std::size_t> arg(groups * n);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t best = gi * group_size;
      for (std::size_t r = best + 1; r < (gi + 1) * group_size; ++r) {
        if (xv[r * n + c] > xv[best * n + c]) best = r;
      }
      arg[gi * n + c] = best;
      out[gi * n + c] = xv[best * n + c];
    }
  }
  const std::size_t ix = x.id();
  return x.graph()->emit("segment_max", {groups, n}, std::move(out), {x},
                         [=, arg = std::move(arg)](Graph<T>& g, std::size_t self) {
                           const auto& dy = g.grad_of(self);
                           auto& dx = g.grad_buffer(ix);
                           for (std::size_t i = 0; i < dy.size(); ++i) dx[arg[i] * n + i % n] += dy[i];
                         });
}

template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
  require<T>(a.shape() == b.shape(), "mse", "shape mismatch " + shapes(a, b));
  require<T>(a.size() > 0, "mse", "empty input");
  const auto& av = a.value();
  const auto& bv = b.value();
  T s{0};
  for (std::size_t i = 0; i < av.size(); ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
  const T count = T(av.size());
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->emit("mse", {1}, {s / count}, {a, b}, [=](Graph<T>& g, std::size_t self) {
    const T d = g.grad_of(self)[0];
    const auto& x = g.value_of(ia);
    const auto& y = g.value_of(ib);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T r = T{2} * (x[i] - y[i]) / count * d;
      if (g.needs_grad(ia)) g.grad_buffer(ia)[i] += r;
      if (g.needs_grad(ib)) g.grad_buffer(ib)[i] -= r;
    }
  });
}

template <typename T>
Var<T> smooth_l1(Var<T> a, Var<T> b, T beta) {
  require<T>(a.shape() == b.shape(), "smooth_l1", "shape mismatch " + shapes(a, b));
  require<T>(a.size() > 0, "smooth_l1", "empty input");
  require<T>(beta > T{0}, "smooth_l1", "beta must be positive");
  const auto& av = a.value();
  const auto& bv = b.value();
  T s{0};
  for (std::size_t i = 0; i < av.size(); ++i) {
    const T d = std::abs(av[i] - bv[i]);
    s += d < beta ? T(0.5) * d * d / beta : d - T(0.5) * beta;
  }
  const T count = T(av.size());
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph()->emit("smooth_l1", {1}, {s / count}, {a, b}, [=](Graph<T>& g, std::size_t self) {
    const T d = g.grad_of(self)[0];
    const auto& x = g.value_of(ia);
    const auto& y = g.value_of(ib);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T diff = x[i] - y[i];
      const T slope = std::abs(diff) < beta ? diff / beta : (diff > T{0} ? T{1} : T{-1});
      const T r = slope / count * d;
      if (g.needs_grad(ia)) g.grad_buffer(ia)[i] += r;
      if (g.needs_grad(ib)) g.grad_buffer(ib)[i] -= r;
    }
  });
}

template <typename T>
Var<T> cross_entropy_from_logits(Var<T> logits, std::size_t label) {
  const std::size_t k = logits.size();
  require<T>(k >= 1, "cross_entropy_from_logits", "needs at least one class");
  require<T>(label < k, "cross_entropy_from_logits", "label out of range");
  const auto& z = logits.value();
  const T mx = *std::max_element(z.begin(), z.end());
  T s{0};
  for (T v : z) s += std::exp(v - mx);
  const T loss = (mx + std::log(s)) - z[label];
  const std::size_t il = logits.id();
  return logits.graph()->emit("cross_entropy_from_logits", {1}, {loss}, {logits},
                              [=](Graph<T>& g, std::size_t self) {
                                const T d = g.grad_of(self)[0];
                                const auto& zz = g.value_of(il);
                                std::vector<T> p(k);
                                softmax_row(zz.data(), p.data(), k);
                                auto& dz = g.grad_buffer(il);
                                for (std::size_t i = 0; i < k; ++i) dz[i] += d * (p[i] - (i == label ? T{1} : T{0}));
                              });
}

// ---- gradient check -------------------------------------------------------

GradCheckReport grad_check(ParameterSet<double>& params, const LossBuilder& build, double eps, double h) {
  GradCheckReport report;
  Gradients<double> analytic(params);
  {
    Graph<double> g;
    Var<double> loss = build(g);
    g.backward(loss);
    g.accumulate_into(params, analytic);
  }
  auto evaluate = [&] {
    Graph<double> g(false);
    return build(g).item();
  };
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].trainable) continue;
    auto& values = params[p].value.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = evaluate();
      values[i] = saved - h;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[p][i] - numeric) / std::max(1.0, std::abs(numeric));
      report.max_error = std::max(report.max_error, err);
      ++report.checked;
      if (err > eps) {
        report.offenders.push_back({params[p].name, i, analytic[p][i], numeric, err});
      }
    }
  }
  return report;
}

// ---- Adam -----------------------------------------------------------------

template <typename T>
Adam<T>::Adam(const ParameterSet<T>& params, std::vector<double> group_lrs, AdamConfig cfg)
    : lrs_(std::move(group_lrs)), cfg_(cfg) {
  for (const auto& p : params) {
    if (p.group < 0 || std::size_t(p.group) >= lrs_.size()) {
      throw ConfigError("parameter '" + p.name + "' is in group " + std::to_string(p.group) +
                        " but only " + std::to_string(lrs_.size()) + " learning rates given");
    }
    m_.emplace_back(p.value.size(), T{0});
    v_.emplace_back(p.value.size(), T{0});
  }
  for (std::size_t g = 0; g < lrs_.size(); ++g) set_group_lr(int(g), lrs_[g]);
}

template <typename T>
void Adam<T>::set_group_lr(int group, double lr) {
  if (group < 0 || std::size_t(group) >= lrs_.size()) throw ConfigError("unknown parameter group");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
  lrs_[group] = lr;
}

template <typename T>
double Adam<T>::group_lr(int group) const {
  return lrs_.at(std::size_t(group));
}

template <typename T>
void Adam<T>::step(ParameterSet<T>& params, const Gradients<T>& grads) {
  if (grads.size() != params.size() || m_.size() != params.size()) {
    throw ConfigError("optimizer state not aligned with parameters");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (T x : grads[p]) {
      if (!std::isfinite(x)) throw NumericError("adam", "non-finite gradient for '" + params[p].name + "'");
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  const T b1 = T(cfg_.beta1), b2 = T(cfg_.beta2);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& prm = params[p];
    const double lr = lrs_[std::size_t(prm.group)];
    if (!prm.trainable || lr == 0.0) continue;
    auto& w = prm.value.values();
    auto& m = m_[p];
    auto& v = v_[p];
    const auto& g = grads[p];
    const T step_size = T(lr / c1);
    const T inv_c2 = T(1.0 / c2);
    const T eps = T(cfg_.eps);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

// ---- explicit instantiations ---------------------------------------------

#define JEPAGRASP_INSTANTIATE(T)                                                        \
  template class Tensor<T>;                                                             \
  template class ParameterSet<T>;                                                       \
  template class Gradients<T>;                                                          \
  template class Graph<T>;                                                              \
  template class Adam<T>;                                                               \
  template Var<T> matmul(Var<T>, Var<T>);                                               \
  template Var<T> add(Var<T>, Var<T>);                                                  \
  template Var<T> sub(Var<T>, Var<T>);                                                  \
  template Var<T> mul(Var<T>, Var<T>);                                                  \
  template Var<T> scale(Var<T>, T);                                                     \
  template Var<T> affine_cols(Var<T>, std::vector<T>, std::vector<T>);                  \
  template Var<T> relu(Var<T>);                                                         \
  template Var<T> gelu(Var<T>);                                                         \
  template Var<T> tanh(Var<T>);                                                         \
  template Var<T> layernorm(Var<T>, Var<T>, Var<T>, T);                                 \
  template Var<T> softmax(Var<T>);                                                      \
  template Var<T> mean_over_axis(Var<T>, int);                                          \
  template Var<T> sum(Var<T>);                                                          \
  template Var<T> sum_squares(Var<T>);                                                  \
  template Var<T> concat(const std::vector<Var<T>>&, int);                              \
  template Var<T> gather_rows(Var<T>, std::vector<std::size_t>);                        \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                         \
  template Var<T> reshape(Var<T>, Shape);                                               \
  template Var<T> scaled_dot_attention(Var<T>, Var<T>, Var<T>, std::size_t);            \
  template Var<T> segment_max(Var<T>, std::size_t);                                     \
  template Var<T> mse(Var<T>, Var<T>);                                                  \
  template Var<T> smooth_l1(Var<T>, Var<T>, T);                                         \
  template Var<T> cross_entropy_from_logits(Var<T>, std::size_t);

JEPAGRASP_INSTANTIATE(float)
JEPAGRASP_INSTANTIATE(double)

#undef JEPAGRASP_INSTANTIATE

}  // namespace jepagrasp::tc
