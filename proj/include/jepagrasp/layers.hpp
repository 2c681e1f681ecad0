#pragma once

// Small building blocks shared by the encoder, pooling and grasp head.

#include <cmath>
#include <string>

#include "jepagrasp/random.hpp"
#include "jepagrasp/tensor.hpp"

namespace jepagrasp {

template <typename T>
tc::Tensor<T> xavier_uniform(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(in + out));
  tc::Tensor<T> w({in, out});
  for (auto& v : w.values()) v = T(rng.uniform(-limit, limit));
  return w;
}

template <typename T>
tc::Tensor<T> normal_tensor(tc::Shape shape, double stddev, Rng& rng) {
  tc::Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = T(stddev * rng.normal());
  return t;
}

// y = x W + b with W [in, out].
template <typename T>
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;

  void init(tc::ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
            int group = 0) {
    weight = params.add(name + ".weight", xavier_uniform<T>(in, out, rng), group);
    bias = params.add(name + ".bias", tc::Tensor<T>({out}), group);
  }

  tc::Var<T> operator()(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> x) const {
    return tc::add(tc::matmul(x, g.parameter(params, weight)), g.parameter(params, bias));
  }
};

template <typename T>
struct LayerNorm {
  std::size_t gamma = 0;
  std::size_t beta = 0;

  void init(tc::ParameterSet<T>& params, const std::string& name, std::size_t dim, int group = 0) {
    gamma = params.add(name + ".gamma", tc::Tensor<T>({dim}, T{1}), group);
    beta = params.add(name + ".beta", tc::Tensor<T>({dim}), group);
  }

  tc::Var<T> operator()(tc::Graph<T>& g, const tc::ParameterSet<T>& params, tc::Var<T> x) const {
    return tc::layernorm(x, g.parameter(params, gamma), g.parameter(params, beta));
  }
};

}  // namespace jepagrasp
