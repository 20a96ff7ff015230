#pragma once

#include <cmath>
#include <vector>

#include "coride/nn/params.hpp"

namespace coride::nn {

/// Adam with optional global gradient-norm clipping (0 disables clipping).
template <typename Scalar>
class AdamT {
 public:
  struct Options {
    Scalar learning_rate = Scalar(1e-3);
    Scalar beta1 = Scalar(0.9);
    Scalar beta2 = Scalar(0.999);
    Scalar epsilon = Scalar(1e-8);
    Scalar max_grad_norm = Scalar(0);
  };

  AdamT() = default;
  AdamT(const ParamStoreT<Scalar>& store, Options options) : options_(options) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      m_.push_back(MatrixT<Scalar>::Zero(store.value(i).rows(), store.value(i).cols()));
      v_.push_back(MatrixT<Scalar>::Zero(store.value(i).rows(), store.value(i).cols()));
    }
  }

  const Options& options() const { return options_; }
  long steps() const { return t_; }

  /// Applies the accumulated gradients, then clears them.
  void step(ParamStoreT<Scalar>& store) {
    ++t_;
    Scalar clip = 1;
    if (options_.max_grad_norm > 0) {
      const Scalar norm = store.grad_norm();
      if (norm > options_.max_grad_norm) clip = options_.max_grad_norm / norm;
    }
    const Scalar c1 = Scalar(1) - std::pow(options_.beta1, static_cast<Scalar>(t_));
    const Scalar c2 = Scalar(1) - std::pow(options_.beta2, static_cast<Scalar>(t_));
    for (std::size_t i = 0; i < store.size(); ++i) {
      const MatrixT<Scalar> g = store.grad(i) * clip;
      m_[i] = options_.beta1 * m_[i] + (Scalar(1) - options_.beta1) * g;
      v_[i] = options_.beta2 * v_[i] + (Scalar(1) - options_.beta2) * g.cwiseProduct(g);
      store.value(i).array() -=
          options_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + options_.epsilon);
    }
    store.zero_grad();
  }

 private:
  Options options_;
  std::vector<MatrixT<Scalar>> m_;
  std::vector<MatrixT<Scalar>> v_;
  long t_ = 0;
};

using Adam = AdamT<double>;

}  // namespace coride::nn
