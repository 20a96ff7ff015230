#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "coride/nn/params.hpp"

namespace coride::nn {

/// y = W x + b
template <typename Scalar>
class DenseT {
 public:
  using Store = ParamStoreT<Scalar>;
  using Vector = VectorT<Scalar>;

  DenseT() = default;
  DenseT(Store& store, const std::string& name, int in, int out, bool bias = true) : in_(in), out_(out), bias_(bias) {
    weight_ = store.add(name + ".weight", out, in);
    if (bias_) bias_handle_ = store.add(name + ".bias", out, 1);
  }

  int in() const { return in_; }
  int out() const { return out_; }
  ParamHandle weight() const { return weight_; }
  ParamHandle bias() const { return bias_handle_; }
  bool has_bias() const { return bias_; }

  void init(Store& store, Rng& rng, Scalar gain = Scalar(1)) const {
    init_normal(store, weight_, gain / std::sqrt(static_cast<Scalar>(in_)), rng);
    if (bias_) store.value(bias_handle_).setZero();
  }

  Vector forward(const Store& store, const Vector& x) const {
    if (x.size() != in_) {
      throw std::invalid_argument("dense: expected input of length " + std::to_string(in_) + ", got " +
                                  std::to_string(x.size()));
    }
    Vector y = store.value(weight_) * x;
    if (bias_) y += store.value(bias_handle_).col(0);
    return y;
  }

  /// Accumulates dL/dW = g x^T and dL/db = g; returns dL/dx.
  Vector backward(Store& store, const Vector& x, const Vector& grad_out) const {
    if (grad_out.size() != out_ || x.size() != in_) throw std::invalid_argument("dense: backward shape mismatch");
    store.grad(weight_).noalias() += grad_out * x.transpose();
    if (bias_) store.grad(bias_handle_).col(0) += grad_out;
    return store.value(weight_).transpose() * grad_out;
  }

 private:
  int in_ = 0;
  int out_ = 0;
  bool bias_ = true;
  ParamHandle weight_;
  ParamHandle bias_handle_;
};

enum class Head { Linear, Tanh };

/// Affine -> ReLU stack; the last layer is affine with an optional tanh head.
template <typename Scalar>
class MlpT {
 public:
  using Store = ParamStoreT<Scalar>;
  using Vector = VectorT<Scalar>;

  struct Cache {
    std::vector<Vector> inputs;  // input to each layer
    Vector output;
  };

  MlpT() = default;
  MlpT(Store& store, const std::string& name, std::vector<int> sizes, Head head = Head::Linear) : head_(head) {
    if (sizes.size() < 2) throw std::invalid_argument("mlp needs at least input and output sizes");
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      layers_.emplace_back(store, name + ".l" + std::to_string(i), sizes[i], sizes[i + 1]);
    }
  }

  int in() const { return layers_.front().in(); }
  int out() const { return layers_.back().out(); }
  const std::vector<DenseT<Scalar>>& layers() const { return layers_; }

  void init(Store& store, Rng& rng, Scalar last_gain = Scalar(1)) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const bool last = i + 1 == layers_.size();
      layers_[i].init(store, rng, last ? last_gain : static_cast<Scalar>(std::sqrt(2.0)));
    }
  }

  Vector forward(const Store& store, const Vector& x, Cache* cache = nullptr) const {
    if (cache) cache->inputs.clear();
    Vector h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (cache) cache->inputs.push_back(h);
      h = layers_[i].forward(store, h);
      if (i + 1 < layers_.size()) h = h.cwiseMax(Scalar(0));
    }
    if (head_ == Head::Tanh) h = h.array().tanh().matrix();
    if (cache) cache->output = h;
    return h;
  }

  Vector backward(Store& store, const Cache& cache, const Vector& grad_out) const {
    if (cache.inputs.size() != layers_.size()) throw std::logic_error("mlp: backward without a forward cache");
    Vector g = grad_out;
    if (head_ == Head::Tanh) g = g.cwiseProduct((Scalar(1) - cache.output.array().square()).matrix());
    for (std::size_t i = layers_.size(); i-- > 0;) {
      if (i + 1 < layers_.size()) {
        // ReLU mask from the next layer's input, which is this layer's activation.
        const Vector& act = cache.inputs[i + 1];
        for (Eigen::Index j = 0; j < g.size(); ++j) {
          if (act[j] <= Scalar(0)) g[j] = Scalar(0);
        }
      }
      g = layers_[i].backward(store, cache.inputs[i], g);
    }
    return g;
  }

 private:
  std::vector<DenseT<Scalar>> layers_;
  Head head_ = Head::Linear;
};

using Dense = DenseT<double>;
using Mlp = MlpT<double>;

}  // namespace coride::nn
