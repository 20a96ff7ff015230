#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coride/rng.hpp"

namespace coride::nn {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Index of a tensor inside a ParamStoreT. Architectures keep handles and take
/// the store as an argument, so a copied store is a copied network.
struct ParamHandle {
  std::size_t index = static_cast<std::size_t>(-1);
};

/// Named parameter tensors, each paired with a gradient buffer of the same shape.
template <typename Scalar>
class ParamStoreT {
 public:
  using Matrix = MatrixT<Scalar>;

  ParamHandle add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    for (const auto& n : names_) {
      if (n == name) throw std::invalid_argument("duplicate parameter name " + name);
    }
    names_.push_back(std::move(name));
    values_.push_back(Matrix::Zero(rows, cols));
    grads_.push_back(Matrix::Zero(rows, cols));
    return ParamHandle{values_.size() - 1};
  }

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }

  Matrix& value(ParamHandle h) { return values_.at(h.index); }
  const Matrix& value(ParamHandle h) const { return values_.at(h.index); }
  Matrix& grad(ParamHandle h) { return grads_.at(h.index); }
  const Matrix& grad(ParamHandle h) const { return grads_.at(h.index); }

  Matrix& value(std::size_t i) { return values_.at(i); }
  const Matrix& value(std::size_t i) const { return values_.at(i); }
  Matrix& grad(std::size_t i) { return grads_.at(i); }
  const Matrix& grad(std::size_t i) const { return grads_.at(i); }

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i] == name) return i;
    }
    throw std::out_of_range("no parameter named " + name);
  }

  void zero_grad() {
    for (auto& g : grads_) g.setZero();
  }

  void scale_grad(Scalar factor) {
    for (auto& g : grads_) g *= factor;
  }

  Scalar grad_norm() const {
    Scalar total = 0;
    for (const auto& g : grads_) total += g.squaredNorm();
    return std::sqrt(total);
  }

  bool all_finite() const {
    for (const auto& v : values_) {
      if (!v.allFinite()) return false;
    }
    return true;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
  }

  bool same_shapes(const ParamStoreT& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (values_[i].rows() != other.values_[i].rows() || values_[i].cols() != other.values_[i].cols()) return false;
    }
    return true;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::vector<Matrix> grads_;
};

/// target <- mix * source + (1 - mix) * target, elementwise.
template <typename Scalar>
void soft_update(ParamStoreT<Scalar>& target, const ParamStoreT<Scalar>& source, Scalar mix) {
  if (!target.same_shapes(source)) throw std::invalid_argument("soft_update: shape mismatch");
  if (mix < Scalar(0) || mix > Scalar(1)) throw std::invalid_argument("soft_update: mix must lie in [0, 1]");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (mix == Scalar(1)) {
      target.value(i) = source.value(i);
    } else if (mix != Scalar(0)) {
      target.value(i) = mix * source.value(i) + (Scalar(1) - mix) * target.value(i);
    }
  }
}

/// Fills a tensor with N(0, stddev^2) draws, column by column.
template <typename Scalar>
void init_normal(ParamStoreT<Scalar>& store, ParamHandle h, Scalar stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto& m = store.value(h);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<Scalar>(stddev * normal(rng));
  }
}

using ParamStore = ParamStoreT<double>;
using Matrix = MatrixT<double>;
using Vector = VectorT<double>;

}  // namespace coride::nn
