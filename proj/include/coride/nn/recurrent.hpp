#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coride/nn/params.hpp"

namespace coride::nn {

/// Ring of hidden vectors plus the slot to update next. A plain recurrent
/// cell uses a ring of one.
template <typename Scalar>
struct RecurrentStateT {
  std::vector<VectorT<Scalar>> ring;
  int phase = 0;

  static RecurrentStateT zeros(int hidden, int dilation = 1) {
    if (dilation < 1) throw std::invalid_argument("dilation must be at least 1");
    RecurrentStateT s;
    s.ring.assign(dilation, VectorT<Scalar>::Zero(hidden));
    return s;
  }
  int dilation() const { return static_cast<int>(ring.size()); }
};

/// h' = tanh(W_ih x + W_hh h + b)
template <typename Scalar>
class RnnCellT {
 public:
  using Store = ParamStoreT<Scalar>;
  using Vector = VectorT<Scalar>;
  using State = RecurrentStateT<Scalar>;

  RnnCellT() = default;
  RnnCellT(Store& store, const std::string& name, int in, int hidden) : in_(in), hidden_(hidden) {
    w_ih_ = store.add(name + ".w_ih", hidden, in);
    w_hh_ = store.add(name + ".w_hh", hidden, hidden);
    b_ = store.add(name + ".bias", hidden, 1);
  }

  int in() const { return in_; }
  int hidden() const { return hidden_; }
  ParamHandle w_ih() const { return w_ih_; }
  ParamHandle w_hh() const { return w_hh_; }
  ParamHandle bias() const { return b_; }

  void init(Store& store, Rng& rng) const {
    init_normal(store, w_ih_, Scalar(1) / std::sqrt(static_cast<Scalar>(in_)), rng);
    init_normal(store, w_hh_, Scalar(0.5) / std::sqrt(static_cast<Scalar>(hidden_)), rng);
    store.value(b_).setZero();
  }

  Vector cell(const Store& store, const Vector& h, const Vector& x) const {
    if (x.size() != in_ || h.size() != hidden_) throw std::invalid_argument("rnn: shape mismatch");
    Vector pre = store.value(w_ih_) * x + store.value(w_hh_) * h + store.value(b_).col(0);
    return pre.array().tanh().matrix();
  }

  /// Returns (dL/dx, dL/dh) and accumulates parameter gradients.
  std::pair<Vector, Vector> cell_backward(Store& store, const Vector& h, const Vector& x, const Vector& h_next,
                                          const Vector& grad_next) const {
    Vector g = grad_next.cwiseProduct((Scalar(1) - h_next.array().square()).matrix());
    store.grad(w_ih_).noalias() += g * x.transpose();
    store.grad(w_hh_).noalias() += g * h.transpose();
    store.grad(b_).col(0) += g;
    return {store.value(w_ih_).transpose() * g, store.value(w_hh_).transpose() * g};
  }

  /// Plain recurrent step; output is the new hidden vector.
  std::pair<State, Vector> step(const Store& store, const State& state, const Vector& x) const {
    if (state.ring.size() != 1) throw std::invalid_argument("rnn_step expects a single-slot state");
    State next = state;
    next.ring[0] = cell(store, state.ring[0], x);
    return {next, next.ring[0]};
  }

 private:
  int in_ = 0;
  int hidden_ = 0;
  ParamHandle w_ih_;
  ParamHandle w_hh_;
  ParamHandle b_;
};

/// Dilated recurrence: each step updates only the slot at the current phase
/// with the shared cell; the output is the mean over all slots.
template <typename Scalar>
class DilatedRnnT {
 public:
  using Store = ParamStoreT<Scalar>;
  using Vector = VectorT<Scalar>;
  using State = RecurrentStateT<Scalar>;

  DilatedRnnT() = default;
  DilatedRnnT(Store& store, const std::string& name, int in, int hidden, int dilation)
      : cell_(store, name, in, hidden), dilation_(dilation) {
    if (dilation < 1) throw std::invalid_argument("dilation must be at least 1");
  }

  const RnnCellT<Scalar>& cell() const { return cell_; }
  int dilation() const { return dilation_; }
  int hidden() const { return cell_.hidden(); }
  State initial_state() const { return State::zeros(cell_.hidden(), dilation_); }
  void init(Store& store, Rng& rng) const { cell_.init(store, rng); }

  std::pair<State, Vector> step(const Store& store, const State& state, const Vector& x) const {
    if (state.dilation() != dilation_ || state.phase < 0 || state.phase >= dilation_) {
      throw std::invalid_argument("dilated rnn: state does not match dilation");
    }
    State next = state;
    next.ring[state.phase] = cell_.cell(store, state.ring[state.phase], x);
    next.phase = (state.phase + 1) % dilation_;
    if (dilation_ == 1) return {next, next.ring[0]};
    Vector out = Vector::Zero(cell_.hidden());
    for (const auto& h : next.ring) out += h;
    out /= static_cast<Scalar>(dilation_);
    return {next, out};
  }

  /// Backward through one step. Returns dL/dx and dL/d(previous ring).
  std::pair<Vector, std::vector<Vector>> backward(Store& store, const State& before, const State& after,
                                                  const Vector& x, const Vector& grad_out) const {
    const Scalar scale = Scalar(1) / static_cast<Scalar>(dilation_);
    std::vector<Vector> grad_ring(dilation_, grad_out * scale);
    const int slot = before.phase;
    auto [gx, gh] = cell_.cell_backward(store, before.ring[slot], x, after.ring[slot], grad_out * scale);
    grad_ring[slot] = gh;
    return {gx, grad_ring};
  }

 private:
  RnnCellT<Scalar> cell_;
  int dilation_ = 1;
};

using RecurrentState = RecurrentStateT<double>;
using RnnCell = RnnCellT<double>;
using DilatedRnn = DilatedRnnT<double>;

template <typename Scalar>
std::pair<RecurrentStateT<Scalar>, VectorT<Scalar>> rnn_step(const RnnCellT<Scalar>& cell,
                                                             const ParamStoreT<Scalar>& store,
                                                             const RecurrentStateT<Scalar>& state,
                                                             const VectorT<Scalar>& x) {
  return cell.step(store, state, x);
}

template <typename Scalar>
std::pair<RecurrentStateT<Scalar>, VectorT<Scalar>> dilated_rnn_step(const DilatedRnnT<Scalar>& rnn,
                                                                     const ParamStoreT<Scalar>& store,
                                                                     const RecurrentStateT<Scalar>& state,
                                                                     const VectorT<Scalar>& x) {
  return rnn.step(store, state, x);
}

}  // namespace coride::nn
