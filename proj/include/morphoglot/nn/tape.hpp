#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "morphoglot/random.hpp"

namespace morphoglot::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  // Adaptive-moment accumulators, same shape as value.
  Matrix<T> first_moment;
  Matrix<T> second_moment;
  bool decay = true;
};

/// Named parameters in insertion order. Addresses are stable.
template <typename T>
class ParameterSet {
 public:
  using Scalar = T;

  Parameter<T>& add(const std::string& name, Index rows, Index cols,
                    bool decay = true) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    index_[name] = params_.size();
    Parameter<T>& p = params_.emplace_back();
    p.name = name;
    p.value = Matrix<T>::Zero(rows, cols);
    p.grad = Matrix<T>::Zero(rows, cols);
    p.first_moment = Matrix<T>::Zero(rows, cols);
    p.second_moment = Matrix<T>::Zero(rows, cols);
    p.decay = decay;
    return p;
  }

  bool contains(std::string_view name) const {
    return index_.count(std::string(name)) > 0;
  }

  Parameter<T>& operator[](std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw std::out_of_range("no parameter " + std::string(name));
    return params_[it->second];
  }
  const Parameter<T>& operator[](std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw std::out_of_range("no parameter " + std::string(name));
    return params_[it->second];
  }

  std::deque<Parameter<T>>& all() { return params_; }
  const std::deque<Parameter<T>>& all() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& p : params_) {
      auto& q = out.add(p.name, p.value.rows(), p.value.cols(), p.decay);
      q.value = p.value.template cast<U>();
      q.first_moment = p.first_moment.template cast<U>();
      q.second_moment = p.second_moment.template cast<U>();
    }
    out.step = step;
    return out;
  }

  std::int64_t step = 0;

 private:
  std::deque<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
class Tape;

/// Handle to a node of a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Matrix<T>& value() const { return tape->value(id); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

/// Records a computation for reverse-mode differentiation. Not thread-safe;
/// use one tape per thread.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  explicit Tape(bool training = false, std::uint64_t dropout_seed = 0,
                bool record_gradients = true)
      : training_(training), record_(record_gradients), dropout_rng_(dropout_seed) {}

  // Inference tape: parameters enter as constants.
  static Tape inference() { return Tape(false, 0, false); }

  bool training() const { return training_; }
  Rng& dropout_rng() { return dropout_rng_; }

  Var<T> constant(Matrix<T> value) { return push(std::move(value), false, nullptr); }

  Var<T> parameter(Parameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {this, it->second};
    Var<T> v = push(p.value, record_, nullptr);
    nodes_[v.id].param = &p;
    param_nodes_[&p] = v.id;
    return v;
  }

  Var<T> push(Matrix<T> value, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Matrix<T>& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  // Upstream gradient of a node; zero-initialized on first access.
  Matrix<T>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Matrix<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  bool has_grad(int id) const { return nodes_[id].grad.size() != 0; }

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 node and accumulates into
  /// Parameter::grad of every parameter reached.
  void backward(Var<T> loss) {
    if (loss.value().size() != 1) throw std::invalid_argument("backward: loss is not scalar");
    grad(loss.id).setOnes();
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, id);
      if (n.param) n.param->grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::map<const Parameter<T>*, int> param_nodes_;
  bool training_;
  bool record_;
  Rng dropout_rng_;
};

}  // namespace morphoglot::nn
