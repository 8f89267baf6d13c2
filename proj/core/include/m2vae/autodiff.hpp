// Copyright 2026 The m2vae Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

// Minimal reverse-mode automatic differentiation over small dense vectors.
//
// A Tape records every operation in creation order, storing values and
// gradients in two flat arenas, so a tape reused across training examples
// stops allocating once it has seen the largest graph. Model parameters are
// never copied into the tape wholesale: Row/VecMat/Param nodes reference a
// Tensor and scatter their gradient into a caller-owned gradient Tensor.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "m2vae/tensor.hpp"

namespace m2vae::ad {

/// Binds a parameter tensor to the tensor receiving its gradient. A null
/// grad makes the parameter a constant as far as the tape is concerned.
struct ParamRef {
  const Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

class Tape;
struct OpsAccess;

/// Handle to a node on a Tape. Cheap to copy; valid until Tape::clear().
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  std::size_t size() const;
  std::span<const double> value() const;
  std::span<const double> grad() const;
  double operator[](std::size_t i) const { return value()[i]; }
  /// Value of a size-1 node.
  double scalar() const;
  std::vector<double> to_vector() const;

 private:
  friend class Tape;
  Var(Tape* t, std::uint32_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Drops all nodes but keeps arena capacity.
  void clear();
  std::size_t node_count() const { return nodes_.size(); }

  Var constant(std::span<const double> values);
  Var constant(std::initializer_list<double> values);
  Var constant(double value);
  /// The whole parameter tensor, flattened row-major.
  Var param(ParamRef p);
  /// One row of a parameter matrix (embedding lookup).
  Var row(ParamRef p, std::size_t r);

  /// Reverse sweep from a scalar node; parameter gradients are accumulated
  /// (not overwritten) into the bound gradient tensors, scaled by seed.
  void backward(Var loss, double seed = 1.0);

  /// Values produced by detach() so far, in call order.
  std::vector<std::vector<double>> detached_values() const;
  /// Subsequent detach() calls return these values instead of their input,
  /// in call order. Used to differentiate a graph numerically while keeping
  /// stop-gradient nodes fixed.
  void freeze_detached(std::vector<std::vector<double>> values);

  std::span<const double> value_of(std::uint32_t id) const;
  std::span<const double> grad_of(std::uint32_t id) const;

 private:
  enum class Op : std::uint8_t {
    kConstant, kParam, kRow,
    kAdd, kSub, kMul, kDiv,
    kNeg, kScale, kShift, kExp, kLog, kLogistic, kTanh, kSquare, kReciprocal,
    kSoftplus, kSum, kMean, kDot, kCosine, kSoftmax, kLogSumExp,
    kElement, kConcat, kVecMat, kDetach,
  };

  struct Node {
    Op op;
    std::uint32_t offset;
    std::uint32_t size;
    std::uint32_t a;
    std::uint32_t b;
    double c;
  };

  Var push(Op op, std::size_t size, std::uint32_t a = 0, std::uint32_t b = 0, double c = 0.0);
  double* val(std::uint32_t id) { return vals_.data() + nodes_[id].offset; }
  const double* val(std::uint32_t id) const { return vals_.data() + nodes_[id].offset; }
  double* grd(std::uint32_t id) { return grads_.data() + nodes_[id].offset; }
  std::uint32_t len(std::uint32_t id) const { return nodes_[id].size; }
  void check_same_tape(Var v) const;
  void propagate(std::uint32_t id);

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::vector<std::uint32_t> links_;
  std::vector<ParamRef> params_;
  std::vector<std::uint32_t> detached_;
  std::vector<std::vector<double>> frozen_;
  std::size_t detach_calls_ = 0;

  friend struct OpsAccess;
};

// Elementwise binary ops broadcast a size-1 operand against the other.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var neg(Var a);
Var scale(Var a, double k);
Var shift(Var a, double k);
Var exp(Var a);
Var log(Var a);
Var logistic(Var a);
Var tanh(Var a);
Var square(Var a);
Var reciprocal(Var a);
/// log(1 + exp(x)), overflow-safe.
Var softplus(Var a);

Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);
/// Cosine similarity; each norm is floored at 1e-12.
Var cosine(Var a, Var b);
/// Shift-stabilized softmax over the elements of a.
Var softmax(Var a);
Var logsumexp(Var a);
Var element(Var a, std::size_t i);
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
/// Row vector times parameter matrix: x (len r) * W (r x c) -> len c.
Var vecmat(Var x, ParamRef w);
/// Identity in the forward pass; blocks gradient flow.
Var detach(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(Var a, double k) { return scale(a, k); }
inline Var operator*(double k, Var a) { return scale(a, k); }
inline Var operator+(Var a, double k) { return shift(a, k); }

}  // namespace m2vae::ad
