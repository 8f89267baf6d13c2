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
#include "m2vae/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>

namespace m2vae::ad {

namespace {
constexpr double kNormFloor = 1e-12;
}

std::size_t Var::size() const { return tape_->value_of(id_).size(); }
std::span<const double> Var::value() const { return tape_->value_of(id_); }
std::span<const double> Var::grad() const { return tape_->grad_of(id_); }

double Var::scalar() const {
  auto v = value();
  if (v.size() != 1) throw std::logic_error("Var::scalar on a node of size " + std::to_string(v.size()));
  return v[0];
}

std::vector<double> Var::to_vector() const {
  auto v = value();
  return {v.begin(), v.end()};
}

void Tape::clear() {
  nodes_.clear();
  vals_.clear();
  grads_.clear();
  links_.clear();
  params_.clear();
  detached_.clear();
  frozen_.clear();
  detach_calls_ = 0;
}

std::span<const double> Tape::value_of(std::uint32_t id) const {
  return {vals_.data() + nodes_[id].offset, nodes_[id].size};
}

std::span<const double> Tape::grad_of(std::uint32_t id) const {
  if (grads_.size() < vals_.size()) return {};
  return {grads_.data() + nodes_[id].offset, nodes_[id].size};
}

Var Tape::push(Op op, std::size_t size, std::uint32_t a, std::uint32_t b, double c) {
  Node n{op, static_cast<std::uint32_t>(vals_.size()), static_cast<std::uint32_t>(size), a, b, c};
  vals_.resize(vals_.size() + size);
  nodes_.push_back(n);
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Tape::check_same_tape(Var v) const {
  if (v.tape() != this) throw std::logic_error("autodiff: mixing nodes from different tapes");
}

Var Tape::constant(std::span<const double> values) {
  Var v = push(Op::kConstant, values.size());
  std::copy(values.begin(), values.end(), val(v.id()));
  return v;
}

Var Tape::constant(std::initializer_list<double> values) {
  return constant(std::span<const double>(values.begin(), values.size()));
}

Var Tape::constant(double value) { return constant(std::span<const double>(&value, 1)); }

Var Tape::param(ParamRef p) {
  params_.push_back(p);
  Var v = push(Op::kParam, p.value->size(), static_cast<std::uint32_t>(params_.size() - 1));
  std::copy(p.value->data.begin(), p.value->data.end(), val(v.id()));
  return v;
}

Var Tape::row(ParamRef p, std::size_t r) {
  if (r >= p.value->rows) throw std::out_of_range("autodiff: row index out of range");
  params_.push_back(p);
  Var v = push(Op::kRow, p.value->cols, static_cast<std::uint32_t>(params_.size() - 1),
               static_cast<std::uint32_t>(r));
  auto src = p.value->row(r);
  std::copy(src.begin(), src.end(), val(v.id()));
  return v;
}

std::vector<std::vector<double>> Tape::detached_values() const {
  std::vector<std::vector<double>> out;
  out.reserve(detached_.size());
  for (auto id : detached_) {
    auto v = value_of(id);
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

void Tape::freeze_detached(std::vector<std::vector<double>> values) {
  frozen_ = std::move(values);
  detach_calls_ = 0;
}

// Every op lives here so that the public free functions stay thin.
struct OpsAccess {
  using Op = Tape::Op;

  static Tape& tape_of(Var a) {
    if (!a.valid()) throw std::logic_error("autodiff: invalid Var");
    return *a.tape();
  }

  static Var binary(Op op, Var a, Var b) {
    Tape& t = tape_of(a);
    t.check_same_tape(b);
    const std::size_t na = t.len(a.id()), nb = t.len(b.id());
    if (na != nb && na != 1 && nb != 1) {
      throw std::invalid_argument("autodiff: size mismatch " + std::to_string(na) + " vs " +
                                  std::to_string(nb));
    }
    const std::size_t n = std::max(na, nb);
    Var out = t.push(op, n, a.id(), b.id());
    const double* x = t.val(a.id());
    const double* y = t.val(b.id());
    double* z = t.val(out.id());
    for (std::size_t i = 0; i < n; ++i) {
      const double xi = x[na == 1 ? 0 : i];
      const double yi = y[nb == 1 ? 0 : i];
      switch (op) {
        case Op::kAdd: z[i] = xi + yi; break;
        case Op::kSub: z[i] = xi - yi; break;
        case Op::kMul: z[i] = xi * yi; break;
        case Op::kDiv: z[i] = xi / yi; break;
        default: throw std::logic_error("autodiff: not a binary op");
      }
    }
    return out;
  }

  static Var unary(Op op, Var a, double c = 0.0) {
    Tape& t = tape_of(a);
    const std::size_t n = t.len(a.id());
    Var out = t.push(op, n, a.id(), 0, c);
    const double* x = t.val(a.id());
    double* z = t.val(out.id());
    for (std::size_t i = 0; i < n; ++i) {
      switch (op) {
        case Op::kNeg: z[i] = -x[i]; break;
        case Op::kScale: z[i] = c * x[i]; break;
        case Op::kShift: z[i] = x[i] + c; break;
        case Op::kExp: z[i] = std::exp(x[i]); break;
        case Op::kLog: z[i] = std::log(x[i]); break;
        case Op::kLogistic:
          z[i] = x[i] >= 0 ? 1.0 / (1.0 + std::exp(-x[i])) : std::exp(x[i]) / (1.0 + std::exp(x[i]));
          break;
        case Op::kTanh: z[i] = std::tanh(x[i]); break;
        case Op::kSquare: z[i] = x[i] * x[i]; break;
        case Op::kReciprocal: z[i] = 1.0 / x[i]; break;
        case Op::kSoftplus:
          z[i] = x[i] > 0 ? x[i] + std::log1p(std::exp(-x[i])) : std::log1p(std::exp(x[i]));
          break;
        default: throw std::logic_error("autodiff: not a unary op");
      }
    }
    return out;
  }

  static Var reduce(Op op, Var a) {
    Tape& t = tape_of(a);
    const std::size_t n = t.len(a.id());
    const double* x = t.val(a.id());
    double r = 0.0;
    switch (op) {
      case Op::kSum:
        for (std::size_t i = 0; i < n; ++i) r += x[i];
        break;
      case Op::kMean:
        for (std::size_t i = 0; i < n; ++i) r += x[i];
        r /= static_cast<double>(n);
        break;
      case Op::kLogSumExp: {
        const double m = *std::max_element(x, x + n);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - m);
        r = m + std::log(s);
        break;
      }
      default: throw std::logic_error("autodiff: not a reduction");
    }
    Var out = t.push(op, 1, a.id());
    t.val(out.id())[0] = r;
    return out;
  }

  static Var dot(Var a, Var b) {
    Tape& t = tape_of(a);
    t.check_same_tape(b);
    const std::size_t n = t.len(a.id());
    if (t.len(b.id()) != n) throw std::invalid_argument("autodiff: dot size mismatch");
    const double* x = t.val(a.id());
    const double* y = t.val(b.id());
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) r += x[i] * y[i];
    Var out = t.push(Op::kDot, 1, a.id(), b.id());
    t.val(out.id())[0] = r;
    return out;
  }

  static Var cosine(Var a, Var b) {
    Tape& t = tape_of(a);
    t.check_same_tape(b);
    const std::size_t n = t.len(a.id());
    if (t.len(b.id()) != n) throw std::invalid_argument("autodiff: cosine size mismatch");
    const double* x = t.val(a.id());
    const double* y = t.val(b.id());
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      xy += x[i] * y[i];
      xx += x[i] * x[i];
      yy += y[i] * y[i];
    }
    const double nx = std::max(std::sqrt(xx), kNormFloor);
    const double ny = std::max(std::sqrt(yy), kNormFloor);
    Var out = t.push(Op::kCosine, 1, a.id(), b.id());
    t.val(out.id())[0] = xy / (nx * ny);
    return out;
  }

  static Var softmax(Var a) {
    Tape& t = tape_of(a);
    const std::size_t n = t.len(a.id());
    Var out = t.push(Op::kSoftmax, n, a.id());
    const double* x = t.val(a.id());
    double* z = t.val(out.id());
    const double m = *std::max_element(x, x + n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = std::exp(x[i] - m);
      s += z[i];
    }
    for (std::size_t i = 0; i < n; ++i) z[i] /= s;
    return out;
  }

  static Var element(Var a, std::size_t i) {
    Tape& t = tape_of(a);
    if (i >= t.len(a.id())) throw std::out_of_range("autodiff: element index out of range");
    Var out = t.push(Op::kElement, 1, a.id(), static_cast<std::uint32_t>(i));
    t.val(out.id())[0] = t.val(a.id())[i];
    return out;
  }

  static Var concat(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("autodiff: concat of nothing");
    Tape& t = tape_of(parts[0]);
    std::size_t n = 0;
    for (Var p : parts) {
      t.check_same_tape(p);
      n += t.len(p.id());
    }
    const auto first = static_cast<std::uint32_t>(t.links_.size());
    for (Var p : parts) t.links_.push_back(p.id());
    Var out = t.push(Op::kConcat, n, first, static_cast<std::uint32_t>(parts.size()));
    std::size_t k = 0;
    for (Var p : parts) {
      const double* x = t.val(p.id());
      double* z = t.val(out.id());
      for (std::uint32_t i = 0; i < t.len(p.id()); ++i) z[k++] = x[i];
    }
    return out;
  }

  static Var vecmat(Var x, ParamRef w) {
    Tape& t = tape_of(x);
    const Tensor& W = *w.value;
    if (t.len(x.id()) != W.rows) {
      throw std::invalid_argument("autodiff: vecmat expects input of width " + std::to_string(W.rows) +
                                  ", got " + std::to_string(t.len(x.id())));
    }
    t.params_.push_back(w);
    Var out = t.push(Op::kVecMat, W.cols, x.id(), static_cast<std::uint32_t>(t.params_.size() - 1));
    const double* xv = t.val(x.id());
    double* z = t.val(out.id());
    std::fill(z, z + W.cols, 0.0);
    for (std::size_t i = 0; i < W.rows; ++i) {
      const double xi = xv[i];
      const double* wr = W.data.data() + i * W.cols;
      for (std::size_t j = 0; j < W.cols; ++j) z[j] += xi * wr[j];
    }
    return out;
  }

  static Var detach(Var a) {
    Tape& t = tape_of(a);
    const std::size_t n = t.len(a.id());
    Var out = t.push(Op::kDetach, n, a.id());
    double* z = t.val(out.id());
    const std::size_t call = t.detach_calls_++;
    if (call < t.frozen_.size()) {
      const auto& f = t.frozen_[call];
      if (f.size() != n) throw std::logic_error("autodiff: frozen detach value has wrong size");
      std::copy(f.begin(), f.end(), z);
    } else {
      const double* x = t.val(a.id());
      std::copy(x, x + n, z);
    }
    t.detached_.push_back(out.id());
    return out;
  }
};

void Tape::backward(Var loss, double seed) {
  check_same_tape(loss);
  if (len(loss.id()) != 1) throw std::logic_error("autodiff: backward from a non-scalar node");
  grads_.assign(vals_.size(), 0.0);
  grd(loss.id())[0] = seed;
  for (std::uint32_t id = loss.id() + 1; id-- > 0;) propagate(id);
}

void Tape::propagate(std::uint32_t id) {
  const Node& node = nodes_[id];
  const std::uint32_t n = node.size;
  const double* g = grads_.data() + node.offset;
  const double* z = vals_.data() + node.offset;
  switch (node.op) {
    case Op::kConstant:
    case Op::kDetach:
      return;
    case Op::kParam: {
      Tensor* dst = params_[node.a].grad;
      if (dst == nullptr) return;
      for (std::uint32_t i = 0; i < n; ++i) dst->data[i] += g[i];
      return;
    }
    case Op::kRow: {
      Tensor* dst = params_[node.a].grad;
      if (dst == nullptr) return;
      auto r = dst->row(node.b);
      for (std::uint32_t i = 0; i < n; ++i) r[i] += g[i];
      return;
    }
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv: {
      const std::uint32_t na = len(node.a), nb = len(node.b);
      const double* x = val(node.a);
      const double* y = val(node.b);
      double* gx = grd(node.a);
      double* gy = grd(node.b);
      for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t ia = na == 1 ? 0 : i;
        const std::uint32_t ib = nb == 1 ? 0 : i;
        switch (node.op) {
          case Op::kAdd: gx[ia] += g[i]; gy[ib] += g[i]; break;
          case Op::kSub: gx[ia] += g[i]; gy[ib] -= g[i]; break;
          case Op::kMul: gx[ia] += g[i] * y[ib]; gy[ib] += g[i] * x[ia]; break;
          case Op::kDiv:
            gx[ia] += g[i] / y[ib];
            gy[ib] -= g[i] * x[ia] / (y[ib] * y[ib]);
            break;
          default: break;
        }
      }
      return;
    }
    case Op::kNeg:
    case Op::kScale:
    case Op::kShift:
    case Op::kExp:
    case Op::kLog:
    case Op::kLogistic:
    case Op::kTanh:
    case Op::kSquare:
    case Op::kReciprocal:
    case Op::kSoftplus: {
      const double* x = val(node.a);
      double* gx = grd(node.a);
      for (std::uint32_t i = 0; i < n; ++i) {
        double d = 0.0;
        switch (node.op) {
          case Op::kNeg: d = -1.0; break;
          case Op::kScale: d = node.c; break;
          case Op::kShift: d = 1.0; break;
          case Op::kExp: d = z[i]; break;
          case Op::kLog: d = 1.0 / x[i]; break;
          case Op::kLogistic: d = z[i] * (1.0 - z[i]); break;
          case Op::kTanh: d = 1.0 - z[i] * z[i]; break;
          case Op::kSquare: d = 2.0 * x[i]; break;
          case Op::kReciprocal: d = -z[i] * z[i]; break;
          case Op::kSoftplus:
            d = x[i] >= 0 ? 1.0 / (1.0 + std::exp(-x[i])) : std::exp(x[i]) / (1.0 + std::exp(x[i]));
            break;
          default: break;
        }
        gx[i] += g[i] * d;
      }
      return;
    }
    case Op::kSum:
    case Op::kMean: {
      const std::uint32_t na = len(node.a);
      const double k = node.op == Op::kMean ? 1.0 / static_cast<double>(na) : 1.0;
      double* gx = grd(node.a);
      for (std::uint32_t i = 0; i < na; ++i) gx[i] += g[0] * k;
      return;
    }
    case Op::kLogSumExp: {
      const std::uint32_t na = len(node.a);
      const double* x = val(node.a);
      double* gx = grd(node.a);
      for (std::uint32_t i = 0; i < na; ++i) gx[i] += g[0] * std::exp(x[i] - z[0]);
      return;
    }
    case Op::kDot: {
      const std::uint32_t na = len(node.a);
      const double* x = val(node.a);
      const double* y = val(node.b);
      double* gx = grd(node.a);
      double* gy = grd(node.b);
      for (std::uint32_t i = 0; i < na; ++i) {
        gx[i] += g[0] * y[i];
        gy[i] += g[0] * x[i];
      }
      return;
    }
    case Op::kCosine: {
      const std::uint32_t na = len(node.a);
      const double* x = val(node.a);
      const double* y = val(node.b);
      double xx = 0.0, yy = 0.0;
      for (std::uint32_t i = 0; i < na; ++i) {
        xx += x[i] * x[i];
        yy += y[i] * y[i];
      }
      const double rx = std::sqrt(xx), ry = std::sqrt(yy);
      const double nx = std::max(rx, kNormFloor), ny = std::max(ry, kNormFloor);
      // Below the floor the norm is a constant, so its derivative term vanishes.
      const double cx = rx > kNormFloor ? z[0] / (nx * nx) : 0.0;
      const double cy = ry > kNormFloor ? z[0] / (ny * ny) : 0.0;
      double* gx = grd(node.a);
      double* gy = grd(node.b);
      for (std::uint32_t i = 0; i < na; ++i) {
        gx[i] += g[0] * (y[i] / (nx * ny) - cx * x[i]);
        gy[i] += g[0] * (x[i] / (nx * ny) - cy * y[i]);
      }
      return;
    }
    case Op::kSoftmax: {
      double s = 0.0;
      for (std::uint32_t i = 0; i < n; ++i) s += g[i] * z[i];
      double* gx = grd(node.a);
      for (std::uint32_t i = 0; i < n; ++i) gx[i] += z[i] * (g[i] - s);
      return;
    }
    case Op::kElement:
      grd(node.a)[node.b] += g[0];
      return;
    case Op::kConcat: {
      std::size_t k = 0;
      for (std::uint32_t p = 0; p < node.b; ++p) {
        const std::uint32_t child = links_[node.a + p];
        double* gc = grd(child);
        for (std::uint32_t i = 0; i < len(child); ++i) gc[i] += g[k++];
      }
      return;
    }
    case Op::kVecMat: {
      const Tensor& W = *params_[node.b].value;
      Tensor* dW = params_[node.b].grad;
      const double* x = val(node.a);
      double* gx = grd(node.a);
      for (std::size_t i = 0; i < W.rows; ++i) {
        const double* wr = W.data.data() + i * W.cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < W.cols; ++j) acc += wr[j] * g[j];
        gx[i] += acc;
        if (dW != nullptr) {
          double* dr = dW->data.data() + i * W.cols;
          for (std::size_t j = 0; j < W.cols; ++j) dr[j] += x[i] * g[j];
        }
      }
      return;
    }
  }
}

Var add(Var a, Var b) { return OpsAccess::binary(OpsAccess::Op::kAdd, a, b); }
Var sub(Var a, Var b) { return OpsAccess::binary(OpsAccess::Op::kSub, a, b); }
Var mul(Var a, Var b) { return OpsAccess::binary(OpsAccess::Op::kMul, a, b); }
Var div(Var a, Var b) { return OpsAccess::binary(OpsAccess::Op::kDiv, a, b); }
Var neg(Var a) { return OpsAccess::unary(OpsAccess::Op::kNeg, a); }
Var scale(Var a, double k) { return OpsAccess::unary(OpsAccess::Op::kScale, a, k); }
Var shift(Var a, double k) { return OpsAccess::unary(OpsAccess::Op::kShift, a, k); }
Var exp(Var a) { return OpsAccess::unary(OpsAccess::Op::kExp, a); }
Var log(Var a) { return OpsAccess::unary(OpsAccess::Op::kLog, a); }
Var logistic(Var a) { return OpsAccess::unary(OpsAccess::Op::kLogistic, a); }
Var tanh(Var a) { return OpsAccess::unary(OpsAccess::Op::kTanh, a); }
Var square(Var a) { return OpsAccess::unary(OpsAccess::Op::kSquare, a); }
Var reciprocal(Var a) { return OpsAccess::unary(OpsAccess::Op::kReciprocal, a); }
Var softplus(Var a) { return OpsAccess::unary(OpsAccess::Op::kSoftplus, a); }
Var sum(Var a) { return OpsAccess::reduce(OpsAccess::Op::kSum, a); }
Var mean(Var a) { return OpsAccess::reduce(OpsAccess::Op::kMean, a); }
Var logsumexp(Var a) { return OpsAccess::reduce(OpsAccess::Op::kLogSumExp, a); }
Var dot(Var a, Var b) { return OpsAccess::dot(a, b); }
Var cosine(Var a, Var b) { return OpsAccess::cosine(a, b); }
Var softmax(Var a) { return OpsAccess::softmax(a); }
Var element(Var a, std::size_t i) { return OpsAccess::element(a, i); }
Var concat(std::span<const Var> parts) { return OpsAccess::concat(parts); }
Var concat(std::initializer_list<Var> parts) {
  return OpsAccess::concat(std::span<const Var>(parts.begin(), parts.size()));
}
Var vecmat(Var x, ParamRef w) { return OpsAccess::vecmat(x, w); }
Var detach(Var a) { return OpsAccess::detach(a); }

}  // namespace m2vae::ad
