#pragma once

// Reverse-mode differentiation over a fixed primitive set. A Tape records
// every primitive applied during one forward pass; backward() walks the
// records in reverse creation order, which is a valid topological order
// because a node can only consume nodes created before it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fvlink/errors.hpp"
#include "fvlink/tensor.hpp"

namespace fvlink {

class Tape;

// Boolean mask over a matrix, row-major. Empty means "everything selected".
using Mask = std::vector<unsigned char>;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  // params may be null when the graph only uses constants. When record is
  // false no backward closures are kept (pure forward evaluation).
  explicit Tape(const ParamSet* params = nullptr, bool record = true) : params_(params), record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), false, {}); }

  // Leaf bound to a named parameter; repeated calls return the same node.
  Var param(const std::string& name) {
    for (const auto& [n, id] : param_nodes_)
      if (n == name) return Var(this, id);
    if (!params_) throw LookupError("tape has no parameter set (asked for " + name + ")");
    const Param& p = params_->get(name);
    Var v = push(p.value, record_ && p.trainable, {});
    param_nodes_.emplace_back(name, v.id());
    return v;
  }

  bool has_param(const std::string& name) const { return params_ && params_->contains(name); }

  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }

  // Creates a node whose gradient flows to `parents` through `fn`.
  Var push(Tensor value, bool requires_grad, BackwardFn fn) {
    if (!value.all_finite()) throw PreconditionError("non-finite value produced on tape");
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && record_;
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  bool any_requires_grad(std::initializer_list<Var> vs) const {
    if (!record_) return false;
    for (const Var& v : vs)
      if (nodes_[v.id()].requires_grad) return true;
    return false;
  }

  void accumulate(const Var& v, const Tensor& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = g.values();
      return;
    }
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.grad[i] += g[i];
  }

  void backward(const Var& loss) {
    if (loss.value().size() != 1) throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
    Node& root = nodes_[loss.id()];
    if (!root.requires_grad) return;
    root.grad = {1.0};
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      Tensor g(n.value.shape(), std::move(n.grad));
      n.grad.clear();
      n.backward(*this, g);
    }
  }

  // Gradient of every trainable parameter bound to the tape's ParamSet.
  // Parameters the graph never touched get zero gradients.
  GradMap param_grads() const {
    GradMap out;
    if (!params_) return out;
    for (const auto& [name, p] : *params_) {
      if (!p.trainable) continue;
      Tensor g(p.value.shape());
      for (const auto& [n, id] : param_nodes_) {
        if (n != name) continue;
        const Node& node = nodes_[id];
        if (!node.grad.empty()) g.values() = node.grad;
      }
      out.emplace(name, std::move(g));
    }
    return out;
  }

  // Smallest distance to a non-differentiable point seen during the forward
  // pass (ReLU/abs inputs near 0, near-ties in hard negative selection).
  double min_kink_distance() const { return min_kink_; }
  void note_kink(double distance) { min_kink_ = std::min(min_kink_, distance); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  const ParamSet* params_;
  bool record_;
  std::deque<Node> nodes_;  // deque: references to values stay valid as the tape grows
  std::vector<std::pair<std::string, std::size_t>> param_nodes_;
  double min_kink_ = std::numeric_limits<double>::infinity();
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace ad {

namespace detail {

inline void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

inline void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// C[m,n] = A[m,k] * B[k,n]
inline Tensor mm(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor c(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = &c.values()[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.values()[i * k + p];
      const double* brow = &b.values()[p * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// C[m,n] = A[m,k] * B[n,k]^T
inline Tensor mm_nt(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  Tensor c(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = &a.values()[i * k];
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = &b.values()[j * k];
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c.values()[i * n + j] = s;
    }
  }
  return c;
}

// C[k,n] = A[m,k]^T * B[m,n]
inline Tensor mm_tn(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor c(Shape{k, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = &b.values()[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.values()[i * k + p];
      double* crow = &c.values()[p * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline void check_mask(const char* op, const Tensor& x, const Mask& mask) {
  if (!mask.empty() && mask.size() != x.size()) {
    throw ShapeError(std::string(op) + ": mask of size " + std::to_string(mask.size()) + " for " + shape_str(x.shape()));
  }
}

inline bool selected(const Mask& mask, std::size_t i) { return mask.empty() || mask[i] != 0; }

}  // namespace detail

// A[m,k] * B[k,n]
inline Var matmul(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  const Tensor &av = a.value(), &bv = b.value();
  detail::require_rank2("matmul", av);
  detail::require_rank2("matmul", bv);
  if (av.shape()[1] != bv.shape()[0]) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  return t.push(detail::mm(av, bv), t.any_requires_grad({a, b}), [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, detail::mm_nt(g, b.value()));
    if (tp.requires_grad(b)) tp.accumulate(b, detail::mm_tn(a.value(), g));
  });
}

// A[m,k] * B[n,k]^T; the form used by linear layers with (out x in) weights.
inline Var matmul_nt(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  const Tensor &av = a.value(), &bv = b.value();
  detail::require_rank2("matmul_nt", av);
  detail::require_rank2("matmul_nt", bv);
  if (av.shape()[1] != bv.shape()[1]) {
    throw ShapeError("matmul_nt: inner dimensions differ " + shape_str(av.shape()) + " x " + shape_str(bv.shape()) + "^T");
  }
  return t.push(detail::mm_nt(av, bv), t.any_requires_grad({a, b}), [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, detail::mm(g, b.value()));
    if (tp.requires_grad(b)) tp.accumulate(b, detail::mm_tn(g, a.value()));
  });
}

inline Var add(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  detail::require_same("add", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return t.push(std::move(out), t.any_requires_grad({a, b}), [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

// X[m,n] + b[n] broadcast over rows.
inline Var add_row(const Var& x, const Var& b) {
  Tape& t = *x.tape();
  const Tensor &xv = x.value(), &bv = b.value();
  detail::require_rank2("add_row", xv);
  if (bv.rank() != 1 || bv.size() != xv.cols()) {
    throw ShapeError("add_row: bias " + shape_str(bv.shape()) + " does not match " + shape_str(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += bv[c];
  return t.push(std::move(out), t.any_requires_grad({x, b}), [x, b](Tape& tp, const Tensor& g) {
    tp.accumulate(x, g);
    if (tp.requires_grad(b)) {
      Tensor gb(b.value().shape());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
      tp.accumulate(b, gb);
    }
  });
}

// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  detail::require_same("mul", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return t.push(std::move(out), t.any_requires_grad({a, b}), [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= b.value()[i];
      tp.accumulate(a, ga);
    }
    if (tp.requires_grad(b)) {
      Tensor gb = g;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= a.value()[i];
      tp.accumulate(b, gb);
    }
  });
}

inline Var scale(const Var& a, double c) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (double& v : out.values()) v *= c;
  return t.push(std::move(out), t.any_requires_grad({a}), [a, c](Tape& tp, const Tensor& g) {
    Tensor ga = g;
    for (double& v : ga.values()) v *= c;
    tp.accumulate(a, ga);
  });
}

inline Var add_scalar(const Var& a, double c) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (double& v : out.values()) v += c;
  return t.push(std::move(out), t.any_requires_grad({a}), [a](Tape& tp, const Tensor& g) { tp.accumulate(a, g); });
}

inline Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

// Subgradient 0 at x <= 0.
inline Var relu(const Var& a) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (double& v : out.values()) {
    t.note_kink(std::abs(v));
    if (!(v > 0.0)) v = 0.0;
  }
  return t.push(std::move(out), t.any_requires_grad({a}), [a](Tape& tp, const Tensor& g) {
    Tensor ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (!(a.value()[i] > 0.0)) ga[i] = 0.0;
    tp.accumulate(a, ga);
  });
}

inline Var sigmoid(const Var& a) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (double& v : out.values()) v = detail::stable_sigmoid(v);
  Tensor s = out;
  return t.push(std::move(out), t.any_requires_grad({a}), [a, s = std::move(s)](Tape& tp, const Tensor& g) {
    Tensor ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= s[i] * (1.0 - s[i]);
    tp.accumulate(a, ga);
  });
}

// Subgradient 0 at 0.
inline Var abs(const Var& a) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (double& v : out.values()) {
    t.note_kink(std::abs(v));
    v = std::abs(v);
  }
  return t.push(std::move(out), t.any_requires_grad({a}), [a](Tape& tp, const Tensor& g) {
    Tensor ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double x = a.value()[i];
      ga[i] *= x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    }
    tp.accumulate(a, ga);
  });
}

inline Var sum(const Var& a) {
  Tape& t = *a.tape();
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.push(Tensor::scalar(s), t.any_requires_grad({a}), [a](Tape& tp, const Tensor& g) {
    tp.accumulate(a, Tensor(a.value().shape(), g[0]));
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

// Row-wise log-sum-exp over the selected entries; returns a vector of length rows.
inline Var logsumexp_rows(const Var& x, Mask mask = {}) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  detail::require_rank2("logsumexp_rows", xv);
  detail::check_mask("logsumexp_rows", xv, mask);
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out(Shape{m});
  Tensor soft(xv.shape());
  for (std::size_t r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c)
      if (detail::selected(mask, r * n + c)) mx = std::max(mx, xv.at(r, c));
    if (!std::isfinite(mx)) throw PreconditionError("logsumexp_rows: row " + std::to_string(r) + " has no selected entries");
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (!detail::selected(mask, r * n + c)) continue;
      soft.at(r, c) = std::exp(xv.at(r, c) - mx);
      acc += soft.at(r, c);
    }
    for (std::size_t c = 0; c < n; ++c) soft.at(r, c) /= acc;
    out[r] = mx + std::log(acc);
  }
  return t.push(std::move(out), t.any_requires_grad({x}), [x, soft = std::move(soft)](Tape& tp, const Tensor& g) {
    Tensor gx = soft;
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < gx.cols(); ++c) gx.at(r, c) *= g[r];
    tp.accumulate(x, gx);
  });
}

// Row-wise softmax over the selected entries; unselected outputs are 0.
inline Var softmax_rows(const Var& x, Mask mask = {}) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  detail::require_rank2("softmax_rows", xv);
  detail::check_mask("softmax_rows", xv, mask);
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c)
      if (detail::selected(mask, r * n + c)) mx = std::max(mx, xv.at(r, c));
    if (!std::isfinite(mx)) throw PreconditionError("softmax_rows: row " + std::to_string(r) + " has no selected entries");
    double acc = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (!detail::selected(mask, r * n + c)) continue;
      out.at(r, c) = std::exp(xv.at(r, c) - mx);
      acc += out.at(r, c);
    }
    for (std::size_t c = 0; c < n; ++c) out.at(r, c) /= acc;
  }
  Tensor y = out;
  return t.push(std::move(out), t.any_requires_grad({x}), [x, y = std::move(y)](Tape& tp, const Tensor& g) {
    Tensor gx(y.shape());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += y.at(r, c) * g.at(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) gx.at(r, c) = y.at(r, c) * (g.at(r, c) - dot);
    }
    tp.accumulate(x, gx);
  });
}

inline constexpr double kNormFloor = 1e-12;

// Each row divided by its L2 norm. Throws DegenerateEmbedding below kNormFloor.
inline Var normalize_rows(const Var& x) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  Tensor out = xv;
  std::vector<double> norms(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double ss = 0.0;
    for (double v : xv.row(r)) ss += v * v;
    const double nrm = std::sqrt(ss);
    if (nrm < kNormFloor) {
      throw DegenerateEmbedding("normalize_rows: row " + std::to_string(r) + " has norm " + std::to_string(nrm));
    }
    norms[r] = nrm;
    for (double& v : out.row(r)) v /= nrm;
  }
  Tensor y = out;
  return t.push(std::move(out), t.any_requires_grad({x}),
                [x, y = std::move(y), norms = std::move(norms)](Tape& tp, const Tensor& g) {
                  Tensor gx(y.shape());
                  for (std::size_t r = 0; r < y.rows(); ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < y.cols(); ++c) dot += y.values()[r * y.cols() + c] * g.values()[r * y.cols() + c];
                    for (std::size_t c = 0; c < y.cols(); ++c) {
                      const std::size_t i = r * y.cols() + c;
                      gx[i] = (g[i] - y[i] * dot) / norms[r];
                    }
                  }
                  tp.accumulate(x, gx);
                });
}

// Mean softmax cross-entropy of logits[N,C] against integer labels.
inline Var softmax_cross_entropy(const Var& logits, const std::vector<std::size_t>& labels) {
  Tape& t = *logits.tape();
  const Tensor& lv = logits.value();
  detail::require_rank2("softmax_cross_entropy", lv);
  const std::size_t n = lv.rows(), c = lv.cols();
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " + shape_str(lv.shape()));
  }
  Tensor probs(lv.shape());
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] >= c) {
      throw PreconditionError("softmax_cross_entropy: label " + std::to_string(labels[r]) + " out of range [0," +
                              std::to_string(c) + ")");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, lv.at(r, j));
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs.at(r, j) = std::exp(lv.at(r, j) - mx);
      acc += probs.at(r, j);
    }
    for (std::size_t j = 0; j < c; ++j) probs.at(r, j) /= acc;
    total += mx + std::log(acc) - lv.at(r, labels[r]);
  }
  return t.push(Tensor::scalar(total / static_cast<double>(n)), t.any_requires_grad({logits}),
                [logits, labels, probs = std::move(probs)](Tape& tp, const Tensor& g) {
                  Tensor gl = probs;
                  const double inv = g[0] / static_cast<double>(gl.rows());
                  for (std::size_t r = 0; r < gl.rows(); ++r) {
                    gl.at(r, labels[r]) -= 1.0;
                    for (std::size_t j = 0; j < gl.cols(); ++j) gl.at(r, j) *= inv;
                  }
                  tp.accumulate(logits, gl);
                });
}

// [A | B] along columns.
inline Var concat_cols(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  const Tensor &av = a.value(), &bv = b.value();
  detail::require_rank2("concat_cols", av);
  detail::require_rank2("concat_cols", bv);
  if (av.rows() != bv.rows()) {
    throw ShapeError("concat_cols: row counts differ " + shape_str(av.shape()) + " | " + shape_str(bv.shape()));
  }
  const std::size_t m = av.rows(), na = av.cols(), nb = bv.cols();
  Tensor out(Shape{m, na + nb});
  for (std::size_t r = 0; r < m; ++r) {
    std::copy(av.row(r).begin(), av.row(r).end(), out.row(r).begin());
    std::copy(bv.row(r).begin(), bv.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(na));
  }
  return t.push(std::move(out), t.any_requires_grad({a, b}), [a, b, na, nb](Tape& tp, const Tensor& g) {
    const std::size_t m = g.rows();
    Tensor ga(Shape{m, na}), gb(Shape{m, nb});
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < na; ++c) ga.at(r, c) = g.at(r, c);
      for (std::size_t c = 0; c < nb; ++c) gb.at(r, c) = g.at(r, na + c);
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

// Row-major reinterpretation; element order is unchanged.
inline Var reshape(const Var& a, Shape shape) {
  Tape& t = *a.tape();
  Tensor out = a.value().reshaped(std::move(shape));
  return t.push(std::move(out), t.any_requires_grad({a}), [a](Tape& tp, const Tensor& g) {
    tp.accumulate(a, g.reshaped(a.value().shape()));
  });
}

// x * W^T + b with W stored (out x in).
inline Var linear(const Var& x, const Var& w, const Var& b) { return add_row(matmul_nt(x, w), b); }

}  // namespace ad

using Graph = std::function<Var(Tape&, std::span<const Tensor>)>;

struct ForwardBackward {
  double loss = 0.0;
  GradMap grads;
};

// Gradients are returned for trainable parameters only; frozen leaves never
// receive a gradient buffer.
inline ForwardBackward forward_backward(const Graph& graph, const ParamSet& params, std::span<const Tensor> inputs) {
  Tape tape(&params);
  Var loss = graph(tape, inputs);
  if (loss.value().size() != 1) throw ShapeError("forward_backward: graph output " + shape_str(loss.shape()) + " is not a scalar");
  tape.backward(loss);
  return {loss.value()[0], tape.param_grads()};
}

inline double forward_only(const Graph& graph, const ParamSet& params, std::span<const Tensor> inputs) {
  Tape tape(&params, false);
  return graph(tape, inputs).value()[0];
}

class NearKinkError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

// Max over trainable scalars of |analytic - central| / max(1, |analytic|, |central|).
// Throws NearKinkError when the evaluation point lies within 10*epsilon of a
// non-differentiable point; callers re-sample in that case.
inline double check_gradients(const Graph& graph, const ParamSet& params, std::span<const Tensor> inputs,
                              double epsilon = 1e-6) {
  if (!(epsilon > 0.0)) throw PreconditionError("check_gradients: epsilon must be > 0");
  {
    Tape probe(&params, false);
    graph(probe, inputs);
    if (probe.min_kink_distance() < 10.0 * epsilon) {
      throw NearKinkError("check_gradients: evaluation point within " + std::to_string(probe.min_kink_distance()) +
                          " of a kink");
    }
  }
  const ForwardBackward analytic = forward_backward(graph, params, inputs);
  ParamSet work = params;
  double worst = 0.0;
  for (const auto& [name, grad] : analytic.grads) {
    Tensor& w = work.value(name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + epsilon;
      const double up = forward_only(graph, work, inputs);
      w[i] = orig - epsilon;
      const double down = forward_only(graph, work, inputs);
      w[i] = orig;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = grad[i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Exact bitwise comparison (distinguishes -0.0 from 0.0).
inline bool bit_identical(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace fvlink
