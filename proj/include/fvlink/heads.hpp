#pragma once

// Per-modality projection heads into the shared embedding space and the
// gated fusion of a voice/face embedding pair.

#include <cmath>
#include <string>

#include "fvlink/autodiff.hpp"
#include "fvlink/rng.hpp"
#include "fvlink/tensor.hpp"

namespace fvlink {

inline constexpr std::size_t kDefaultEmbeddingDim = 128;
inline constexpr std::size_t kDefaultHiddenDim = 512;

// Weights uniform in +-1/sqrt(fan_in), row-major (out x in).
inline Tensor fan_in_uniform(std::size_t out, std::size_t in, Pcg64& rng) {
  Tensor w(Shape{out, in});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  return w;
}

// Two fully connected layers with a ReLU between them; output rows are
// L2-normalized.
struct ProjectionHead {
  Tensor w1;  // hidden x input
  Tensor b1;  // hidden
  Tensor w2;  // out x hidden
  Tensor b2;  // out

  std::size_t input_dim() const { return w1.cols(); }
  std::size_t hidden_dim() const { return w1.rows(); }
  std::size_t out_dim() const { return w2.rows(); }

  static ProjectionHead init(std::size_t input_dim, std::size_t hidden_dim, std::size_t out_dim, Pcg64& rng) {
    ProjectionHead h;
    h.w1 = fan_in_uniform(hidden_dim, input_dim, rng);
    h.b1 = Tensor(Shape{hidden_dim});
    h.w2 = fan_in_uniform(out_dim, hidden_dim, rng);
    h.b2 = Tensor(Shape{out_dim});
    return h;
  }

  void add_to(ParamSet& ps, const std::string& prefix, bool trainable = true) const {
    ps.add(prefix + ".w1", w1, trainable);
    ps.add(prefix + ".b1", b1, trainable);
    ps.add(prefix + ".w2", w2, trainable);
    ps.add(prefix + ".b2", b2, trainable);
  }

  static ProjectionHead from(const ParamSet& ps, const std::string& prefix) {
    return {ps.value(prefix + ".w1"), ps.value(prefix + ".b1"), ps.value(prefix + ".w2"), ps.value(prefix + ".b2")};
  }
};

// Per-dimension sigmoid gate over the concatenated pair.
struct GateParams {
  Tensor wg;  // out x 2*out
  Tensor bg;  // out

  static GateParams init(std::size_t out_dim, Pcg64& rng) {
    return {fan_in_uniform(out_dim, 2 * out_dim, rng), Tensor(Shape{out_dim})};
  }

  void add_to(ParamSet& ps, const std::string& prefix, bool trainable = true) const {
    ps.add(prefix + ".wg", wg, trainable);
    ps.add(prefix + ".bg", bg, trainable);
  }

  static GateParams from(const ParamSet& ps, const std::string& prefix) {
    return {ps.value(prefix + ".wg"), ps.value(prefix + ".bg")};
  }
};

namespace ad {

// rows = normalize(W2 relu(W1 x + b1) + b2), reading `<prefix>.w1` etc. from the tape.
inline Var project(Tape& tape, const std::string& prefix, const Var& x) {
  const Var hidden = relu(linear(x, tape.param(prefix + ".w1"), tape.param(prefix + ".b1")));
  return normalize_rows(linear(hidden, tape.param(prefix + ".w2"), tape.param(prefix + ".b2")));
}

// gate = sigmoid(Wg [v;f] + bg); out = normalize(gate*v + (1-gate)*f)
inline Var gated_fuse(Tape& tape, const std::string& prefix, const Var& v, const Var& f) {
  const Var gate = sigmoid(linear(concat_cols(v, f), tape.param(prefix + ".wg"), tape.param(prefix + ".bg")));
  const Var complement = add_scalar(scale(gate, -1.0), 1.0);
  return normalize_rows(add(mul(gate, v), mul(complement, f)));
}

}  // namespace ad

namespace detail {

inline Tensor as_rows(const Tensor& x) { return x.rank() == 1 ? x.reshaped(Shape{1, x.size()}) : x; }

}  // namespace detail

// x is one row (rank 1) or a row batch; the result has the same rank.
inline Tensor project(const ProjectionHead& head, const Tensor& x) {
  const Tensor rows = detail::as_rows(x);
  if (rows.cols() != head.input_dim()) {
    throw ShapeError("project: input has " + std::to_string(rows.cols()) + " columns, head expects " +
                     std::to_string(head.input_dim()));
  }
  ParamSet ps;
  head.add_to(ps, "head", false);
  Tape tape(&ps, false);
  Tensor out = ad::project(tape, "head", tape.constant(rows)).value();
  return x.rank() == 1 ? out.reshaped(Shape{out.size()}) : out;
}

inline Tensor gated_fuse(const GateParams& gate, const Tensor& v, const Tensor& f) {
  const Tensor vr = detail::as_rows(v), fr = detail::as_rows(f);
  if (vr.shape() != fr.shape() || vr.cols() != gate.bg.size()) {
    throw ShapeError("gated_fuse: v " + shape_str(v.shape()) + ", f " + shape_str(f.shape()) + ", gate width " +
                     std::to_string(gate.bg.size()));
  }
  ParamSet ps;
  gate.add_to(ps, "gate", false);
  Tape tape(&ps, false);
  Tensor out = ad::gated_fuse(tape, "gate", tape.constant(vr), tape.constant(fr)).value();
  return v.rank() == 1 ? out.reshaped(Shape{out.size()}) : out;
}

}  // namespace fvlink
