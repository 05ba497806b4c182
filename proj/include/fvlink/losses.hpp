#pragma once

// Training objectives: symmetric InfoNCE with in-batch hard negative mining,
// softmax classification, and the orthogonal projection loss.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fvlink/autodiff.hpp"
#include "fvlink/tensor.hpp"

namespace fvlink {

inline constexpr double kUnitTolerance = 1e-9;

struct LossWeights {
  double contrastive = 1.0;
  double classification = 1.0;
  double opl = 1.0;
  double temperature = 0.07;
  // Hard negatives kept per anchor; nullopt keeps every negative.
  std::optional<std::size_t> mining_depth = 8;

  void validate() const {
    if (!(temperature > 0.0)) throw PreconditionError("temperature must be > 0");
    if (contrastive < 0.0 || classification < 0.0 || opl < 0.0) throw PreconditionError("loss weights must be >= 0");
    if (!(contrastive > 0.0 || classification > 0.0 || opl > 0.0)) {
      throw PreconditionError("at least one loss weight must be > 0");
    }
    if (mining_depth && *mining_depth == 0) throw PreconditionError("mining depth must be positive or 'all'");
  }
};

namespace detail {

inline void require_unit_rows(const char* op, const Tensor& t) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double ss = 0.0;
    for (double v : t.row(r)) ss += v * v;
    if (std::abs(std::sqrt(ss) - 1.0) > kUnitTolerance) {
      throw PreconditionError(std::string(op) + ": row " + std::to_string(r) + " is not unit-norm");
    }
  }
}

// Diagonal plus the `depth` largest off-diagonal entries of each row. Ties
// go to the lower column index. Records the gap to the first rejected
// negative as a kink so gradient checks can avoid selection flips.
inline Mask hard_negative_mask(Tape& tape, const Tensor& sim, std::size_t depth) {
  const std::size_t n = sim.rows();
  Mask mask(n * n, 0);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    mask[i * n + i] = 1;
    order.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim.at(i, a) > sim.at(i, b); });
    const std::size_t keep = std::min(depth, order.size());
    for (std::size_t k = 0; k < keep; ++k) mask[i * n + order[k]] = 1;
    if (keep < order.size()) tape.note_kink(sim.at(i, order[keep - 1]) - sim.at(i, order[keep]));
  }
  return mask;
}

// Mean over rows of (logsumexp over the mined set - diagonal entry).
inline Var directional_infonce(Tape& tape, const Var& sim, std::optional<std::size_t> depth) {
  const std::size_t n = sim.value().rows();
  const std::size_t k = depth ? std::min(*depth, n - 1) : n - 1;
  Mask mask = k < n - 1 ? hard_negative_mask(tape, sim.value(), k) : Mask{};
  const Var lse = ad::logsumexp_rows(sim, std::move(mask));
  const Var diag = ad::sum(ad::mul(sim, tape.constant(Tensor::identity(n))));
  return ad::scale(ad::sub(ad::sum(lse), diag), 1.0 / static_cast<double>(n));
}

}  // namespace detail

namespace ad {

// V, F: N x d unit rows with row i of each from the same identity.
inline Var symmetric_contrastive(Tape& tape, const Var& voice, const Var& face, double temperature,
                                 std::optional<std::size_t> depth) {
  const Tensor &vv = voice.value(), &fv = face.value();
  if (vv.rank() != 2 || vv.shape() != fv.shape()) {
    throw ShapeError("symmetric_contrastive: " + shape_str(vv.shape()) + " vs " + shape_str(fv.shape()));
  }
  if (vv.rows() < 2) throw PreconditionError("symmetric_contrastive: need at least 2 pairs");
  if (!(temperature > 0.0)) throw PreconditionError("symmetric_contrastive: temperature must be > 0");
  if (depth && *depth == 0) throw PreconditionError("symmetric_contrastive: mining depth must be positive");
  fvlink::detail::require_unit_rows("symmetric_contrastive", vv);
  fvlink::detail::require_unit_rows("symmetric_contrastive", fv);
  const double inv_t = 1.0 / temperature;
  const Var v2f = fvlink::detail::directional_infonce(tape, scale(matmul_nt(voice, face), inv_t), depth);
  const Var f2v = fvlink::detail::directional_infonce(tape, scale(matmul_nt(face, voice), inv_t), depth);
  return scale(add(v2f, f2v), 0.5);
}

inline Var classification_loss(const Var& logits, const std::vector<std::size_t>& labels) {
  return softmax_cross_entropy(logits, labels);
}

// (1 - mean same-class cosine) + |mean cross-class cosine| over pairs i < j.
// A missing pair set contributes s = 1 or d = 0.
inline Var opl(Tape& tape, const Var& features, const std::vector<std::size_t>& labels) {
  const Tensor& fv = features.value();
  if (fv.rank() != 2) throw ShapeError("opl: expected a matrix, got " + shape_str(fv.shape()));
  const std::size_t n = fv.rows();
  if (n < 2) throw PreconditionError("opl: need at least 2 samples");
  if (labels.size() != n) throw ShapeError("opl: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  Tensor same(Shape{n, n}), cross(Shape{n, n});
  std::size_t n_same = 0, n_cross = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (labels[i] == labels[j]) {
        same.at(i, j) = 1.0;
        ++n_same;
      } else {
        cross.at(i, j) = 1.0;
        ++n_cross;
      }
    }
  }
  const Var gram = matmul_nt(features, features);
  Var loss = tape.constant(Tensor::scalar(0.0));
  if (n_same > 0) {
    const Var s = scale(sum(mul(gram, tape.constant(same))), 1.0 / static_cast<double>(n_same));
    loss = add_scalar(scale(s, -1.0), 1.0);
  }
  if (n_cross > 0) {
    const Var d = scale(sum(mul(gram, tape.constant(cross))), 1.0 / static_cast<double>(n_cross));
    loss = add(loss, abs(d));
  }
  return loss;
}

}  // namespace ad

struct LossBreakdown {
  double total = 0.0;
  double contrastive = 0.0;
  double classification = 0.0;
  double opl = 0.0;
};

// Everything the combined objective needs from one batch.
struct LossBatch {
  Var voice;   // N x d unit rows
  Var face;    // N x d unit rows
  Var fused;   // N x d unit rows
  Var logits;  // N x C
  std::vector<std::size_t> labels;
};

// Weighted sum; every component is evaluated for reporting even when its
// weight is zero, but only weighted terms enter the differentiated total.
inline Var total_loss(Tape& tape, const LossWeights& w, const LossBatch& batch, LossBreakdown* breakdown = nullptr) {
  w.validate();
  const Var con = ad::symmetric_contrastive(tape, batch.voice, batch.face, w.temperature, w.mining_depth);
  const Var cls = ad::classification_loss(batch.logits, batch.labels);
  const Var orth = ad::opl(tape, batch.fused, batch.labels);
  std::optional<Var> total;
  const auto accumulate = [&](const Var& term, double weight) {
    if (weight == 0.0) return;
    const Var scaled = ad::scale(term, weight);
    total = total ? ad::add(*total, scaled) : scaled;
  };
  accumulate(con, w.contrastive);
  accumulate(cls, w.classification);
  accumulate(orth, w.opl);
  if (breakdown) {
    breakdown->contrastive = con.value()[0];
    breakdown->classification = cls.value()[0];
    breakdown->opl = orth.value()[0];
    breakdown->total = total->value()[0];
  }
  return *total;
}

// Value-only entry points.

inline double symmetric_contrastive(const Tensor& voice, const Tensor& face, double temperature,
                                    std::optional<std::size_t> depth) {
  Tape tape(nullptr, false);
  return ad::symmetric_contrastive(tape, tape.constant(voice), tape.constant(face), temperature, depth).value()[0];
}

inline double classification_loss(const Tensor& logits, const std::vector<std::size_t>& labels) {
  Tape tape(nullptr, false);
  return ad::classification_loss(tape.constant(logits), labels).value()[0];
}

inline double opl(const Tensor& features, const std::vector<std::size_t>& labels) {
  Tape tape(nullptr, false);
  return ad::opl(tape, tape.constant(features), labels).value()[0];
}

}  // namespace fvlink
