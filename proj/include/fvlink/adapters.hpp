#pragma once

// Low-rank adapters on frozen linear maps, and the single-head attention
// block they are injected into.
//
//   y = x W^T + b + (alpha / r) * (x A^T) B^T       A: r x d_in, B: d_out x r
//
// B starts at zero, so a freshly adapted layer reproduces its base exactly.

#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fvlink/autodiff.hpp"
#include "fvlink/heads.hpp"
#include "fvlink/rng.hpp"
#include "fvlink/tensor.hpp"

namespace fvlink {

inline constexpr std::size_t kDefaultLoraRank = 4;
inline constexpr std::size_t kDefaultAttentionWidth = 16;
inline constexpr double kLoraInitStd = 0.02;

struct LoraAdapter {
  Tensor a;  // r x d_in
  Tensor b;  // d_out x r
  double alpha = 1.0;

  std::size_t rank() const { return a.rows(); }
  double scaling() const { return alpha / static_cast<double>(rank()); }
};

// A frozen linear map, optionally carrying a trainable adapter.
struct LoraLinear {
  Tensor weight;  // d_out x d_in
  Tensor bias;    // d_out
  std::optional<LoraAdapter> adapter;

  std::size_t d_in() const { return weight.cols(); }
  std::size_t d_out() const { return weight.rows(); }

  static LoraLinear init(std::size_t d_in, std::size_t d_out, std::optional<std::size_t> rank, double alpha, Pcg64& rng) {
    LoraLinear l;
    l.weight = fan_in_uniform(d_out, d_in, rng);
    l.bias = Tensor(Shape{d_out});
    if (rank) {
      if (*rank == 0 || *rank > std::min(d_in, d_out)) {
        throw PreconditionError("lora rank " + std::to_string(*rank) + " outside [1, min(d_in, d_out)]");
      }
      if (!(alpha > 0.0)) throw PreconditionError("lora alpha must be > 0");
      LoraAdapter ad;
      ad.a = Tensor(Shape{*rank, d_in});
      for (double& v : ad.a.values()) v = rng.normal(0.0, kLoraInitStd);
      ad.b = Tensor(Shape{d_out, *rank});
      ad.alpha = alpha;
      l.adapter = std::move(ad);
    }
    return l;
  }

  // Base tensors are always frozen; adapter tensors follow `adapter_trainable`.
  void add_to(ParamSet& ps, const std::string& prefix, bool adapter_trainable = true) const {
    ps.add(prefix + ".weight", weight, false);
    ps.add(prefix + ".bias", bias, false);
    if (adapter) {
      ps.add(prefix + ".lora_a", adapter->a, adapter_trainable);
      ps.add(prefix + ".lora_b", adapter->b, adapter_trainable);
    }
  }

  static LoraLinear from(const ParamSet& ps, const std::string& prefix, double alpha) {
    LoraLinear l{ps.value(prefix + ".weight"), ps.value(prefix + ".bias"), std::nullopt};
    if (ps.contains(prefix + ".lora_a")) {
      l.adapter = LoraAdapter{ps.value(prefix + ".lora_a"), ps.value(prefix + ".lora_b"), alpha};
    }
    return l;
  }
};

namespace ad {

// Reads `<prefix>.weight/.bias` and, when present on the tape's parameter
// set, the `<prefix>.lora_a/.lora_b` pair.
inline Var lora_linear(Tape& tape, const std::string& prefix, const Var& x, double alpha) {
  Var y = linear(x, tape.param(prefix + ".weight"), tape.param(prefix + ".bias"));
  if (tape.has_param(prefix + ".lora_a")) {
    const Var a = tape.param(prefix + ".lora_a");
    const Var b = tape.param(prefix + ".lora_b");
    const double s = alpha / static_cast<double>(a.value().rows());
    y = add(y, scale(matmul_nt(matmul_nt(x, a), b), s));
  }
  return y;
}

// Single-head attention over X (tokens x d). Rows are grouped into
// independent sequences of `seq_len` tokens; attention never crosses a group.
inline Var attention(Tape& tape, const std::string& prefix, const Var& x, std::size_t seq_len, double alpha) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || seq_len == 0 || xv.rows() % seq_len != 0) {
    throw ShapeError("attention: " + shape_str(xv.shape()) + " is not a whole number of " + std::to_string(seq_len) +
                     "-token sequences");
  }
  const std::size_t d = xv.cols();
  const Var q = lora_linear(tape, prefix + ".wq", x, alpha);
  const Var k = lora_linear(tape, prefix + ".wk", x, alpha);
  const Var v = lora_linear(tape, prefix + ".wv", x, alpha);
  const Var scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  Mask mask;
  const std::size_t n = xv.rows();
  if (seq_len != n) {
    mask.assign(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = (i / seq_len) * seq_len; j < (i / seq_len + 1) * seq_len; ++j) mask[i * n + j] = 1;
  }
  const Var probs = softmax_rows(scores, std::move(mask));
  return lora_linear(tape, prefix + ".wo", matmul(probs, v), alpha);
}

}  // namespace ad

inline Tensor lora_forward(const LoraLinear& layer, const Tensor& x) {
  const Tensor rows = detail::as_rows(x);
  if (rows.cols() != layer.d_in()) {
    throw ShapeError("lora_forward: input has " + std::to_string(rows.cols()) + " columns, layer expects " +
                     std::to_string(layer.d_in()));
  }
  ParamSet ps;
  layer.add_to(ps, "layer", false);
  Tape tape(&ps, false);
  const double alpha = layer.adapter ? layer.adapter->alpha : 1.0;
  Tensor out = ad::lora_linear(tape, "layer", tape.constant(rows), alpha).value();
  return x.rank() == 1 ? out.reshaped(Shape{out.size()}) : out;
}

// Folds the adapter into the base: W' = W + (alpha/r) B A.
inline LoraLinear lora_merge(const LoraLinear& layer) {
  LoraLinear merged{layer.weight, layer.bias, std::nullopt};
  if (!layer.adapter) return merged;
  const LoraAdapter& ad = *layer.adapter;
  const double s = ad.scaling();
  for (std::size_t o = 0; o < layer.d_out(); ++o) {
    for (std::size_t i = 0; i < layer.d_in(); ++i) {
      double acc = 0.0;
      for (std::size_t r = 0; r < ad.rank(); ++r) acc += ad.b.at(o, r) * ad.a.at(r, i);
      merged.weight.at(o, i) += s * acc;
    }
  }
  return merged;
}

enum class AttnProj { q = 0, k = 1, v = 2, o = 3 };

inline constexpr std::array<const char*, 4> kAttnProjNames = {"wq", "wk", "wv", "wo"};

// Parses a target list such as "q,v" into projection flags.
inline std::array<bool, 4> parse_lora_targets(const std::vector<std::string>& targets) {
  std::array<bool, 4> on{};
  for (const auto& t : targets) {
    if (t == "q") on[0] = true;
    else if (t == "k") on[1] = true;
    else if (t == "v") on[2] = true;
    else if (t == "o") on[3] = true;
    else throw PreconditionError("unknown lora target '" + t + "' (expected q, k, v or o)");
  }
  return on;
}

struct MiniAttentionBlock {
  std::array<LoraLinear, 4> proj;  // indexed by AttnProj

  std::size_t width() const { return proj[0].d_in(); }

  // Adapted projections default to q and v.
  static MiniAttentionBlock init(std::size_t width, std::size_t rank, double alpha, std::array<bool, 4> adapted,
                                 Pcg64& rng) {
    MiniAttentionBlock blk;
    for (std::size_t i = 0; i < 4; ++i) {
      blk.proj[i] = LoraLinear::init(width, width, adapted[i] ? std::optional<std::size_t>(rank) : std::nullopt, alpha, rng);
    }
    return blk;
  }

  void add_to(ParamSet& ps, const std::string& prefix, bool adapter_trainable = true) const {
    for (std::size_t i = 0; i < 4; ++i) proj[i].add_to(ps, prefix + "." + kAttnProjNames[i], adapter_trainable);
  }

  static MiniAttentionBlock from(const ParamSet& ps, const std::string& prefix, double alpha) {
    MiniAttentionBlock blk;
    for (std::size_t i = 0; i < 4; ++i) blk.proj[i] = LoraLinear::from(ps, prefix + "." + kAttnProjNames[i], alpha);
    return blk;
  }

  double alpha() const {
    for (const auto& p : proj)
      if (p.adapter) return p.adapter->alpha;
    return 1.0;
  }

  MiniAttentionBlock without_adapters() const {
    MiniAttentionBlock out = *this;
    for (auto& p : out.proj) p.adapter.reset();
    return out;
  }

  MiniAttentionBlock merged() const {
    MiniAttentionBlock out;
    for (std::size_t i = 0; i < 4; ++i) out.proj[i] = lora_merge(proj[i]);
    return out;
  }
};

// out = Wo( softmax(Q K^T / sqrt(d)) V ) for one token sequence X (tokens x d).
inline Tensor attention_forward(const MiniAttentionBlock& block, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != block.width()) {
    throw ShapeError("attention_forward: expected (tokens x " + std::to_string(block.width()) + "), got " +
                     shape_str(x.shape()));
  }
  ParamSet ps;
  block.add_to(ps, "attn", false);
  Tape tape(&ps, false);
  return ad::attention(tape, "attn", tape.constant(x), x.rows(), block.alpha()).value();
}

inline std::size_t trainable_param_count(const ParamSet& params) {
  std::size_t n = 0;
  for (const auto& [name, p] : params)
    if (p.trainable) n += p.value.size();
  return n;
}

}  // namespace fvlink
