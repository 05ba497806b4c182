#pragma once

// The full trainable stack. Per modality:
//
//   x -> projection head -> unit row h (out_dim)
//     -> h viewed as (out_dim / width) tokens of `width`
//     -> tokens + attention(tokens)        (shared block, LoRA on q/v)
//     -> flatten -> L2-normalize           = the modality embedding
//
// Voice and face embeddings are scored by cosine similarity. The gate fuses
// an embedding pair for the classifier and the orthogonal projection loss.

#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fvlink/adapters.hpp"
#include "fvlink/autodiff.hpp"
#include "fvlink/datamodel.hpp"
#include "fvlink/heads.hpp"
#include "fvlink/rng.hpp"
#include "fvlink/tensor.hpp"
#include "fvlink/textio.hpp"

namespace fvlink {

enum class ParamGroup { heads, gate, classifier, lora, base };

inline std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::heads: return "heads";
    case ParamGroup::gate: return "gate";
    case ParamGroup::classifier: return "classifier";
    case ParamGroup::lora: return "lora";
    case ParamGroup::base: return "base";
  }
  return "?";
}

inline ParamGroup parse_group(std::string_view s) {
  if (s == "heads") return ParamGroup::heads;
  if (s == "gate") return ParamGroup::gate;
  if (s == "classifier") return ParamGroup::classifier;
  if (s == "lora") return ParamGroup::lora;
  throw PreconditionError("unknown trainable group '" + std::string(s) + "' (expected heads, gate, classifier or lora)");
}

// Which group a parameter name belongs to. `base` tensors are never trainable.
inline ParamGroup group_of(std::string_view name) {
  const auto starts = [&](std::string_view p) { return name.substr(0, p.size()) == p; };
  const auto ends = [&](std::string_view s) { return name.size() >= s.size() && name.substr(name.size() - s.size()) == s; };
  if (starts("voice_head.") || starts("face_head.")) return ParamGroup::heads;
  if (starts("gate.")) return ParamGroup::gate;
  if (starts("classifier.")) return ParamGroup::classifier;
  if (starts("attn.") && (ends(".lora_a") || ends(".lora_b"))) return ParamGroup::lora;
  return ParamGroup::base;
}

struct ModelConfig {
  std::size_t voice_dim = 0;
  std::size_t face_dim = 0;
  std::size_t hidden_dim = kDefaultHiddenDim;
  std::size_t out_dim = kDefaultEmbeddingDim;
  std::size_t attn_width = kDefaultAttentionWidth;
  std::size_t lora_rank = kDefaultLoraRank;
  // Zero means "same as the rank" (scaling 1).
  double lora_alpha = 0.0;
  std::vector<std::string> lora_targets = {"q", "v"};
  std::size_t num_classes = 0;

  double effective_alpha() const { return lora_alpha > 0.0 ? lora_alpha : static_cast<double>(lora_rank); }
  std::size_t tokens() const { return out_dim / attn_width; }

  void validate() const {
    if (voice_dim == 0 || face_dim == 0) throw PreconditionError("model: input dimensions must be positive");
    if (hidden_dim == 0 || out_dim == 0 || attn_width == 0) throw PreconditionError("model: widths must be positive");
    if (out_dim % attn_width != 0) {
      throw PreconditionError("model: out_dim " + std::to_string(out_dim) + " is not a multiple of attn_width " +
                              std::to_string(attn_width));
    }
    if (num_classes < 2) throw PreconditionError("model: need at least 2 classes");
    if (lora_alpha < 0.0) throw PreconditionError("model: lora_alpha must be >= 0");
    const auto on = parse_lora_targets(lora_targets);
    const bool any = on[0] || on[1] || on[2] || on[3];
    if (any && (lora_rank == 0 || lora_rank > attn_width)) {
      throw PreconditionError("model: lora_rank must lie in [1, attn_width]");
    }
  }
};

class Model {
 public:
  Model(ModelConfig config, ParamSet params) : config_(std::move(config)), params_(std::move(params)) {}

  // Initialization order (and thus the random stream) is fixed: voice head,
  // face head, gate, classifier, attention block.
  static Model init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Pcg64 rng(seed);
    ParamSet ps;
    ProjectionHead::init(config.voice_dim, config.hidden_dim, config.out_dim, rng).add_to(ps, "voice_head");
    ProjectionHead::init(config.face_dim, config.hidden_dim, config.out_dim, rng).add_to(ps, "face_head");
    GateParams::init(config.out_dim, rng).add_to(ps, "gate");
    ps.add("classifier.w", fan_in_uniform(config.num_classes, config.out_dim, rng));
    ps.add("classifier.b", Tensor(Shape{config.num_classes}));
    MiniAttentionBlock::init(config.attn_width, config.lora_rank, config.effective_alpha(),
                             parse_lora_targets(config.lora_targets), rng)
        .add_to(ps, "attn");
    return Model(config, std::move(ps));
  }

  const ModelConfig& config() const { return config_; }
  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }

  // Marks exactly the parameters in `groups` trainable; base tensors stay frozen.
  void set_trainable_groups(const std::set<ParamGroup>& groups) {
    for (auto& [name, p] : params_) {
      const ParamGroup g = group_of(name);
      p.trainable = g != ParamGroup::base && groups.count(g) != 0;
    }
  }

  // The same model with every LoRA tensor removed: the frozen base.
  Model without_adapters() const {
    Model out = *this;
    std::vector<std::string> drop;
    for (const auto& [name, p] : params_)
      if (group_of(name) == ParamGroup::lora) drop.push_back(name);
    for (const auto& n : drop) out.params_.erase(n);
    return out;
  }

  // Adapters folded into their base weights.
  Model merged() const {
    Model out = without_adapters();
    const MiniAttentionBlock blk = MiniAttentionBlock::from(params_, "attn", config_.effective_alpha()).merged();
    for (std::size_t i = 0; i < 4; ++i) {
      out.params_.value(std::string("attn.") + kAttnProjNames[i] + ".weight") = blk.proj[i].weight;
    }
    return out;
  }

  // Unit-norm embeddings for a row batch of one modality.
  Var embed(Tape& tape, Modality m, const Var& x) const {
    const std::size_t n = x.value().rows();
    const Var h = ad::project(tape, m == Modality::voice ? "voice_head" : "face_head", x);
    const std::size_t t = config_.tokens();
    const Var tokens = ad::reshape(h, Shape{n * t, config_.attn_width});
    const Var mixed = ad::add(tokens, ad::attention(tape, "attn", tokens, t, config_.effective_alpha()));
    return ad::normalize_rows(ad::reshape(mixed, Shape{n, config_.out_dim}));
  }

  Var fuse(Tape& tape, const Var& voice, const Var& face) const { return ad::gated_fuse(tape, "gate", voice, face); }

  Var logits(Tape& tape, const Var& fused) const {
    return ad::linear(fused, tape.param("classifier.w"), tape.param("classifier.b"));
  }

  // Embeds records of one modality, one row per record id, forward only.
  Tensor embed_records(const EmbeddingStore& store, Modality m, const std::vector<std::string>& ids) const {
    if (store.dim(m) != (m == Modality::voice ? config_.voice_dim : config_.face_dim)) {
      throw ShapeError("model expects " + std::string(to_string(m)) + " dimension " +
                       std::to_string(m == Modality::voice ? config_.voice_dim : config_.face_dim) + ", store has " +
                       std::to_string(store.dim(m)));
    }
    const std::size_t dim = store.dim(m);
    Tensor x(Shape{ids.size(), dim});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const EmbeddingRecord& r = store.get(ids[i]);
      if (r.modality != m) throw PreconditionError("record " + ids[i] + " is not a " + std::string(to_string(m)) + " record");
      std::copy(r.vector.begin(), r.vector.end(), x.row(i).begin());
    }
    Tape tape(&params_, false);
    return embed(tape, m, tape.constant(std::move(x))).value();
  }

  Checkpoint to_checkpoint(std::map<std::string, std::string> meta = {}) const {
    meta["voice_dim"] = std::to_string(config_.voice_dim);
    meta["face_dim"] = std::to_string(config_.face_dim);
    meta["hidden_dim"] = std::to_string(config_.hidden_dim);
    meta["out_dim"] = std::to_string(config_.out_dim);
    meta["attn_width"] = std::to_string(config_.attn_width);
    meta["lora_rank"] = std::to_string(config_.lora_rank);
    meta["lora_alpha"] = text::format_double(config_.effective_alpha());
    std::string targets;
    for (const auto& t : config_.lora_targets) targets += (targets.empty() ? "" : ",") + t;
    meta["lora_targets"] = targets;
    meta["num_classes"] = std::to_string(config_.num_classes);
    return Checkpoint{params_, std::move(meta)};
  }

  static Model from_checkpoint(const Checkpoint& ckpt) {
    const auto need = [&](const std::string& key) -> const std::string& {
      auto it = ckpt.meta.find(key);
      if (it == ckpt.meta.end()) throw ParseError("", 0, "checkpoint is missing meta '" + key + "'");
      return it->second;
    };
    const auto need_size = [&](const std::string& key) {
      auto v = text::parse_int(need(key));
      if (!v || *v < 0) throw ParseError("", 0, "checkpoint meta '" + key + "' is not a count");
      return static_cast<std::size_t>(*v);
    };
    ModelConfig c;
    c.voice_dim = need_size("voice_dim");
    c.face_dim = need_size("face_dim");
    c.hidden_dim = need_size("hidden_dim");
    c.out_dim = need_size("out_dim");
    c.attn_width = need_size("attn_width");
    c.lora_rank = need_size("lora_rank");
    auto alpha = text::parse_double(need("lora_alpha"));
    if (!alpha) throw ParseError("", 0, "checkpoint meta 'lora_alpha' is not a number");
    c.lora_alpha = *alpha;
    c.lora_targets.clear();
    for (auto t : text::split(need("lora_targets"), ','))
      if (!t.empty()) c.lora_targets.emplace_back(t);
    c.num_classes = need_size("num_classes");
    c.validate();
    Model m(c, ckpt.params);
    m.check_shapes();
    return m;
  }

 private:
  void check_shapes() const {
    const Model reference = Model::init(config_, 0);
    for (const auto& [name, p] : reference.params_) {
      if (!params_.contains(name)) throw ParseError("", 0, "checkpoint is missing tensor '" + name + "'");
      if (params_.value(name).shape() != p.value.shape()) {
        throw ParseError("", 0, "tensor '" + name + "' has shape " + shape_str(params_.value(name).shape()) +
                                    ", expected " + shape_str(p.value.shape()));
      }
    }
    for (const auto& [name, p] : params_)
      if (!reference.params_.contains(name)) throw ParseError("", 0, "unexpected tensor '" + name + "'");
  }

  ModelConfig config_;
  ParamSet params_;
};

}  // namespace fvlink
