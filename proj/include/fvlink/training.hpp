#pragma once

// AdamW with decoupled weight decay, per-stage cosine annealing, and the
// staged training loop over identity-paired batches.

#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "fvlink/config.hpp"
#include "fvlink/datamodel.hpp"
#include "fvlink/losses.hpp"
#include "fvlink/model.hpp"
#include "fvlink/rng.hpp"
#include "fvlink/tensor.hpp"

namespace fvlink {

// lr_min + (lr_max - lr_min) * (1 + cos(pi * step / total)) / 2
inline double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min) {
  if (total_steps < 1) throw PreconditionError("cosine_lr: total_steps must be >= 1");
  if (step > total_steps) {
    throw PreconditionError("cosine_lr: step " + std::to_string(step) + " exceeds total " + std::to_string(total_steps));
  }
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

struct AdamWState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t t = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

// One AdamW update of every trainable parameter:
//   p <- p - lr*wd*p - lr * m_hat / (sqrt(v_hat) + eps)
// `grads` must cover exactly the trainable parameters.
inline void adamw_step(ParamSet& params, const GradMap& grads, AdamWState& state, double lr) {
  std::size_t trainable = 0;
  for (const auto& [name, p] : params) {
    if (!p.trainable) continue;
    ++trainable;
    auto g = grads.find(name);
    if (g == grads.end()) throw PreconditionError("adamw_step: missing gradient for '" + name + "'");
    if (g->second.shape() != p.value.shape()) {
      throw ShapeError("adamw_step: gradient for '" + name + "' has shape " + shape_str(g->second.shape()));
    }
  }
  for (const auto& [name, g] : grads) {
    if (!params.contains(name) || !params.get(name).trainable) {
      throw PreconditionError("adamw_step: gradient for non-trainable or unknown parameter '" + name + "'");
    }
  }
  (void)trainable;

  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    if (!p.trainable) continue;
    const Tensor& g = grads.at(name);
    auto [mit, m_new] = state.m.try_emplace(name, p.value.shape());
    auto [vit, v_new] = state.v.try_emplace(name, p.value.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.value[i] -= lr * state.weight_decay * p.value[i] + lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

struct StageSpec {
  std::size_t epochs = 1;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::set<ParamGroup> trainable_groups;
  double lr_min = 0.0;

  void validate() const {
    if (epochs == 0) throw PreconditionError("stage: epochs must be positive");
    if (!(learning_rate > 0.0)) throw PreconditionError("stage: learning_rate must be > 0");
    if (batch_size == 0) throw PreconditionError("stage: batch_size must be positive");
    if (trainable_groups.empty()) throw PreconditionError("stage: trainable_groups must be non-empty");
    if (lr_min < 0.0) throw PreconditionError("stage: lr_min must be >= 0");
    if (trainable_groups.count(ParamGroup::base)) throw PreconditionError("stage: base tensors cannot be trained");
  }

  bool operator==(const StageSpec&) const = default;
};

struct TrainConfig {
  std::vector<StageSpec> stages;
  std::uint64_t seed = 0;
  LossWeights weights;
  double weight_decay = 0.01;
  ModelConfig model;  // voice_dim, face_dim and num_classes are filled from the data

  // Classifier head warm-up, then LoRA fine-tuning at a reduced rate.
  static TrainConfig defaults() {
    TrainConfig c;
    c.stages.push_back(StageSpec{5, 1e-3, 32, {ParamGroup::classifier}, 0.0});
    c.stages.push_back(StageSpec{15, 1e-4, 16, {ParamGroup::lora}, 0.0});
    return c;
  }

  void validate() const {
    if (stages.empty()) throw PreconditionError("train config: at least one stage is required");
    for (const auto& s : stages) s.validate();
    weights.validate();
    if (weight_decay < 0.0) throw PreconditionError("train config: weight_decay must be >= 0");
  }

  // Canonical text form; hashed into checkpoint metadata.
  std::string describe() const {
    std::string out = "seed = " + std::to_string(seed) + "\n";
    out += "stages = " + std::to_string(stages.size()) + "\n";
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto& s = stages[i];
      const std::string p = "stage" + std::to_string(i + 1) + ".";
      out += p + "epochs = " + std::to_string(s.epochs) + "\n";
      out += p + "lr = " + text::format_short(s.learning_rate) + "\n";
      out += p + "lr_min = " + text::format_short(s.lr_min) + "\n";
      out += p + "batch_size = " + std::to_string(s.batch_size) + "\n";
      std::string groups;
      for (auto g : s.trainable_groups) groups += (groups.empty() ? "" : ",") + std::string(to_string(g));
      out += p + "groups = " + groups + "\n";
    }
    out += "w_contrastive = " + text::format_short(weights.contrastive) + "\n";
    out += "w_classification = " + text::format_short(weights.classification) + "\n";
    out += "w_opl = " + text::format_short(weights.opl) + "\n";
    out += "temperature = " + text::format_short(weights.temperature) + "\n";
    out += "mining_depth = " + (weights.mining_depth ? std::to_string(*weights.mining_depth) : std::string("all")) + "\n";
    out += "weight_decay = " + text::format_short(weight_decay) + "\n";
    out += "hidden_dim = " + std::to_string(model.hidden_dim) + "\n";
    out += "out_dim = " + std::to_string(model.out_dim) + "\n";
    out += "attn_width = " + std::to_string(model.attn_width) + "\n";
    out += "lora_rank = " + std::to_string(model.lora_rank) + "\n";
    out += "lora_alpha = " + text::format_short(model.effective_alpha()) + "\n";
    std::string targets;
    for (const auto& t : model.lora_targets) targets += (targets.empty() ? "" : ",") + t;
    out += "lora_targets = " + targets + "\n";
    return out;
  }
};

// Applies `key = value` entries on top of defaults(). Stage keys are
// `stageN.{epochs,lr,lr_min,batch_size,groups}`; `stages = N` resizes the
// list, and stages beyond the defaults must set every field.
inline TrainConfig train_config_from(KeyValues kv) {
  TrainConfig c = TrainConfig::defaults();
  std::size_t n_stages = c.stages.size();
  kv.take_into("stages", n_stages);
  if (n_stages == 0) kv.fail("stages", "must be >= 1");
  const std::size_t n_default = c.stages.size();
  c.stages.resize(n_stages);
  for (std::size_t i = 0; i < n_stages; ++i) {
    const std::string p = "stage" + std::to_string(i + 1) + ".";
    StageSpec& s = c.stages[i];
    if (i >= n_default) {
      for (const char* f : {"epochs", "lr", "batch_size", "groups"}) {
        if (!kv.has(p + f)) throw ParseError(kv.file(), 0, "stage " + std::to_string(i + 1) + " needs '" + p + f + "'");
      }
    }
    kv.take_into(p + "epochs", s.epochs);
    kv.take_into(p + "lr", s.learning_rate);
    kv.take_into(p + "lr_min", s.lr_min);
    kv.take_into(p + "batch_size", s.batch_size);
    if (auto g = kv.take(p + "groups")) {
      s.trainable_groups.clear();
      try {
        for (const auto& name : split_list(*g)) s.trainable_groups.insert(parse_group(name));
      } catch (const PreconditionError& e) {
        kv.fail(p + "groups", e.what());
      }
    }
  }
  for (std::size_t i = n_stages + 1; i <= n_stages + 16; ++i) {
    for (const char* f : {"epochs", "lr", "lr_min", "batch_size", "groups"}) {
      const std::string key = "stage" + std::to_string(i) + "." + f;
      if (kv.has(key)) throw ParseError(kv.file(), 0, "'" + key + "' given but stages = " + std::to_string(n_stages));
    }
  }
  kv.take_into("seed", c.seed);
  kv.take_into("w_contrastive", c.weights.contrastive);
  kv.take_into("w_classification", c.weights.classification);
  kv.take_into("w_opl", c.weights.opl);
  kv.take_into("temperature", c.weights.temperature);
  if (auto md = kv.take("mining_depth")) {
    if (*md == "all") {
      c.weights.mining_depth.reset();
    } else {
      auto v = text::parse_int(*md);
      if (!v || *v <= 0) kv.fail("mining_depth", "expected a positive integer or 'all'");
      c.weights.mining_depth = static_cast<std::size_t>(*v);
    }
  }
  kv.take_into("weight_decay", c.weight_decay);
  kv.take_into("hidden_dim", c.model.hidden_dim);
  kv.take_into("out_dim", c.model.out_dim);
  kv.take_into("attn_width", c.model.attn_width);
  kv.take_into("lora_rank", c.model.lora_rank);
  kv.take_into("lora_alpha", c.model.lora_alpha);
  if (auto t = kv.take("lora_targets")) c.model.lora_targets = split_list(*t);
  kv.finish();
  c.validate();
  return c;
}

struct StepRecord {
  std::size_t step = 0;   // global, 0-based
  std::size_t stage = 0;  // 1-based
  std::size_t epoch = 0;  // 1-based within the stage
  double lr = 0.0;
  LossBreakdown loss;
};

struct TrainResult {
  Model model;
  std::vector<StepRecord> history;
  Checkpoint checkpoint;
};

// One metrics line per step: step, stage, lr, total, contrastive, classification, opl.
inline std::string format_metrics(const std::vector<StepRecord>& history) {
  std::string out;
  for (const auto& r : history) {
    out += std::to_string(r.step) + "\t" + std::to_string(r.stage) + "\t" + text::format_double(r.lr) + "\t" +
           text::format_double(r.loss.total) + "\t" + text::format_double(r.loss.contrastive) + "\t" +
           text::format_double(r.loss.classification) + "\t" + text::format_double(r.loss.opl) + "\n";
  }
  return out;
}

// Identities usable for training: those with at least one record of each modality.
inline std::vector<std::string> paired_identities(const EmbeddingStore& store) {
  std::vector<std::string> out;
  for (const auto& id : store.identities()) {
    if (!store.records_of(id, Modality::voice).empty() && !store.records_of(id, Modality::face).empty()) out.push_back(id);
  }
  return out;
}

// Model dimensions and class count taken from the training data.
inline ModelConfig model_config_for(const TrainConfig& config, const EmbeddingStore& store) {
  ModelConfig mc = config.model;
  mc.voice_dim = store.voice_dim();
  mc.face_dim = store.face_dim();
  mc.num_classes = paired_identities(store).size();
  return mc;
}

// Each stage runs ceil(voice records / batch_size) steps per epoch. A step
// draws batch_size distinct identities and one voice plus one face record
// for each, uniformly and from the run seed. The learning rate follows a
// cosine from the stage's rate down to its lr_min over the stage.
inline TrainResult train(Model model, const EmbeddingStore& store, const TrainConfig& config) {
  config.validate();
  const std::vector<std::string> ids = paired_identities(store);
  if (ids.size() < 2) throw PreconditionError("train: need at least 2 identities with both modalities");
  if (model.config().num_classes != ids.size()) {
    throw PreconditionError("train: model has " + std::to_string(model.config().num_classes) + " classes, data has " +
                            std::to_string(ids.size()) + " identities");
  }
  std::size_t n_voice = 0;
  for (const auto& id : ids) n_voice += store.records_of(id, Modality::voice).size();

  Pcg64 rng(config.seed, 0x5851f42d4c957f2dULL);
  std::vector<StepRecord> history;
  std::size_t global_step = 0;
  for (std::size_t si = 0; si < config.stages.size(); ++si) {
    const StageSpec& stage = config.stages[si];
    if (stage.batch_size > ids.size()) {
      throw PreconditionError("train: stage " + std::to_string(si + 1) + " batch_size " + std::to_string(stage.batch_size) +
                              " exceeds the " + std::to_string(ids.size()) + " trainable identities");
    }
    if (stage.batch_size < 2) throw PreconditionError("train: batch_size must be >= 2 for the contrastive loss");
    model.set_trainable_groups(stage.trainable_groups);
    AdamWState opt;
    opt.weight_decay = config.weight_decay;
    const std::size_t steps_per_epoch = (n_voice + stage.batch_size - 1) / stage.batch_size;
    const std::size_t total_steps = steps_per_epoch * stage.epochs;
    std::size_t stage_step = 0;
    for (std::size_t epoch = 1; epoch <= stage.epochs; ++epoch) {
      for (std::size_t s = 0; s < steps_per_epoch; ++s, ++stage_step, ++global_step) {
        const auto picks = sample_without_replacement(rng, ids.size(), stage.batch_size);
        const std::size_t b = picks.size();
        Tensor xv(Shape{b, store.voice_dim()}), xf(Shape{b, store.face_dim()});
        std::vector<std::size_t> labels(b);
        for (std::size_t i = 0; i < b; ++i) {
          const std::string& id = ids[picks[i]];
          const auto& vr = store.records_of(id, Modality::voice);
          const auto& fr = store.records_of(id, Modality::face);
          const auto& vrec = store.records()[vr[rng.below(vr.size())]];
          const auto& frec = store.records()[fr[rng.below(fr.size())]];
          std::copy(vrec.vector.begin(), vrec.vector.end(), xv.row(i).begin());
          std::copy(frec.vector.begin(), frec.vector.end(), xf.row(i).begin());
          labels[i] = picks[i];
        }
        const double lr = cosine_lr(stage_step, total_steps, stage.learning_rate, stage.lr_min);

        Tape tape(&model.params());
        const Var v = model.embed(tape, Modality::voice, tape.constant(std::move(xv)));
        const Var f = model.embed(tape, Modality::face, tape.constant(std::move(xf)));
        const Var fused = model.fuse(tape, v, f);
        LossBreakdown parts;
        const Var loss = total_loss(tape, config.weights, LossBatch{v, f, fused, model.logits(tape, fused), labels}, &parts);
        tape.backward(loss);
        adamw_step(model.params(), tape.param_grads(), opt, lr);
        history.push_back(StepRecord{global_step, si + 1, epoch, lr, parts});
      }
    }
  }
  // Checkpoints record the final stage's trainable partition.
  std::map<std::string, std::string> meta;
  meta["stage"] = std::to_string(config.stages.size());
  meta["seed"] = std::to_string(config.seed);
  meta["config_hash"] = text::hex64(text::fnv1a(config.describe()));
  Checkpoint ckpt = model.to_checkpoint(std::move(meta));
  return TrainResult{std::move(model), std::move(history), std::move(ckpt)};
}

}  // namespace fvlink
