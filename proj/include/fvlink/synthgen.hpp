#pragma once

// Seeded linear-Gaussian generator of multilingual face/voice embeddings.
//
//   z_i      ~ N(0, I_k)                          per identity
//   M_f, M_v entries ~ N(0, 1/k)                  drawn once
//   delta_l  ~ N(0, s^2 I_voice)                  drawn once per language
//   face     = normalize(M_f z_i + sigma_f eps)
//   voice    = normalize(M_v z_i + delta_lang(i) + sigma_v eps)
//
// Draw order (part of the reproducibility contract): M_f row-major, M_v
// row-major, one shift per language in list order, then per identity its
// latent, its voice noise vectors, its face noise vectors. All Gaussians come
// from Box-Muller over one PCG64 stream seeded with `seed`.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fvlink/config.hpp"
#include "fvlink/datamodel.hpp"
#include "fvlink/rng.hpp"
#include "fvlink/tensor.hpp"

namespace fvlink {

enum class LanguageAssignment { round_robin, blocks };

struct SynthConfig {
  std::size_t n_identities = 60;
  std::size_t utterances_per_identity = 8;
  std::size_t faces_per_identity = 4;
  std::vector<std::string> languages = {"EN", "DE", "UR"};
  // round_robin: identity i speaks languages[i % L].
  // blocks: contiguous, near-equal runs of identities per language.
  LanguageAssignment assignment = LanguageAssignment::round_robin;
  std::size_t latent_dim = 32;
  std::size_t voice_dim = 256;
  std::size_t face_dim = 512;
  double language_shift_std = 0.8;
  double voice_noise_std = 0.3;
  double face_noise_std = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_identities == 0 || utterances_per_identity == 0 || faces_per_identity == 0) {
      throw PreconditionError("synth: identity and record counts must be positive");
    }
    if (latent_dim == 0 || voice_dim == 0 || face_dim == 0) throw PreconditionError("synth: dimensions must be positive");
    if (languages.empty()) throw PreconditionError("synth: at least one language is required");
    std::set<std::string> seen;
    for (const auto& l : languages) {
      if (!text::is_token(l)) throw PreconditionError("synth: language tokens must be non-empty without whitespace");
      if (!seen.insert(l).second) throw PreconditionError("synth: duplicate language '" + l + "'");
    }
    if (language_shift_std < 0.0 || voice_noise_std < 0.0 || face_noise_std < 0.0) {
      throw PreconditionError("synth: standard deviations must be >= 0");
    }
  }

  const std::string& language_of(std::size_t identity) const {
    if (assignment == LanguageAssignment::round_robin) return languages[identity % languages.size()];
    return languages[identity * languages.size() / n_identities];
  }
};

inline SynthConfig synth_config_from(KeyValues kv) {
  SynthConfig c;
  kv.take_into("n_identities", c.n_identities);
  kv.take_into("utterances_per_identity", c.utterances_per_identity);
  kv.take_into("faces_per_identity", c.faces_per_identity);
  if (auto l = kv.take("languages")) c.languages = split_list(*l);
  if (auto a = kv.take("language_assignment")) {
    if (*a == "round_robin") c.assignment = LanguageAssignment::round_robin;
    else if (*a == "blocks") c.assignment = LanguageAssignment::blocks;
    else kv.fail("language_assignment", "expected round_robin or blocks");
  }
  kv.take_into("latent_dim", c.latent_dim);
  kv.take_into("voice_dim", c.voice_dim);
  kv.take_into("face_dim", c.face_dim);
  kv.take_into("language_shift_std", c.language_shift_std);
  kv.take_into("voice_noise_std", c.voice_noise_std);
  kv.take_into("face_noise_std", c.face_noise_std);
  kv.take_into("seed", c.seed);
  kv.finish();
  c.validate();
  return c;
}

// The generative parameters behind a store; exposed so tests can build
// oracles that know the true mixing maps.
struct SynthTruth {
  Tensor face_map;   // face_dim x k
  Tensor voice_map;  // voice_dim x k
  std::vector<Tensor> language_shifts;  // one voice_dim vector per language
  std::vector<Tensor> latents;          // one k vector per identity
};

inline std::string identity_name(std::size_t i) {
  std::string n = std::to_string(i);
  return "id" + std::string(n.size() < 4 ? 4 - n.size() : 0, '0') + n;
}

namespace detail {

inline void normalize_in_place(std::vector<double>& v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double n = std::sqrt(ss);
  if (n < 1e-12) throw DegenerateEmbedding("synth: generated a zero vector");
  for (double& x : v) x /= n;
}

}  // namespace detail

inline std::pair<EmbeddingStore, SynthTruth> generate_with_truth(const SynthConfig& c) {
  c.validate();
  Pcg64 rng(c.seed);
  const std::size_t k = c.latent_dim;
  const double map_std = 1.0 / std::sqrt(static_cast<double>(k));

  SynthTruth truth;
  truth.face_map = Tensor(Shape{c.face_dim, k});
  for (double& v : truth.face_map.values()) v = map_std * rng.normal();
  truth.voice_map = Tensor(Shape{c.voice_dim, k});
  for (double& v : truth.voice_map.values()) v = map_std * rng.normal();
  for (std::size_t l = 0; l < c.languages.size(); ++l) {
    Tensor shift(Shape{c.voice_dim});
    for (double& v : shift.values()) v = c.language_shift_std * rng.normal();
    truth.language_shifts.push_back(std::move(shift));
  }

  const auto mix = [k](const Tensor& map, const Tensor& z) {
    std::vector<double> out(map.rows(), 0.0);
    for (std::size_t r = 0; r < map.rows(); ++r)
      for (std::size_t j = 0; j < k; ++j) out[r] += map.at(r, j) * z[j];
    return out;
  };

  EmbeddingStore store(c.voice_dim, c.face_dim);
  for (std::size_t i = 0; i < c.n_identities; ++i) {
    Tensor z(Shape{k});
    for (double& v : z.values()) v = rng.normal();
    const std::string id = identity_name(i);
    const std::string& lang = c.language_of(i);
    std::size_t lang_index = 0;
    while (c.languages[lang_index] != lang) ++lang_index;

    const std::vector<double> voice_mean = mix(truth.voice_map, z);
    const std::vector<double> face_mean = mix(truth.face_map, z);
    for (std::size_t u = 0; u < c.utterances_per_identity; ++u) {
      std::vector<double> v = voice_mean;
      for (std::size_t d = 0; d < v.size(); ++d) v[d] += truth.language_shifts[lang_index][d] + c.voice_noise_std * rng.normal();
      detail::normalize_in_place(v);
      store.add(EmbeddingRecord{id + "-v" + std::to_string(u), id, lang, Modality::voice, std::move(v)});
    }
    for (std::size_t f = 0; f < c.faces_per_identity; ++f) {
      std::vector<double> v = face_mean;
      for (double& x : v) x += c.face_noise_std * rng.normal();
      detail::normalize_in_place(v);
      store.add(EmbeddingRecord{id + "-f" + std::to_string(f), id, lang, Modality::face, std::move(v)});
    }
    truth.latents.push_back(std::move(z));
  }
  return {std::move(store), std::move(truth)};
}

inline EmbeddingStore generate(const SynthConfig& c) { return generate_with_truth(c).first; }

struct TrialPolicy {
  enum class Kind { exhaustive, balanced } kind = Kind::exhaustive;
  std::size_t per_class = 0;  // balanced only

  static TrialPolicy exhaustive() { return {Kind::exhaustive, 0}; }
  static TrialPolicy balanced(std::size_t n) { return {Kind::balanced, n}; }

  // "exhaustive" or "balanced:<n>"
  static TrialPolicy parse(std::string_view s) {
    if (s == "exhaustive") return exhaustive();
    if (s.substr(0, 9) == "balanced:") {
      auto n = text::parse_int(s.substr(9));
      if (n && *n > 0) return balanced(static_cast<std::size_t>(*n));
    }
    throw PreconditionError("trial policy must be 'exhaustive' or 'balanced:<n>', got '" + std::string(s) + "'");
  }
};

// Exhaustive: every voice x face pair, in store order. Balanced: n target and
// n nontarget pairs drawn without replacement, emitted in store order.
inline TrialList make_trials(const EmbeddingStore& store, TrialPolicy policy, std::uint64_t seed) {
  std::vector<std::size_t> voices, faces;
  for (std::size_t i = 0; i < store.records().size(); ++i)
    (store.records()[i].modality == Modality::voice ? voices : faces).push_back(i);
  if (voices.empty() || faces.empty()) throw PreconditionError("make_trials: store needs both voice and face records");

  const auto make = [&](std::size_t vi, std::size_t fi) {
    const auto& v = store.records()[vi];
    const auto& f = store.records()[fi];
    return Trial{v.record_id, f.record_id, v.identity_id == f.identity_id ? TrialLabel::target : TrialLabel::nontarget};
  };

  TrialList out;
  if (policy.kind == TrialPolicy::Kind::exhaustive) {
    out.reserve(voices.size() * faces.size());
    for (std::size_t vi : voices)
      for (std::size_t fi : faces) out.push_back(make(vi, fi));
    return out;
  }

  std::vector<std::pair<std::size_t, std::size_t>> targets, nontargets;
  for (std::size_t vi : voices) {
    for (std::size_t fi : faces) {
      const bool same = store.records()[vi].identity_id == store.records()[fi].identity_id;
      (same ? targets : nontargets).emplace_back(vi, fi);
    }
  }
  const std::size_t n = policy.per_class;
  if (targets.size() < n || nontargets.size() < n) {
    throw PreconditionError("make_trials: balanced:" + std::to_string(n) + " infeasible (" +
                            std::to_string(targets.size()) + " target and " + std::to_string(nontargets.size()) +
                            " nontarget pairs available)");
  }
  Pcg64 rng(seed, 0x14057b7ef767814fULL);
  auto pick_t = sample_without_replacement(rng, targets.size(), n);
  auto pick_n = sample_without_replacement(rng, nontargets.size(), n);
  std::vector<std::pair<std::size_t, std::size_t>> chosen;
  chosen.reserve(2 * n);
  for (std::size_t i : pick_t) chosen.push_back(targets[i]);
  for (std::size_t i : pick_n) chosen.push_back(nontargets[i]);
  std::sort(chosen.begin(), chosen.end());
  for (const auto& [vi, fi] : chosen) out.push_back(make(vi, fi));
  return out;
}

// Splits by record language. Records in languages claimed by neither side are
// dropped. Fails if an identity would land on both sides or a side is empty.
inline std::pair<EmbeddingStore, EmbeddingStore> split_by_language(const EmbeddingStore& store,
                                                                   const std::vector<std::string>& train_languages,
                                                                   const std::vector<std::string>& eval_languages) {
  if (train_languages.empty()) throw PreconditionError("split_by_language: no train languages");
  if (eval_languages.empty()) throw PreconditionError("split_by_language: no eval languages");
  const std::set<std::string> train(train_languages.begin(), train_languages.end());
  const std::set<std::string> eval(eval_languages.begin(), eval_languages.end());
  for (const auto& l : train)
    if (eval.count(l)) throw PreconditionError("split_by_language: language '" + l + "' is on both sides");

  EmbeddingStore a(store.voice_dim(), store.face_dim()), b(store.voice_dim(), store.face_dim());
  std::set<std::string> ids_a, ids_b;
  for (const auto& r : store.records()) {
    if (train.count(r.language)) {
      ids_a.insert(r.identity_id);
      a.add(r);
    } else if (eval.count(r.language)) {
      ids_b.insert(r.identity_id);
      b.add(r);
    }
  }
  for (const auto& id : ids_a) {
    if (ids_b.count(id)) throw PreconditionError("split_by_language: identity '" + id + "' has records on both sides");
  }
  if (a.records().empty()) throw PreconditionError("split_by_language: train side is empty");
  if (b.records().empty()) throw PreconditionError("split_by_language: eval side is empty");
  return {std::move(a), std::move(b)};
}

}  // namespace fvlink
