#pragma once

// Trial scoring and equal error rate.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fvlink/datamodel.hpp"
#include "fvlink/losses.hpp"
#include "fvlink/model.hpp"

namespace fvlink {

inline double cosine_score(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_score: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (std::abs(std::sqrt(na) - 1.0) > kUnitTolerance || std::abs(std::sqrt(nb) - 1.0) > kUnitTolerance) {
    throw PreconditionError("cosine_score: inputs must be unit-norm");
  }
  return dot;
}

// Embeds each distinct record once, then scores every trial in order.
inline ScoreSet score_trials(const Model& model, const EmbeddingStore& store, const TrialList& trials) {
  validate_trials(trials, store);
  std::vector<std::string> voice_ids, face_ids;
  std::unordered_map<std::string, std::size_t> voice_row, face_row;
  for (const auto& t : trials) {
    if (voice_row.emplace(t.voice_record_id, voice_ids.size()).second) voice_ids.push_back(t.voice_record_id);
    if (face_row.emplace(t.face_record_id, face_ids.size()).second) face_ids.push_back(t.face_record_id);
  }
  std::vector<double> scores;
  scores.reserve(trials.size());
  if (!trials.empty()) {
    const Tensor ve = model.embed_records(store, Modality::voice, voice_ids);
    const Tensor fe = model.embed_records(store, Modality::face, face_ids);
    for (const auto& t : trials) {
      scores.push_back(cosine_score(ve.row(voice_row.at(t.voice_record_id)), fe.row(face_row.at(t.face_record_id))));
    }
  }
  return ScoreSet(trials, std::move(scores));
}

struct CurvePoint {
  double threshold;
  double rate;
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
  std::vector<CurvePoint> far_curve;  // non-increasing in threshold
  std::vector<CurvePoint> frr_curve;  // non-decreasing in threshold
};

// Candidate thresholds are -inf, the midpoints between adjacent distinct
// scores, and +inf. At threshold t:
//   FAR(t) = #{nontarget score >= t} / #nontarget
//   FRR(t) = #{target score < t} / #target
// The EER is read where FAR - FRR changes sign: at the first threshold with
// FAR <= FRR (the lowest one, for ties) it is interpolated linearly against
// the previous threshold. If FAR == FRR over a run of thresholds the
// midpoint of the run is reported.
inline EerResult compute_eer(const std::vector<double>& scores, const std::vector<bool>& is_target) {
  if (scores.size() != is_target.size()) throw PreconditionError("compute_eer: scores and labels differ in length");
  std::size_t n_tgt = 0;
  for (bool t : is_target) n_tgt += t ? 1 : 0;
  const std::size_t n_non = scores.size() - n_tgt;
  if (n_tgt == 0) throw PreconditionError("compute_eer: no target trials");
  if (n_non == 0) throw PreconditionError("compute_eer: no nontarget trials");

  std::vector<std::pair<double, bool>> sorted;
  sorted.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw PreconditionError("compute_eer: non-finite score");
    sorted.emplace_back(scores[i], is_target[i]);
  }
  std::sort(sorted.begin(), sorted.end());

  const double inf = std::numeric_limits<double>::infinity();
  EerResult res;
  std::vector<double> thresholds{-inf}, far{1.0}, frr{0.0};
  std::size_t tgt_below = 0, non_below = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].first == sorted[i].first) {
      (sorted[j].second ? tgt_below : non_below) += 1;
      ++j;
    }
    thresholds.push_back(j < sorted.size() ? 0.5 * (sorted[i].first + sorted[j].first) : inf);
    far.push_back(static_cast<double>(n_non - non_below) / static_cast<double>(n_non));
    frr.push_back(static_cast<double>(tgt_below) / static_cast<double>(n_tgt));
    i = j;
  }

  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    res.far_curve.push_back({thresholds[k], far[k]});
    res.frr_curve.push_back({thresholds[k], frr[k]});
  }

  // Sentinels are reported as the extreme scores so the threshold stays finite.
  const auto finite = [&](double t) {
    if (t == -inf) return sorted.front().first;
    if (t == inf) return sorted.back().first;
    return t;
  };

  std::size_t k = 0;
  while (far[k] - frr[k] > 0.0) ++k;  // terminates: the +inf sentinel has FAR 0, FRR 1
  const double d_hi = far[k] - frr[k];
  if (d_hi == 0.0) {
    std::size_t end = k;
    while (end + 1 < thresholds.size() && far[end + 1] - frr[end + 1] == 0.0) ++end;
    res.eer = 0.5 * (far[k] + far[end]);
    res.threshold = 0.5 * (finite(thresholds[k]) + finite(thresholds[end]));
    return res;
  }
  // k >= 1 here because the -inf sentinel has FAR - FRR = 1.
  const double d_lo = far[k - 1] - frr[k - 1];
  const double lambda = d_lo / (d_lo - d_hi);
  res.eer = far[k - 1] + lambda * (far[k] - far[k - 1]);
  const double t_lo = finite(thresholds[k - 1]), t_hi = finite(thresholds[k]);
  res.threshold = t_lo + lambda * (t_hi - t_lo);
  return res;
}

inline EerResult compute_eer(const ScoreSet& scores) {
  scores.validate();
  std::vector<bool> labels;
  labels.reserve(scores.size());
  for (const auto& t : scores.trials) labels.push_back(t.is_target());
  return compute_eer(scores.scores, labels);
}

}  // namespace fvlink
