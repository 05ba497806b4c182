#pragma once

// Score-level fusion: each system is z-normalized, then the per-trial
// z-scores are averaged with equal weight.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fvlink/datamodel.hpp"
#include "fvlink/errors.hpp"

namespace fvlink {

inline constexpr double kMinScoreSpread = 1e-12;

struct ScoreStats {
  double mean = 0.0;
  double stddev = 0.0;  // population (1/N)
};

inline ScoreStats score_stats(const std::vector<double>& scores) {
  if (scores.size() < 2) throw PreconditionError("znorm: need at least 2 scores, got " + std::to_string(scores.size()));
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= static_cast<double>(scores.size());
  const double sd = std::sqrt(var);
  if (sd <= kMinScoreSpread) throw DegenerateScores("znorm: score spread " + std::to_string(sd) + " is too small");
  return {mean, sd};
}

inline std::vector<double> znorm(const std::vector<double>& scores, const ScoreStats& stats) {
  std::vector<double> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back((s - stats.mean) / stats.stddev);
  return out;
}

inline std::vector<double> znorm(const std::vector<double>& scores) { return znorm(scores, score_stats(scores)); }

struct FusionInput {
  std::vector<ScoreSet> systems;
  // Optional per-system normalization populations (e.g. development scores).
  // When empty, each system is normalized over its own scores.
  std::vector<std::vector<double>> stats_from;
};

inline ScoreSet fuse(const FusionInput& input) {
  const auto& systems = input.systems;
  if (systems.size() < 2) throw PreconditionError("fuse: need at least 2 systems");
  if (!input.stats_from.empty() && input.stats_from.size() != systems.size()) {
    throw PreconditionError("fuse: " + std::to_string(input.stats_from.size()) + " normalization sets for " +
                            std::to_string(systems.size()) + " systems");
  }
  const TrialList& trials = systems[0].trials;
  for (std::size_t s = 0; s < systems.size(); ++s) {
    systems[s].validate();
    const TrialList& other = systems[s].trials;
    if (other.size() != trials.size()) {
      throw PreconditionError("fuse: system " + std::to_string(s) + " has " + std::to_string(other.size()) +
                              " trials, system 0 has " + std::to_string(trials.size()));
    }
    for (std::size_t i = 0; i < trials.size(); ++i) {
      if (!(other[i] == trials[i])) {
        throw PreconditionError("fuse: system " + std::to_string(s) + " differs from system 0 at trial index " +
                                std::to_string(i));
      }
    }
  }
  std::vector<std::vector<double>> zs;
  for (std::size_t s = 0; s < systems.size(); ++s) {
    ScoreStats stats;
    try {
      stats = score_stats(input.stats_from.empty() ? systems[s].scores : input.stats_from[s]);
    } catch (const DegenerateScores& e) {
      throw DegenerateScores(std::string(e.what()) + " (system " + std::to_string(s) + ")", s);
    }
    zs.push_back(znorm(systems[s].scores, stats));
  }
  // Per-trial values are summed in sorted order so the result does not
  // depend on the order the systems were given in.
  std::vector<double> fused(trials.size(), 0.0);
  std::vector<double> column(systems.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    for (std::size_t s = 0; s < systems.size(); ++s) column[s] = zs[s][i];
    std::sort(column.begin(), column.end());
    double acc = 0.0;
    for (double v : column) acc += v;
    fused[i] = acc / static_cast<double>(systems.size());
  }
  return ScoreSet(trials, std::move(fused));
}

}  // namespace fvlink
