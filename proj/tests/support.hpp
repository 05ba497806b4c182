#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fvlink.hpp"

namespace fvtest {

using namespace fvlink;

inline Tensor random_tensor(Shape shape, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = n(gen);
  return t;
}

inline Tensor unit_rows(std::size_t n, std::size_t d, std::mt19937_64& gen) {
  Tensor t = random_tensor(Shape{n, d}, gen);
  for (std::size_t r = 0; r < n; ++r) {
    double ss = 0.0;
    for (double v : t.row(r)) ss += v * v;
    for (double& v : t.row(r)) v /= std::sqrt(ss);
  }
  return t;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("fvlink_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Brute-force equal error rate. Every candidate threshold is rescored by
// counting over all trials; the crossing rule is applied afterwards.
inline double brute_force_eer(const std::vector<double>& scores, const std::vector<bool>& target) {
  std::vector<double> distinct = scores;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> th{-inf};
  for (std::size_t i = 0; i + 1 < distinct.size(); ++i) th.push_back((distinct[i] + distinct[i + 1]) / 2.0);
  th.push_back(inf);

  std::vector<double> far, frr;
  for (double t : th) {
    double fa = 0, nn = 0, fr = 0, nt = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (target[i]) {
        nt += 1;
        if (scores[i] < t) fr += 1;
      } else {
        nn += 1;
        if (scores[i] >= t) fa += 1;
      }
    }
    far.push_back(fa / nn);
    frr.push_back(fr / nt);
  }
  for (std::size_t k = 0; k < th.size(); ++k) {
    const double d = far[k] - frr[k];
    if (d > 0) continue;
    if (d == 0) {
      std::size_t e = k;
      while (e + 1 < th.size() && far[e + 1] == frr[e + 1]) ++e;
      return (far[k] + far[e]) / 2.0;
    }
    const double dl = far[k - 1] - frr[k - 1];
    const double lam = dl / (dl - d);
    return far[k - 1] + lam * (far[k] - far[k - 1]);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline ScoreSet make_score_set(const std::vector<double>& scores, const std::vector<bool>& target) {
  TrialList trials;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    trials.push_back(Trial{"v" + std::to_string(i), "f" + std::to_string(i),
                           target[i] ? TrialLabel::target : TrialLabel::nontarget});
  }
  return ScoreSet(std::move(trials), scores);
}

// Two systems that each see the label through independent Gaussian noise,
// with different scales and offsets. Averaging their z-scores halves the
// noise variance, so the fused EER should beat both inputs.
inline std::vector<ScoreSet> complementary_fixture(std::size_t n_trials, std::uint64_t seed) {
  Pcg64 rng(seed);
  TrialList trials;
  std::vector<double> a, b;
  for (std::size_t i = 0; i < n_trials; ++i) {
    const bool tgt = i % 2 == 0;
    trials.push_back(Trial{"v" + std::to_string(i), "f" + std::to_string(i), tgt ? TrialLabel::target : TrialLabel::nontarget});
    const double signal = tgt ? 1.0 : 0.0;
    a.push_back(0.3 * (signal + rng.normal()) + 0.1);
    b.push_back(4.0 * (signal + rng.normal()) - 2.0);
  }
  return {ScoreSet(trials, std::move(a)), ScoreSet(trials, std::move(b))};
}

// Small model config for fast end-to-end tests.
inline ModelConfig tiny_model_config(std::size_t voice_dim, std::size_t face_dim, std::size_t classes) {
  ModelConfig c;
  c.voice_dim = voice_dim;
  c.face_dim = face_dim;
  c.hidden_dim = 6;
  c.out_dim = 8;
  c.attn_width = 4;
  c.lora_rank = 2;
  c.num_classes = classes;
  return c;
}

}  // namespace fvtest
