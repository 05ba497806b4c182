#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace fvlink;
using fvtest::brute_force_eer;
using fvtest::make_score_set;

namespace {

struct Labeled {
  std::vector<double> scores;
  std::vector<bool> target;
};

// At least one target and one nontarget; scores on a coarse grid so ties are common.
Labeled random_labeled(std::mt19937_64& gen, std::size_t max_n) {
  std::uniform_int_distribution<std::size_t> size(2, max_n);
  std::uniform_int_distribution<int> grid(0, 6), coin(0, 1);
  std::normal_distribution<double> cont(0.0, 1.0);
  const bool coarse = coin(gen);
  Labeled out;
  const std::size_t n = size(gen);
  for (std::size_t i = 0; i < n; ++i) {
    out.scores.push_back(coarse ? grid(gen) * 0.25 : cont(gen));
    out.target.push_back(coin(gen));
  }
  out.target[0] = true;
  out.target[1] = false;
  std::shuffle(out.target.begin(), out.target.end(), gen);
  return out;
}

EmbeddingStore tiny_store() {
  SynthConfig c;
  c.n_identities = 4;
  c.utterances_per_identity = 2;
  c.faces_per_identity = 2;
  c.voice_dim = 5;
  c.face_dim = 4;
  c.latent_dim = 3;
  return generate(c);
}

}  // namespace

TEST(CosineScore, Examples) {
  const std::vector<double> e1 = {1, 0}, e2 = {0, 1}, d = {1 / std::sqrt(2.0), 1 / std::sqrt(2.0)};
  EXPECT_EQ(cosine_score(e1, e1), 1.0);
  EXPECT_EQ(cosine_score(e1, e2), 0.0);
  EXPECT_NEAR(cosine_score(d, e1), 0.70710678, 1e-8);
  EXPECT_THROW(cosine_score(e1, std::vector<double>{1, 0, 0}), ShapeError);
  EXPECT_THROW(cosine_score(e1, std::vector<double>{2, 0}), PreconditionError);
}

TEST(ScoreTrials, EmptyRepeatedAndPermuted) {
  const EmbeddingStore store = tiny_store();
  const Model m = Model::init(fvtest::tiny_model_config(5, 4, 4), 1);
  EXPECT_EQ(score_trials(m, store, {}).size(), 0u);

  TrialList trials = make_trials(store, TrialPolicy::exhaustive(), 0);
  trials.push_back(trials[3]);
  const ScoreSet s = score_trials(m, store, trials);
  EXPECT_EQ(s.scores.back(), s.scores[3]);

  std::mt19937_64 gen(2);
  std::vector<std::size_t> perm(trials.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen);
  TrialList shuffled;
  for (auto p : perm) shuffled.push_back(trials[p]);
  const ScoreSet t = score_trials(m, store, shuffled);
  for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(t.scores[i], s.scores[perm[i]]);
  for (double v : s.scores) {
    EXPECT_GE(v, -1.0 - 1e-12);
    EXPECT_LE(v, 1.0 + 1e-12);
  }
}

TEST(ScoreTrials, UnknownRecordFails) {
  const EmbeddingStore store = tiny_store();
  const Model m = Model::init(fvtest::tiny_model_config(5, 4, 4), 1);
  EXPECT_THROW(score_trials(m, store, {{"nope", "id0000-f0", TrialLabel::target}}), ParseError);
}

TEST(Eer, PerfectSeparation) {
  const auto r = compute_eer(make_score_set({0.9, 0.8, 0.2, 0.1}, {true, true, false, false}));
  EXPECT_EQ(r.eer, 0.0);
  EXPECT_GT(r.threshold, 0.2);
  EXPECT_LT(r.threshold, 0.8);
}

TEST(Eer, InterleavedHalf) {
  EXPECT_DOUBLE_EQ(compute_eer(make_score_set({0.8, 0.2, 0.6, 0.1}, {true, true, false, false})).eer, 0.5);
}

TEST(Eer, FullyInvertedIsOne) {
  EXPECT_DOUBLE_EQ(compute_eer(make_score_set({0.1, 0.9}, {true, false})).eer, 1.0);
}

TEST(Eer, AllTiedIsHalf) {
  EXPECT_DOUBLE_EQ(compute_eer(make_score_set({0.3, 0.3, 0.3}, {true, false, false})).eer, 0.5);
}

TEST(Eer, Preconditions) {
  EXPECT_THROW(compute_eer(make_score_set({0.1, 0.2}, {true, true})), PreconditionError);
  EXPECT_THROW(compute_eer(make_score_set({0.1, 0.2}, {false, false})), PreconditionError);
  EXPECT_THROW(compute_eer(std::vector<double>{0.1}, std::vector<bool>{true, false}), PreconditionError);
}

TEST(Eer, MatchesBruteForceOracle) {
  std::mt19937_64 gen(11);
  for (int i = 0; i < 2000; ++i) {
    const Labeled l = random_labeled(gen, 12);
    const double got = compute_eer(l.scores, l.target).eer;
    const double want = brute_force_eer(l.scores, l.target);
    ASSERT_LT(std::abs(got - want), 1e-12) << "case " << i;
    ASSERT_GE(got, 0.0);
    ASSERT_LE(got, 1.0);
  }
}

TEST(Eer, InvariantUnderIncreasingTransforms) {
  std::mt19937_64 gen(12);
  const std::vector<std::function<double(double)>> transforms = {
      [](double x) { return 3.0 * x + 7.0; }, [](double x) { return std::exp(x); },
      [](double x) { return x * x * x; }, [](double x) { return std::atan(x); }};
  for (int i = 0; i < 100; ++i) {
    const Labeled l = random_labeled(gen, 40);
    const double base = compute_eer(l.scores, l.target).eer;
    for (const auto& f : transforms) {
      std::vector<double> t;
      for (double s : l.scores) t.push_back(f(s));
      ASSERT_EQ(compute_eer(t, l.target).eer, base);
    }
  }
}

TEST(Eer, LabelSwapDuality) {
  std::mt19937_64 gen(13);
  for (int i = 0; i < 500; ++i) {
    const Labeled l = random_labeled(gen, 30);
    std::vector<double> neg;
    std::vector<bool> swapped;
    for (std::size_t k = 0; k < l.scores.size(); ++k) {
      neg.push_back(-l.scores[k]);
      swapped.push_back(!l.target[k]);
    }
    ASSERT_NEAR(compute_eer(neg, swapped).eer, compute_eer(l.scores, l.target).eer, 1e-12);
  }
}

TEST(Eer, RandomScoresNearHalf) {
  std::mt19937_64 gen(14);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> s;
  std::vector<bool> t;
  for (int i = 0; i < 10000; ++i) {
    s.push_back(n(gen));
    t.push_back(i % 2 == 0);
  }
  const double e = compute_eer(s, t).eer;
  EXPECT_GE(e, 0.45);
  EXPECT_LE(e, 0.55);
}

TEST(Eer, CurvesAreMonotone) {
  std::mt19937_64 gen(15);
  for (int i = 0; i < 200; ++i) {
    const Labeled l = random_labeled(gen, 50);
    const auto r = compute_eer(l.scores, l.target);
    ASSERT_EQ(r.far_curve.size(), r.frr_curve.size());
    EXPECT_EQ(r.far_curve.front().rate, 1.0);
    EXPECT_EQ(r.frr_curve.back().rate, 1.0);
    for (std::size_t k = 1; k < r.far_curve.size(); ++k) {
      EXPECT_LE(r.far_curve[k].rate, r.far_curve[k - 1].rate);
      EXPECT_GE(r.frr_curve[k].rate, r.frr_curve[k - 1].rate);
      EXPECT_GT(r.far_curve[k].threshold, r.far_curve[k - 1].threshold);
    }
  }
}
