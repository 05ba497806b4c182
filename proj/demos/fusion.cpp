// Two systems trained from different seeds and schedules, scored on the same
// unseen-language trials, then combined by z-score fusion.

#include <cstdio>

#include "fvlink.hpp"

using namespace fvlink;

int main() {
  SynthConfig sc;
  sc.n_identities = 180;
  sc.seed = 4;
  const auto [train_store, eval_store] = split_by_language(generate(sc), {"EN"}, {"DE", "UR"});
  const TrialList trials = make_trials(eval_store, TrialPolicy::balanced(2000), 1);

  std::vector<ScoreSet> systems;
  for (std::uint64_t seed : {1u, 2u}) {
    TrainConfig tc = TrainConfig::defaults();
    tc.seed = seed;
    tc.stages[0].trainable_groups = {ParamGroup::heads, ParamGroup::gate, ParamGroup::classifier};
    tc.stages[0].epochs = seed == 1 ? 1 : 2;
    tc.stages[1].epochs = 2;
    const TrainResult r = train(Model::init(model_config_for(tc, train_store), tc.seed), train_store, tc);
    systems.push_back(score_trials(r.model, eval_store, trials));
    std::printf("system %llu  EER %6.2f%%\n", static_cast<unsigned long long>(seed),
                100.0 * compute_eer(systems.back()).eer);
  }
  std::printf("fused     EER %6.2f%%\n", 100.0 * compute_eer(fuse({systems, {}})).eer);
  return 0;
}
