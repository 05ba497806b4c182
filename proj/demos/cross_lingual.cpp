// Train on English voices only, then score German and Urdu speakers the model
// has never heard. Prints EER before and after training for each language.

#include <cstdio>
#include <string>

#include "fvlink.hpp"

using namespace fvlink;

int main(int argc, char** argv) {
  const std::string synth_cfg = argc > 1 ? argv[1] : "";
  const std::string train_cfg = argc > 2 ? argv[2] : "";

  SynthConfig sc;
  sc.n_identities = 180;
  if (!synth_cfg.empty()) sc = synth_config_from(KeyValues::load(synth_cfg));

  TrainConfig tc = TrainConfig::defaults();
  tc.stages[0].trainable_groups = {ParamGroup::heads, ParamGroup::gate, ParamGroup::classifier};
  if (!train_cfg.empty()) tc = train_config_from(KeyValues::load(train_cfg));

  const auto [train_store, eval_store] = split_by_language(generate(sc), {"EN"}, {"DE", "UR"});
  std::printf("train: %zu records, %zu identities (EN)\n", train_store.records().size(), train_store.identities().size());
  std::printf("eval:  %zu records, %zu identities (DE, UR)\n\n", eval_store.records().size(), eval_store.identities().size());

  const Model init = Model::init(model_config_for(tc, train_store), tc.seed);
  const TrainResult r = train(init, train_store, tc);
  std::printf("trained %zu steps, final loss %.4f\n\n", r.history.size(), r.history.back().loss.total);

  std::printf("language  trials   untrained  trained\n");
  for (const std::string lang : {"DE", "UR"}) {
    const EmbeddingStore one = split_by_language(eval_store, {lang == "DE" ? "UR" : "DE"}, {lang}).second;
    const TrialList trials = make_trials(one, TrialPolicy::exhaustive(), 0);
    const double before = compute_eer(score_trials(init, one, trials)).eer;
    const double after = compute_eer(score_trials(r.model, one, trials)).eer;
    std::printf("%-9s %-8zu %6.2f%%    %6.2f%%\n", lang.c_str(), trials.size(), 100.0 * before, 100.0 * after);
  }
  return 0;
}
