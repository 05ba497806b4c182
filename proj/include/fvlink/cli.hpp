#pragma once

// Command-line front end. `run` takes the arguments after the program name
// and reports through the given streams, so it can be driven from tests.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "fvlink/config.hpp"
#include "fvlink/datamodel.hpp"
#include "fvlink/eval.hpp"
#include "fvlink/fusion.hpp"
#include "fvlink/model.hpp"
#include "fvlink/synthgen.hpp"
#include "fvlink/training.hpp"

namespace fvlink::cli {

namespace detail {

// Re-throws a library error with the flag and file that caused it, unless
// the message already names the file.
template <typename F>
auto with_context(const std::string& flag, const std::string& path, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    const std::string msg = e.what();
    if (!path.empty() && msg.rfind(path, 0) == 0) throw Error("--" + flag + ": " + msg);
    throw Error("--" + flag + " " + path + ": " + msg);
  }
}

inline KeyValues load_config(const std::string& path, const std::vector<std::string>& overrides) {
  KeyValues kv = path.empty() ? KeyValues::parse("", "<defaults>") : with_context("config", path, [&] { return KeyValues::load(path); });
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw Error("--set " + o + ": expected key=value");
    const std::string key(text::trim(std::string_view(o).substr(0, eq)));
    if (key.empty()) throw Error("--set " + o + ": empty key");
    kv.set(key, std::string(text::trim(std::string_view(o).substr(eq + 1))));
  }
  return kv;
}

inline std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * fraction);
  return buf;
}

inline std::string groups_str(const std::set<ParamGroup>& groups) {
  std::string out;
  for (auto g : groups) out += (out.empty() ? "" : ",") + std::string(to_string(g));
  return out;
}

inline std::string stage_table(const TrainConfig& c) {
  char buf[160];
  std::string out = "stage  epochs  lr        batch  groups\n";
  for (std::size_t i = 0; i < c.stages.size(); ++i) {
    const auto& s = c.stages[i];
    std::snprintf(buf, sizeof(buf), "%-6zu %-7zu %-9g %-6zu %s\n", i + 1, s.epochs, s.learning_rate, s.batch_size,
                  groups_str(s.trainable_groups).c_str());
    out += buf;
  }
  return out;
}

inline ScoreSet load_score_set(const std::string& flag, const std::string& path, const TrialList& trials) {
  return with_context(flag, path, [&] { return attach_trials(read_scores(path), trials, path); });
}

}  // namespace detail

struct GenArgs {
  std::string config, out, trials_out, policy = "exhaustive", train_out, eval_out;
  std::vector<std::string> sets, train_languages, eval_languages;
  std::optional<std::uint64_t> seed;
};

struct TrainArgs {
  std::string embeddings, config, out, log;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

struct ScoreArgs {
  std::string embeddings, trials, checkpoint, out;
};

struct EerArgs {
  std::string scores, trials, roc_out;
};

struct FuseArgs {
  std::vector<std::string> scores, stats_from;
  std::string trials, out;
};

struct ParamsArgs {
  std::string checkpoint, embeddings, config;
  std::vector<std::string> sets;
};

inline void cmd_gen(const GenArgs& a, std::ostream& out) {
  KeyValues kv = detail::load_config(a.config, a.sets);
  if (a.seed) kv.set("seed", std::to_string(*a.seed));
  const SynthConfig sc = detail::with_context("config", a.config, [&] { return synth_config_from(kv); });
  const TrialPolicy policy = detail::with_context("policy", a.policy, [&] { return TrialPolicy::parse(a.policy); });
  const EmbeddingStore store = generate(sc);
  save_embeddings(store, a.out);
  out << "wrote " << store.records().size() << " records (" << store.identities().size() << " identities) to " << a.out
      << "\n";

  const bool split = !a.train_languages.empty() || !a.eval_languages.empty();
  const EmbeddingStore* trial_source = &store;
  std::optional<std::pair<EmbeddingStore, EmbeddingStore>> parts;
  if (split) {
    if (a.train_out.empty() || a.eval_out.empty()) throw Error("--train-languages/--eval-languages need --train-out and --eval-out");
    parts = detail::with_context("eval-languages", "", [&] { return split_by_language(store, a.train_languages, a.eval_languages); });
    save_embeddings(parts->first, a.train_out);
    save_embeddings(parts->second, a.eval_out);
    out << "wrote " << parts->first.records().size() << " train records to " << a.train_out << "\n";
    out << "wrote " << parts->second.records().size() << " eval records to " << a.eval_out << "\n";
    trial_source = &parts->second;
  } else if (!a.train_out.empty() || !a.eval_out.empty()) {
    throw Error("--train-out/--eval-out need --train-languages and --eval-languages");
  }
  if (!a.trials_out.empty()) {
    const TrialList trials = detail::with_context("policy", a.policy, [&] { return make_trials(*trial_source, policy, sc.seed); });
    save_trials(trials, a.trials_out);
    out << "wrote " << trials.size() << " trials to " << a.trials_out << "\n";
  }
}

inline void cmd_train(const TrainArgs& a, std::ostream& out) {
  KeyValues kv = detail::load_config(a.config, a.sets);
  if (a.seed) kv.set("seed", std::to_string(*a.seed));
  const TrainConfig tc = detail::with_context("config", a.config, [&] { return train_config_from(kv); });
  const EmbeddingStore store = detail::with_context("embeddings", a.embeddings, [&] { return load_embeddings(a.embeddings); });
  out << detail::stage_table(tc);
  out.flush();
  const TrainResult r = detail::with_context("embeddings", a.embeddings, [&] {
    return train(Model::init(model_config_for(tc, store), tc.seed), store, tc);
  });
  save_checkpoint(r.checkpoint, a.out);
  if (!a.log.empty()) text::write_file(a.log, format_metrics(r.history));
  out << "trained " << r.history.size() << " steps; final loss " << text::format_short(r.history.back().loss.total)
      << "; checkpoint " << a.out << "\n";
}

inline void cmd_score(const ScoreArgs& a, std::ostream& out) {
  const EmbeddingStore store = detail::with_context("embeddings", a.embeddings, [&] { return load_embeddings(a.embeddings); });
  const TrialList trials = detail::with_context("trials", a.trials, [&] { return load_trials(a.trials, store); });
  const Model model = detail::with_context("checkpoint", a.checkpoint, [&] { return Model::from_checkpoint(load_checkpoint(a.checkpoint)); });
  const ScoreSet scores = detail::with_context("embeddings", a.embeddings, [&] { return score_trials(model, store, trials); });
  write_scores(scores, a.out);
  out << "wrote " << scores.size() << " scores to " << a.out << "\n";
}

inline void cmd_eer(const EerArgs& a, std::ostream& out) {
  const TrialList trials = detail::with_context("trials", a.trials, [&] { return read_trials(a.trials); });
  const ScoreSet scores = detail::load_score_set("scores", a.scores, trials);
  const EerResult r = detail::with_context("scores", a.scores, [&] { return compute_eer(scores); });
  out << "EER=" << detail::percent(r.eer) << "% threshold=" << text::format_short(r.threshold) << "\n";
  if (!a.roc_out.empty()) {
    std::string roc = "threshold\tfar\tfrr\n";
    for (std::size_t i = 0; i < r.far_curve.size(); ++i) {
      roc += text::format_double(r.far_curve[i].threshold) + "\t" + text::format_double(r.far_curve[i].rate) + "\t" +
             text::format_double(r.frr_curve[i].rate) + "\n";
    }
    text::write_file(a.roc_out, roc);
  }
}

inline void cmd_fuse(const FuseArgs& a, std::ostream& out) {
  const TrialList trials = detail::with_context("trials", a.trials, [&] { return read_trials(a.trials); });
  FusionInput input;
  for (const auto& path : a.scores) input.systems.push_back(detail::load_score_set("scores", path, trials));
  if (!a.stats_from.empty() && a.stats_from.size() != a.scores.size()) {
    throw Error("--stats-from: given " + std::to_string(a.stats_from.size()) + " times for " + std::to_string(a.scores.size()) +
                " --scores files");
  }
  for (const auto& path : a.stats_from) {
    std::vector<double> values;
    for (const auto& l : detail::with_context("stats-from", path, [&] { return read_scores(path); })) values.push_back(l.score);
    input.stats_from.push_back(std::move(values));
  }
  ScoreSet fused;
  try {
    fused = fuse(input);
  } catch (const DegenerateScores& e) {
    const auto& files = a.stats_from.empty() ? a.scores : a.stats_from;
    const std::string flag = a.stats_from.empty() ? "scores" : "stats-from";
    if (e.system() < files.size()) throw Error("--" + flag + " " + files[e.system()] + ": " + e.what());
    throw;
  }
  write_scores(fused, a.out);
  out << "fused " << input.systems.size() << " systems over " << fused.size() << " trials into " << a.out << "\n";
}

inline void cmd_params(const ParamsArgs& a, std::ostream& out) {
  if (!a.checkpoint.empty()) {
    if (!a.embeddings.empty() || !a.config.empty() || !a.sets.empty()) {
      throw Error("--checkpoint cannot be combined with --embeddings, --config or --set");
    }
    const Checkpoint ckpt = detail::with_context("checkpoint", a.checkpoint, [&] { return load_checkpoint(a.checkpoint); });
    out << "trainable_params=" << trainable_param_count(ckpt.params) << "\n";
    return;
  }
  if (a.embeddings.empty()) throw Error("params needs --checkpoint or --embeddings");
  KeyValues kv = detail::load_config(a.config, a.sets);
  const TrainConfig tc = detail::with_context("config", a.config, [&] { return train_config_from(kv); });
  const EmbeddingStore store = detail::with_context("embeddings", a.embeddings, [&] { return load_embeddings(a.embeddings); });
  Model model = detail::with_context("embeddings", a.embeddings, [&] { return Model::init(model_config_for(tc, store), tc.seed); });
  for (std::size_t i = 0; i < tc.stages.size(); ++i) {
    model.set_trainable_groups(tc.stages[i].trainable_groups);
    out << "stage" << i + 1 << " groups=" << detail::groups_str(tc.stages[i].trainable_groups)
        << " trainable_params=" << trainable_param_count(model.params()) << "\n";
  }
}

// Returns the process exit code: 0 on success, 1 on a runtime failure,
// 2 on a usage error.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Face-voice association toolkit: generate, train, score, evaluate and fuse.", "fvlink"};
  app.require_subcommand(0, 1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic multilingual embedding store");
  g->add_option("--config", gen.config, "Synthetic data config file (key = value)");
  g->add_option("--set", gen.sets, "Override a config key, key=value (repeatable)");
  g->add_option("--seed", gen.seed, "Generator seed (overrides the config)");
  g->add_option("--out", gen.out, "Embedding file to write")->required();
  g->add_option("--trials-out", gen.trials_out, "Trial file to write (over the eval split when splitting)");
  g->add_option("--policy", gen.policy, "Trial policy: exhaustive or balanced:<n>")->capture_default_str();
  g->add_option("--train-languages", gen.train_languages, "Languages of the train split")->delimiter(',');
  g->add_option("--eval-languages", gen.eval_languages, "Languages of the eval split")->delimiter(',');
  g->add_option("--train-out", gen.train_out, "Embedding file for the train split");
  g->add_option("--eval-out", gen.eval_out, "Embedding file for the eval split");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Run staged training and write a checkpoint");
  t->add_option("--embeddings", tr.embeddings, "Training embedding file")->required();
  t->add_option("--config", tr.config, "Training config file (key = value)");
  t->add_option("--set", tr.sets, "Override a config key, key=value (repeatable)");
  t->add_option("--seed", tr.seed, "Training seed (overrides the config)");
  t->add_option("--out", tr.out, "Checkpoint file to write")->required();
  t->add_option("--log", tr.log, "Per-step metrics file to write");

  ScoreArgs sc;
  auto* s = app.add_subcommand("score", "Score trials with a trained checkpoint");
  s->add_option("--embeddings", sc.embeddings, "Embedding file holding the trial records")->required();
  s->add_option("--trials", sc.trials, "Trial file")->required();
  s->add_option("--checkpoint", sc.checkpoint, "Checkpoint file")->required();
  s->add_option("--out", sc.out, "Score file to write")->required();

  EerArgs ee;
  auto* e = app.add_subcommand("eer", "Compute the equal error rate of a score file");
  e->add_option("--scores", ee.scores, "Score file")->required();
  e->add_option("--trials", ee.trials, "Trial file with labels")->required();
  e->add_option("--roc-out", ee.roc_out, "Write threshold, FAR and FRR points");

  FuseArgs fu;
  auto* f = app.add_subcommand("fuse", "Z-normalize and average several score files");
  f->add_option("--scores", fu.scores, "Score file of one system (repeat for each system)")->required();
  f->add_option("--trials", fu.trials, "Trial file shared by all systems")->required();
  f->add_option("--stats-from", fu.stats_from, "Score file providing normalization statistics (one per --scores)");
  f->add_option("--out", fu.out, "Fused score file to write")->required();

  ParamsArgs pa;
  auto* p = app.add_subcommand("params", "Print trainable parameter counts");
  p->add_option("--checkpoint", pa.checkpoint, "Count the trainable tensors of a checkpoint");
  p->add_option("--embeddings", pa.embeddings, "Size a fresh model for this embedding file");
  p->add_option("--config", pa.config, "Training config file (key = value)");
  p->add_option("--set", pa.sets, "Override a config key, key=value (repeatable)");

  if (args.empty()) {
    err << app.help();
    return 2;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& ex) {
    err << "fvlink: " << ex.what() << "\n";
    return 2;
  }
  CLI::App* cmd = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
  if (!cmd) {
    err << app.help();
    return 2;
  }
  const std::map<CLI::App*, std::function<void()>> dispatch = {
      {g, [&] { cmd_gen(gen, out); }},     {t, [&] { cmd_train(tr, out); }}, {s, [&] { cmd_score(sc, out); }},
      {e, [&] { cmd_eer(ee, out); }},      {f, [&] { cmd_fuse(fu, out); }},  {p, [&] { cmd_params(pa, out); }},
  };
  try {
    dispatch.at(cmd)();
  } catch (const std::exception& ex) {
    err << "fvlink " << cmd->get_name() << ": error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace fvlink::cli
