#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include "fvlink/cli.hpp"
#include "support.hpp"

using namespace fvlink;
using fvtest::slurp;
using fvtest::TempDir;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

// Runs the real executable; returns its exit status.
int spawn(const std::string& args, const std::string& log) {
  const std::string cmd = std::string(FVLINK_BINARY) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// A small multilingual store: 99 identities, 33 per language.
std::vector<std::string> small_gen_sets() {
  return {"--set", "n_identities=99", "--set", "utterances_per_identity=2", "--set", "faces_per_identity=2",
          "--set", "voice_dim=16",     "--set", "face_dim=12",              "--set", "latent_dim=6"};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void write_perfect_fixture(const std::string& scores, const std::string& trials) {
  const ScoreSet s = fvtest::make_score_set({0.9, 0.8, 0.2, 0.1}, {true, true, false, false});
  save_trials(s.trials, trials);
  write_scores(s, scores);
}

}  // namespace

TEST(Cli, NoSubcommandPrintsUsage) {
  const Outcome o = invoke({});
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.err.find("Usage"), std::string::npos);
  TempDir dir("cli_usage");
  EXPECT_NE(spawn("", dir.file("log")), 0);
  EXPECT_NE(slurp(dir.file("log")).find("Usage"), std::string::npos);
}

TEST(Cli, HelpListsEveryFlag) {
  const std::map<std::string, std::vector<std::string>> flags = {
      {"gen",
       {"--config", "--set", "--seed", "--out", "--trials-out", "--policy", "--train-languages", "--eval-languages",
        "--train-out", "--eval-out"}},
      {"train", {"--embeddings", "--config", "--set", "--seed", "--out", "--log"}},
      {"score", {"--embeddings", "--trials", "--checkpoint", "--out"}},
      {"eer", {"--scores", "--trials", "--roc-out"}},
      {"fuse", {"--scores", "--trials", "--stats-from", "--out"}},
      {"params", {"--checkpoint", "--embeddings", "--config", "--set"}},
  };
  const Outcome top = invoke({"--help"});
  EXPECT_EQ(top.code, 0);
  for (const auto& [cmd, list] : flags) {
    EXPECT_NE(top.out.find(cmd), std::string::npos) << cmd;
    const Outcome o = invoke({cmd, "--help"});
    EXPECT_EQ(o.code, 0);
    for (const auto& f : list) EXPECT_NE(o.out.find(f), std::string::npos) << cmd << " " << f;
  }
}

TEST(Cli, UnknownFlagRejected) {
  const Outcome o = invoke({"eer", "--scores", "a", "--trials", "b", "--bogus"});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("--bogus"), std::string::npos);
  EXPECT_NE(invoke({"frobnicate"}).code, 0);
}

TEST(Cli, EerOnPerfectFixture) {
  TempDir dir("cli_eer");
  write_perfect_fixture(dir.file("s.tsv"), dir.file("t.tsv"));
  const Outcome o = invoke({"eer", "--scores", dir.file("s.tsv"), "--trials", dir.file("t.tsv"), "--roc-out", dir.file("roc")});
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(o.out.substr(0, 10), "EER=0.00% ");
  const auto roc = text::read_lines(dir.file("roc"));
  EXPECT_EQ(roc.front(), "threshold\tfar\tfrr");
  EXPECT_EQ(roc.size(), 6u);

  EXPECT_EQ(spawn("eer --scores " + dir.file("s.tsv") + " --trials " + dir.file("t.tsv"), dir.file("log")), 0);
  EXPECT_EQ(slurp(dir.file("log")).substr(0, 9), "EER=0.00%");
}

TEST(Cli, DefaultStageTableEchoedBeforeTraining) {
  TempDir dir("cli_table");
  ASSERT_EQ(invoke({"gen", "--out", dir.file("e.tsv"), "--set", "n_identities=40", "--set", "utterances_per_identity=1",
                    "--set", "faces_per_identity=1", "--set", "voice_dim=8", "--set", "face_dim=8", "--set", "latent_dim=4"})
                .code,
            0);
  const std::string two_stage = std::string(FVLINK_DEMO_CONFIGS) + "/two_stage.cfg";
  for (const auto& extra : {std::vector<std::string>{}, std::vector<std::string>{"--config", two_stage}}) {
    const Outcome o = invoke(concat({"train", "--embeddings", dir.file("e.tsv"), "--out", dir.file("c.ckpt")}, extra));
    ASSERT_EQ(o.code, 0) << o.err;
    std::istringstream lines(o.out);
    std::string header, s1, s2;
    std::getline(lines, header);
    std::getline(lines, s1);
    std::getline(lines, s2);
    EXPECT_EQ(header, "stage  epochs  lr        batch  groups");
    EXPECT_EQ(s1, "1      5       0.001     32     classifier");
    EXPECT_EQ(s2, "2      15      0.0001    16     lora");
  }
}

TEST(Cli, FullFlowIsByteReproducible) {
  std::vector<std::map<std::string, std::string>> runs;
  for (int rep = 0; rep < 2; ++rep) {
    TempDir dir("cli_flow");
    const auto f = [&](const std::string& n) { return dir.file(n); };
    Outcome o = invoke(concat({"gen", "--out", f("all.tsv"), "--seed", "3", "--train-languages", "EN", "--eval-languages",
                               "DE,UR", "--train-out", f("train.tsv"), "--eval-out", f("eval.tsv"), "--trials-out",
                               f("trials.tsv"), "--policy", "balanced:200"},
                              small_gen_sets()));
    ASSERT_EQ(o.code, 0) << o.err;
    o = invoke({"train", "--embeddings", f("train.tsv"), "--out", f("model.ckpt"), "--log", f("train.log"), "--set",
                "stage1.epochs=2", "--set", "stage2.epochs=2", "--set", "stage1.groups=heads,gate,classifier"});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_NE(o.out.find("trained "), std::string::npos);
    o = invoke({"score", "--embeddings", f("eval.tsv"), "--trials", f("trials.tsv"), "--checkpoint", f("model.ckpt"),
                "--out", f("scores.tsv")});
    ASSERT_EQ(o.code, 0) << o.err;
    o = invoke({"eer", "--scores", f("scores.tsv"), "--trials", f("trials.tsv")});
    ASSERT_EQ(o.code, 0) << o.err;
    const std::string eer_line = o.out;

    // A second system from another seed, then fusion of the two.
    o = invoke({"train", "--embeddings", f("train.tsv"), "--out", f("model2.ckpt"), "--seed", "9", "--set",
                "stage1.epochs=1", "--set", "stage2.epochs=1"});
    ASSERT_EQ(o.code, 0) << o.err;
    o = invoke({"score", "--embeddings", f("eval.tsv"), "--trials", f("trials.tsv"), "--checkpoint", f("model2.ckpt"),
                "--out", f("scores2.tsv")});
    ASSERT_EQ(o.code, 0) << o.err;
    o = invoke({"fuse", "--scores", f("scores.tsv"), "--scores", f("scores2.tsv"), "--trials", f("trials.tsv"), "--out",
                f("fused.tsv")});
    ASSERT_EQ(o.code, 0) << o.err;
    o = invoke({"params", "--checkpoint", f("model.ckpt")});
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_EQ(o.out.substr(0, 17), "trainable_params=");

    std::map<std::string, std::string> files;
    for (const char* n : {"all.tsv", "train.tsv", "eval.tsv", "trials.tsv", "model.ckpt", "train.log", "scores.tsv",
                          "scores2.tsv", "fused.tsv"}) {
      files[n] = slurp(f(n));
      EXPECT_FALSE(files[n].empty()) << n;
    }
    files["eer"] = eer_line;
    runs.push_back(std::move(files));
  }
  for (const auto& [name, content] : runs[0]) EXPECT_TRUE(content == runs[1].at(name)) << name << " differs between runs";
}

TEST(Cli, ParamsPerStage) {
  TempDir dir("cli_params");
  ASSERT_EQ(invoke(concat({"gen", "--out", dir.file("e.tsv")}, small_gen_sets())).code, 0);
  const Outcome o = invoke({"params", "--embeddings", dir.file("e.tsv"), "--set", "lora_rank=2"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("stage1 groups=classifier trainable_params="), std::string::npos);
  EXPECT_NE(o.out.find("stage2 groups=lora trainable_params="), std::string::npos);
}

TEST(Cli, DiagnosticsNameTheFlagOrFile) {
  TempDir dir("cli_diag");
  write_perfect_fixture(dir.file("s.tsv"), dir.file("t.tsv"));

  Outcome o = invoke({"eer", "--scores", dir.file("missing.tsv"), "--trials", dir.file("t.tsv")});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("missing.tsv"), std::string::npos) << o.err;
  EXPECT_EQ(std::count(o.err.begin(), o.err.end(), '\n'), 1);

  text::write_file(dir.file("bad.tsv"), "voice\tface\tscore\nv0\tf0\tnot-a-number\n");
  o = invoke({"eer", "--scores", dir.file("bad.tsv"), "--trials", dir.file("t.tsv")});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("bad.tsv"), std::string::npos) << o.err;

  text::write_file(dir.file("cfg"), "n_identities = -3\n");
  o = invoke({"gen", "--config", dir.file("cfg"), "--out", dir.file("e.tsv")});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("--config"), std::string::npos) << o.err;

  o = invoke({"gen", "--out", dir.file("e.tsv"), "--policy", "sometimes"});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("--policy"), std::string::npos) << o.err;

  o = invoke({"gen", "--out", dir.file("e.tsv"), "--set", "noequals"});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("--set"), std::string::npos) << o.err;

  o = invoke({"train", "--embeddings", dir.file("nope.tsv"), "--out", dir.file("c")});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("--embeddings"), std::string::npos) << o.err;

  o = invoke({"score", "--embeddings", dir.file("s.tsv"), "--trials", dir.file("t.tsv"), "--checkpoint", dir.file("c"),
              "--out", dir.file("o")});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("--embeddings"), std::string::npos) << o.err;

  const ScoreSet flat = fvtest::make_score_set({0.5, 0.5, 0.5, 0.5}, {true, true, false, false});
  write_scores(flat, dir.file("flat.tsv"));
  o = invoke({"fuse", "--scores", dir.file("s.tsv"), "--scores", dir.file("flat.tsv"), "--trials", dir.file("t.tsv"), "--out",
              dir.file("f.tsv")});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("--scores " + dir.file("flat.tsv")), std::string::npos) << o.err;

  o = invoke({"fuse", "--scores", dir.file("s.tsv"), "--scores", dir.file("s.tsv"), "--stats-from", dir.file("s.tsv"),
              "--trials", dir.file("t.tsv"), "--out", dir.file("f.tsv")});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("--stats-from"), std::string::npos) << o.err;
}
