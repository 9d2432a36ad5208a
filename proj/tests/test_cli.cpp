#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(JET_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / name) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string path(const std::string& f) const { return (dir / f).string(); }
};

}  // namespace

TEST_CASE("usage errors exit 1, runtime errors exit 2") {
  Scratch s("jet_cli_codes");
  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("--help") == 0);
  CHECK(run("label") == 1);
  CHECK(run("synth --size 0 --out-dir " + s.path("o")) == 1);
  {
    std::ofstream bad(s.path("bad.jsonl"));
    bad << "{\"context\":[\"a\"]}\n";
  }
  CHECK(run("label --in " + s.path("bad.jsonl") + " --out-dir " + s.path("o")) == 2);
}

TEST_CASE("synth is seed-deterministic") {
  Scratch s("jet_cli_synth");
  REQUIRE(run("synth --size 5 --seed 3 --out-dir " + s.path("a")) == 0);
  REQUIRE(run("synth --size 5 --seed 3 --out-dir " + s.path("b")) == 0);
  REQUIRE(run("synth --size 5 --seed 4 --out-dir " + s.path("c")) == 0);
  const std::string a = slurp(s.path("a/synth.jsonl"));
  CHECK(a == slurp(s.path("b/synth.jsonl")));
  CHECK(a != slurp(s.path("c/synth.jsonl")));
  CHECK(std::count(a.begin(), a.end(), '\n') == 5);
  CHECK(fs::exists(s.path("a/effective_config.toml")));
}

TEST_CASE("label leaves its input alone") {
  Scratch s("jet_cli_label");
  REQUIRE(run("synth --size 4 --out-dir " + s.dir.string()) == 0);
  const std::string in = s.path("synth.jsonl");
  const std::string before = slurp(in);
  CHECK(run("label --in " + in + " --mode hard --out-dir " + s.dir.string()) == 0);
  CHECK(run("label --in " + in + " --mode soft --hash-fallback --out-dir " + s.dir.string()) == 0);
  CHECK(slurp(in) == before);
  CHECK(slurp(s.path("labeled-hard.jsonl")).find("\"tags\"") != std::string::npos);
  CHECK(slurp(s.path("labeled-soft.jsonl")).find("\"scores\"") != std::string::npos);
  CHECK(run("label --in " + in + " --mode soft --out-dir " + s.dir.string()) == 2);
  CHECK(run("label --in " + in + " --out " + in + " --out-dir " + s.dir.string()) == 2);
  CHECK(slurp(in) == before);

  {
    std::ofstream noref(s.path("noref.jsonl"));
    noref << "{\"context\":[\"a b\"],\"utterance\":\"c\"}\n";
  }
  CHECK(run("label --in " + s.path("noref.jsonl") + " --out noref-labeled.jsonl --out-dir " + s.dir.string()) == 2);
  CHECK_FALSE(fs::exists(s.path("noref-labeled.jsonl")));
}

TEST_CASE("train, restore and evaluate") {
  Scratch s("jet_cli_pipeline");
  const std::string d = " --out-dir " + s.dir.string();
  REQUIRE(run("synth --size 10" + d) == 0);
  REQUIRE(run("label --in " + s.path("synth.jsonl") + d) == 0);
  REQUIRE(run("train --train " + s.path("labeled-hard.jsonl") +
              " --epochs 2 --batch-size 4 --lr 1e-3 --fraction 0.5 --checkpoint-every 1" + d) == 0);
  CHECK(fs::exists(s.path("model.ckpt")));
  CHECK(fs::exists(s.path("checkpoint-epoch1.ckpt")));
  CHECK(fs::exists(s.path("vocab.json")));
  const std::string summary = slurp(s.path("train_summary.json"));
  CHECK(summary.find("\"training_samples\": 5") != std::string::npos);
  const std::string log = slurp(s.path("loss_log.csv"));
  CHECK(log.rfind("epoch,step,picker_loss,generator_loss,joint_loss\n", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == 3);

  REQUIRE(run("restore --checkpoint " + s.path("model.ckpt") + " --in " + s.path("synth.jsonl") +
              " --beam 2 --max-len 6 --nbest 2" + d) == 0);
  const std::string preds = slurp(s.path("predictions.jsonl"));
  CHECK(std::count(preds.begin(), preds.end(), '\n') == 10);
  CHECK(preds.find("\"nbest\"") != std::string::npos);

  REQUIRE(run("evaluate --predictions " + s.path("predictions.jsonl") + " --gold " + s.path("synth.jsonl") + d) == 0);
  const std::string report = slurp(s.path("report.json"));
  for (const char* key : {"rouge1", "rouge2", "bleu1", "bleu2", "bleu4", "f1", "f2", "f3", "em", "pickup_ratio",
                          "difference", "bleu_by_length"})
    CHECK(report.find(std::string("\"") + key + "\"") != std::string::npos);
  CHECK(fs::exists(s.path("report.txt")));

  // A vocabulary from another run is rejected.
  {
    std::ofstream v(s.path("other_vocab.json"));
    v << R"(["<pad>","<s>","</s>","<unk>","[X1]","[X2]","zzz"])";
  }
  CHECK(run("restore --checkpoint " + s.path("model.ckpt") + " --vocab " + s.path("other_vocab.json") + " --in " +
            s.path("synth.jsonl") + d) == 2);
}

TEST_CASE("config file values and flag overrides") {
  Scratch s("jet_cli_config");
  {
    std::ofstream cfg(s.path("run.toml"));
    cfg << "seed = 99\n[synth]\nsize = 3\n";
  }
  REQUIRE(run("--config " + s.path("run.toml") + " synth --out-dir " + s.path("a")) == 0);
  const std::string a = slurp(s.path("a/synth.jsonl"));
  CHECK(std::count(a.begin(), a.end(), '\n') == 3);
  CHECK(slurp(s.path("a/effective_config.toml")).find("seed=99") != std::string::npos);
  REQUIRE(run("--config " + s.path("run.toml") + " synth --size 2 --out-dir " + s.path("b")) == 0);
  const std::string b = slurp(s.path("b/synth.jsonl"));
  CHECK(std::count(b.begin(), b.end(), '\n') == 2);
}
