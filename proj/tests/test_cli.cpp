#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "clickval/io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

const char* cli_path() { return CLICKVAL_CLI_PATH; }

struct CmdResult {
  int exit_code = 0;
  std::string stderr_text;
};

CmdResult run(const std::string& args, const fs::path& stderr_file) {
  const std::string cmd = std::string(cli_path()) + " " + args + " 2>" + stderr_file.string();
  const int status = std::system(cmd.c_str());
  CmdResult res;
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(stderr_file);
  std::string line;
  while (std::getline(in, line)) res.stderr_text += line + "\n";
  return res;
}

}  // namespace

TEST_CASE("unknown subcommands and bad flags fail with nonzero exit") {
  testutil::TempDir tmp("cli-bad");
  CHECK(run("frobnicate", tmp / "err").exit_code != 0);
  CHECK(run("train-value --nope", tmp / "err").exit_code != 0);
}

TEST_CASE("config bounds violations name the field and legal range") {
  testutil::TempDir tmp("cli-gamma");
  // the dataset is never read: validation fires first
  const CmdResult res = run("train-value --encoder e.json --data d --out v.json --gamma 1.5",
                            tmp / "err");
  CHECK(res.exit_code != 0);
  CHECK(res.stderr_text.find("gamma") != std::string::npos);
  CHECK(res.stderr_text.find("[0, 1)") != std::string::npos);
}

TEST_CASE("json error mode emits machine-readable errors") {
  testutil::TempDir tmp("cli-jsonerr");
  const CmdResult res =
      run("train-value --encoder e.json --data d --out v.json --gamma 2 --json-errors",
          tmp / "err");
  CHECK(res.exit_code != 0);
  CHECK(res.stderr_text.find("{\"error\":") != std::string::npos);
}

TEST_CASE("pipeline runs end to end and is byte-reproducible") {
  testutil::TempDir tmp("cli-pipe");
  const fs::path root = tmp.path();
  const fs::path cfg_path = root / "cfg.json";
  testutil::write_file(cfg_path, R"({
    "seed": 11,
    "curation": {"min_len": 10, "max_len": 210},
    "encoder": {"embed_dim": 12, "hidden_dim": 12, "learning_rate": 1.0,
                "batch_size": 8, "max_epochs": 3, "early_stop_patience": 2},
    "value": {"alpha": 0.2, "alpha_decay": 1e-5, "sweeps": 6, "stop_tol": 0}
  })");
  const std::string cfg = " --config " + cfg_path.string();

  auto sh = [&](const std::string& args) { return run(args, root / "err.txt"); };

  REQUIRE(sh("simulate --n 300 --out " + (root / "sim").string() + cfg).exit_code == 0);
  REQUIRE(fs::exists(root / "sim" / "manifest.json"));
  REQUIRE(sh("ingest --vocab " + (root / "sim/vocab.json").string() + " --input " +
             (root / "sim/events.jsonl").string() + " --out " + (root / "journeys.jsonl").string() +
             cfg).exit_code == 0);
  REQUIRE(sh("curate --vocab " + (root / "sim/vocab.json").string() + " --journeys " +
             (root / "journeys.jsonl").string() + " --out " + (root / "dataset").string() + cfg)
              .exit_code == 0);
  REQUIRE(sh("train-encoder --data " + (root / "dataset").string() + " --out " +
             (root / "enc.json").string() + cfg).exit_code == 0);
  REQUIRE(sh("train-value --encoder " + (root / "enc.json").string() + " --data " +
             (root / "dataset").string() + " --out " + (root / "val.json").string() + cfg)
              .exit_code == 0);
  REQUIRE(sh("score --encoder " + (root / "enc.json").string() + " --values " +
             (root / "val.json").string() + " --data " + (root / "dataset").string() +
             " --out " + (root / "traces.csv").string() + " --split all" + cfg).exit_code == 0);
  REQUIRE(sh("metrics --traces " + (root / "traces.csv").string() + " --data " +
             (root / "dataset").string() + " --out " + (root / "metrics").string() + cfg)
              .exit_code == 0);
  REQUIRE(sh("validate --traces " + (root / "traces.csv").string() + " --data " +
             (root / "dataset").string() + " --out " + (root / "report.json").string() +
             " --q 1" + cfg).exit_code == 0);
  REQUIRE(sh("predict --traces " + (root / "traces.csv").string() + " --data " +
             (root / "dataset").string() + " --encoder " + (root / "enc.json").string() +
             " --out " + (root / "pred").string() + cfg).exit_code == 0);

  for (const char* artifact :
       {"metrics/journey_z.csv", "metrics/pairs.csv", "metrics/z_distribution.json",
        "metrics/manifest.json", "report.json", "pred/auc.json"}) {
    CAPTURE(artifact);
    CHECK(fs::exists(root / artifact));
  }

  // rerunning the analysis half with identical inputs is byte-identical
  const uint64_t traces_before = clickval::fnv1a_file(root / "traces.csv");
  const uint64_t journey_z_before = clickval::fnv1a_file(root / "metrics" / "journey_z.csv");
  const uint64_t pairs_before = clickval::fnv1a_file(root / "metrics" / "pairs.csv");
  const uint64_t manifest_before = clickval::fnv1a_file(root / "metrics" / "manifest.json");
  REQUIRE(sh("score --encoder " + (root / "enc.json").string() + " --values " +
             (root / "val.json").string() + " --data " + (root / "dataset").string() +
             " --out " + (root / "traces.csv").string() + " --split all" + cfg).exit_code == 0);
  REQUIRE(sh("metrics --traces " + (root / "traces.csv").string() + " --data " +
             (root / "dataset").string() + " --out " + (root / "metrics").string() + cfg)
              .exit_code == 0);
  CHECK(clickval::fnv1a_file(root / "traces.csv") == traces_before);
  CHECK(clickval::fnv1a_file(root / "metrics" / "journey_z.csv") == journey_z_before);
  CHECK(clickval::fnv1a_file(root / "metrics" / "pairs.csv") == pairs_before);
  CHECK(clickval::fnv1a_file(root / "metrics" / "manifest.json") == manifest_before);

  // scoring with --threads does not change output bytes
  REQUIRE(sh("score --encoder " + (root / "enc.json").string() + " --values " +
             (root / "val.json").string() + " --data " + (root / "dataset").string() +
             " --out " + (root / "traces2.csv").string() + " --split all --threads 2" + cfg)
              .exit_code == 0);
  CHECK(clickval::fnv1a_file(root / "traces2.csv") == traces_before);
}
