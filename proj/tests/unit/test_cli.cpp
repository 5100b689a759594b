#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "gapfuse/pipeline.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string output;
};

Run cli(const std::string& args, const fs::path& dir) {
  const auto log = dir / "cli.log";
  const std::string cmd = std::string("\"") + GAPFUSE_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int raw = std::system(cmd.c_str());
  Run r{raw, gapfuse::read_text_file(log)};
#ifdef WEXITSTATUS
  r.status = WEXITSTATUS(raw);
#endif
  return r;
}

const std::string kSmall = " --synth.n_samples=120 --synth.dim=16 --train.epochs=2";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth then train from the written manifest") {
  const auto dir = oracle::scratch_dir("cli_synth");
  const auto synth = cli("synth --out \"" + (dir / "data").string() + "\"" + kSmall, dir);
  REQUIRE(synth.status == 0);
  for (const char* f : {"image.csv", "text.csv", "labels.csv", "manifest.txt", "synth_summary.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / "data" / f));
  }
  const auto train = cli("train --out \"" + (dir / "run").string() + "\" --data.manifest=\"" +
                             (dir / "data" / "manifest.txt").string() + "\" --train.epochs=2",
                         dir);
  CHECK(train.status == 0);
  for (const char* f : {"report.json", "checkpoint.json", "config.txt"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / "run" / f));
  }
  const auto report = gapfuse::report_from_json(gapfuse::read_text_file(dir / "run" / "report.json"));
  CHECK(report.epochs.size() == 2);
  CHECK(report.dataset.n_train == 96);
}

TEST_CASE("gap, pca, sweep and benchmark write their artifacts") {
  const auto dir = oracle::scratch_dir("cli_cmds");
  CHECK(cli("gap --out \"" + dir.string() + "\"" + kSmall, dir).status == 0);
  CHECK(fs::exists(dir / "gap_report.json"));
  CHECK(fs::exists(dir / "pca_coords.csv"));
  CHECK(cli("pca --lambda 1 --out \"" + dir.string() + "\"" + kSmall, dir).status == 0);
  CHECK(fs::exists(dir / "pca_aligned.csv"));
  CHECK(cli("sweep --out \"" + dir.string() + "\" --sweep.lambda_step=0.5" + kSmall, dir).status == 0);
  std::ifstream csv(dir / "sweep.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "lambda,accuracy,f1,best_epoch");
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) rows += !line.empty();
  CHECK(rows == 5);
  const auto bench = cli("benchmark --paper-shapes --out \"" + dir.string() + "\"", dir);
  CHECK(bench.status == 0);
  CHECK(bench.output.find("241.48 MB") != std::string::npos);
  CHECK(fs::exists(dir / "benchmark.json"));
}

TEST_CASE("missing manifest exits nonzero and names the path") {
  const auto dir = oracle::scratch_dir("cli_missing");
  const auto r = cli("train --data.manifest=/no/such/manifest.txt --out \"" + dir.string() + "\"", dir);
  CHECK(r.status != 0);
  CHECK(r.output.find("/no/such/manifest.txt") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "report.json"));
}

TEST_CASE("bad options are rejected") {
  const auto dir = oracle::scratch_dir("cli_bad");
  CHECK(cli("train --align.lamda=1 --out \"" + dir.string() + "\"", dir).status != 0);
  CHECK(cli("frobnicate", dir).status != 0);
  CHECK(cli("train --config /no/such/config.txt", dir).status != 0);
}

}
