#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "edr/checkpoint.hpp"

using namespace edr;
namespace fs = std::filesystem;

#ifndef EDR_CLI_PATH
#define EDR_CLI_PATH "edr"
#endif

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

fs::path work_dir() {
  fs::path dir = fs::temp_directory_path() / "edr_cli_tests";
  fs::create_directories(dir);
  return dir;
}

RunResult run_cli(const std::string& args) {
  const fs::path out = work_dir() / "stdout.txt";
  const fs::path err = work_dir() / "stderr.txt";
  const std::string cmd = std::string(EDR_CLI_PATH) + " " + args + " > " + out.string() +
                          " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream of(out), ef(err);
  r.out.assign(std::istreambuf_iterator<char>(of), std::istreambuf_iterator<char>());
  r.err.assign(std::istreambuf_iterator<char>(ef), std::istreambuf_iterator<char>());
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// One small trained model shared by the translate/score/reconstruct tests.
const fs::path& fixture_run() {
  static fs::path run = [] {
    fs::path dir = work_dir() / "fixture";
    fs::remove_all(dir);
    fs::create_directories(dir);
    RunResult gen = run_cli("gen-data --task copy --n 80 --dev 12 --vocab-size 10 --len 1:5"
                            " --seed 3 --out " +
                            (dir / "data").string());
    REQUIRE(gen.exit_code == 0);
    RunResult tr = run_cli("train --train " + (dir / "data").string() + " --dev " +
                           (dir / "data.dev").string() + " --out " + (dir / "run").string() +
                           " --stage both --lambda 1 --epochs1 2 --epochs2 2 --batch-size 8"
                           " --embed 8 --hidden 12 --dropout 0 --checkpoint-every 0 --seed 5");
    REQUIRE(tr.exit_code == 0);
    return dir;
  }();
  return run;
}

}  // namespace

TEST_CASE("cli: config precedence is defaults < file < flags") {
  fs::path dir = fixture_run();
  fs::path cfg = work_dir() / "prec.cfg";
  {
    std::ofstream f(cfg);
    f << "# three-layer fixture\nbeam = 4\nlambda = 0\n";
  }
  const std::string base = "translate --model " + (dir / "run/model.edrc").string() +
                           " --input " + (dir / "data.dev.src").string() + " --output -";

  RunResult defaults = run_cli(base);
  CHECK(defaults.exit_code == 0);
  CHECK(defaults.err.find("beam = 10") != std::string::npos);

  RunResult from_file = run_cli(base + " --config " + cfg.string());
  CHECK(from_file.exit_code == 0);
  CHECK(from_file.err.find("beam = 4") != std::string::npos);
  CHECK(from_file.err.find("lambda = 0") != std::string::npos);

  RunResult flag_wins = run_cli(base + " --config " + cfg.string() + " --beam 2");
  CHECK(flag_wins.exit_code == 0);
  CHECK(flag_wins.err.find("beam = 2") != std::string::npos);
  CHECK(flag_wins.err.find("lambda = 0") != std::string::npos);
}

TEST_CASE("cli: gen-data is byte-identical across runs with one seed") {
  fs::path a = work_dir() / "gen_a";
  fs::path b = work_dir() / "gen_b";
  REQUIRE(run_cli("gen-data --task lexsub --n 50 --dev 5 --vocab-size 15 --len 2:7 --seed 42"
                  " --out " + a.string()).exit_code == 0);
  REQUIRE(run_cli("gen-data --task lexsub --n 50 --dev 5 --vocab-size 15 --len 2:7 --seed 42"
                  " --out " + b.string()).exit_code == 0);
  CHECK(slurp(a.string() + ".src") == slurp(b.string() + ".src"));
  CHECK(slurp(a.string() + ".tgt") == slurp(b.string() + ".tgt"));
  REQUIRE(run_cli("gen-data --task lexsub --n 50 --dev 5 --vocab-size 15 --len 2:7 --seed 43"
                  " --out " + b.string()).exit_code == 0);
  CHECK(slurp(a.string() + ".tgt") != slurp(b.string() + ".tgt"));
}

TEST_CASE("cli: lambda 0 training never constructs reconstructor tensors") {
  fs::path dir = work_dir() / "lambda0";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunResult tr = run_cli("train --task copy --gen 40 --gen-dev 8 --gen-vocab 10"
                         " --gen-len 1:4 --out " + (dir / "run").string() +
                         " --stage both --lambda 0 --epochs1 1 --epochs2 1 --batch-size 8"
                         " --embed 6 --hidden 8 --dropout 0 --checkpoint-every 0 --seed 2");
  REQUIRE(tr.exit_code == 0);
  std::vector<std::string> names = checkpoint_manifest(dir / "run" / "model.edrc");
  for (const auto& n : names) {
    INFO(n);
    CHECK(n.find("rec.") == std::string::npos);
  }
  std::size_t src_embed_count = 0;
  for (const auto& n : names)
    if (n == "src_embed") ++src_embed_count;
  CHECK(src_embed_count == 1);

  // A stage-1-only checkpoint refuses lambda > 0 reranking.
  RunResult bad = run_cli("translate --model " + (dir / "run/model.edrc").string() +
                          " --input " + (dir / "run/dev.src").string() + " --lambda 1");
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("reconstructor") != std::string::npos);
}

TEST_CASE("cli: translate output is independent of --jobs and reproducible") {
  fs::path dir = fixture_run();
  const std::string base = "translate --model " + (dir / "run/model.edrc").string() +
                           " --input " + (dir / "data.dev.src").string() + " --beam 4";
  fs::path o1 = work_dir() / "jobs1.txt";
  fs::path o2 = work_dir() / "jobs2.txt";
  fs::path k1 = work_dir() / "jobs1.kbest.tsv";
  fs::path k2 = work_dir() / "jobs2.kbest.tsv";
  REQUIRE(run_cli(base + " --jobs 1 --output " + o1.string() + " --kbest-out " + k1.string())
              .exit_code == 0);
  REQUIRE(run_cli(base + " --jobs 3 --output " + o2.string() + " --kbest-out " + k2.string())
              .exit_code == 0);
  CHECK(slurp(o1) == slurp(o2));
  CHECK(slurp(k1) == slurp(k2));
}

TEST_CASE("cli: k-best scores recompute from the TSV columns") {
  fs::path dir = fixture_run();
  fs::path kb = work_dir() / "recompute.kbest.tsv";
  REQUIRE(run_cli("translate --model " + (dir / "run/model.edrc").string() + " --input " +
                  (dir / "data.dev.src").string() + " --beam 4 --lambda 1 --kbest-out " +
                  kb.string())
              .exit_code == 0);
  std::ifstream in(kb);
  std::string header;
  std::getline(in, header);
  CHECK(header == "sent_id\trank_final\trank_phase1\tlog_lik\tlog_rec\tscore\ttokens");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string sent_id, rank_final, rank_phase1, log_lik, log_rec, score;
    std::getline(ss, sent_id, '\t');
    std::getline(ss, rank_final, '\t');
    std::getline(ss, rank_phase1, '\t');
    std::getline(ss, log_lik, '\t');
    std::getline(ss, log_rec, '\t');
    std::getline(ss, score, '\t');
    CHECK(std::abs((std::stod(log_lik) + 1.0 * std::stod(log_rec)) - std::stod(score)) <
          1e-9);
    ++rows;
  }
  CHECK(rows > 0);
}

TEST_CASE("cli: score emits teacher-forced scores and errors cleanly") {
  fs::path dir = fixture_run();
  fs::path out = work_dir() / "scores.tsv";
  REQUIRE(run_cli("score --model " + (dir / "run/model.edrc").string() + " --src " +
                  (dir / "data.dev.src").string() + " --tgt " +
                  (dir / "data.dev.tgt").string() + " --out " + out.string())
              .exit_code == 0);
  std::ifstream in(out);
  std::string header;
  std::getline(in, header);
  CHECK(header == "sent_id\tlog_lik\tlog_rec");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string id, lik, rec;
    std::getline(ss, id, '\t');
    std::getline(ss, lik, '\t');
    std::getline(ss, rec, '\t');
    CHECK(std::stod(lik) <= 0.0);
    CHECK(std::stod(rec) <= 0.0);
    ++rows;
  }
  CHECK(rows == 12);

  fs::path empty_line = work_dir() / "empty.src";
  {
    std::ofstream f(empty_line);
    f << "4 5\n\n4\n";
  }
  RunResult bad = run_cli("score --model " + (dir / "run/model.edrc").string() + " --src " +
                          empty_line.string() + " --tgt " + empty_line.string());
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("line 2") != std::string::npos);
}

TEST_CASE("cli: usage errors exit 1, data errors exit 2") {
  CHECK(run_cli("translate --no-such-flag").exit_code == 1);
  CHECK(run_cli("nonsense-command").exit_code == 1);
  fs::path dir = fixture_run();
  RunResult missing = run_cli("translate --model " + (dir / "run/model.edrc").string() +
                              " --input /nonexistent/path.src");
  CHECK(missing.exit_code == 2);
  RunResult bad_task = run_cli("gen-data --task quux --out " + (work_dir() / "x").string());
  CHECK(bad_task.exit_code == 1);
}

TEST_CASE("cli: train metrics are reproducible byte for byte") {
  fs::path a = work_dir() / "repro_a";
  fs::path b = work_dir() / "repro_b";
  for (const fs::path& dir : {a, b}) {
    fs::remove_all(dir);
    RunResult tr = run_cli("train --task reverse --gen 40 --gen-dev 8 --gen-vocab 10"
                           " --gen-len 1:4 --out " + dir.string() +
                           " --stage both --lambda 1 --epochs1 1 --epochs2 1 --batch-size 8"
                           " --embed 6 --hidden 8 --dropout 0.2 --checkpoint-every 3 --seed 9");
    REQUIRE(tr.exit_code == 0);
  }
  CHECK(slurp(a / "metrics.tsv") == slurp(b / "metrics.tsv"));
  CHECK(slurp(a / "model.edrc") == slurp(b / "model.edrc"));
}
