#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "carol/distances.hpp"
#include "carol/io.hpp"
#include "carol/metrics.hpp"

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("carol_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

struct CliResult {
  int code = -1;
  std::string out;  // stdout and stderr interleaved
};

// Runs the installed binary from `workdir` so relative paths in args resolve
// there. Output is captured through a log file beside the run.
CliResult run_cli(const std::string& args, const fs::path& workdir,
                  const std::string& env = "") {
  static int counter = 0;
  const fs::path log = workdir / ("cli_log_" + std::to_string(counter++) + ".txt");
  std::string cmd = "cd '" + workdir.string() + "' && ";
  if (!env.empty()) cmd += "env " + env + " ";
  cmd += "'" CAROL_CLI_PATH "' " + args + " > '" + log.string() + "' 2>&1";
  const int raw = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(raw));
  return {WEXITSTATUS(raw), read_file(log)};
}

// First `key=value` stdout line wins; missing keys come back empty.
std::string value_of(const std::string& out, const std::string& key) {
  for (const std::string& line : split_lines(out))
    if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
  return "";
}

// Generates the shared 100-document corpus at <dir>/ds/corpus.jsonl.
void make_corpus(const fs::path& dir) {
  const CliResult r = run_cli(
      "gen-synth --n_minority 20 --imbalance_ratio 4 --overlap 0.2 --vocab_size 400 "
      "--doc_len 10 --seed 5 --feat_dim 128 -o ds",
      dir);
  REQUIRE(r.code == 0);
  REQUIRE(fs::exists(dir / "ds" / "corpus.jsonl"));
}

const std::string kTrainArgs =
    "--train_corpus ds/corpus.jsonl --feat_dim 128 --emb_dim 8 --epochs 2 "
    "--seed 11 --test_frac 0.25";

}  // namespace

TEST_CASE("gen-synth is deterministic across reruns") {
  const fs::path dir = temp_dir("gen");
  const std::string args =
      "gen-synth --n_minority 30 --imbalance_ratio 4 --vocab_size 300 --doc_len 12 "
      "--seed 9 --feat_dim 128";
  const CliResult a = run_cli(args + " -o g1", dir);
  const CliResult b = run_cli(args + " -o g2", dir);
  CHECK(a.code == 0);
  CHECK(b.code == 0);
  CHECK(value_of(a.out, "docs") == "150");
  CHECK(value_of(a.out, "minority") == "30");
  CHECK(value_of(a.out, "imbalance_ratio") == "4");

  const std::string corpus1 = read_file(dir / "g1" / "corpus.jsonl");
  CHECK(corpus1 == read_file(dir / "g2" / "corpus.jsonl"));
  CHECK(split_lines(corpus1).size() == 150);
  CHECK(fs::exists(dir / "g1" / "corpus.jsonl.meta.json"));
}

TEST_CASE("train writes byte-identical artifacts on rerun") {
  const fs::path dir = temp_dir("train");
  make_corpus(dir);

  const CliResult a = run_cli("train " + kTrainArgs + " -o t1", dir);
  const CliResult b = run_cli("train " + kTrainArgs + " -o t2", dir);
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);

  for (const char* name : {"run_report.json", "training_log.csv", "embeddings_train.csv",
                           "embeddings_test.csv", "projection.csv", "encoder.ckpt"})
    CHECK(read_file(dir / "t1" / name) == read_file(dir / "t2" / name));

  // Timing may differ between the runs, so it stays out of the report file.
  const std::string report = read_file(dir / "t1" / "run_report.json");
  CHECK(report.find("wall") == std::string::npos);
  CHECK(value_of(a.out, "wall_seconds") != "");
  CHECK(value_of(a.out, "f1") != "");
  CHECK(value_of(a.out, "config.c") == "0.5");

  const nlohmann::json parsed = nlohmann::json::parse(report);
  for (const char* key : {"config", "epochs", "classifier", "test"}) CHECK(parsed.contains(key));
}

TEST_CASE("exit codes follow error categories") {
  const fs::path dir = temp_dir("codes");
  make_corpus(dir);

  CHECK(run_cli("train --c 1.5 --train_corpus ds/corpus.jsonl", dir).code == 2);
  CHECK(run_cli("train --definitely_not_a_flag 1", dir).code == 2);
  CHECK(run_cli("", dir).code == 2);
  CHECK(run_cli("overlap --k 5", dir).code == 2);

  const CliResult missing = run_cli("train --train_corpus missing.jsonl", dir);
  CHECK(missing.code == 3);
  CHECK(missing.out.find("load-train") != std::string::npos);

  const CliResult diverged = run_cli("train " + kTrainArgs + " --lr 1e308 -o d1", dir);
  CHECK(diverged.code == 4);
  CHECK(diverged.out.find("step") != std::string::npos);

  CHECK(run_cli("--help", dir).code == 0);
  const CliResult sub_help = run_cli("train --help", dir);
  CHECK(sub_help.code == 0);
  CHECK(sub_help.out.find("--recon_batch") != std::string::npos);
}

TEST_CASE("config files supply values and explicit flags win") {
  const fs::path dir = temp_dir("config");
  make_corpus(dir);
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "# defaults for the small corpus\n"
        << "c=0.25\n"
        << "epochs=1\n"
        << "feat_dim=128\n"
        << "emb_dim=8\n"
        << "train_corpus=ds/corpus.jsonl\n";
  }

  const CliResult r =
      run_cli("train --config run.cfg --epochs 2 --test_frac 0.25 --seed 11 -o c1", dir);
  REQUIRE(r.code == 0);
  CHECK(value_of(r.out, "config.c") == "0.25");
  CHECK(value_of(r.out, "config.epochs") == "2");
  CHECK(value_of(r.out, "config.feat_dim") == "128");
  CHECK(value_of(r.out, "config.train_corpus") == "ds/corpus.jsonl");

  { std::ofstream cfg(dir / "bad_key.cfg"); cfg << "bogus_key=7\n"; }
  const CliResult bad_key = run_cli("train --config bad_key.cfg", dir);
  CHECK(bad_key.code == 2);
  CHECK(bad_key.out.find("unknown key") != std::string::npos);

  { std::ofstream cfg(dir / "bad_line.cfg"); cfg << "c 0.25\n"; }
  const CliResult bad_line = run_cli("train --config bad_line.cfg", dir);
  CHECK(bad_line.code == 2);
  CHECK(bad_line.out.find("expected key=value") != std::string::npos);

  CHECK(run_cli("train --config missing.cfg", dir).code == 3);
}

TEST_CASE("sweep-c writes sorted cells and per-c means") {
  const fs::path dir = temp_dir("sweep");
  make_corpus(dir);

  const CliResult r = run_cli(
      "sweep-c --c 0,0.5,1 --seeds 1,2,3 --jobs 2 --train_corpus ds/corpus.jsonl "
      "--feat_dim 128 --emb_dim 8 --epochs 1 --test_frac 0.25 -o sw",
      dir);
  REQUIRE(r.code == 0);
  CHECK(value_of(r.out, "sweep.cells") == "9");
  CHECK(value_of(r.out, "sweep.failed") == "0");
  for (const char* c : {"0", "0.5", "1"}) {
    CHECK(value_of(r.out, std::string("mean.") + c + ".cells") == "3");
    CHECK(value_of(r.out, std::string("mean.") + c + ".f1") != "");
    CHECK(value_of(r.out, std::string("mean.") + c + ".final_recon") != "");
  }
  const std::string best = value_of(r.out, "best_c");
  CHECK((best == "0" || best == "0.5" || best == "1"));
  CHECK(value_of(r.out, "best_c_selection") == "oracle_test_f1");

  const std::vector<std::string> lines = split_lines(read_file(dir / "sw" / "sweep_table.csv"));
  REQUIRE(lines.size() == 10);
  CHECK(lines[0] == "c,seed,status,f1,si,kdn,final_carol,final_recon");
  const char* prefixes[] = {"0,1,ok,",   "0,2,ok,",   "0,3,ok,",
                            "0.5,1,ok,", "0.5,2,ok,", "0.5,3,ok,",
                            "1,1,ok,",   "1,2,ok,",   "1,3,ok,"};
  for (std::size_t i = 0; i < 9; ++i) CHECK(lines[i + 1].rfind(prefixes[i], 0) == 0);
}

TEST_CASE("overlap and project agree with the training artifacts") {
  const fs::path dir = temp_dir("aux");
  make_corpus(dir);
  const CliResult train = run_cli("train " + kTrainArgs + " -o t1", dir);
  REQUIRE(train.code == 0);

  const CliResult ov = run_cli("overlap --embeddings t1/embeddings_test.csv --k 5", dir);
  REQUIRE(ov.code == 0);
  const carol::LabeledEmbeddings le =
      carol::read_embeddings_csv((dir / "t1" / "embeddings_test.csv").string());
  const carol::OverlapReport expected =
      carol::overlap_report(le.embeddings, le.labels, 5, carol::DistanceKind::Euclidean);
  CHECK(value_of(ov.out, "si") == carol::format_double(expected.si));
  CHECK(value_of(ov.out, "kdn") == carol::format_double(expected.kdn));
  CHECK(value_of(ov.out, "points") == std::to_string(le.labels.size()));
  // Same numbers the training summary reported for its test split.
  CHECK(value_of(train.out, "si") == value_of(ov.out, "si"));
  CHECK(value_of(train.out, "kdn") == value_of(ov.out, "kdn"));

  CHECK(run_cli("overlap --embeddings missing.csv", dir).code == 3);

  const CliResult pr = run_cli("project --embeddings t1/embeddings_test.csv -o p1", dir);
  REQUIRE(pr.code == 0);
  CHECK(value_of(pr.out, "eigenvalue.0") != "");
  CHECK(read_file(dir / "p1" / "projection.csv") == read_file(dir / "t1" / "projection.csv"));
}

TEST_CASE("evaluate reproduces test metrics from a checkpoint") {
  const fs::path dir = temp_dir("eval");
  make_corpus(dir);
  REQUIRE(run_cli("train " + kTrainArgs + " -o t1", dir).code == 0);

  const CliResult ev =
      run_cli("evaluate --encoder t1/encoder.ckpt " + kTrainArgs + " -o e1", dir);
  REQUIRE(ev.code == 0);

  const nlohmann::json trained = nlohmann::json::parse(read_file(dir / "t1" / "run_report.json"));
  const nlohmann::json evaluated = nlohmann::json::parse(read_file(dir / "e1" / "run_report.json"));
  CHECK(trained["test"] == evaluated["test"]);
  CHECK(trained["classifier"] == evaluated["classifier"]);
  CHECK(read_file(dir / "t1" / "embeddings_test.csv") ==
        read_file(dir / "e1" / "embeddings_test.csv"));

  CHECK(run_cli("evaluate " + kTrainArgs, dir).code == 2);
  CHECK(run_cli("evaluate --encoder missing.ckpt " + kTrainArgs, dir).code == 3);
}

TEST_CASE("CAROL_OUT_ROOT provides the default output root") {
  const fs::path dir = temp_dir("outroot");
  const fs::path rooted = dir / "rooted";
  const CliResult r = run_cli(
      "gen-synth --n_minority 5 --imbalance_ratio 2 --vocab_size 50 --doc_len 5 --seed 1",
      dir, "CAROL_OUT_ROOT='" + rooted.string() + "'");
  REQUIRE(r.code == 0);
  CHECK(value_of(r.out, "out") == rooted.string());
  CHECK(fs::exists(rooted / "corpus.jsonl"));
}
