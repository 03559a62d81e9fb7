// End-to-end checks of the command-line surface: worked examples and exit
// codes. Needs ATPO_CLI_BIN (set by ctest); skipped when absent.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "atpo/trace_io.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace atpo;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

const char* cli_bin() { return std::getenv("ATPO_CLI_BIN"); }

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path log = fs::temp_directory_path() / ("atpo_cli_" + std::to_string(::getpid()) +
                                                    "_" + std::to_string(counter++) + ".log");
  const std::string cmd = std::string(cli_bin()) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  fs::remove(log);
  return r;
}

fs::path scratch_dir() {
  static fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("atpo_cli_scratch_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

}  // namespace

TEST_CASE("cli: generate-data determinism and failure codes") {
  if (!cli_bin()) return;
  const std::string a = (scratch_dir() / "data_a.tsv").string();
  const std::string b = (scratch_dir() / "data_b.tsv").string();
  CHECK(run_cli("generate-data --task sort --count 100 --length 16 --seed 7 --out " + a).code == 0);
  CHECK(run_cli("generate-data --task sort --count 100 --length 16 --seed 7 --out " + b).code == 0);
  std::ifstream fa(a), fb(b);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  const std::string text = sa.str();
  CHECK(text == sb.str());
  CHECK(std::count(text.begin(), text.end(), '\n') == 101);  // header + 100 rows

  // length too small for the gold answer: usage error naming the constraint
  const CliResult tiny =
      run_cli("generate-data --task sort --count 1 --length 3 --out " + a);
  CHECK(tiny.code == 2);
  CHECK(tiny.out.find("length") != std::string::npos);

  // unwritable path is an io error
  CHECK(run_cli("generate-data --task sort --count 1 --length 16 --out /nonexistent/dir/x.tsv")
            .code == 3);

  // unknown flag is a usage error
  CHECK(run_cli("generate-data --task sort --frobnicate 1 --out " + a).code == 2);
}

TEST_CASE("cli: select reproduces the worked hybrid example and n=1") {
  if (!cli_bin()) return;
  // curve whose entropy increments realize the two-spike RoEC profile
  std::vector<double> roec{0, .1, .1, .9, .1, .1, .8, .1, .1, .1};
  std::vector<double> h{1.0};
  for (std::size_t t = 1; t < roec.size(); ++t) h.push_back(h.back() + roec[t]);
  const DifficultyCurves c =
      DifficultyCurves::from_means(h, {1, 1, 1, 1, 1, 9, 1, 1, 1, 1});
  const std::string path = (scratch_dir() / "curves.csv").string();
  write_curves(path, c);

  CliResult r = run_cli("select --curves " + path + " --n 4 --policy hybrid");
  CHECK(r.code == 0);
  CHECK(r.out == "0 3 5 6 10\n");

  // the uniform policy ignores curve values entirely
  r = run_cli("select --curves " + path + " --n 4 --policy uniform");
  CHECK(r.out == "0 2 5 7 10\n");

  r = run_cli("select --curves " + path + " --n 1 --policy hybrid");
  CHECK(r.out == "0 10\n");

  CHECK(run_cli("select --curves " + path + " --n 4 --policy zigzag").code == 2);
  CHECK(run_cli("select --curves /nonexistent.csv --n 4").code == 3);
}

TEST_CASE("cli: eval rejects a checkpoint that does not fit the task") {
  if (!cli_bin()) return;
  // a sum-shaped checkpoint (P=5) cannot drive copy (P=6)
  const ModelDims dims{14, 5, 16, 8};
  const std::string ckpt = (scratch_dir() / "sum.ckpt").string();
  save_checkpoint(ckpt, ModelParams::init(3, dims), 3);
  CHECK(run_cli("eval --checkpoint " + ckpt + " --task copy --count 4 --greedy").code == 2);
  CHECK(run_cli("eval --checkpoint " + ckpt + " --task sum --count 4 --greedy").code == 0);

  // wrong vocabulary size in the header
  const ModelDims odd{10, 6, 16, 8};
  const std::string bad = (scratch_dir() / "bad.ckpt").string();
  save_checkpoint(bad, ModelParams::init(3, odd), 3);
  CHECK(run_cli("eval --checkpoint " + bad + " --task copy --count 4").code == 2);

  CHECK(run_cli("eval --checkpoint /nonexistent.ckpt --task copy").code == 3);

  // identical invocations print identical reports
  const CliResult e1 = run_cli("eval --checkpoint " + ckpt + " --task sum --count 16 --greedy");
  const CliResult e2 = run_cli("eval --checkpoint " + ckpt + " --task sum --count 16 --greedy");
  CHECK(e1.out == e2.out);
}

TEST_CASE("cli: an untrained checkpoint scores at the random baseline") {
  if (!cli_bin()) return;
  const ModelDims dims{14, 6, 16, 16};
  const std::string ckpt = (scratch_dir() / "zero.ckpt").string();
  save_checkpoint(ckpt, ModelParams(dims), 0);  // all-zero parameters
  const CliResult r = run_cli("eval --checkpoint " + ckpt + " --task sort --count 200 --greedy");
  REQUIRE(r.code == 0);
  // exact matches of 6 digits under uniform predictions are essentially
  // impossible; mean reward stays near zero too
  const auto exact_at = r.out.find("exact_rate ");
  REQUIRE(exact_at != std::string::npos);
  CHECK(std::stod(r.out.substr(exact_at + 11)) <= 0.01);
}

TEST_CASE("cli: train rejects bad configs, analyze handles missing inputs") {
  if (!cli_bin()) return;
  const std::string cfg = (scratch_dir() / "bad.json").string();
  {
    std::ofstream out(cfg);
    out << R"({"task":"copy","T":20,"L":16})";  // violates T <= L
  }
  CHECK(run_cli("train --config " + cfg + " --out-dir " + (scratch_dir() / "x").string()).code == 2);
  CHECK(run_cli("train --config /nonexistent.json --out-dir /tmp/y").code == 3);
  CHECK(run_cli("analyze overhead --adaptive /nonexistent.jsonl --uniform /nonexistent.jsonl")
            .code == 2);  // missing timings is a config-class failure
  CHECK(run_cli("analyze compare /nonexistent.jsonl").code == 3);
}
