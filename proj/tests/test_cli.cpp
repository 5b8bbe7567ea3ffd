#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "commands.hpp"
#include "ren/data.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ren");
  std::ostringstream out, err;
  const int code = ren::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// The real executable, for exit codes as a shell sees them.
int ren_process(const std::string& args, const fs::path& log) {
  const char* bin = std::getenv("REN_BIN");
  REQUIRE(bin != nullptr);
  const std::string cmd = std::string(bin) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("ren-test-cli-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string l; std::getline(in, l);) ++n;
  return n;
}

const std::vector<std::string> kTiny = {"--channels", "4,8,8", "--fc-dim", "16", "--dropout", "0"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("config echo shows the reference defaults") {
  const Result r = cli({"config"});
  CHECK(r.code == 0);
  CHECK(r.out.find("lr0=0.005\n") != std::string::npos);
  CHECK(r.out.find("batch=128\n") != std::string::npos);
  CHECK(r.out.find("weight_decay=0.0005\n") != std::string::npos);
  CHECK(r.out.find("momentum=0.9\n") != std::string::npos);

  const fs::path dir = scratch("config");
  std::ofstream(dir / "run.cfg") << "batch=16\nseed=5\n";
  const Result c = cli({"config", "--config", (dir / "run.cfg").string(), "--seed", "9"});
  CHECK(c.out.find("batch=16\n") != std::string::npos);
  CHECK(c.out.find("seed=9\n") != std::string::npos);

  std::ofstream(dir / "bad.cfg") << "batch=16\nlearning_rate=1\n";
  const Result bad = cli({"config", "--config", (dir / "bad.cfg").string()});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("learning_rate") != std::string::npos);
  CHECK(cli({"config", "--variant", "giant"}).code == 2);
  CHECK(cli({"no-such-command"}).code == 2);
}

TEST_CASE("prepare builds a cache and notices reruns") {
  const fs::path dir = scratch("prepare");
  REQUIRE(cli({"synth", "--count", "10", "--out", (dir / "data").string(), "--name", "toy"}).code == 0);
  const fs::path manifest = dir / "data" / "manifest.txt";
  REQUIRE(fs::exists(manifest));

  const Result first = cli({"prepare", "--manifest", manifest.string(), "--out", (dir / "cache").string()});
  CHECK(first.code == 0);
  const fs::path cache = dir / "cache" / "toy.renc";
  REQUIRE(fs::exists(cache));
  CHECK(ren::cache_record_count(cache) == 10u);
  const std::string bytes = slurp(cache);

  const Result again = cli({"prepare", "--manifest", manifest.string(), "--out", (dir / "cache").string()});
  CHECK(again.code == 0);
  CHECK(again.out.find("unchanged") != std::string::npos);
  CHECK(slurp(cache) == bytes);

  const fs::path missing = dir / "nope" / "manifest.txt";
  const Result gone = cli({"prepare", "--manifest", missing.string(), "--out", (dir / "cache").string()});
  CHECK(gone.code == 2);
  CHECK(gone.err.find(missing.string()) != std::string::npos);
  CHECK(ren_process("prepare --manifest " + missing.string() + " --out " + (dir / "c2").string(), dir / "log") == 2);
  CHECK(slurp(dir / "log").find(missing.string()) != std::string::npos);

  std::ofstream(dir / "exclude.txt") << "frames/000003.pgm\n";
  const Result ex = cli({"prepare", "--manifest", manifest.string(), "--out", (dir / "cache-ex").string(), "--exclude",
                         (dir / "exclude.txt").string()});
  CHECK(ex.code == 0);
  CHECK(ren::cache_record_count(dir / "cache-ex" / "toy.renc") == 9u);
}

TEST_CASE("split writes disjoint manifests") {
  const fs::path dir = scratch("split");
  REQUIRE(cli({"synth", "--count", "20", "--out", dir.string()}).code == 0);
  const Result r = cli({"split", "--manifest", (dir / "manifest.txt").string(), "--train", "0.75"});
  CHECK(r.code == 0);
  CHECK(ren::load_manifest(dir / "manifest-train.txt").entries.size() == 15u);
  CHECK(ren::load_manifest(dir / "manifest-test.txt").entries.size() == 5u);
}

TEST_CASE("train writes a run folder with one loss row per iteration") {
  const fs::path dir = scratch("train");
  const Result r = cli(with({"train", "--variant", "region-ensemble", "--iters", "2000", "--synthetic", "64", "--batch",
                             "2", "--out", dir.string(), "--name", "ren"},
                            kTiny));
  REQUIRE(r.code == 0);
  const fs::path run = dir / "ren";
  CHECK(fs::exists(run / "model.ckpt"));
  CHECK(fs::exists(run / "config.txt"));
  CHECK(fs::exists(run / "summary.txt"));
  CHECK(line_count(run / "loss.csv") == 2001u);
  CHECK(slurp(run / "config.txt").find("iters=2000\n") != std::string::npos);
  CHECK(r.out.find("variant=region-ensemble\n") != std::string::npos);

  // the echoed config alone reproduces the run
  const Result again = cli({"train", "--config", (run / "config.txt").string(), "--name", "ren2"});
  REQUIRE(again.code == 0);
  CHECK(slurp(dir / "ren2" / "loss.csv") == slurp(run / "loss.csv"));
  CHECK(slurp(dir / "ren2" / "model.ckpt") == slurp(run / "model.ckpt"));
}

TEST_CASE("basic-bagging writes K members and an ensemble descriptor") {
  const fs::path dir = scratch("bagging");
  const Result r = cli(with({"train", "--variant", "basic-bagging", "--k", "4", "--iters", "5", "--synthetic", "8",
                             "--batch", "2", "--out", dir.string(), "--name", "bag"},
                            kTiny));
  REQUIRE(r.code == 0);
  for (int i = 0; i < 4; ++i) {
    CHECK(fs::exists(dir / "bag" / ("member" + std::to_string(i) + ".ckpt")));
    CHECK(line_count(dir / "bag" / ("loss-member" + std::to_string(i) + ".csv")) == 6u);
  }
  const std::string desc = slurp(dir / "bag" / "ensemble.txt");
  CHECK(desc.rfind("REN-ENSEMBLE 1\n", 0) == 0);
  CHECK(line_count(dir / "bag" / "ensemble.txt") == 5u);

  const Result ev = cli({"eval", "--checkpoint", (dir / "bag" / "ensemble.txt").string(), "--synthetic", "4", "--out",
                         (dir / "eval").string()});
  CHECK(ev.code == 0);
  CHECK(fs::exists(dir / "eval" / "ensemble.json"));
}

TEST_CASE("eval: reports, curves, comparison and J checks") {
  const fs::path dir = scratch("eval");
  REQUIRE(cli(with({"train", "--variant", "basic", "--iters", "3", "--synthetic", "4", "--batch", "2", "--out",
                    dir.string(), "--name", "a"},
                   kTiny))
              .code == 0);
  REQUIRE(cli(with({"train", "--variant", "region-ensemble", "--iters", "3", "--synthetic", "4", "--batch", "2",
                    "--out", dir.string(), "--name", "b"},
                   kTiny))
              .code == 0);
  const std::string a = (dir / "a" / "model.ckpt").string(), b = (dir / "b" / "model.ckpt").string();

  const Result ev = cli({"eval", "--checkpoint", a, "--checkpoint", b, "--name", "basic", "--name", "ren",
                         "--synthetic", "6", "--out", (dir / "ev").string(), "--svg"});
  REQUIRE(ev.code == 0);
  CHECK(line_count(dir / "ev" / "basic-curve.csv") == 82u);
  CHECK(line_count(dir / "ev" / "ren-curve.csv") == 82u);
  CHECK(fs::exists(dir / "ev" / "curves.svg"));
  const std::string csv = slurp(dir / "ev" / "comparison.csv");
  CHECK(csv.find("improvement") != std::string::npos);
  CHECK(csv.find("\nbasic,") < csv.find("\nren,"));
  CHECK(csv.find("%") != std::string::npos);
  const auto j = nlohmann::json::parse(slurp(dir / "ev" / "ren.json"));
  CHECK(j["frame_count"] == 6);

  const Result mismatch = cli({"eval", "--checkpoint", a, "--synthetic", "3", "--synthetic-joints", "14", "--out",
                               (dir / "ev14").string()});
  CHECK(mismatch.code == 2);
  CHECK(mismatch.err.find("J=") != std::string::npos);

  CHECK(cli({"eval", "--checkpoint", (dir / "missing.ckpt").string(), "--synthetic", "3"}).code == 2);
}

TEST_CASE("eval of a perfect oracle: zero error, curve of ones") {
  const fs::path dir = scratch("oracle");
  REQUIRE(cli({"synth", "--count", "5", "--out", dir.string()}).code == 0);
  const std::string m = (dir / "manifest.txt").string();
  const Result r = cli({"eval", "--predictions", m, "--manifest", m, "--name", "oracle", "--out", (dir / "ev").string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "ev" / "oracle.json"));
  CHECK(j["mean_error_mm"].get<double>() == 0.0);
  for (const auto& p : j["success_curve"]) CHECK(p["fraction"].get<double>() == 1.0);
  std::ifstream curve(dir / "ev" / "oracle-curve.csv");
  std::string line;
  std::getline(curve, line);
  std::size_t rows = 0;
  while (std::getline(curve, line)) {
    ++rows;
    CHECK(line.substr(line.find(',') + 1) == "1");
  }
  CHECK(rows == 81u);
}

TEST_CASE("predict then eval equals eval on the checkpoint") {
  const fs::path dir = scratch("predict");
  REQUIRE(cli({"synth", "--count", "6", "--out", (dir / "data").string()}).code == 0);
  const std::string m = (dir / "data" / "manifest.txt").string();
  REQUIRE(cli(with({"train", "--iters", "3", "--manifest", m, "--batch", "2", "--out", dir.string(), "--name", "r"},
                   kTiny))
              .code == 0);
  const std::string ckpt = (dir / "r" / "model.ckpt").string();

  REQUIRE(cli({"predict", "--checkpoint", ckpt, "--manifest", m, "--out", (dir / "p1.txt").string()}).code == 0);
  REQUIRE(cli({"predict", "--checkpoint", ckpt, "--manifest", m, "--out", (dir / "p2.txt").string()}).code == 0);
  CHECK(slurp(dir / "p1.txt") == slurp(dir / "p2.txt"));
  const ren::DatasetManifest p = ren::load_manifest(dir / "p1.txt");
  CHECK(p.entries.size() == 6u);
  std::ifstream in(dir / "p1.txt");
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tok;
    std::size_t n = 0;
    while (ls >> tok) ++n;
    CHECK(n == 1 + 48u);
  }

  REQUIRE(cli({"eval", "--checkpoint", ckpt, "--manifest", m, "--name", "x", "--out", (dir / "direct").string()})
              .code == 0);
  REQUIRE(cli({"eval", "--predictions", (dir / "p1.txt").string(), "--manifest", m, "--name", "x", "--out",
               (dir / "via").string()})
              .code == 0);
  CHECK(slurp(dir / "direct" / "x.json") == slurp(dir / "via" / "x.json"));
  CHECK(slurp(dir / "direct" / "x-curve.csv") == slurp(dir / "via" / "x-curve.csv"));

  const Result frames = cli({"predict", "--checkpoint", ckpt, "--frames", (dir / "data" / "frames" / "000000.pgm").string()});
  CHECK(frames.code == 0);
  CHECK(frames.out.find("000000.pgm") != std::string::npos);
}

TEST_CASE("bench prints one row per input and checks the order") {
  const fs::path dir = scratch("bench");
  REQUIRE(cli(with({"train", "--variant", "basic", "--iters", "1", "--synthetic", "2", "--batch", "1", "--out",
                    dir.string(), "--name", "one"},
                   kTiny))
              .code == 0);
  const Result single = cli({"bench", "--checkpoint", (dir / "one" / "model.ckpt").string(), "--reps", "10"});
  CHECK(single.code == 0);
  std::istringstream rows(single.out);
  std::size_t n = 0;
  for (std::string l; std::getline(rows, l);) ++n;
  CHECK(n == 2u);

  const Result ok = cli({"bench", "--bench-variant", "basic", "--bench-variant", "basic-bagging", "--reps", "10",
                         "--assert-order", "basic<basic-bagging"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("OK") != std::string::npos);
  const Result bad = cli({"bench", "--bench-variant", "basic", "--bench-variant", "basic-bagging", "--reps", "10",
                          "--assert-order", "basic-bagging<basic"});
  CHECK(bad.code != 0);
  CHECK(bad.out.find("VIOLATED") != std::string::npos);
  CHECK(cli({"bench", "--bench-variant", "basic", "--reps", "5"}).code == 2);
}

TEST_CASE("divergence exits 3 with a diagnostic snapshot") {
  const fs::path dir = scratch("diverge");
  const Result r = cli(with({"train", "--iters", "50", "--synthetic", "2", "--batch", "2", "--lr0", "1e30", "--out",
                             dir.string(), "--name", "boom"},
                            kTiny));
  CHECK(r.code == 3);
  CHECK(r.err.find("diverged") != std::string::npos);
  bool snapshot = false;
  for (const auto& e : fs::directory_iterator(dir / "boom" / "snapshots"))
    snapshot = snapshot || e.path().filename().string().rfind("diverged-", 0) == 0;
  CHECK(snapshot);
}

TEST_CASE("import-icvl") {
  const fs::path dir = scratch("icvl");
  std::string line = "201/image_0000.png";
  for (int i = 0; i < 48; ++i) line += " " + std::to_string(100 + i);
  std::ofstream(dir / "labels.txt") << line << "\n";
  const Result r = cli({"import-icvl", "--labels", (dir / "labels.txt").string(), "--out", (dir / "m.txt").string()});
  CHECK(r.code == 0);
  CHECK(ren::load_manifest(dir / "m.txt").joints == 16);
  CHECK(cli({"import-icvl", "--labels", (dir / "none.txt").string(), "--out", (dir / "m.txt").string()}).code == 2);
}

TEST_CASE("SIGINT during training snapshots and stops") {
  const char* bin = std::getenv("REN_BIN");
  REQUIRE(bin != nullptr);
  const fs::path dir = scratch("sigint");
  const std::string cmd = std::string(bin) + " train --iters 1000000 --synthetic 4 --batch 2 --channels 4,8,8 --fc-dim 16 --out " +
                          dir.string() + " --name run > " + (dir / "log").string() + " 2>&1 & pid=$!; sleep 3; kill -INT $pid; wait $pid";
  const int status = std::system(cmd.c_str());
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
  bool snapshot = false;
  for (const auto& e : fs::directory_iterator(dir / "run" / "snapshots"))
    snapshot = snapshot || e.path().filename().string().rfind("interrupted-", 0) == 0;
  CHECK(snapshot);
  CHECK(slurp(dir / "run" / "summary.txt").find("interrupted=true") != std::string::npos);
  CHECK(fs::exists(dir / "run" / "model.ckpt"));
}
