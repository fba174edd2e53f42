#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "contradist/dataset.hpp"
#include "contradist/experiment.hpp"
#include "contradist/model.hpp"

using namespace contradist;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "contradist_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(CONTRADIST_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
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
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

double target_accuracy(const fs::path& out) {
  return nlohmann::json::parse(slurp(out / "metrics_target_test.json")).at("accuracy").get<double>();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("gen-data writes four 2000-row files for aligned and is reproducible") {
    const fs::path d = scratch("gen");
    REQUIRE(run("gen-data --preset aligned --data " + (d / "a").string()) == 0);
    REQUIRE(run("gen-data --preset aligned --data " + (d / "b").string()) == 0);
    for (const char* f : {"D0_train.csv", "D0_test.csv", "D1_train.csv", "D1_test.csv"}) {
      CHECK(load_csv(d / "a" / f).size() == 2000);
      CHECK(line_count(d / "a" / f) == 2001);
      CHECK(slurp(d / "a" / f) == slurp(d / "b" / f));
    }
    CHECK(fs::exists(d / "a" / "config.json"));
  }

  TEST_CASE("invalid preset fails with a validation exit code") {
    const fs::path d = scratch("badpreset");
    CHECK(run("gen-data --preset nope --data " + d.string()) == 1);
    CHECK(run("") == 1);
    CHECK(run("train --data " + (d / "missing").string() + " --out " + (d / "o").string()) == 1);
  }

  TEST_CASE("train writes its artifacts and is deterministic per seed") {
    const fs::path d = scratch("train");
    REQUIRE(run("gen-data --preset rotated --data " + (d / "data").string()) == 0);
    const std::string common = "train --data " + (d / "data").string() + " --seed 1 --epochs 4 --terms ss,tu,ta";
    REQUIRE(run(common + " --out " + (d / "r1").string()) == 0);
    REQUIRE(run(common + " --out " + (d / "r2").string()) == 0);
    for (const char* f : {"model.cdst", "history.jsonl", "config.json", "metrics_source_test.json",
                          "metrics_target_test.json"}) {
      CHECK(fs::exists(d / "r1" / f));
    }
    CHECK(line_count(d / "r1" / "history.jsonl") == 4);
    CHECK(slurp(d / "r1" / "metrics_target_test.json") == slurp(d / "r2" / "metrics_target_test.json"));
    CHECK(slurp(d / "r1" / "model.cdst") == slurp(d / "r2" / "model.cdst"));
    // The echoed config reproduces the run.
    REQUIRE(run("train --config " + (d / "r1" / "config.json").string() + " --out " + (d / "r3").string()) == 0);
    CHECK(slurp(d / "r1" / "model.cdst") == slurp(d / "r3" / "model.cdst"));
  }

  TEST_CASE("tu and ta raise target accuracy on rotated") {
    const fs::path d = scratch("rotated");
    REQUIRE(run("gen-data --preset rotated --data " + (d / "data").string()) == 0);
    const std::string common = "train --data " + (d / "data").string() + " --seed 1";
    REQUIRE(run(common + " --terms ss --out " + (d / "ss").string()) == 0);
    REQUIRE(run(common + " --terms ss,tu,ta --out " + (d / "full").string()) == 0);
    CHECK(target_accuracy(d / "full") > target_accuracy(d / "ss"));
  }

  TEST_CASE("multi-source training logs the summed supervised loss") {
    const fs::path d = scratch("multi");
    REQUIRE(run("gen-data --preset multi-source --data " + (d / "data").string()) == 0);
    const std::string common = "train --data " + (d / "data").string() + " --target D2 --epochs 1 --lr 0";
    REQUIRE(run(common + " --sources D0,D1 --out " + (d / "both").string()) == 0);
    REQUIRE(run(common + " --sources D0 --out " + (d / "d0").string()) == 0);
    REQUIRE(run(common + " --sources D1 --out " + (d / "d1").string()) == 0);
    auto ss = [&](const char* run_dir) {
      std::ifstream in(d / run_dir / "history.jsonl");
      std::string line;
      std::getline(in, line);
      return nlohmann::json::parse(line).at("losses").at("ss").get<double>();
    };
    // Frozen weights: each step's loss is a sum of per-source means, and every
    // pass over a source covers each row once.
    CHECK(ss("both") == doctest::Approx(ss("d0") + ss("d1")).epsilon(1e-3));
  }

  TEST_CASE("eval scores labelled data and rejects unlabelled data") {
    const fs::path d = scratch("eval");
    REQUIRE(run("gen-data --preset aligned --data " + (d / "data").string()) == 0);
    REQUIRE(run("train --data " + (d / "data").string() + " --epochs 3 --out " + (d / "r").string()) == 0);
    const std::string ckpt = (d / "r" / "model.cdst").string();
    REQUIRE(run("eval --checkpoint " + ckpt + " --data " + (d / "data" / "D1_test.csv").string() + " --out " +
                (d / "m.json").string()) == 0);
    CHECK(slurp(d / "m.json") == slurp(d / "r" / "metrics_target_test.json"));

    DomainDataset u = load_csv(d / "data" / "D1_test.csv");
    u.labels.reset();
    save_csv(u, d / "unlabeled.csv");
    CHECK(run("eval --checkpoint " + ckpt + " --data " + (d / "unlabeled.csv").string()) == 1);
    CHECK(run("eval --checkpoint " + (d / "nothing.cdst").string() + " --data " +
              (d / "unlabeled.csv").string()) == 2);
  }

  TEST_CASE("contour exports resolution squared rows over padded data bounds") {
    const fs::path d = scratch("contour");
    REQUIRE(run("gen-data --preset aligned --data " + (d / "data").string()) == 0);
    REQUIRE(run("train --data " + (d / "data").string() + " --epochs 2 --out " + (d / "r").string()) == 0);
    const std::string ckpt = (d / "r" / "model.cdst").string();
    const std::string data = " --data " + (d / "data" / "D0_train.csv").string() + " --data " +
                             (d / "data" / "D1_train.csv").string();
    REQUIRE(run("contour --checkpoint " + ckpt + " --out " + (d / "g1.csv").string() + data) == 0);
    REQUIRE(run("contour --checkpoint " + ckpt + " --out " + (d / "g2.csv").string() + data) == 0);
    CHECK(line_count(d / "g1.csv") == 40001);
    CHECK(slurp(d / "g1.csv") == slurp(d / "g2.csv"));

    const Matrix a = load_csv(d / "data" / "D0_train.csv").features;
    const Matrix b = load_csv(d / "data" / "D1_train.csv").features;
    const Bounds want = data_bounds({&a, &b});
    std::ifstream in(d / "g1.csv");
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    CHECK(parse_double(line.substr(0, line.find(','))) == want.x_min);

    REQUIRE(run("contour --checkpoint " + ckpt + " --resolution 2 --bounds -1,1,-2,2 --out " +
                (d / "g3.csv").string()) == 0);
    CHECK(line_count(d / "g3.csv") == 5);

    ModelParams wide = init_params({3, 4, 2}, 1);
    save_checkpoint(wide, d / "wide.cdst");
    CHECK(run("contour --checkpoint " + (d / "wide.cdst").string() + " --bounds 0,1,0,1 --out " +
              (d / "g4.csv").string()) == 1);
  }

  TEST_CASE("sweep expands the matrix and summarises every cell") {
    const fs::path d = scratch("sweep");
    nlohmann::json cfg = {{"schema_version", 1},
                          {"presets", {"aligned", "rotated"}},
                          {"term_sets", {"ss", "ss,tu"}},
                          {"seeds", {1, 2}},
                          {"directions", {"D0->D1"}},
                          {"train", {{"epochs", 2}}}};
    std::ofstream(d / "one.json") << cfg.dump();
    REQUIRE(run("sweep --config " + (d / "one.json").string() + " --out " + (d / "one").string()) == 0);
    CHECK(line_count(d / "one" / "summary.csv") == 9);

    cfg["directions"] = {"D0->D1", "D1->D0"};
    cfg["presets"] = {"aligned"};
    cfg["seeds"] = {1};
    cfg["term_sets"] = {"ss"};
    std::ofstream(d / "two.json") << cfg.dump();
    REQUIRE(run("sweep --config " + (d / "two.json").string() + " --out " + (d / "two").string()) == 0);
    std::ifstream in(d / "two" / "summary.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "preset,direction,terms,seed,source_acc,target_acc,status");
    std::vector<std::vector<std::string>> rows;
    for (std::string line; std::getline(in, line);) {
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
      rows.push_back(f);
    }
    REQUIRE(rows.size() == 2);
    CHECK(rows[0][1] == "D0->D1");
    CHECK(rows[1][1] == "D1->D0");
    const fs::path cell = d / "two" / "aligned" / "D0_to_D1" / "ss" / "seed1";
    CHECK(parse_double(rows[0][5]) == target_accuracy(cell));
  }

  TEST_CASE("sweep reports failed cells with exit code 2") {
    const fs::path d = scratch("sweepfail");
    const nlohmann::json cfg = {{"schema_version", 1},
                                {"presets", {"aligned"}},
                                {"term_sets", {"ss"}},
                                {"seeds", {1}},
                                {"directions", {"D0->D1", "D0->D7"}},
                                {"train", {{"epochs", 1}}}};
    std::ofstream(d / "cfg.json") << cfg.dump();
    CHECK(run("sweep --config " + (d / "cfg.json").string() + " --out " + (d / "o").string()) == 2);
    const std::string summary = slurp(d / "o" / "summary.csv");
    CHECK(summary.find("D0->D1,ss,1") != std::string::npos);
    CHECK(summary.find("D0->D7") != std::string::npos);
  }

  TEST_CASE("config files are versioned and strict") {
    const fs::path d = scratch("config");
    std::ofstream(d / "noversion.json") << R"({"preset": "aligned"})";
    CHECK(run("gen-data --config " + (d / "noversion.json").string()) == 1);
    std::ofstream(d / "unknown.json") << R"({"schema_version": 1, "colour": "red"})";
    CHECK(run("gen-data --config " + (d / "unknown.json").string()) == 1);
    std::ofstream(d / "broken.json") << "{";
    CHECK(run("gen-data --config " + (d / "broken.json").string()) == 1);
  }
}
