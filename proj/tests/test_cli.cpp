#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kSource = GRIDMP_SOURCE_DIR;

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "gridmp_tests" / "cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(GRIDMP_CLI) + " " + args + " > " + (work_dir() / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read(p)); }

std::size_t line_count(const fs::path& p) {
  const std::string text = read(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::string grid(const std::string& name) { return (kSource / "data" / (name + ".json")).string(); }

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void write_config(const fs::path& p, int hidden = 16) {
  std::ofstream(p) << "[model]\nhidden_dim = " << hidden
                   << "\nlayers = 2\nattention_heads = 2\nrandom_features = 8\nmode = \"hybrid\"\nseed = 1\n\n"
                      "[train]\nlearning_rate = 1e-3\nweight_decay = 0.0\nepochs = 2\nbatch_size = 8\nseed = 1\n"
                      "adam_beta1 = 0.9\nadam_beta2 = 0.999\nadam_eps = 1e-8\n";
}

// Samples shared by the training and evaluation cases.
const fs::path& six_samples() {
  static const fs::path p = [] {
    const fs::path out = work_dir() / "six.jsonl";
    REQUIRE(run("synth --grid " + grid("case6") + " --n 40 --seed 3 --split --out " + q(out)) == 0);
    return out;
  }();
  return p;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("synth --grid /no/such/file.json --n 3 --seed 1 --out x.jsonl") == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("synth is reproducible and reports discards") {
  const fs::path a = work_dir() / "a.jsonl", b = work_dir() / "b.jsonl";
  REQUIRE(run("synth --grid " + grid("case4") + " --n 12 --seed 9 --out " + q(a)) == 0);
  REQUIRE(run("synth --grid " + grid("case4") + " --n 12 --seed 9 --out " + q(b)) == 0);
  CHECK(read(a) == read(b));
  CHECK(line_count(a) == 12);
  const auto discards = read_json(fs::path(a.string() + ".discards.json"));
  CHECK(discards.at("requested") == 12);
  CHECK(discards.at("kept") == 12);
  CHECK(discards.at("discarded") == 0);
  const auto manifest = read_json(fs::path(a.string() + ".manifest.json"));
  CHECK(manifest.at("status") == "ok");
  CHECK(manifest.at("seed") == 9);
  CHECK(manifest.at("inputs").at(0).at("sha256").get<std::string>().size() == 64);
}

TEST_CASE("synth split writes three files") {
  const fs::path base = six_samples();
  const fs::path dir = base.parent_path();
  CHECK(line_count(dir / "six.train.jsonl") == 36);
  CHECK(line_count(dir / "six.val.jsonl") == 2);
  CHECK(line_count(dir / "six.test.jsonl") == 2);
}

TEST_CASE("synth with n1 draws outages") {
  const fs::path out = work_dir() / "n1.jsonl";
  REQUIRE(run("synth --grid " + grid("case6") + " --n 5 --seed 2 --n1 --out " + q(out)) == 0);
  std::istringstream lines(read(out));
  std::string line;
  while (std::getline(lines, line)) CHECK(nlohmann::json::parse(line).at("outage").at("kind") != "none");
}

TEST_CASE("pe writes one row per bus") {
  const fs::path out = work_dir() / "pe2.csv", omega = work_dir() / "omega2.csv";
  REQUIRE(run("pe --grid " + grid("case2") + " --out " + q(out) + " --dump-omega " + q(omega)) == 0);
  const std::string text = read(out);
  CHECK(text.rfind("\"bus\",\"min\",\"max\",\"std\",\"median\",\"mean\"\n", 0) == 0);
  CHECK(line_count(out) == 3);
  CHECK(line_count(omega) == 3);
}

TEST_CASE("pe on a disconnected grid exits with 2") {
  auto doc = read_json(grid("case4"));
  auto& branches = doc.at("branches");
  nlohmann::json kept = nlohmann::json::array();
  for (const auto& b : branches)
    if (b.at("from_bus") != 4 && b.at("to_bus") != 4) kept.push_back(b);
  branches = kept;
  const fs::path p = work_dir() / "island.json";
  std::ofstream(p) << doc.dump();
  CHECK(run("pe --grid " + q(p) + " --out " + q(work_dir() / "island.csv")) == 2);
}

TEST_CASE("train, resume, finetune and eval") {
  const fs::path dir = work_dir();
  const fs::path cfg = dir / "tiny.toml";
  write_config(cfg);
  const std::string data = " --grid " + grid("case6") + " --samples " + q(dir / "six.train.jsonl") + " --val " +
                           q(dir / "six.val.jsonl");
  six_samples();

  const fs::path ck = dir / "m.json";
  REQUIRE(run("train" + data + " --config " + q(cfg) + " --out " + q(ck) + " --quiet") == 0);
  CHECK(fs::exists(ck));
  CHECK(fs::exists(dir / "m.json.bin"));
  CHECK(fs::exists(dir / "m.json.resume"));
  CHECK(line_count(dir / "m.json.history.csv") == 3);
  CHECK(read_json(dir / "m.json.manifest.json").at("status") == "ok");
  CHECK(read_json(ck).at("metadata").at("lineage") == "scratch");

  SUBCASE("resume continues to the new epoch target") {
    REQUIRE(run("train" + data + " --config " + q(cfg) + " --out " + q(ck) + " --quiet --epochs 3 --resume-from " +
                q(dir / "m.json.resume")) == 0);
    CHECK(line_count(dir / "m.json.history.csv") == 4);
    CHECK(read_json(ck).at("metadata").at("epochs_completed") == 3);
  }

  SUBCASE("resume with a different architecture exits with 4") {
    CHECK(run("train" + data + " --config " + q(cfg) + " --out " + q(dir / "other.json") +
              " --quiet --hidden-dim 32 --resume-from " + q(dir / "m.json.resume")) == 4);
  }

  SUBCASE("finetune records lineage and rejects mismatches") {
    const fs::path ft = dir / "ft.json";
    REQUIRE(run("finetune" + data + " --config " + q(cfg) + " --out " + q(ft) + " --quiet --pretrained " + q(ck)) ==
            0);
    CHECK(read_json(ft).at("metadata").at("lineage") == "pretrain:m.json");
    CHECK(run("finetune" + data + " --config " + q(cfg) + " --out " + q(dir / "ft2.json") +
              " --quiet --hidden-dim 32 --pretrained " + q(ck)) == 4);
  }

  SUBCASE("eval writes the report set") {
    const fs::path out = dir / "eval";
    REQUIRE(run("eval --checkpoint " + q(ck) + " --label tiny --grid " + grid("case6") + " --samples " +
                q(dir / "six.test.jsonl") + " --out-dir " + q(out) + " --pf-correct --high-impact 2 --train-samples " +
                q(dir / "six.train.jsonl")) == 0);
    for (const char* f : {"tiny.summary.csv", "mse.csv", "gap.csv", "violations.csv", "pf_gap.csv",
                          "pf_violations.csv", "high_impact.csv", "summary.json", "manifest.json"})
      CHECK_MESSAGE(fs::exists(out / f), f);
    CHECK(line_count(out / "mse.csv") == 2);
    CHECK(read_json(out / "manifest.json").at("status") == "ok");

    const fs::path out2 = dir / "eval_threads";
    REQUIRE(run("eval --checkpoint " + q(ck) + " --label tiny --grid " + grid("case6") + " --samples " +
                q(dir / "six.test.jsonl") + " --out-dir " + q(out2) + " --pf-correct --high-impact 2 --train-samples " +
                q(dir / "six.train.jsonl") + " --threads 3") == 0);
    CHECK(read(out / "mse.csv") == read(out2 / "mse.csv"));
    CHECK(read(out / "high_impact.csv") == read(out2 / "high_impact.csv"));
  }

  SUBCASE("one checkpoint evaluates a different grid") {
    const fs::path s4 = dir / "four.jsonl";
    REQUIRE(run("synth --grid " + grid("case4") + " --n 4 --seed 1 --out " + q(s4)) == 0);
    CHECK(run("eval --checkpoint " + q(ck) + " --grid " + grid("case4") + " --samples " + q(s4) + " --out-dir " +
              q(dir / "eval4")) == 0);
  }
}

TEST_CASE("config errors exit with 2 and still write a manifest") {
  const fs::path dir = work_dir();
  six_samples();
  const fs::path cfg = dir / "broken.toml";
  write_config(cfg);
  std::string text = read(cfg);
  text.erase(text.find("layers = 2"), 10);
  std::ofstream(cfg) << text;
  const fs::path out = dir / "broken.json";
  CHECK(run("train --grid " + grid("case6") + " --samples " + q(dir / "six.train.jsonl") + " --config " + q(cfg) +
            " --out " + q(out)) == 2);
  CHECK(read(dir / "last.log").find("model.layers") != std::string::npos);
  const auto m = read_json(fs::path(out.string() + ".manifest.json"));
  CHECK(m.at("status") == "error");
  CHECK(m.at("exit_code") == 2);
}

TEST_CASE("divergent training exits with 3") {
  const fs::path dir = work_dir();
  six_samples();
  const fs::path cfg = dir / "tiny.toml";
  write_config(cfg);
  CHECK(run("train --grid " + grid("case6") + " --samples " + q(dir / "six.train.jsonl") + " --config " + q(cfg) +
            " --out " + q(dir / "nan.json") + " --quiet --lr 1e300 --epochs 3") == 3);
}

TEST_CASE("synth with zero range repeats the nominal sample") {
  const fs::path out = work_dir() / "flat.jsonl";
  REQUIRE(run("synth --grid " + grid("case4") + " --n 5 --seed 1 --range 0 --out " + q(out)) == 0);
  std::istringstream lines(read(out));
  std::string first, line;
  std::getline(lines, first);
  while (std::getline(lines, line)) CHECK(line == first);
}

TEST_CASE("synth on an infeasible grid discards everything and exits with 2") {
  auto doc = read_json(grid("case2"));
  doc["loads"][0]["pd"] = 6.0;
  doc["branches"][0]["x"] = 0.1;
  const fs::path g = work_dir() / "overload.json", out = work_dir() / "overload.jsonl";
  std::ofstream(g) << doc.dump();
  CHECK(run("synth --grid " + q(g) + " --n 3 --seed 1 --out " + q(out)) == 2);
  CHECK(read(work_dir() / "last.log").find("discarded") != std::string::npos);
}

TEST_CASE("pe on the two-bus grid") {
  const fs::path out = work_dir() / "pe_two.csv";
  REQUIRE(run("pe --grid " + grid("case2") + " --out " + q(out)) == 0);
  CHECK(read(out) == "\"bus\",\"min\",\"max\",\"std\",\"median\",\"mean\"\n1,0,0.5,0.25,0.25,0.25\n2,0,0.5,0.25,0.25,0.25\n");
}

TEST_CASE("ablation mode and outage provenance") {
  const fs::path dir = work_dir();
  six_samples();
  const fs::path cfg = dir / "tiny.toml";
  write_config(cfg);
  const fs::path ab = dir / "ablation.json";
  REQUIRE(run("train --grid " + grid("case6") + " --samples " + q(dir / "six.train.jsonl") + " --config " + q(cfg) +
              " --out " + q(ab) + " --quiet --mode mpnn_only") == 0);
  CHECK(read_json(ab).at("config").at("mode") == "mpnn_only");

  const fs::path n1 = dir / "n1train.jsonl", n1m = dir / "n1model.json";
  REQUIRE(run("synth --grid " + grid("case6") + " --n 8 --seed 4 --n1 --out " + q(n1)) == 0);
  REQUIRE(run("train --grid " + grid("case6") + " --samples " + q(n1) + " --config " + q(cfg) + " --out " + q(n1m) +
              " --quiet") == 0);
  CHECK(read_json(n1m).at("metadata").at("trained_on_outages") == true);
  CHECK(run("eval --checkpoint " + q(n1m) + " --grid " + grid("case6") + " --samples " + q(n1) + " --zero-shot" +
            " --out-dir " + q(dir / "eval_n1")) == 0);
  CHECK(read(dir / "last.log").find("warning") != std::string::npos);
}

TEST_CASE("high-impact with K equal to the sample count keeps every sample") {
  const fs::path dir = work_dir();
  six_samples();
  const fs::path cfg = dir / "tiny.toml";
  write_config(cfg);
  const fs::path ck = dir / "hi.json";
  REQUIRE(run("train --grid " + grid("case6") + " --samples " + q(dir / "six.train.jsonl") + " --config " + q(cfg) +
              " --out " + q(ck) + " --quiet --epochs 1") == 0);
  const fs::path out = dir / "eval_hi";
  REQUIRE(run("eval --checkpoint " + q(ck) + " --grid " + grid("case6") + " --samples " + q(dir / "six.jsonl") +
              " --out-dir " + q(out) + " --high-impact 40 --train-samples " + q(dir / "six.train.jsonl")) == 0);
  const std::string table = read(out / "high_impact.csv");
  CHECK(table.find(",40,0\n") != std::string::npos);
  CHECK_NOTHROW(read_json(out / "summary.json"));
}
