// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "hydro_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(HYDRO_BIN) + " " + args + " >" + (kWork / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string data() { return (kWork / "data").string(); }

struct Workspace {
  Workspace() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    const std::string cmd = std::string(HYDRO_SYNTH) + " " + data() + " 400 3 12 4";
    REQUIRE(std::system(cmd.c_str()) == 0);
  }
};

const std::string kQuick = " --ratio 0.06 --epochs 3 --outer 2 --hidden 8 --sample-size 50 --probe-every 2 --probe-epochs 10";

}  // namespace

TEST_CASE("help and usage errors") {
  Workspace ws;
  CHECK(run("--help") == 0);
  CHECK(run("distill --help") == 0);
  CHECK(run("distill --no-such-flag") == 2);
  CHECK(run("") == 2);
  CHECK(run("distill --dataset " + data() + " --ratio 1.1") == 2);
  CHECK(slurp(kWork / "last.log").find("--ratio") != std::string::npos);
  CHECK(run("distill --dataset " + data() + " --epochs abc") == 2);
  CHECK(run("validate --dataset " + (kWork / "nowhere").string()) == 3);
  CHECK(run("validate --dataset " + data()) == 0);
}

TEST_CASE("distill, evaluate and analyze") {
  Workspace ws;
  const fs::path out = kWork / "out";
  const fs::path out2 = kWork / "out2";
  REQUIRE(run("distill --dataset " + data() + kQuick + " --seed 7 --output " + out.string()) == 0);
  REQUIRE(run("distill --dataset " + data() + kQuick + " --seed 7 --output " + out2.string()) == 0);
  for (const char* f : {"condensed.json", "run_log.jsonl", "config.toml", "hypernet.json"}) CHECK(fs::exists(out / f));
  CHECK(slurp(out / "condensed.json") == slurp(out2 / "condensed.json"));

  const auto cj = nlohmann::json::parse(slurp(out / "condensed.json"));
  CHECK(cj["n"] == 24);
  CHECK(cj["config_hash"].get<std::string>().size() == 64);
  CHECK(cj["seed"] == 7);

  // Flags override the TOML file.
  REQUIRE(run("distill --config " + (out / "config.toml").string() + " --epochs 2 --output " + (kWork / "out3").string()) == 0);
  std::istringstream log(slurp(kWork / "out3" / "run_log.jsonl"));
  int lines = 0;
  for (std::string l; std::getline(log, l);) ++lines;
  CHECK(lines == 2);

  const std::string cond = " --condensed " + (out / "condensed.json").string() + " --dataset " + data();
  const fs::path res = kWork / "results.json";
  CHECK(run("eval" + cond + " --task nc,lp --runs 2 --epochs 20 --output " + res.string()) == 0);
  const auto rj = nlohmann::json::parse(slurp(res));
  CHECK(rj["nc"]["runs"] == 2);
  CHECK(rj["lp"]["runs"] == 2);
  CHECK(rj["config_hash"] == cj["config_hash"]);
  CHECK(run("eval" + cond + " --task xx") == 2);

  // A tampered config.toml no longer matches the artifact.
  {
    std::string toml = slurp(out / "config.toml");
    toml.replace(toml.find("beta = 0.1"), 10, "beta = 0.2");
    std::ofstream(out / "config.toml") << toml;
  }
  CHECK(run("eval" + cond + " --runs 1 --epochs 5 --output " + res.string()) == 2);
  CHECK(run("eval" + cond + " --runs 1 --epochs 5 --force --output " + res.string()) == 0);

  // Feature width mismatch.
  const std::string other = (kWork / "other").string();
  REQUIRE(std::system((std::string(HYDRO_SYNTH) + " " + other + " 400 3 7 4").c_str()) == 0);
  CHECK(run("eval --condensed " + (out / "condensed.json").string() + " --dataset " + other + " --force") == 3);

  CHECK(run("eval --baseline random --ratio 0.06 --dataset " + data() + " --runs 2 --epochs 10 --output " + res.string()) == 0);
  CHECK(run("eval --whole --dataset " + data() + " --runs 1 --epochs 10 --output " + res.string()) == 0);

  const fs::path csv = kWork / "commute.csv";
  CHECK(run("analyze --graph " + data() + " --metric commute --cap 20000 --output " + csv.string()) == 0);
  CHECK(fs::exists(kWork / "commute.csv.meta.json"));
  CHECK(run("analyze --condensed " + (out / "condensed.json").string() + " --metric commute --compare " + data() +
            " --output " + csv.string()) == 0);
  CHECK(slurp(kWork / "last.log").find("commute score") != std::string::npos);
  CHECK(run("analyze --condensed " + (out / "condensed.json").string() + " --metric flow --output " +
            (kWork / "flow.csv").string()) == 0);
}

TEST_CASE("analyze small graphs") {
  Workspace ws;
  const fs::path k4 = kWork / "k4";
  fs::create_directories(k4);
  std::ofstream(k4 / "edges.csv") << "0,1\n0,2\n0,3\n1,2\n1,3\n2,3\n";
  std::ofstream(k4 / "features.csv") << "1\n2\n3\n4\n";
  std::ofstream(k4 / "labels.csv") << "0\n0\n1\n1\n";
  std::ofstream(k4 / "splits.json") << R"({"train":[0,2],"val":[1],"test":[3]})";
  CHECK(run("analyze --graph " + k4.string() + " --metric diagnostics --output " + (kWork / "d.csv").string()) == 0);
  CHECK(slurp(kWork / "last.log").find("spectral gap: 0.66666666666666") != std::string::npos);

  const fs::path tri = kWork / "tri";
  fs::create_directories(tri);
  std::ofstream(tri / "edges.csv") << "0,1\n1,2\n0,2\n";
  std::ofstream(tri / "features.csv") << "1\n2\n3\n";
  std::ofstream(tri / "labels.csv") << "0\n0\n1\n";
  std::ofstream(tri / "splits.json") << R"({"train":[0,2],"val":[1],"test":[]})";
  CHECK(run("analyze --graph " + tri.string() + " --metric flow --output " + (kWork / "f.csv").string()) == 0);
  CHECK(slurp(kWork / "f.csv") == "0,1,1\n1,0,1\n1,1,0\n");
  // Two edges cannot spare a tenth for held-out links.
  std::ofstream(tri / "edges.csv") << "0,1\n1,2\n";
  CHECK(run("eval --whole --dataset " + tri.string() + " --task lp --runs 1") == 2);
}
