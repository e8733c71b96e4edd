#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "pvfd-cli";

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome run(const std::string& args) {
  const auto out = kRoot / "stdout.txt";
  const auto err = kRoot / "stderr.txt";
  const std::string cmd = std::string(PVFD_CLI) + " " + args + " >" + out.string() + " 2>" +
                          err.string();
  const int status = std::system(cmd.c_str());
  return {WEXITSTATUS(status), slurp(out), slurp(err)};
}

void write_config() {
  std::ofstream(kRoot / "tiny.ini") << "[experiment]\nrounds = 2\n"
                                       "[data]\ncommunities = 2\nprosumers_per_community = 3\n"
                                       "days = 12\nfraud_rate = 0.3\n"
                                       "[model]\nd_lstm = 4\nd_cnn_lstm = 4\nd_sa = 4\nd_ca = 4\n"
                                       "heads = 2\nconv_channels = 2\nmlp_hidden = 5\n"
                                       "[training]\nlearning_rate = 0.05\nbatch_size = 8\n";
}

}  // namespace

TEST_CASE("cli verbs") {
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);
  write_config();
  const std::string cfg = "--config " + (kRoot / "tiny.ini").string();
  const std::string runs = (kRoot / "runs").string();

  auto r = run("train " + cfg + " --mode fedavg --rounds 2 --seed 3 --out " + runs);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("manifest ") == 0);
  const auto dir = kRoot / "runs" / "fedavg-seed3";
  CHECK(fs::exists(dir / "manifest.json"));

  r = run("evaluate --run " + dir.string());
  CHECK(r.code == 0);
  CHECK(r.out == slurp(dir / "metrics.csv"));

  r = run("evaluate --run " + dir.string() + " --out " + (kRoot / "m.csv").string() +
          " --prosumer 0");
  CHECK(r.code == 0);
  CHECK(r.out.rfind("prosumer_id,day,date,probability,truth\n", 0) == 0);

  r = run("generate " + cfg + " --out " + (kRoot / "data").string());
  CHECK(r.code == 0);
  CHECK(fs::exists(kRoot / "data" / "generation.csv"));
  CHECK(fs::exists(kRoot / "data" / "irradiance.csv"));

  r = run("sweep " + cfg + " --axis lambda --values 0,1 --modes proposed --set experiment.output_dir=" + runs);
  CHECK(r.code == 0);
  CHECK(r.out.rfind("axis,axis_value,mode,seed,scope,metric,value\n", 0) == 0);

  const auto lambda0 = kRoot / "runs" / "sweep-lambda-0" / "proposed-seed0" / "metrics.csv";
  const auto lambda1 = kRoot / "runs" / "sweep-lambda-1" / "proposed-seed0" / "metrics.csv";
  r = run("report " + lambda0.string() + " " + lambda1.string());
  CHECK(r.code == 0);
  CHECK(r.out.rfind("mode,scope,metric,n,mean,std,median\nproposed,community-0,acc,2,", 0) == 0);

  // One report per group cannot give a sample deviation.
  r = run("report " + (dir / "metrics.csv").string() + " " + lambda0.string());
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error kind=input ", 0) == 0);
  fs::remove_all(kRoot);
}

TEST_CASE("cli failures print one machine-readable line") {
  fs::create_directories(kRoot);
  write_config();
  const std::string cfg = "--config " + (kRoot / "tiny.ini").string();

  auto r = run("train " + cfg + " --set model.heads=3");
  CHECK(r.code == 2);
  CHECK(r.err == "error kind=config message=\"model.heads: d_sa = 4 is not divisible by heads = 3\"\n");

  r = run("train --mode central");
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error kind=config message=\"experiment.mode:", 0) == 0);

  r = run("train --no-such-flag");
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error kind=usage ", 0) == 0);

  r = run("train " + cfg + " --rounds 0");
  CHECK(r.code == 2);
  CHECK(r.err.find("experiment.rounds") != std::string::npos);

  std::ofstream(kRoot / "bad.csv") << "nope\n";
  r = run("report " + (kRoot / "bad.csv").string());
  CHECK(r.code == 3);
  CHECK(r.err.rfind("error kind=parse ", 0) == 0);
  fs::remove_all(kRoot);
}
