// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest_torch.hpp"
#include "json.hpp"
#include "paramstyle/checkpoint.hpp"
#include "paramstyle/image.hpp"
#include "test_support.hpp"

using namespace paramstyle;
using namespace paramstyle::testing;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(PARAMSTYLE_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe) != nullptr) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

// Scratch directory holding a micro bundle for the command-line runs.
struct CliFixture {
  fs::path dir;
  fs::path bundle;
  fs::path adapter;

  CliFixture() : dir(scratch_dir("cli")), bundle(dir / "micro.ckpt"), adapter(dir / "adapter.ckpt") {
    auto model = make_model(micro_config(8), two_attributes(), 71);
    perturb_zero_init(model, 72, 0.2);
    save_bundle(model, bundle);
    save_adapter(model, adapter);
  }
  ~CliFixture() { fs::remove_all(dir); }

  std::string common(const std::string& out) const {
    return "--bundle " + bundle.string() + " --adapter " + adapter.string() + " --out " + (dir / out).string() + " --steps 6";
  }
};

}  // namespace

TEST_CASE("cli: sample is deterministic and edit at lambda = 0 reproduces it") {
  CliFixture fx;
  REQUIRE(run_cli("sample " + fx.common("s1") + " --seed 5 --prompt 2").code == 0);
  REQUIRE(run_cli("sample " + fx.common("s2") + " --seed 5 --prompt 2").code == 0);
  CHECK(slurp(fx.dir / "s1" / "sample.png") == slurp(fx.dir / "s2" / "sample.png"));
  REQUIRE(run_cli("sample " + fx.common("s3") + " --seed 6 --prompt 2").code == 0);
  CHECK(slurp(fx.dir / "s1" / "sample.png") != slurp(fx.dir / "s3" / "sample.png"));

  const auto e = run_cli("edit " + fx.common("e0") +
                         " --seed 5 --prompt 2 --lambda blackpoint=0 --lambda contourWidth=0");
  REQUIRE_MESSAGE(e.code == 0, e.output);
  CHECK(slurp(fx.dir / "e0" / "edit.png") == slurp(fx.dir / "s1" / "sample.png"));
  const auto meta = nlohmann::json::parse(slurp(fx.dir / "e0" / "edit.json"));
  CHECK(meta.contains("distance_to_base"));

  // Every run leaves a manifest with the resolved configuration and inputs.
  const auto manifest = nlohmann::json::parse(slurp(fx.dir / "s1" / "run_manifest.json"));
  CHECK(manifest["subcommand"] == "sample");
  CHECK(manifest["seed"] == 5);
  REQUIRE(manifest["inputs"].size() >= 1);
  CHECK(manifest["inputs"][0]["git_blob_hash"].get<std::string>().size() == 40);
}

TEST_CASE("cli: sweep writes one CSV row per seed and grid point") {
  CliFixture fx;
  const auto r = run_cli("sweep " + fx.common("sw") + " --attribute contourWidth --seeds 1");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  std::ifstream csv(fx.dir / "sw" / "sweep_contourWidth.csv");
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 12);
  const auto summary = nlohmann::json::parse(slurp(fx.dir / "sw" / "summary.json"));
  CHECK(summary["fingerprint"].get<std::string>().size() == 64);
  CHECK(fs::file_size(fx.dir / "sw" / "sweep_contourWidth.png") > 0);
}

TEST_CASE("cli: config files supply defaults and flags override them") {
  CliFixture fx;
  {
    std::ofstream cfg(fx.dir / "run.cfg");
    cfg << "# sampling defaults\n[sample]\nseed = 5\nprompt = 2\nsteps = 6\n";
  }
  REQUIRE(run_cli("sample " + fx.common("ref5") + " --seed 5 --prompt 2").code == 0);
  REQUIRE(run_cli("sample " + fx.common("ref7") + " --seed 7 --prompt 2").code == 0);
  const std::string base = "sample --bundle " + fx.bundle.string() + " --config " + (fx.dir / "run.cfg").string();
  REQUIRE(run_cli(base + " --out " + (fx.dir / "c5").string()).code == 0);
  REQUIRE(run_cli(base + " --seed 7 --out " + (fx.dir / "c7").string()).code == 0);
  CHECK(slurp(fx.dir / "c5" / "sample.png") == slurp(fx.dir / "ref5" / "sample.png"));
  CHECK(slurp(fx.dir / "c7" / "sample.png") == slurp(fx.dir / "ref7" / "sample.png"));
}

TEST_CASE("cli: exit codes for usage, validation and runtime failures") {
  CliFixture fx;
  CHECK(run_cli("--help").code == 0);
  CHECK(run_cli("no-such-command").code == 1);
  CHECK(run_cli("sample --out " + (fx.dir / "x").string()).code == 1);  // missing --bundle

  const auto bad = run_cli("edit " + fx.common("bad") + " --lambda sepia=0.5");
  CHECK(bad.code == 1);
  CHECK(bad.output.find("contourWidth") != std::string::npos);
  CHECK(bad.output.find("blackpoint") != std::string::npos);

  // A corrupt bundle is a runtime failure.
  {
    std::string bytes = slurp(fx.bundle);
    bytes[bytes.size() - 3] ^= 0x11;
    std::ofstream(fx.dir / "corrupt.ckpt", std::ios::binary) << bytes;
  }
  const auto corrupt = run_cli("sample --bundle " + (fx.dir / "corrupt.ckpt").string() + " --out " +
                               (fx.dir / "c").string());
  CHECK(corrupt.code == 2);
}
