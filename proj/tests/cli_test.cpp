#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "doctest.h"
#include "facemat/apply/apply.hpp"
#include "facemat/cli/cli.hpp"
#include "facemat/core/raster_io.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace facemat;
using facemat::testing::read_file;
using facemat::testing::TempDir;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  return {code, o.str(), e.str()};
}

std::string str(const std::filesystem::path& p) { return p.string(); }

std::size_t count(const std::string& s, const std::string& what) {
  std::size_t n = 0;
  for (auto p = s.find(what); p != std::string::npos; p = s.find(what, p + 1)) ++n;
  return n;
}

/// Sets an environment variable for one scope.
class ScopedEnv {
 public:
  ScopedEnv(const char* name, const std::string& value) : name_(name) { ::setenv(name, value.c_str(), 1); }
  ~ScopedEnv() { ::unsetenv(name_); }

 private:
  const char* name_;
};

const std::vector<std::string> kTinyModel{"--model-levels", "2", "--model-width", "4"};

}  // namespace

TEST_CASE("synth reports the occluded count and creates the out dir") {
  TempDir dir("cli_synth");
  const auto out = dir.path() / "nested" / "data";
  const Outcome r = run({"synth", "--ratio", "0.25", "--n", "100", "--size", "64", "--clip-length", "1", "--out", str(out)});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.find("occluded: 25\n") != std::string::npos);
  CHECK(std::filesystem::exists(out / "manifest.jsonl"));
}

TEST_CASE("configuration errors are aggregated") {
  const Outcome r = run({"synth", "--ratio", "1.5", "--n", "0", "--out", "/tmp/unused"});
  CHECK(r.code == cli::kExitUsage);
  CHECK(count(r.err, "configuration errors") == 1);
  CHECK(r.err.find("configuration errors (2)") != std::string::npos);
  CHECK(r.err.find("ratio") != std::string::npos);

  CHECK(run({"synth", "--ratio", "abc", "--out", "/tmp/unused"}).code == cli::kExitUsage);
  CHECK(run({"synth", "--no-such-flag", "1"}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
}

TEST_CASE("train-student needs a teacher") {
  const Outcome r = run({"train-student", "--manifest", "m.jsonl", "--out", "o"});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("--teacher") != std::string::npos);
  const Outcome missing = run({"train-student", "--manifest", "m.jsonl", "--out", "o", "--teacher", "/nope.ckpt"});
  CHECK(missing.code == cli::kExitUsage);
  CHECK(missing.err.find("--teacher") != std::string::npos);
}

TEST_CASE("training subcommands: determinism and header echo") {
  TempDir dir("cli_train");
  const auto data = dir.path() / "data";
  REQUIRE(run({"synth", "--n", "4", "--size", "64", "--clip-length", "2", "--test-fraction", "0.5", "--seed", "1",
               "--out", str(data)})
              .code == cli::kExitOk);
  const std::string manifest = str(data / "manifest.jsonl");

  auto teacher = [&](const std::string& out) {
    std::vector<std::string> a{"train-teacher", "--manifest", manifest, "--out", out, "--steps", "3", "--seed", "1"};
    a.insert(a.end(), kTinyModel.begin(), kTinyModel.end());
    return run(a);
  };
  const Outcome t1 = teacher(str(dir.path() / "t1"));
  REQUIRE(t1.code == cli::kExitOk);
  REQUIRE(teacher(str(dir.path() / "t2")).code == cli::kExitOk);
  CHECK(read_file(dir.path() / "t1" / "teacher.ckpt") == read_file(dir.path() / "t2" / "teacher.ckpt"));

  const Outcome s = run({"train-student", "--manifest", manifest, "--out", str(dir.path() / "s"), "--steps", "2",
                         "--teacher", str(dir.path() / "t1" / "teacher.ckpt"), "--ugkd-weighting", "exp"});
  REQUIRE(s.code == cli::kExitOk);
  std::ifstream log(dir.path() / "s" / "train_log.jsonl");
  std::string first;
  std::getline(log, first);
  const auto h = nlohmann::json::parse(first)["header"];
  CHECK(h["ugkd"]["weighting"] == "exp");
  CHECK(h["extra"]["config.ugkd.weighting"] == "exp (flag)");
  CHECK(h["extra"]["config.ugkd.w1"] == "2 (default)");

  const Outcome bad = run({"train-student", "--manifest", manifest, "--out", str(dir.path() / "s2"), "--teacher",
                           str(dir.path() / "t1" / "teacher.ckpt"), "--ugkd-weighting", "cubic"});
  CHECK(bad.code == cli::kExitUsage);
}

TEST_CASE("eval: oracle row, report files, determinism, failure exit") {
  TempDir dir("cli_eval");
  const auto data = dir.path() / "data";
  REQUIRE(run({"synth", "--n", "4", "--size", "64", "--clip-length", "2", "--test-fraction", "0.5", "--out", str(data)})
              .code == cli::kExitOk);
  const std::string manifest = str(data / "manifest.jsonl");
  const Outcome r = run({"eval", "--manifest", manifest, "--oracle", "true", "--report", str(dir.path() / "r1")});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.find("MSE        SAD       Grad       Conn        IoU   Accuracy") != std::string::npos);
  CHECK(r.out.find("0.000000   0.000000   0.000000   0.000000   1.000000   1.000000") != std::string::npos);
  CHECK(r.out.find(str(dir.path() / "r1.txt")) != std::string::npos);
  CHECK(std::filesystem::exists(dir.path() / "r1.json"));

  const auto ckpt = testing::save_fresh_model(dir.path() / "m.ckpt", model::ModelConfig{2, 4});
  for (const char* base : {"a", "b"}) {
    REQUIRE(run({"eval", "--manifest", manifest, "--checkpoint", str(ckpt), "--report", str(dir.path() / base)}).code ==
            cli::kExitOk);
  }
  CHECK(read_file(dir.path() / "a.json") == read_file(dir.path() / "b.json"));
  CHECK(read_file(dir.path() / "a.txt") == read_file(dir.path() / "b.txt"));

  // Every sample broken: nonzero exit.
  const DatasetManifest m = read_manifest(data / "manifest.jsonl");
  for (const auto* rec : select_split(m, Split::Test)) std::filesystem::remove(m.root / rec->frames[0]);
  const Outcome f = run({"eval", "--manifest", manifest, "--oracle", "true", "--report", str(dir.path() / "f")});
  CHECK(f.code == cli::kExitRuntime);
  CHECK(run({"eval", "--manifest", str(dir.path() / "none.jsonl"), "--oracle", "true"}).code == cli::kExitRuntime);
}

TEST_CASE("apply-filter hue:0 is the identity") {
  TempDir dir("cli_apply");
  Rng rng(1);
  std::filesystem::create_directories(dir.path() / "in");
  for (int t = 0; t < 2; ++t) save_image(dir.path() / "in" / ("f" + std::to_string(t) + ".png"), testing::random_image(rng, 32, 32));
  const auto ckpt = testing::save_fresh_model(dir.path() / "m.ckpt", model::ModelConfig{2, 4});
  const Outcome r = run({"apply-filter", "--frames", str(dir.path() / "in"), "--checkpoint", str(ckpt), "--out",
                         str(dir.path() / "out"), "--filter", "hue:0"});
  REQUIRE(r.code == cli::kExitOk);
  for (int t = 0; t < 2; ++t) {
    const std::string name = "f" + std::to_string(t) + ".png";
    const ImageFrame a = load_image(dir.path() / "in" / name), b = load_image(dir.path() / "out" / "frames" / name);
    double m = 0.0;
    for (int c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < a.plane(c).size(); ++i) m = std::max(m, std::abs(a.plane(c)[i] - b.plane(c)[i]));
    }
    CHECK(m <= 1.0 / 255);
  }
  CHECK(run({"apply-filter", "--frames", str(dir.path() / "in"), "--checkpoint", str(ckpt), "--out",
             str(dir.path() / "o2"), "--filter", "sepia"})
            .code == cli::kExitUsage);
}

TEST_CASE("precedence: flag over file over default") {
  TempDir dir("cli_config");
  const auto ini = dir.path() / "c.ini";
  std::ofstream(ini) << "# comment\n[synth]\nn = 8\nratio = 0.5\nsize = 64\n[run]\nseed = 4\n";
  const Outcome r = run({"synth", "--config", str(ini), "--ratio", "0.75", "--show-config"});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.find("synth.n = 8  [file]") != std::string::npos);
  CHECK(r.out.find("synth.ratio = 0.75  [flag]") != std::string::npos);
  CHECK(r.out.find("run.seed = 4  [file]") != std::string::npos);
  CHECK(r.out.find("synth.erode_r = 5  [default]") != std::string::npos);

  std::ofstream(dir.path() / "bad.ini") << "[synth]\nbogus = 1\n[nowhere]\nx = 1\nnot a line\n";
  const Outcome b = run({"synth", "--config", str(dir.path() / "bad.ini"), "--out", str(dir.path() / "o")});
  CHECK(b.code == cli::kExitUsage);
  CHECK(b.err.find("configuration errors (3)") != std::string::npos);
  CHECK(run({"synth", "--config", str(dir.path() / "missing.ini")}).code == cli::kExitUsage);
}

TEST_CASE("config directory from the environment") {
  TempDir dir("cli_env");
  std::ofstream(dir.path() / cli::kDefaultConfigFile) << "[synth]\nn = 6\n";
  std::ofstream(dir.path() / "other.ini") << "[synth]\nn = 7\n";
  ScopedEnv env(cli::kConfigDirEnv, str(dir.path()));
  const Outcome a = run({"synth", "--show-config"});
  CHECK(a.out.find("synth.n = 6  [file]") != std::string::npos);
  const Outcome b = run({"synth", "--config", "other.ini", "--show-config"});
  CHECK(b.out.find("synth.n = 7  [file]") != std::string::npos);
}

std::string all_help() {
  std::string s = run({"--help"}).out;
  for (const char* c : {"synth", "gen-faces", "train-teacher", "train-student", "eval", "apply-filter"}) {
    s += run({c, "--help"}).out;
  }
  return s;
}

TEST_CASE("help documents every key with its default and the rules") {
  const std::string help = all_help();
  for (const auto& k : cli::key_table()) {
    const std::string key = k.section + "." + k.name;
    const auto p = help.find(key);
    REQUIRE_MESSAGE(p != std::string::npos, key);
    const std::string def = "default: " + (k.default_value.empty() ? std::string("(none)") : k.default_value);
    CHECK_MESSAGE(help.find(def, p) != std::string::npos, key);
  }
  CHECK(help.find("Precedence") != std::string::npos);
  CHECK(help.find(cli::kConfigDirEnv) != std::string::npos);
  CHECK(help.find("Exit codes") != std::string::npos);
}

TEST_CASE("equal seeds give identical synth and gen-faces artifacts") {
  TempDir dir("cli_determinism");
  for (const char* o : {"a", "b"}) {
    REQUIRE(run({"synth", "--n", "3", "--size", "64", "--clip-length", "2", "--seed", "9", "--out", str(dir.path() / o)})
                .code == cli::kExitOk);
    REQUIRE(run({"gen-faces", "--n", "2", "--size", "64", "--seed", "9", "--out", str(dir.path() / o / "faces")}).code ==
            cli::kExitOk);
  }
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir.path() / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), dir.path() / "a");
    CHECK_MESSAGE(read_file(e.path()) == read_file(dir.path() / "b" / rel), rel.string());
  }
}

TEST_CASE("parse_ini") {
  std::istringstream in("; top\n[a]\nx = 1\n  y=two words  \n[b]\n= 3\nz\n");
  std::vector<std::string> errors;
  const cli::IniData d = cli::parse_ini(in, errors);
  CHECK(d.at("a").at("x") == "1");
  CHECK(d.at("a").at("y") == "two words");
  CHECK(errors.size() == 2);
}
