#include <unistd.h>

#include <filesystem>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "doctest.h"
#include "dfsnet/io.hpp"
#include "dfsnet/streaming.hpp"
#include "dfsnet/training.hpp"
#include "support.hpp"

using namespace dfs;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("dfsnet_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

double number_after(const std::string& text, const std::string& label) {
  const std::regex re(label + R"(:\s*(-?[0-9.]+))");
  std::smatch m;
  REQUIRE(std::regex_search(text, m, re));
  return std::stod(m[1].str());
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("info reports the reference numbers") {
  const auto r = run({"info"});
  CHECK(r.code == 0);
  CHECK(r.out.find("549120 (0.55M)") != std::string::npos);
  CHECK(number_after(r.out, R"(total GMAC/s \(C=4\))") == doctest::Approx(0.94).epsilon(0.1));
  CHECK(r.out.find("= 4.500 ms") != std::string::npos);
  CHECK(number_after(run({"info", "--mics", "6"}).out, R"(total GMAC/s \(C=6\))") == doctest::Approx(1.38).epsilon(0.1));
  CHECK(run({"info", "--config", "tiny"}).code == 0);
}

TEST_CASE("simulate is deterministic and complete") {
  TempDir tmp("sim");
  REQUIRE(run({"simulate", "--seed", "7", "--out-dir", tmp / "a", "--duration", "1.0"}).code == 0);
  REQUIRE(run({"simulate", "--seed", "7", "--out-dir", tmp / "b", "--duration", "1.0"}).code == 0);
  for (const char* f : {"mix.wav", "clean.wav", "noise.wav", "scene.json"}) {
    CHECK(io::read_file(tmp.path / "a" / f) == io::read_file(tmp.path / "b" / f));
  }
  const auto meta = io::load_scene(tmp.path / "a" / "scene.json");
  CHECK(meta.spec.mics.size() == 4u);
  CHECK(io::wav_read(tmp.path / "a" / "mix.wav").channels() == 4u);
  REQUIRE(run({"simulate", "--seed", "8", "--out-dir", tmp / "c", "--duration", "1.0"}).code == 0);
  CHECK(io::read_file(tmp.path / "a" / "mix.wav") != io::read_file(tmp.path / "c" / "mix.wav"));
}

TEST_CASE("enhance: batch and streaming are bit-identical and match the library") {
  TempDir tmp("enh");
  REQUIRE(run({"simulate", "--seed", "3", "--out-dir", tmp / "s", "--mics", "3", "--duration", "1.0"}).code == 0);
  const auto params = dfs::test::random_params(ModelConfig::tiny(), 5).cast<float>();
  io::save_weights(tmp.path / "w.dfsw", params);
  const std::vector<std::string> base{"enhance", "--weights", tmp / "w.dfsw", "--scene", tmp / "s/scene.json",
                                      "--in", tmp / "s/mix.wav"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", tmp / "batch.wav", "--batch"});
  b.insert(b.end(), {"--out", tmp / "stream.wav", "--streaming"});
  REQUIRE(run(a).code == 0);
  REQUIRE(run(b).code == 0);
  CHECK(io::read_file(tmp.path / "batch.wav") == io::read_file(tmp.path / "stream.wav"));

  const auto meta = io::load_scene(tmp.path / "s/scene.json");
  const auto mix = io::wav_read(tmp.path / "s/mix.wav").permuted(meta.permutation);
  const auto lib = enhance_offline<float>(params, meta.plan(), mix);
  const auto est = io::wav_read(tmp.path / "batch.wav");
  REQUIRE(est.channels() == 1u);
  REQUIRE(est.length() == lib.size());
  for (std::size_t t = 0; t < lib.size(); ++t) CHECK(est.at(0, t) == static_cast<double>(lib[t]));
}

TEST_CASE("eval of the DS target itself reports at least 80 dB") {
  TempDir tmp("eval");
  REQUIRE(run({"simulate", "--seed", "4", "--out-dir", tmp / "s", "--duration", "1.0"}).code == 0);
  const auto meta = io::load_scene(tmp.path / "s/scene.json");
  const auto clean = io::wav_read(tmp.path / "s/clean.wav").permuted(meta.permutation);
  const auto target = make_target(meta.plan(), clean);
  MultichannelBuffer est(1, target.size(), 16000.0);
  std::copy(target.begin(), target.end(), est.channel(0).begin());
  io::wav_write(tmp.path / "est.wav", est);
  const auto r = run({"eval", "--est", tmp / "est.wav", "--scene", tmp / "s/scene.json", "--clean", tmp / "s/clean.wav"});
  REQUIRE(r.code == 0);
  CHECK(number_after(r.out, "SI-SDR vs x_DS") >= 80.0);
  CHECK(r.out.find("DS baseline SI-SDR") != std::string::npos);
  CHECK(r.out.find("PESQ") != std::string::npos);

  // the noisy delay-and-sum baseline scored against itself via --mix
  const auto mix = io::wav_read(tmp.path / "s/mix.wav").permuted(meta.permutation);
  const auto ds = delay_and_sum(apply_steering(meta.plan(), mix));
  const double expect = si_sdr(std::span<const double>(ds), target);
  CHECK(number_after(r.out, "DS baseline SI-SDR vs x_DS") == doctest::Approx(expect).epsilon(1e-3));
}

TEST_CASE("exit codes and single-line diagnostics") {
  TempDir tmp("err");
  auto r = run({});
  CHECK(r.code == 1);
  r = run({"bogus"});
  CHECK(r.code == 1);
  CHECK(count_lines(r.err) == 1u);
  r = run({"info", "--frobnicate"});
  CHECK(r.code == 1);
  CHECK(count_lines(r.err) == 1u);
  r = run({"simulate", "--out-dir", tmp / "x"});
  CHECK(r.code == 1);
  r = run({"simulate", "--seed", "1", "--out-dir", tmp / "x", "--t60", "3.0"});
  CHECK(r.code != 0);
  CHECK(count_lines(r.err) == 1u);
  CHECK((!fs::exists(tmp.path / "x") || fs::is_empty(tmp.path / "x")));

  REQUIRE(run({"simulate", "--seed", "1", "--out-dir", tmp / "s", "--duration", "1.0"}).code == 0);
  r = run({"enhance", "--weights", tmp / "missing.dfsw", "--scene", tmp / "s/scene.json", "--in", tmp / "s/mix.wav",
           "--out", tmp / "est.wav"});
  CHECK(r.code == 2);
  CHECK(count_lines(r.err) == 1u);
  CHECK(!fs::exists(tmp.path / "est.wav"));

  io::save_weights(tmp.path / "w.dfsw", init_params(ModelConfig::tiny(), 1).cast<float>());
  r = run({"enhance", "--weights", tmp / "w.dfsw", "--scene", tmp / "s/scene.json", "--in", tmp / "s/clean.wav",
           "--out", tmp / "est.wav", "--batch", "--streaming"});
  CHECK(r.code == 1);
  // channel mismatch between scene and input is a data error
  MultichannelBuffer two(2, 16000, 16000.0);
  io::wav_write(tmp.path / "two.wav", two);
  r = run({"enhance", "--weights", tmp / "w.dfsw", "--scene", tmp / "s/scene.json", "--in", tmp / "two.wav", "--out",
           tmp / "est.wav"});
  CHECK(r.code == 2);
  CHECK(!fs::exists(tmp.path / "est.wav"));

  io::write_file_atomic(tmp.path / "junk.dfsw", std::string("DFSWjunk"));
  r = run({"enhance", "--weights", tmp / "junk.dfsw", "--scene", tmp / "s/scene.json", "--in", tmp / "s/mix.wav",
           "--out", tmp / "est.wav"});
  CHECK(r.code == 2);
  CHECK(!fs::exists(tmp.path / "est.wav"));
  CHECK(run({"info", "--help"}).code == 0);
}

TEST_CASE("train writes weights and a step log") {
  TempDir tmp("train");
  REQUIRE(run({"simulate", "--seed", "1", "--out-dir", tmp / "data/a", "--mics", "2", "--duration", "1.0"}).code == 0);
  REQUIRE(run({"simulate", "--seed", "2", "--out-dir", tmp / "data/b", "--mics", "3", "--duration", "1.0"}).code == 0);
  const std::vector<std::string> args{"train", "--config", "tiny", "--data-dir", tmp / "data", "--epochs", "2",
                                      "--seed", "5", "--steps-per-epoch", "2", "--out", tmp / "w.dfsw"};
  const auto r = run(args);
  REQUIRE(r.code == 0);
  const auto w = io::load_weights(tmp.path / "w.dfsw");
  CHECK(w.config == ModelConfig::tiny());
  const auto log = io::read_file(tmp.path / "w.dfsw.log");
  const std::string text(log.begin(), log.end());
  CHECK(text.rfind("step\tepoch\tloss\tlr\n", 0) == 0);
  CHECK(count_lines(text) == 5u);
  auto again = args;
  again.back() = tmp / "w2.dfsw";
  REQUIRE(run(again).code == 0);
  CHECK(io::read_file(tmp.path / "w.dfsw") == io::read_file(tmp.path / "w2.dfsw"));
  CHECK(run({"train", "--config", "tiny", "--data-dir", tmp / "nothing", "--out", tmp / "w3.dfsw"}).code == 2);
  CHECK(!fs::exists(tmp.path / "w3.dfsw"));
}
