#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "dfsnet/io.hpp"
#include "support.hpp"

using namespace dfs;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("dfsnet_io_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) | static_cast<std::uint32_t>(b[off + 1]) << 8 |
         static_cast<std::uint32_t>(b[off + 2]) << 16 | static_cast<std::uint32_t>(b[off + 3]) << 24;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t off, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::size_t find_chunk(const std::vector<std::uint8_t>& b, const char* id) {
  for (std::size_t off = 12; off + 8 <= b.size();) {
    if (std::memcmp(b.data() + off, id, 4) == 0) return off;
    off += 8 + get_u32(b, off + 4) + (get_u32(b, off + 4) & 1u);
  }
  return std::string::npos;
}

ModelParams<float> random_float_params(ModelConfig cfg, std::uint64_t seed) {
  return dfs::test::random_params(cfg, seed).cast<float>();
}

}  // namespace

TEST_CASE("wav float32 round trip is bit-identical") {
  auto buf = dfs::test::random_buffer(3, 1001, 1);
  for (double& v : buf.data()) v = static_cast<double>(static_cast<float>(v));
  const auto back = io::wav_decode(io::wav_encode(buf, io::SampleFormat::float32));
  CHECK(back == buf);
  TempDir tmp;
  io::wav_write(tmp.path / "a.wav", buf);
  CHECK(io::wav_read(tmp.path / "a.wav") == buf);
  CHECK(io::wav_read(tmp.path / "a.wav").sample_rate() == 16000.0);
}

TEST_CASE("pcm16 quantization") {
  CHECK(io::quantize_pcm16(1.0) == 32767);
  CHECK(io::quantize_pcm16(5.0) == 32767);
  CHECK(io::quantize_pcm16(-1.0) == -32768);
  CHECK(io::quantize_pcm16(-3.0) == -32768);
  CHECK(io::quantize_pcm16(0.5 / 32768.0) == 1);
  CHECK(io::quantize_pcm16(-0.5 / 32768.0) == -1);
  CHECK(io::quantize_pcm16(0.0) == 0);

  MultichannelBuffer one(1, 2, 16000.0);
  one.at(0, 0) = 1.0;
  one.at(0, 1) = -0.25;
  const auto bytes = io::wav_encode(one, io::SampleFormat::pcm16);
  const auto data = find_chunk(bytes, "data");
  REQUIRE(data != std::string::npos);
  CHECK(static_cast<std::int16_t>(bytes[data + 8] | bytes[data + 9] << 8) == 32767);
  const auto back = io::wav_decode(bytes);
  CHECK(back.at(0, 0) == 32767.0 / 32768.0);
  CHECK(back.at(0, 1) == -0.25);
}

TEST_CASE("six-channel order survives a pcm16 round trip") {
  const std::size_t T = 4000;
  MultichannelBuffer buf(6, T, 16000.0);
  auto tone = [](std::size_t c, std::size_t t) {
    return 0.5 * std::sin(2.0 * std::numbers::pi * (300.0 + 250.0 * static_cast<double>(c)) * static_cast<double>(t) / 16000.0);
  };
  for (std::size_t c = 0; c < 6; ++c) {
    for (std::size_t t = 0; t < T; ++t) buf.at(c, t) = tone(c, t);
  }
  TempDir tmp;
  io::wav_write(tmp.path / "six.wav", buf, io::SampleFormat::pcm16);
  const auto back = io::wav_read(tmp.path / "six.wav");
  REQUIRE(back.channels() == 6u);
  for (std::size_t c = 0; c < 6; ++c) {
    std::size_t best = 99;
    double best_v = -1.0;
    for (std::size_t m = 0; m < 6; ++m) {
      double v = 0.0;
      for (std::size_t t = 0; t < T; ++t) v += back.at(c, t) * tone(m, t);
      if (v > best_v) {
        best_v = v;
        best = m;
      }
    }
    CHECK(best == c);
    for (std::size_t t = 0; t < T; ++t) CHECK(std::abs(back.at(c, t) - buf.at(c, t)) <= 1.0 / 32768.0);
  }
}

TEST_CASE("malformed wav input") {
  auto good = io::wav_encode(dfs::test::random_buffer(2, 50, 3), io::SampleFormat::pcm16);
  CHECK_NOTHROW(io::wav_decode(good));
  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(io::wav_decode(bad), DataError);
  CHECK_THROWS_AS(io::wav_decode(std::vector<std::uint8_t>(good.begin(), good.begin() + 20)), DataError);
  bad = good;
  const auto fmt = find_chunk(bad, "fmt ");
  bad[fmt + 8] = 2;  // ADPCM
  CHECK_THROWS_AS(io::wav_decode(bad), DataError);
  bad = good;
  bad.resize(bad.size() - 1);
  put_u32(bad, find_chunk(good, "data") + 4, get_u32(good, find_chunk(good, "data") + 4) - 1);
  CHECK_THROWS_AS(io::wav_decode(bad), DataError);
  CHECK_THROWS_AS(io::wav_read("/nonexistent/file.wav"), DataError);
}

TEST_CASE("weight file round trip is byte-identical for every variant") {
  for (int variant = 0; variant < 4; ++variant) {
    auto cfg = ModelConfig::tiny();
    cfg.encoder_bias = variant == 1;
    cfg.share_cells = variant == 2;
    cfg.channel_interaction = variant != 3;
    const auto p = random_float_params(cfg, 10 + variant);
    const auto bytes = io::encode_weights(p);
    CHECK(std::memcmp(bytes.data(), "DFSW", 4) == 0);
    CHECK(get_u32(bytes, 4) == io::kWeightFormatVersion);
    const auto q = io::decode_weights(bytes);
    CHECK(q == p);
    CHECK(q.config == cfg);
    CHECK(io::encode_weights(q) == bytes);
  }
  TempDir tmp;
  const auto p = random_float_params(ModelConfig::reference(), 5);
  io::save_weights(tmp.path / "w.dfsw", p);
  const auto q = io::load_weights(tmp.path / "w.dfsw");
  CHECK(q == p);
  io::save_weights(tmp.path / "w2.dfsw", q);
  CHECK(io::read_file(tmp.path / "w.dfsw") == io::read_file(tmp.path / "w2.dfsw"));
}

TEST_CASE("weight loader rejects bad files") {
  const auto bytes = io::encode_weights(random_float_params(ModelConfig::tiny(), 1));
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(io::decode_weights(bad), DataError);
  bad = bytes;
  put_u32(bad, 4, 99);
  CHECK_THROWS_AS(io::decode_weights(bad), DataError);
  bad = bytes;
  put_u32(bad, 8 + 3 * 4, 3);  // P = 3 does not divide N = 16
  CHECK_THROWS_AS(io::decode_weights(bad), DataError);
  bad = bytes;
  put_u32(bad, 8 + 2 * 4, 30);  // H = 30 not divisible by P = 2
  CHECK_THROWS_AS(io::decode_weights(bad), DataError);
  CHECK_THROWS_AS(io::decode_weights(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 4)), DataError);
  CHECK_THROWS_AS(io::decode_weights(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 30)), DataError);
  bad = bytes;
  const float nan = std::nanf("");
  std::memcpy(bad.data() + bad.size() - 4, &nan, 4);
  CHECK_THROWS_AS(io::decode_weights(bad), DataError);
  CHECK_THROWS_AS(io::load_weights("/nonexistent.dfsw"), DataError);
}

TEST_CASE("scene metadata round trip reproduces the steering plan") {
  TempDir tmp;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto spec = sample_random_scene(s, 1 + s % 6);
    const auto meta = io::describe_scene(spec, 5.0, s);
    CHECK(meta.permutation.size() == spec.mics.size());
    CHECK(meta.true_tdoa.size() == spec.mics.size() - 1);
    const auto back = io::scene_from_json(io::scene_to_json(meta));
    CHECK(back.spec == spec);
    CHECK(back.true_tdoa == meta.true_tdoa);
    CHECK(back.perturbed_tdoa == meta.perturbed_tdoa);
    CHECK(back.permutation == meta.permutation);
    CHECK(back.plan(true) == meta.plan(true));
    CHECK(back.plan(false) == meta.plan(false));
    io::save_scene(tmp.path / "scene.json", meta);
    CHECK(io::load_scene(tmp.path / "scene.json").plan() == meta.plan());
  }
  CHECK_THROWS(io::scene_from_json("{not json"));
  CHECK_THROWS(io::scene_from_json("{}"));
  auto meta = io::describe_scene(sample_random_scene(3), 5.0, 3);
  meta.permutation[0] = 99;
  CHECK_THROWS(io::scene_from_json(io::scene_to_json(meta)));
}

TEST_CASE("config json") {
  for (const auto& cfg : {ModelConfig::reference(), ModelConfig::tiny()}) {
    CHECK(io::config_from_json(io::config_to_json(cfg)) == cfg);
  }
  CHECK(io::resolve_config("reference") == ModelConfig::reference());
  CHECK(io::resolve_config("tiny") == ModelConfig::tiny());
  CHECK(io::config_from_json(R"({"latent_dim": 64})").latent_dim == 64);
  CHECK_THROWS(io::config_from_json(R"({"latent_dims": 64})"));
  CHECK_THROWS(io::config_from_json(R"({"partitions": 3})"));
  CHECK_THROWS(io::resolve_config("/nonexistent/config.json"));
}

TEST_CASE("atomic writes and output transactions") {
  TempDir tmp;
  io::write_file_atomic(tmp.path / "x.txt", std::string("hello"));
  CHECK(io::read_file(tmp.path / "x.txt") == std::vector<std::uint8_t>{'h', 'e', 'l', 'l', 'o'});
  {
    io::OutputTransaction tx;
    tx.stage(tmp.path / "a.txt", std::string("a"));
    tx.stage(tmp.path / "b.txt", std::string("b"));
  }
  CHECK(!fs::exists(tmp.path / "a.txt"));
  CHECK(!fs::exists(tmp.path / "b.txt"));
  {
    io::OutputTransaction tx;
    tx.stage(tmp.path / "a.txt", std::string("a"));
    tx.stage(tmp.path / "b.txt", std::string("b"));
    tx.commit();
  }
  CHECK(fs::exists(tmp.path / "a.txt"));
  CHECK(fs::exists(tmp.path / "b.txt"));
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(tmp.path)) ++files;
  CHECK(files == 3u);
}
