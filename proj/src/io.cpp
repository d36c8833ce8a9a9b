#include "dfsnet/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "json.hpp"

namespace dfs::io {

namespace {

using Bytes = std::vector<std::uint8_t>;

class Writer {
 public:
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v));
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void tag(const char* t) { out_.insert(out_.end(), t, t + 4); }
  void raw(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }
  std::size_t size() const { return out_.size(); }
  void patch_u32(std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_[at + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  void patch_u64(std::size_t at, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_[at + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  Reader(const Bytes& b, const char* what) : b_(b), what_(what) {}

  void need(std::size_t n) const {
    if (n > b_.size() - pos_) throw DataError(std::string(what_) + ": truncated file");
  }
  std::uint16_t u16() {
    need(2);
    const std::uint16_t v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  const Bytes& b_;
  const char* what_;
  std::size_t pos_ = 0;
};

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

float read_f32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(v);
}

}  // namespace

// ---- audio -----------------------------------------------------------------

std::int16_t quantize_pcm16(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("cannot quantize a non-finite sample");
  const double clipped = std::clamp(v, -1.0, 1.0 - 1.0 / 32768.0);
  return static_cast<std::int16_t>(std::round(clipped * 32768.0));  // round() is half-away-from-zero
}

Bytes wav_encode(const MultichannelBuffer& audio, SampleFormat format) {
  const std::size_t C = audio.channels();
  const std::size_t T = audio.length();
  if (C == 0 || C > 0xFFFF) throw std::invalid_argument("WAV needs 1..65535 channels");
  const auto rate = static_cast<std::uint32_t>(std::lround(audio.sample_rate()));
  if (rate == 0 || std::abs(audio.sample_rate() - rate) > 0.0) throw std::invalid_argument("WAV sample rate must be a positive integer");
  const bool pcm = format == SampleFormat::pcm16;
  const std::uint16_t bytes = pcm ? 2 : 4;
  const std::uint64_t data_size = static_cast<std::uint64_t>(C) * T * bytes;
  if (data_size > 0xFFFFFFF0ULL - 64) throw std::invalid_argument("audio too long for a RIFF file");

  Writer w;
  w.tag("RIFF");
  w.u32(0);
  w.tag("WAVE");
  w.tag("fmt ");
  w.u32(pcm ? 16 : 18);
  w.u16(pcm ? kFormatPcm : kFormatFloat);
  w.u16(static_cast<std::uint16_t>(C));
  w.u32(rate);
  w.u32(static_cast<std::uint32_t>(rate * C * bytes));
  w.u16(static_cast<std::uint16_t>(C * bytes));
  w.u16(static_cast<std::uint16_t>(8 * bytes));
  if (!pcm) {
    w.u16(0);
    w.tag("fact");
    w.u32(4);
    w.u32(static_cast<std::uint32_t>(T));
  }
  w.tag("data");
  w.u32(static_cast<std::uint32_t>(data_size));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      const double v = audio.at(c, t);
      if (pcm) {
        w.u16(static_cast<std::uint16_t>(quantize_pcm16(v)));
      } else {
        if (!std::isfinite(v)) throw std::invalid_argument("cannot write a non-finite sample");
        w.f32(static_cast<float>(v));
      }
    }
  }
  w.patch_u32(4, static_cast<std::uint32_t>(w.size() - 8));
  return w.take();
}

MultichannelBuffer wav_decode(const Bytes& bytes) {
  Reader r(bytes, "WAV");
  if (r.str(4) != "RIFF") throw DataError("WAV: missing RIFF header");
  r.u32();
  if (r.str(4) != "WAVE") throw DataError("WAV: not a WAVE file");

  bool have_fmt = false;
  std::uint16_t tag = 0, channels = 0, bits = 0, block = 0;
  std::uint32_t rate = 0;
  while (r.remaining() >= 8) {
    const std::string id = r.str(4);
    const std::uint32_t size = r.u32();
    const std::size_t start = r.pos();
    if (id == "fmt ") {
      if (size < 16) throw DataError("WAV: fmt chunk too short");
      tag = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();
      block = r.u16();
      bits = r.u16();
      if (tag == kFormatExtensible) {
        if (size < 40) throw DataError("WAV: extensible fmt chunk too short");
        r.u16();  // cbSize
        r.u16();  // valid bits
        r.u32();  // channel mask
        tag = r.u16();  // first two bytes of the subformat GUID
      }
      have_fmt = true;
      r.skip(size - (r.pos() - start));
    } else if (id == "data") {
      if (!have_fmt) throw DataError("WAV: data chunk before fmt chunk");
      if (channels == 0) throw DataError("WAV: zero channels");
      if (rate == 0) throw DataError("WAV: zero sample rate");
      const bool pcm16 = tag == kFormatPcm && bits == 16;
      const bool f32 = tag == kFormatFloat && bits == 32;
      if (!pcm16 && !f32) {
        throw DataError("WAV: unsupported encoding (format " + std::to_string(tag) + ", " + std::to_string(bits) +
                        " bits); expected PCM16 or float32");
      }
      const std::size_t width = bits / 8;
      if (block != channels * width) throw DataError("WAV: inconsistent block alignment");
      const std::size_t avail = std::min<std::size_t>(size, r.remaining());
      if (avail != size) throw DataError("WAV: data chunk truncated");
      if (size % block != 0) throw DataError("WAV: data chunk holds a partial frame");
      const std::size_t frames = size / block;
      MultichannelBuffer out(channels, frames, rate);
      const std::uint8_t* p = bytes.data() + r.pos();
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t c = 0; c < channels; ++c, p += width) {
          if (pcm16) {
            const auto v = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[0] | (p[1] << 8)));
            out.at(c, t) = static_cast<double>(v) / 32768.0;
          } else {
            const float v = read_f32(p);
            if (!std::isfinite(v)) throw DataError("WAV: non-finite sample");
            out.at(c, t) = static_cast<double>(v);
          }
        }
      }
      return out;
    } else {
      r.skip(std::min<std::size_t>(size, r.remaining()));
    }
    if (size % 2 == 1 && r.remaining() > 0) r.skip(1);
  }
  throw DataError("WAV: no data chunk");
}

MultichannelBuffer wav_read(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return wav_decode(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void wav_write(const std::filesystem::path& path, const MultichannelBuffer& audio, SampleFormat format) {
  write_file_atomic(path, wav_encode(audio, format));
}

// ---- weights ---------------------------------------------------------------

Bytes encode_weights(const ModelParams<float>& params) {
  const auto& c = params.config;
  c.validate();
  if (!params.all_finite()) throw std::invalid_argument("refusing to save non-finite weights");
  Writer w;
  w.tag("DFSW");
  w.u32(kWeightFormatVersion);
  for (int v : {c.frame_len, c.latent_dim, c.hidden_dim, c.partitions, c.num_blocks, c.norm_window, c.fir_taps,
                c.sample_rate}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  std::vector<std::pair<std::size_t, const Tensor<float>*>> slots;
  std::uint32_t count = 0;
  params.visit([&](const std::string&, const Tensor<float>&) { ++count; });
  w.u32(count);
  params.visit([&](const std::string& name, const Tensor<float>& t) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    slots.emplace_back(w.size(), &t);
    w.u64(0);
  });
  for (auto& [at, t] : slots) {
    w.patch_u64(at, w.size());
    for (float v : t->data) w.f32(v);
  }
  return w.take();
}

ModelParams<float> decode_weights(const Bytes& bytes) {
  Reader r(bytes, "weights");
  if (r.str(4) != "DFSW") throw DataError("weights: bad magic (expected DFSW)");
  const std::uint32_t version = r.u32();
  if (version != kWeightFormatVersion) throw DataError("weights: unsupported format version " + std::to_string(version));
  std::uint32_t block[8];
  for (auto& v : block) {
    v = r.u32();
    if (v == 0 || v > (1u << 24)) throw DataError("weights: config value out of range");
  }
  ModelConfig cfg;
  cfg.frame_len = static_cast<int>(block[0]);
  cfg.latent_dim = static_cast<int>(block[1]);
  cfg.hidden_dim = static_cast<int>(block[2]);
  cfg.partitions = static_cast<int>(block[3]);
  cfg.num_blocks = static_cast<int>(block[4]);
  cfg.norm_window = static_cast<int>(block[5]);
  cfg.fir_taps = static_cast<int>(block[6]);
  cfg.sample_rate = static_cast<int>(block[7]);
  if (cfg.latent_dim % cfg.partitions != 0) throw DataError("weights: N is not divisible by P");
  if (cfg.hidden_dim % cfg.partitions != 0) throw DataError("weights: H is not divisible by P");

  struct Entry {
    std::vector<std::size_t> shape;
    std::uint64_t offset;
  };
  std::map<std::string, Entry> dir;
  const std::uint32_t count = r.u32();
  if (count > 100000) throw DataError("weights: implausible tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    if (len > 4096) throw DataError("weights: tensor name too long");
    std::string name = r.str(len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw DataError("weights: tensor rank too large");
    Entry e;
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(r.u32());
    e.offset = r.u64();
    if (!dir.emplace(std::move(name), std::move(e)).second) throw DataError("weights: duplicate tensor name");
  }

  // Ablation flags are implied by which tensors exist and their shapes.
  cfg.encoder_bias = dir.count("encoder.bias") > 0;
  cfg.share_cells = cfg.partitions > 1 && dir.count("blocks.0.cells.1.w_ih") == 0;
  if (auto it = dir.find("blocks.0.cells.0.w_ih"); it != dir.end() && it->second.shape.size() == 2) {
    cfg.channel_interaction = it->second.shape[1] == 2 * static_cast<std::size_t>(cfg.band());
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("weights: invalid config: ") + e.what());
  }

  auto params = ModelParams<float>::zeros(cfg);
  std::size_t expected = 0;
  params.visit([&](const std::string& name, Tensor<float>& t) {
    ++expected;
    const auto it = dir.find(name);
    if (it == dir.end()) throw DataError("weights: missing tensor " + name);
    if (it->second.shape != t.shape) throw DataError("weights: tensor " + name + " has the wrong shape");
    const std::uint64_t nbytes = 4ULL * t.size();
    if (it->second.offset > bytes.size() || nbytes > bytes.size() - it->second.offset) {
      throw DataError("weights: tensor " + name + " lies outside the file");
    }
    const std::uint8_t* p = bytes.data() + it->second.offset;
    for (std::size_t k = 0; k < t.size(); ++k) {
      t.data[k] = read_f32(p + 4 * k);
      if (!std::isfinite(t.data[k])) throw DataError("weights: tensor " + name + " has non-finite values");
    }
  });
  if (expected != dir.size()) throw DataError("weights: unexpected extra tensors");
  return params;
}

void save_weights(const std::filesystem::path& path, const ModelParams<float>& params) {
  write_file_atomic(path, encode_weights(params));
}

ModelParams<float> load_weights(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_weights(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---- scene metadata --------------------------------------------------------

SteeringPlan SceneMetadata::plan(bool perturbed) const {
  return build_steering_plan(perturbed ? perturbed_tdoa : true_tdoa, fir_taps);
}

SceneMetadata describe_scene(const SceneSpec& spec, double perturbation_deg, std::uint64_t seed, int fir_taps) {
  spec.validate();
  SceneMetadata m;
  m.spec = spec;
  m.perturbation_deg = perturbation_deg;
  m.fir_taps = fir_taps;
  const auto pose = spec.pose();
  if (pose.channels() == 1) {
    m.permutation = {0};
    return m;
  }
  m.permutation = choose_reference(pose);
  const auto ordered = pose.permuted(m.permutation);
  m.true_tdoa = compute_tdoa(ordered);
  m.perturbed_tdoa = perturb_tdoa(ordered, perturbation_deg, seed);
  return m;
}

namespace {

using nlohmann::json;

json vec3(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 to_vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw DataError(std::string("scene: ") + what + " must be a 3-vector");
  Vec3 v{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw DataError(std::string("scene: ") + what + " must be numeric");
    v[i] = j[i].get<double>();
  }
  return v;
}

const json& field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("scene: missing field '") + key + "'");
  return *it;
}

template <class T>
T number(const json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number()) throw DataError(std::string("scene: field '") + key + "' must be a number");
  return v.get<T>();
}

}  // namespace

std::string scene_to_json(const SceneMetadata& meta) {
  const auto& s = meta.spec;
  json j;
  j["room"] = vec3(s.room);
  j["t60"] = s.t60;
  j["source"] = vec3(s.source);
  j["noise_sources"] = json::array();
  for (const auto& n : s.noise_sources) j["noise_sources"].push_back(vec3(n));
  j["mics"] = json::array();
  for (const auto& m : s.mics) j["mics"].push_back(vec3(m));
  j["snr_db"] = s.snr_db;
  j["sample_rate"] = s.sample_rate;
  j["max_order"] = s.max_order;
  j["seed"] = s.seed;
  j["speed"] = s.speed;
  j["true_tdoa"] = meta.true_tdoa;
  j["perturbed_tdoa"] = meta.perturbed_tdoa;
  j["permutation"] = meta.permutation;
  j["perturbation_deg"] = meta.perturbation_deg;
  j["fir_taps"] = meta.fir_taps;
  return j.dump(2) + "\n";
}

SceneMetadata scene_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("scene: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw DataError("scene: top level must be an object");
  SceneMetadata m;
  auto& s = m.spec;
  try {
    s.room = to_vec3(field(j, "room"), "room");
    s.t60 = number<double>(j, "t60");
    s.source = to_vec3(field(j, "source"), "source");
    for (const auto& n : field(j, "noise_sources")) s.noise_sources.push_back(to_vec3(n, "noise source"));
    for (const auto& mic : field(j, "mics")) m.spec.mics.push_back(to_vec3(mic, "microphone"));
    s.snr_db = number<double>(j, "snr_db");
    s.sample_rate = number<double>(j, "sample_rate");
    s.max_order = number<int>(j, "max_order");
    s.seed = number<std::uint64_t>(j, "seed");
    s.speed = number<double>(j, "speed");
    m.true_tdoa = field(j, "true_tdoa").get<std::vector<double>>();
    m.perturbed_tdoa = field(j, "perturbed_tdoa").get<std::vector<double>>();
    m.permutation = field(j, "permutation").get<std::vector<std::size_t>>();
    m.perturbation_deg = number<double>(j, "perturbation_deg");
    m.fir_taps = number<int>(j, "fir_taps");
  } catch (const json::exception& e) {
    throw DataError(std::string("scene: malformed field: ") + e.what());
  }

  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("scene: ") + e.what());
  }
  const std::size_t C = s.mics.size();
  if (m.true_tdoa.size() + 1 != C || m.perturbed_tdoa.size() + 1 != C) {
    throw DataError("scene: TDOA lists must have one entry per non-reference microphone");
  }
  if (m.permutation.size() != C || std::set<std::size_t>(m.permutation.begin(), m.permutation.end()).size() != C ||
      *std::max_element(m.permutation.begin(), m.permutation.end()) >= C) {
    throw DataError("scene: permutation is not a permutation of the microphones");
  }
  for (double t : m.true_tdoa) {
    if (!std::isfinite(t) || t < 0.0) throw DataError("scene: TDOAs must be finite and nonnegative");
  }
  for (double t : m.perturbed_tdoa) {
    if (!std::isfinite(t) || t < 0.0) throw DataError("scene: TDOAs must be finite and nonnegative");
  }
  if (m.fir_taps < 3 || m.fir_taps % 2 == 0) throw DataError("scene: fir_taps must be odd and >= 3");
  return m;
}

void save_scene(const std::filesystem::path& path, const SceneMetadata& meta) {
  write_file_atomic(path, scene_to_json(meta));
}

SceneMetadata load_scene(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return scene_from_json(std::string(bytes.begin(), bytes.end()));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---- model configuration -------------------------------------------------------

ModelConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw DataError("config: top level must be an object");
  ModelConfig c;
  const std::map<std::string, int*> ints{{"frame_len", &c.frame_len},     {"latent_dim", &c.latent_dim},
                                         {"hidden_dim", &c.hidden_dim},   {"partitions", &c.partitions},
                                         {"num_blocks", &c.num_blocks},   {"norm_window", &c.norm_window},
                                         {"fir_taps", &c.fir_taps},       {"sample_rate", &c.sample_rate}};
  const std::map<std::string, bool*> flags{{"encoder_bias", &c.encoder_bias},
                                           {"share_cells", &c.share_cells},
                                           {"channel_interaction", &c.channel_interaction}};
  for (const auto& [key, value] : j.items()) {
    if (auto it = ints.find(key); it != ints.end()) {
      if (!value.is_number_integer()) throw DataError("config: '" + key + "' must be an integer");
      const auto v = value.get<long long>();
      if (v < 0 || v > (1LL << 24)) throw DataError("config: '" + key + "' out of range");
      *it->second = static_cast<int>(v);
    } else if (auto f = flags.find(key); f != flags.end()) {
      if (!value.is_boolean()) throw DataError("config: '" + key + "' must be true or false");
      *f->second = value.get<bool>();
    } else {
      throw DataError("config: unknown field '" + key + "'");
    }
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  return c;
}

std::string config_to_json(const ModelConfig& c) {
  json j;
  j["frame_len"] = c.frame_len;
  j["latent_dim"] = c.latent_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["partitions"] = c.partitions;
  j["num_blocks"] = c.num_blocks;
  j["norm_window"] = c.norm_window;
  j["fir_taps"] = c.fir_taps;
  j["sample_rate"] = c.sample_rate;
  j["encoder_bias"] = c.encoder_bias;
  j["share_cells"] = c.share_cells;
  j["channel_interaction"] = c.channel_interaction;
  return j.dump(2) + "\n";
}

ModelConfig resolve_config(const std::string& name_or_path) {
  if (name_or_path == "reference") return ModelConfig::reference();
  if (name_or_path == "tiny") return ModelConfig::tiny();
  const auto bytes = read_file(name_or_path);
  try {
    return config_from_json(std::string(bytes.begin(), bytes.end()));
  } catch (const DataError& e) {
    throw DataError(name_or_path + ": " + e.what());
  }
}

// ---- files -----------------------------------------------------------------

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  Bytes b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw DataError("error reading " + path.string());
  return b;
}

namespace {

std::filesystem::path write_temp(const std::filesystem::path& path, const Bytes& bytes) {
  auto tmp = path;
  tmp += ".tmp-" + std::to_string(std::random_device{}());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot create " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw DataError("error writing " + path.string());
    }
  }
  return tmp;
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const Bytes& bytes) {
  const auto tmp = write_temp(path, bytes);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot move output into place at " + path.string());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, Bytes(text.begin(), text.end()));
}

OutputTransaction::~OutputTransaction() {
  std::error_code ec;
  for (const auto& [tmp, dest] : staged_) std::filesystem::remove(tmp, ec);
}

void OutputTransaction::stage(const std::filesystem::path& path, const Bytes& bytes) {
  staged_.emplace_back(write_temp(path, bytes), path);
}

void OutputTransaction::stage(const std::filesystem::path& path, const std::string& text) {
  stage(path, Bytes(text.begin(), text.end()));
}

void OutputTransaction::commit() {
  for (const auto& [tmp, dest] : staged_) {
    std::error_code ec;
    std::filesystem::rename(tmp, dest, ec);
    if (ec) throw DataError("cannot move output into place at " + dest.string());
  }
  staged_.clear();
}

}  // namespace dfs::io
