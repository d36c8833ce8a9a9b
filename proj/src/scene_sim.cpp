#include "dfsnet/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "dfsnet/kernels.hpp"

namespace dfs {

namespace {

bool inside(const Vec3& p, const Vec3& room) {
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= 0.0 && p[a] <= room[a])) return false;
  }
  return true;
}

double wall_distance(const Vec3& p, const Vec3& room) {
  double d = room[0];
  for (int a = 0; a < 3; ++a) d = std::min({d, p[a], room[a] - p[a]});
  return d;
}

void normalize_rms(std::vector<double>& x, double target) {
  double e = 0.0;
  for (double v : x) e += v * v;
  if (e <= 0.0) return;
  const double g = target / std::sqrt(e / static_cast<double>(x.size()));
  for (auto& v : x) v *= g;
}

// (image coordinate sign, lattice index, reflections) along one axis.
struct AxisImage {
  double position;
  int reflections;
};

std::vector<AxisImage> axis_images(double src, double len, int max_order) {
  std::vector<AxisImage> out;
  for (int l = -max_order; l <= max_order; ++l) {
    for (int u = 0; u <= 1; ++u) {
      const int refl = std::abs(l - u) + std::abs(l);
      if (refl > max_order) continue;
      out.push_back({(1 - 2 * u) * src + 2.0 * l * len, refl});
    }
  }
  return out;
}

// T60 at which Sabine absorption reaches 1.
double sabine_min_t60(const Vec3& room) {
  const double volume = room[0] * room[1] * room[2];
  const double surface = 2.0 * (room[0] * room[1] + room[0] * room[2] + room[1] * room[2]);
  return 0.161 * volume / surface;
}

}  // namespace

void SceneSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (!(room[a] > 0.0) || !std::isfinite(room[a])) throw std::invalid_argument("room dimensions must be positive");
  }
  if (!(t60 > 0.0 && t60 < 2.0)) throw std::invalid_argument("T60 must lie in (0, 2) s");
  if (!(sample_rate > 0.0) || !(speed > 0.0)) throw std::invalid_argument("sample rate and speed must be positive");
  if (!std::isfinite(snr_db)) throw std::invalid_argument("SNR must be finite");
  if (mics.empty()) throw std::invalid_argument("scene has no microphones");
  if (t60 <= sabine_min_t60(room)) {
    throw std::invalid_argument("T60 of " + std::to_string(t60) + " s is too short for this room (absorption >= 1)");
  }
  auto check_source = [&](const Vec3& p, const char* what) {
    if (!is_finite(p) || !inside(p, room)) throw std::invalid_argument(std::string(what) + " lies outside the room");
    if (wall_distance(p, room) < kMinWallDistance - 1e-12) {
      throw std::invalid_argument(std::string(what) + " is closer than 0.5 m to a wall");
    }
  };
  check_source(source, "speech source");
  for (const auto& n : noise_sources) check_source(n, "noise source");
  for (const auto& m : mics) {
    if (!is_finite(m) || !inside(m, room)) throw std::invalid_argument("microphone lies outside the room");
  }
}

ScenePose SceneSpec::pose() const {
  ScenePose p;
  p.source = source;
  p.mics = mics;
  p.sample_rate = sample_rate;
  p.speed = speed;
  return p;
}

double t60_to_reflection_coeff(const Vec3& room, double t60) {
  if (!(t60 > 0.0)) throw std::invalid_argument("T60 must be positive");
  const double volume = room[0] * room[1] * room[2];
  const double surface = 2.0 * (room[0] * room[1] + room[0] * room[2] + room[1] * room[2]);
  if (!(volume > 0.0)) throw std::invalid_argument("room dimensions must be positive");
  const double alpha = 0.161 * volume / (surface * t60);
  if (alpha >= 1.0) {
    throw std::invalid_argument("T60 of " + std::to_string(t60) + " s is too short for this room (absorption >= 1)");
  }
  return std::sqrt(1.0 - alpha);
}

int auto_reflection_order(double reflection_coeff) {
  if (!(reflection_coeff >= 0.0 && reflection_coeff < 1.0)) {
    throw std::invalid_argument("reflection coefficient must lie in [0, 1)");
  }
  if (reflection_coeff == 0.0) return 0;
  const double n = std::ceil(std::log(1e-3) / std::log(reflection_coeff));
  return static_cast<int>(std::min<double>(n, kMaxAutoReflectionOrder));
}

RoomImpulseResponse image_method_rir(const Vec3& room, const Vec3& source, const Vec3& mic,
                                     double reflection_coeff, int max_order, double sample_rate, double speed) {
  if (max_order < 0) throw std::invalid_argument("max_order must be >= 0");
  if (!(reflection_coeff >= 0.0 && reflection_coeff < 1.0)) {
    throw std::invalid_argument("reflection coefficient must lie in [0, 1)");
  }
  if (!(sample_rate > 0.0) || !(speed > 0.0)) throw std::invalid_argument("sample rate and speed must be positive");
  const double direct = distance(source, mic);
  if (direct < 1e-3) throw std::invalid_argument("source and microphone coincide");

  const double per_meter = sample_rate / speed;
  const int order = reflection_coeff == 0.0 ? 0 : max_order;
  const auto ix = axis_images(source[0], room[0], order);
  const auto iy = axis_images(source[1], room[1], order);
  const auto iz = axis_images(source[2], room[2], order);

  struct Arrival {
    double delay;
    double gain;
  };
  std::vector<Arrival> arrivals;
  arrivals.reserve(ix.size() * iy.size() * iz.size());
  double last = 0.0;
  for (const auto& x : ix) {
    for (const auto& y : iy) {
      for (const auto& z : iz) {
        const double d = distance({x.position, y.position, z.position}, mic);
        const int refl = x.reflections + y.reflections + z.reflections;
        const double g = std::pow(reflection_coeff, refl) / (4.0 * M_PI * d);
        if (refl > 0 && g == 0.0) continue;
        arrivals.push_back({d * per_meter, g});
        last = std::max(last, d * per_meter);
      }
    }
  }

  RoomImpulseResponse rir;
  rir.sample_rate = sample_rate;
  rir.direct_path_delay = direct * per_meter;
  rir.taps.assign(static_cast<std::size_t>(std::floor(last)) + kImageKernelTaps / 2 + 1, 0.0);
  constexpr int half = kImageKernelTaps / 2;
  double w[kImageKernelTaps];
  for (const auto& a : arrivals) {
    const auto base = static_cast<long>(std::floor(a.delay));
    double sum = 0.0;
    for (int j = 0; j < kImageKernelTaps; ++j) {
      const double t = static_cast<double>(base - half + 1 + j) - a.delay;
      const double sinc = t == 0.0 ? 1.0 : std::sin(M_PI * t) / (M_PI * t);
      w[j] = sinc * 0.5 * (1.0 + std::cos(M_PI * t / half));
      sum += w[j];
    }
    for (int j = 0; j < kImageKernelTaps; ++j) {
      const long idx = base - half + 1 + j;
      if (idx >= 0 && idx < static_cast<long>(rir.taps.size())) {
        rir.taps[static_cast<std::size_t>(idx)] += a.gain * w[j] / sum;
      }
    }
  }
  return rir;
}

RenderedScene render_scene(const SceneSpec& spec, std::span<const double> speech,
                           const std::vector<std::vector<double>>& noises) {
  spec.validate();
  const std::size_t T = speech.size();
  if (static_cast<double>(T) < spec.sample_rate) throw std::invalid_argument("speech must be at least 1 s long");
  double speech_energy = 0.0;
  for (double v : speech) speech_energy += v * v;
  if (!(speech_energy > 0.0)) throw std::invalid_argument("speech signal is silent");
  if (noises.size() != spec.noise_sources.size()) {
    throw std::invalid_argument("got " + std::to_string(noises.size()) + " noise signals for " +
                                std::to_string(spec.noise_sources.size()) + " noise sources");
  }
  for (const auto& n : noises) {
    if (n.size() < T) throw std::invalid_argument("noise signal shorter than speech");
  }

  const double beta = t60_to_reflection_coeff(spec.room, spec.t60);
  const int order = spec.max_order >= 0 ? spec.max_order : auto_reflection_order(beta);
  const std::size_t C = spec.mics.size();
  RenderedScene out{MultichannelBuffer(C, T, spec.sample_rate), MultichannelBuffer(C, T, spec.sample_rate),
                    MultichannelBuffer(C, T, spec.sample_rate)};

  double clean_energy = 0.0;
  double noise_energy = 0.0;
  std::vector<double> tmp(T);
  for (std::size_t c = 0; c < C; ++c) {
    const auto rir = image_method_rir(spec.room, spec.source, spec.mics[c], beta, order, spec.sample_rate, spec.speed);
    auto clean = out.clean.channel(c);
    kernels::convolve(speech.data(), T, rir.taps.data(), rir.taps.size(), clean.data());
    for (double v : clean) clean_energy += v * v;
    auto noise = out.noise.channel(c);
    for (std::size_t j = 0; j < noises.size(); ++j) {
      const auto nr =
          image_method_rir(spec.room, spec.noise_sources[j], spec.mics[c], beta, order, spec.sample_rate, spec.speed);
      kernels::convolve(noises[j].data(), T, nr.taps.data(), nr.taps.size(), tmp.data());
      for (std::size_t t = 0; t < T; ++t) noise[t] += tmp[t];
    }
    for (double v : noise) noise_energy += v * v;
  }

  if (noise_energy > 0.0) {
    const double gain = std::sqrt(clean_energy / (noise_energy * std::pow(10.0, spec.snr_db / 10.0)));
    for (auto& v : out.noise.data()) v *= gain;
  }
  const auto clean = out.clean.data();
  const auto noise = out.noise.data();
  auto mix = out.mix.data();
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = clean[i] + noise[i];
  return out;
}

SceneSpec sample_random_scene(std::uint64_t seed, std::size_t channels, double mic_radius) {
  if (channels == 0) throw std::invalid_argument("need at least one microphone");
  if (!(mic_radius >= 0.0)) throw std::invalid_argument("mic radius must be nonnegative");
  std::mt19937_64 rng(seed);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };

  SceneSpec s;
  s.seed = seed;
  s.room = {uni(5.0, 10.0), uni(5.0, 10.0), uni(2.0, 4.0)};
  // Sabine needs absorption below 1; short T60s are redrawn for large rooms.
  const double t60_floor = sabine_min_t60(s.room);
  do {
    s.t60 = uni(0.1, 0.5);
  } while (s.t60 <= t60_floor);
  s.snr_db = uni(-5.0, 15.0);
  const Vec3 centre{s.room[0] / 2, s.room[1] / 2, s.room[2] / 2};

  for (std::size_t c = 0; c < channels; ++c) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw std::runtime_error("could not place microphones");
      // uniform in the ball: rejection from the cube
      const Vec3 d{uni(-1.0, 1.0), uni(-1.0, 1.0), uni(-1.0, 1.0)};
      if (d[0] * d[0] + d[1] * d[1] + d[2] * d[2] > 1.0) continue;
      const Vec3 m{centre[0] + mic_radius * d[0], centre[1] + mic_radius * d[1], centre[2] + mic_radius * d[2]};
      bool ok = true;
      for (const auto& other : s.mics) ok = ok && distance(m, other) >= 0.01;
      if (!ok && mic_radius > 0.0) continue;
      s.mics.push_back(m);
      break;
    }
  }

  auto place = [&]() {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const Vec3 p{uni(kMinWallDistance, s.room[0] - kMinWallDistance),
                   uni(kMinWallDistance, s.room[1] - kMinWallDistance),
                   uni(kMinWallDistance, s.room[2] - kMinWallDistance)};
      bool ok = true;
      for (const auto& m : s.mics) ok = ok && distance(p, m) >= kMinWallDistance;
      if (ok) return p;
    }
    throw std::runtime_error("could not place a source");
  };
  s.source = place();
  const int noises = std::uniform_int_distribution<int>(1, 4)(rng);
  for (int j = 0; j < noises; ++j) s.noise_sources.push_back(place());
  return s;
}

std::vector<double> synthetic_speech(std::size_t length, double sample_rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  const double f0 = uni(90.0, 240.0);
  const double vibrato = uni(0.3, 1.5);
  const double syllable_rate = uni(3.0, 6.0);
  const double ph0 = uni(0.0, 2.0 * M_PI);
  const double ph1 = uni(0.0, 2.0 * M_PI);
  const int harmonics = static_cast<int>(std::floor(0.45 * sample_rate / (1.15 * f0)));
  std::vector<double> amp(static_cast<std::size_t>(std::max(harmonics, 1)));
  for (std::size_t k = 0; k < amp.size(); ++k) amp[k] = uni(0.5, 1.0) / static_cast<double>(k + 1);

  std::vector<double> x(length);
  double phase = 0.0;
  for (std::size_t t = 0; t < length; ++t) {
    const double ts = static_cast<double>(t) / sample_rate;
    const double f = f0 * (1.0 + 0.12 * std::sin(2.0 * M_PI * vibrato * ts + ph0));
    phase += 2.0 * M_PI * f / sample_rate;
    if (phase > 2.0 * M_PI) phase -= 2.0 * M_PI;
    double v = 0.0;
    for (std::size_t k = 0; k < amp.size(); ++k) v += amp[k] * std::sin(static_cast<double>(k + 1) * phase);
    const double env = 0.5 * (1.0 - std::cos(2.0 * M_PI * syllable_rate * ts + ph1));
    x[t] = v * env * env;
  }
  normalize_rms(x, 0.1);
  return x;
}

std::vector<double> synthetic_noise(std::size_t length, double sample_rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double cutoff = 1000.0 + 5000.0 * u(rng);
  const double a = std::exp(-2.0 * M_PI * cutoff / sample_rate);
  std::vector<double> x(length);
  double state = 0.0;
  double level = 0.2 + 0.8 * u(rng);
  std::size_t next_burst = 0;
  for (std::size_t t = 0; t < length; ++t) {
    if (t == next_burst) {
      level = 0.2 + 0.8 * u(rng);
      next_burst = t + static_cast<std::size_t>((0.1 + 0.4 * u(rng)) * sample_rate) + 1;
    }
    state = a * state + (1.0 - a) * g(rng);
    x[t] = level * state;
  }
  normalize_rms(x, 0.1);
  return x;
}

}  // namespace dfs
