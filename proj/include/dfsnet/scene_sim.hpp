#pragma once

// Shoebox-room simulator: image-method impulse responses, SNR-controlled
// mixing, random scene sampling and synthetic source signals.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dfsnet/common.hpp"
#include "dfsnet/steering.hpp"

namespace dfs {

inline constexpr double kMinWallDistance = 0.5;
inline constexpr int kMaxAutoReflectionOrder = 12;
inline constexpr int kImageKernelTaps = 8;

struct SceneSpec {
  Vec3 room{};  // Lx, Ly, Lz in meters
  double t60 = 0.3;
  Vec3 source{};
  std::vector<Vec3> noise_sources;
  std::vector<Vec3> mics;
  double snr_db = 5.0;
  double sample_rate = 16000.0;
  int max_order = -1;  // per axis; negative selects the automatic order
  std::uint64_t seed = 0;
  double speed = kSpeedOfSound;

  // Positive room, T60 in (0, 2), every source and mic inside the room and
  // sources at least 0.5 m from every wall.
  void validate() const;
  ScenePose pose() const;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

// Sabine with uniform walls: alpha = 0.161 V / (S T60), beta = sqrt(1 - alpha).
double t60_to_reflection_coeff(const Vec3& room, double t60);

// Smallest per-axis order whose images are 60 dB below the direct path
// (beta^n <= 1e-3), capped at kMaxAutoReflectionOrder.
int auto_reflection_order(double reflection_coeff);

struct RoomImpulseResponse {
  std::vector<double> taps;
  double sample_rate = 0.0;
  double direct_path_delay = 0.0;  // samples, distance * f / s
};

// Image sources up to max_order reflections per axis. Each image adds
// beta^reflections / (4 pi d) at delay d f / s through an 8-tap Hann-windowed
// sinc normalized to unit sum.
RoomImpulseResponse image_method_rir(const Vec3& room, const Vec3& source, const Vec3& mic,
                                     double reflection_coeff, int max_order, double sample_rate,
                                     double speed = kSpeedOfSound);

struct RenderedScene {
  MultichannelBuffer mix;
  MultichannelBuffer clean;
  MultichannelBuffer noise;

  friend bool operator==(const RenderedScene&, const RenderedScene&) = default;
};

// Convolves speech and noises with their RIRs, scales the noise to the
// requested SNR over all channels and forms mix = clean + noise. Each noise
// signal needs at least speech.size() samples; outputs have speech.size().
RenderedScene render_scene(const SceneSpec& spec, std::span<const double> speech,
                           const std::vector<std::vector<double>>& noises);

// Random room, T60, array and sources following the dataset recipe.
SceneSpec sample_random_scene(std::uint64_t seed, std::size_t channels = 4, double mic_radius = 0.15);

// Voiced harmonic source with drifting pitch and syllabic amplitude
// modulation, RMS 0.1.
std::vector<double> synthetic_speech(std::size_t length, double sample_rate, std::uint64_t seed);

// Low-passed Gaussian noise in random-length bursts, RMS 0.1.
std::vector<double> synthetic_noise(std::size_t length, double sample_rate, std::uint64_t seed);

}  // namespace dfs
