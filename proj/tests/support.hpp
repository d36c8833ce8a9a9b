#pragma once

// Shared fixtures for the unit tests.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dfsnet/common.hpp"
#include "dfsnet/model.hpp"
#include "dfsnet/steering.hpp"

namespace dfs::test {

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

inline MultichannelBuffer random_buffer(std::size_t channels, std::size_t length, std::uint64_t seed,
                                        double scale = 0.3) {
  MultichannelBuffer b(channels, length, 16000.0);
  const auto v = random_vector(channels * length, seed, scale);
  std::copy(v.begin(), v.end(), b.data().begin());
  return b;
}

// Small circular array around (3, 2.5, 1.5) and a source a few meters away.
inline ScenePose circular_pose(std::size_t channels, double radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScenePose pose;
  const Vec3 centre{3.0, 2.5, 1.5};
  const double offset = 2.0 * M_PI * u(rng);
  for (std::size_t c = 0; c < channels; ++c) {
    const double a = offset + 2.0 * M_PI * static_cast<double>(c) / static_cast<double>(channels);
    pose.mics.push_back({centre[0] + radius * std::cos(a), centre[1] + radius * std::sin(a), centre[2]});
  }
  const double az = 2.0 * M_PI * u(rng);
  const double dist = 1.5 + 1.5 * u(rng);
  pose.source = {centre[0] + dist * std::cos(az), centre[1] + dist * std::sin(az), 1.2 + 0.6 * u(rng)};
  return pose;
}

inline SteeringPlan plan_for(const ScenePose& pose, int taps = kReferenceFirTaps) {
  return build_steering_plan(compute_tdoa(pose), taps);
}

// Random plan for a random pose, with the pose's channels already reordered
// so that channel 0 is the farthest microphone.
inline SteeringPlan random_plan(std::size_t channels, std::uint64_t seed, int taps = kReferenceFirTaps) {
  if (channels == 1) return build_steering_plan(std::vector<double>{}, taps);
  auto pose = circular_pose(channels, 0.08, seed);
  pose = pose.permuted(choose_reference(pose));
  return plan_for(pose, taps);
}

// Small random-valued parameters: non-zero biases and slopes so every path
// carries gradient.
inline ModelParams<double> random_params(const ModelConfig& cfg, std::uint64_t seed, double scale = 0.3) {
  auto p = init_params(cfg, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> g(0.0, scale);
  p.visit([&](const std::string& name, Tensor<double>& t) {
    const bool bias = name.find("b_") != std::string::npos || name.find("bias") != std::string::npos ||
                      name.find("beta") != std::string::npos;
    if (bias || name.find("prelu") != std::string::npos || name.find("gamma") != std::string::npos) {
      for (auto& v : t.data) v += g(rng);
    }
  });
  return p;
}

}  // namespace dfs::test
