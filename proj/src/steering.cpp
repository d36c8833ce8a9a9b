#include "dfsnet/steering.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace dfs {

void ScenePose::validate() const {
  if (mics.empty()) throw std::invalid_argument("scene has no microphones");
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
    throw std::invalid_argument("sample rate must be positive");
  }
  if (!(speed > 0.0) || !std::isfinite(speed)) {
    throw std::invalid_argument("propagation speed must be positive");
  }
  if (!is_finite(source)) throw std::invalid_argument("source position is not finite");
  for (const auto& m : mics) {
    if (!is_finite(m)) throw std::invalid_argument("microphone position is not finite");
  }
}

ScenePose ScenePose::permuted(std::span<const std::size_t> perm) const {
  if (perm.size() != mics.size()) {
    throw std::invalid_argument("permutation size does not match microphone count");
  }
  ScenePose out = *this;
  for (std::size_t c = 0; c < perm.size(); ++c) out.mics[c] = mics.at(perm[c]);
  return out;
}

std::vector<std::size_t> choose_reference(const ScenePose& scene) {
  scene.validate();
  std::size_t far = 0;
  double far_dist = distance(scene.source, scene.mics[0]);
  for (std::size_t c = 1; c < scene.mics.size(); ++c) {
    const double d = distance(scene.source, scene.mics[c]);
    if (d > far_dist) {
      far = c;
      far_dist = d;
    }
  }
  std::vector<std::size_t> perm;
  perm.reserve(scene.mics.size());
  perm.push_back(far);
  for (std::size_t c = 0; c < scene.mics.size(); ++c) {
    if (c != far) perm.push_back(c);
  }
  return perm;
}

namespace {

std::vector<double> tdoa_for_source(const ScenePose& scene, const Vec3& source) {
  const double scale = scene.sample_rate / scene.speed;
  const double d_ref = distance(source, scene.mics[0]);
  std::vector<double> tdoa(scene.mics.size() - 1);
  for (std::size_t i = 1; i < scene.mics.size(); ++i) {
    tdoa[i - 1] = scale * (d_ref - distance(source, scene.mics[i]));
  }
  return tdoa;
}

}  // namespace

std::vector<double> compute_tdoa(const ScenePose& scene) {
  scene.validate();
  if (scene.mics.size() < 2) throw std::invalid_argument("TDOA needs at least two microphones");
  for (const auto& m : scene.mics) {
    if (distance(scene.source, m) < 1e-3) {
      throw std::invalid_argument("source coincides with a microphone");
    }
  }
  auto tdoa = tdoa_for_source(scene, scene.source);
  for (double t : tdoa) {
    if (t < 0.0) {
      throw std::invalid_argument("channel 0 is not the farthest microphone; call choose_reference");
    }
  }
  return tdoa;
}

std::vector<double> design_fractional_filter(double frac, int taps) {
  if (taps < 3 || taps % 2 == 0) throw std::invalid_argument("fractional filter length must be odd and >= 3");
  if (!(frac >= 0.0 && frac < 1.0)) throw std::invalid_argument("fractional delay must be in [0, 1)");
  const int center = (taps - 1) / 2;
  std::vector<double> h(static_cast<std::size_t>(taps), 0.0);
  if (frac == 0.0) {
    h[static_cast<std::size_t>(center)] = 1.0;
    return h;
  }
  const double span = static_cast<double>(taps + 1);
  const double pi = std::numbers::pi;
  double sum = 0.0;
  for (int n = 0; n < taps; ++n) {
    const double x = static_cast<double>(n - center) - frac;
    const double sinc = std::sin(pi * x) / (pi * x);
    const double u = x / span;
    const double w = 0.42 + 0.5 * std::cos(2.0 * pi * u) + 0.08 * std::cos(4.0 * pi * u);
    h[static_cast<std::size_t>(n)] = sinc * w;
    sum += h[static_cast<std::size_t>(n)];
  }
  for (double& v : h) v /= sum;
  return h;
}

int SteeringPlan::max_delay() const {
  int m = ref_comp_delay;
  for (std::size_t c = 1; c < int_delays.size(); ++c) {
    m = std::max(m, int_delays[c] + taps - 1);
  }
  return m;
}

SteeringPlan build_steering_plan(std::span<const double> tdoas, int taps) {
  if (taps < 3 || taps % 2 == 0) throw std::invalid_argument("filter length must be odd and >= 3");
  SteeringPlan plan;
  plan.taps = taps;
  plan.ref_comp_delay = (taps - 1) / 2;
  plan.int_delays.push_back(0);
  plan.frac_delays.push_back(0.0);
  plan.frac_taps.emplace_back();
  for (double tau : tdoas) {
    if (!std::isfinite(tau) || tau < 0.0) {
      throw std::invalid_argument("TDOA estimates must be finite and nonnegative");
    }
    const double whole = std::floor(tau);
    const double frac = tau - whole;
    plan.int_delays.push_back(static_cast<int>(whole));
    plan.frac_delays.push_back(frac);
    plan.frac_taps.push_back(design_fractional_filter(frac, taps));
  }
  return plan;
}

void steer_channel(const SteeringPlan& plan, std::size_t c, std::span<const double> in,
                   std::span<double> out) {
  if (c >= plan.channels()) throw std::invalid_argument("channel index outside steering plan");
  if (in.size() != out.size()) throw std::invalid_argument("steering input/output length mismatch");
  const std::size_t n = in.size();
  if (c == 0) {
    const auto d = static_cast<std::size_t>(plan.ref_comp_delay);
    for (std::size_t t = 0; t < n; ++t) out[t] = t >= d ? in[t - d] : 0.0;
    return;
  }
  const auto& h = plan.frac_taps[c];
  const auto d = static_cast<std::size_t>(plan.int_delays[c]);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k) {
      const std::size_t lag = d + k;
      acc += h[k] * (t >= lag ? in[t - lag] : 0.0);
    }
    out[t] = acc;
  }
}

MultichannelBuffer apply_steering(const SteeringPlan& plan, const MultichannelBuffer& input) {
  if (plan.channels() != input.channels()) {
    throw std::invalid_argument("steering plan has " + std::to_string(plan.channels()) +
                                " channels, input has " + std::to_string(input.channels()));
  }
  MultichannelBuffer out(input.channels(), input.length(), input.sample_rate());
  for (std::size_t c = 0; c < input.channels(); ++c) {
    steer_channel(plan, c, input.channel(c), out.channel(c));
  }
  return out;
}

std::vector<double> delay_and_sum(const MultichannelBuffer& aligned) {
  if (aligned.channels() == 0) throw std::invalid_argument("delay-and-sum needs at least one channel");
  std::vector<double> out(aligned.length(), 0.0);
  for (std::size_t c = 0; c < aligned.channels(); ++c) {
    const auto ch = aligned.channel(c);
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += ch[t];
  }
  const double inv = 1.0 / static_cast<double>(aligned.channels());
  for (double& v : out) v *= inv;
  return out;
}

std::vector<double> make_target(const SteeringPlan& plan, const MultichannelBuffer& clean) {
  return delay_and_sum(apply_steering(plan, clean));
}

std::vector<double> perturb_tdoa(const ScenePose& scene, double max_angle_deg, std::uint64_t seed) {
  if (!(max_angle_deg >= 0.0)) throw std::invalid_argument("perturbation angle must be >= 0");
  if (max_angle_deg == 0.0) return compute_tdoa(scene);
  scene.validate();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(0.0, max_angle_deg);
  std::bernoulli_distribution sign(0.5);
  const double deg = std::numbers::pi / 180.0;
  const double d_az = (sign(rng) ? 1.0 : -1.0) * mag(rng) * deg;
  const double d_el = (sign(rng) ? 1.0 : -1.0) * mag(rng) * deg;

  Vec3 centroid{0.0, 0.0, 0.0};
  for (const auto& m : scene.mics) {
    for (int k = 0; k < 3; ++k) centroid[k] += m[k];
  }
  for (double& v : centroid) v /= static_cast<double>(scene.mics.size());

  const Vec3 rel{scene.source[0] - centroid[0], scene.source[1] - centroid[1],
                 scene.source[2] - centroid[2]};
  const double r = std::sqrt(rel[0] * rel[0] + rel[1] * rel[1] + rel[2] * rel[2]);
  if (r < 1e-3) throw std::invalid_argument("source coincides with the array centroid");
  const double az = std::atan2(rel[1], rel[0]) + d_az;
  const double el = std::asin(std::clamp(rel[2] / r, -1.0, 1.0)) + d_el;
  const Vec3 apparent{centroid[0] + r * std::cos(el) * std::cos(az),
                      centroid[1] + r * std::cos(el) * std::sin(az), centroid[2] + r * std::sin(el)};

  auto tdoa = tdoa_for_source(scene, apparent);
  for (double& t : tdoa) t = std::max(t, 0.0);
  return tdoa;
}

SteeringStream::SteeringStream(const SteeringPlan& plan) {
  lines_.resize(plan.channels());
  for (std::size_t c = 0; c < plan.channels(); ++c) {
    Line& line = lines_[c];
    if (c == 0) {
      line.delay = plan.ref_comp_delay;
      line.history.assign(static_cast<std::size_t>(line.delay) + 1, 0.0);
    } else {
      line.delay = plan.int_delays[c];
      line.taps = plan.frac_taps[c];
      line.history.assign(static_cast<std::size_t>(line.delay) + line.taps.size(), 0.0);
    }
  }
}

void SteeringStream::process(std::size_t c, const double* in, double* out, std::size_t n) {
  Line& line = lines_.at(c);
  const std::size_t cap = line.history.size();
  const auto d = static_cast<std::size_t>(line.delay);
  for (std::size_t i = 0; i < n; ++i) {
    line.pos = line.pos + 1 == cap ? 0 : line.pos + 1;
    line.history[line.pos] = in[i];
    if (line.taps.empty()) {
      out[i] = line.history[(line.pos + cap - d) % cap];
      continue;
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < line.taps.size(); ++k) {
      acc += line.taps[k] * line.history[(line.pos + cap - d - k) % cap];
    }
    out[i] = acc;
  }
}

void SteeringStream::reset() {
  for (auto& line : lines_) {
    std::fill(line.history.begin(), line.history.end(), 0.0);
    line.pos = 0;
  }
}

}  // namespace dfs
