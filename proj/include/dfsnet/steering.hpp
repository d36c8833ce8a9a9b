#pragma once

// Geometry-driven channel alignment: TDOAs from positions, integer plus
// windowed-sinc fractional delay filters, delay-and-sum and the DS target.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dfsnet/common.hpp"

namespace dfs {

inline constexpr double kSpeedOfSound = 343.0;
inline constexpr int kReferenceFirTaps = 17;

struct ScenePose {
  Vec3 source{};
  std::vector<Vec3> mics;
  double sample_rate = 16000.0;
  double speed = kSpeedOfSound;

  std::size_t channels() const { return mics.size(); }
  void validate() const;
  ScenePose permuted(std::span<const std::size_t> perm) const;
};

// Permutation that moves the microphone farthest from the source to the front;
// the remaining channels keep their relative order. Ties go to the lowest index.
std::vector<std::size_t> choose_reference(const ScenePose& scene);

// TDOA in samples of channel i (i = 1..C-1) relative to channel 0, which must
// already be the farthest microphone. Size C-1.
std::vector<double> compute_tdoa(const ScenePose& scene);

// Windowed-sinc fractional delay of taps/2 + frac samples. The Blackman window
// spans taps + 1 samples centered on the delay; taps are normalized to unit sum.
std::vector<double> design_fractional_filter(double frac, int taps);

// Channel 0 is the reference: it is only delayed by ref_comp_delay. Channel
// i >= 1 is delayed by int_delays[i] samples and then filtered by frac_taps[i].
// Entries at index 0 are int_delay 0, frac 0 and an empty tap vector.
struct SteeringPlan {
  std::vector<int> int_delays;
  std::vector<double> frac_delays;
  std::vector<std::vector<double>> frac_taps;
  int ref_comp_delay = 0;
  int taps = 0;

  std::size_t channels() const { return int_delays.size(); }
  // Largest total delay any channel sees, in whole samples.
  int max_delay() const;

  friend bool operator==(const SteeringPlan&, const SteeringPlan&) = default;
};

// tdoas has C-1 entries; negative values are rejected.
SteeringPlan build_steering_plan(std::span<const double> tdoas, int taps);

// Steers one channel of a plan over a whole signal (zero history, same length).
void steer_channel(const SteeringPlan& plan, std::size_t c, std::span<const double> in,
                   std::span<double> out);

MultichannelBuffer apply_steering(const SteeringPlan& plan, const MultichannelBuffer& input);

std::vector<double> delay_and_sum(const MultichannelBuffer& aligned);

// x_DS: the clean per-channel components steered with the plan, then averaged.
std::vector<double> make_target(const SteeringPlan& plan, const MultichannelBuffer& clean);

// Rotates the apparent source about the array centroid by independent azimuth
// and elevation errors drawn from U[0, max_angle_deg] with random sign, then
// recomputes the TDOAs (clamped at zero) for the scene's channel order.
std::vector<double> perturb_tdoa(const ScenePose& scene, double max_angle_deg, std::uint64_t seed);

// Incremental form of steer_channel for all channels of a plan. process()
// produces output bit-identical to apply_steering on the concatenated input.
class SteeringStream {
 public:
  SteeringStream() = default;
  explicit SteeringStream(const SteeringPlan& plan);

  std::size_t channels() const { return lines_.size(); }
  // Consumes n samples of channel c and writes n steered samples.
  void process(std::size_t c, const double* in, double* out, std::size_t n);
  void reset();

 private:
  struct Line {
    int delay = 0;
    std::vector<double> taps;  // empty: pure delay
    std::vector<double> history;
    std::size_t pos = 0;
  };
  std::vector<Line> lines_;
};

}  // namespace dfs
