#pragma once

// Hop-synchronous real-time engine: steering delay lines, framing, the
// network and overlap-add bound into one causal push/pull object.
//
// Timeline: push_pull() call j consumes input samples [j*hop, (j+1)*hop) and
// returns output samples [(j-1)*hop, j*hop) of the DS-target timeline (call 0
// returns silence). flush() returns the single-coverage tail of the last
// frame. Concatenating calls 1.. and flush() reproduces enhance_offline().

#include <cstddef>
#include <span>
#include <vector>

#include "dfsnet/common.hpp"
#include "dfsnet/model.hpp"
#include "dfsnet/network.hpp"
#include "dfsnet/steering.hpp"

namespace dfs {

template <class T>
class StreamEngine {
 public:
  // params must outlive the engine; it is never modified and may be shared.
  StreamEngine(const ModelParams<T>& params, const SteeringPlan& plan);

  std::size_t channels() const { return net_.channels; }
  std::size_t hop() const { return hop_; }
  std::size_t frames_processed() const { return net_.frames_processed; }

  // input: C x hop samples, channel-major. out: hop samples.
  void push_pull(std::span<const double> input, std::span<T> out);
  void flush(std::span<T> out);
  void reset();

  void set_shared_average_reuse(bool on) { net_.reuse_shared = on; }

 private:
  const ModelParams<T>* params_;
  std::size_t hop_;
  SteeringStream steer_;
  NetworkState<T> net_;
  std::vector<double> steered_;  // hop
  std::vector<T> frames_;        // C x L sliding frames
  std::vector<T> estimate_;      // L
  std::vector<T> carry_;         // hop
  std::size_t hops_seen_ = 0;
};

// Zero-padded length both processing paths operate on:
// max(ceil(T / hop) * hop, L).
std::size_t padded_length(std::size_t length, std::size_t frame_len);

// Whole-utterance reference path: pad, steer, segment, run frames in order,
// overlap-add, trim to the input length.
template <class T>
std::vector<T> enhance_offline(const ModelParams<T>& params, const SteeringPlan& plan,
                               const MultichannelBuffer& mix);

// Drives a StreamEngine hop by hop over the padded input; same output as
// enhance_offline, bit for bit.
template <class T>
std::vector<T> enhance_streaming(const ModelParams<T>& params, const SteeringPlan& plan,
                                 const MultichannelBuffer& mix);

}  // namespace dfs
