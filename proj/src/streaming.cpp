#include "dfsnet/streaming.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "dfsnet/framing.hpp"

namespace dfs {

template <class T>
StreamEngine<T>::StreamEngine(const ModelParams<T>& params, const SteeringPlan& plan)
    : params_(&params),
      hop_(static_cast<std::size_t>(params.config.hop())),
      steer_(plan),
      net_(params.config, plan.channels()) {
  const auto L = static_cast<std::size_t>(params.config.frame_len);
  steered_.assign(hop_, 0.0);
  frames_.assign(plan.channels() * L, T(0));
  estimate_.assign(L, T(0));
  carry_.assign(hop_, T(0));
}

template <class T>
void StreamEngine<T>::push_pull(std::span<const double> input, std::span<T> out) {
  const std::size_t C = net_.channels;
  const std::size_t L = 2 * hop_;
  if (input.size() != C * hop_) {
    throw std::invalid_argument("push_pull expects " + std::to_string(C) + " x " +
                                std::to_string(hop_) + " samples");
  }
  if (out.size() != hop_) throw std::invalid_argument("push_pull output must hold one hop");

  for (std::size_t c = 0; c < C; ++c) {
    steer_.process(c, input.data() + c * hop_, steered_.data(), hop_);
    T* frame = frames_.data() + c * L;
    std::copy(frame + hop_, frame + L, frame);
    for (std::size_t i = 0; i < hop_; ++i) frame[hop_ + i] = static_cast<T>(steered_[i]);
  }

  if (hops_seen_++ == 0) {
    std::fill(out.begin(), out.end(), T(0));
    return;
  }
  const bool first_frame = net_.frames_processed == 0;
  forward_frame<T>(*params_, net_, frames_, estimate_);
  for (std::size_t i = 0; i < hop_; ++i) {
    T acc = T(0);
    if (first_frame) {
      acc += estimate_[i];
      out[i] = acc;
    } else {
      acc += carry_[i];
      acc += estimate_[i];
      out[i] = acc * T(0.5);
    }
    carry_[i] = estimate_[hop_ + i];
  }
}

template <class T>
void StreamEngine<T>::flush(std::span<T> out) {
  if (out.size() != hop_) throw std::invalid_argument("flush output must hold one hop");
  for (std::size_t i = 0; i < hop_; ++i) {
    T acc = T(0);
    acc += carry_[i];
    out[i] = acc;
  }
}

template <class T>
void StreamEngine<T>::reset() {
  steer_.reset();
  net_.reset();
  std::fill(frames_.begin(), frames_.end(), T(0));
  std::fill(estimate_.begin(), estimate_.end(), T(0));
  std::fill(carry_.begin(), carry_.end(), T(0));
  hops_seen_ = 0;
}

std::size_t padded_length(std::size_t length, std::size_t frame_len) {
  const std::size_t hop = frame_len / 2;
  const std::size_t hops = (length + hop - 1) / hop;
  return std::max(hops * hop, frame_len);
}

namespace {

MultichannelBuffer zero_pad(const MultichannelBuffer& in, std::size_t length) {
  MultichannelBuffer out(in.channels(), length, in.sample_rate());
  for (std::size_t c = 0; c < in.channels(); ++c) {
    const auto src = in.channel(c);
    std::copy(src.begin(), src.end(), out.channel(c).begin());
  }
  return out;
}

void check_inputs(const ModelConfig& cfg, const SteeringPlan& plan, const MultichannelBuffer& mix) {
  if (plan.channels() != mix.channels()) {
    throw std::invalid_argument("steering plan has " + std::to_string(plan.channels()) +
                                " channels, input has " + std::to_string(mix.channels()));
  }
  if (mix.channels() == 0) throw std::invalid_argument("input has no channels");
  if (cfg.frame_len < 2) throw std::invalid_argument("invalid frame length");
}

}  // namespace

template <class T>
std::vector<T> enhance_offline(const ModelParams<T>& params, const SteeringPlan& plan,
                               const MultichannelBuffer& mix) {
  check_inputs(params.config, plan, mix);
  const auto L = static_cast<std::size_t>(params.config.frame_len);
  const std::size_t C = mix.channels();
  const auto aligned = apply_steering(plan, zero_pad(mix, padded_length(mix.length(), L)));

  std::vector<FrameSequence<T>> per_channel;
  per_channel.reserve(C);
  for (std::size_t c = 0; c < C; ++c) {
    const auto ch = aligned.channel(c);
    std::vector<T> cast(ch.size());
    std::transform(ch.begin(), ch.end(), cast.begin(), [](double v) { return static_cast<T>(v); });
    per_channel.push_back(segment<T>(cast, L));
  }

  FrameSequence<T> estimate = per_channel[0];
  NetworkState<T> state(params.config, C);
  std::vector<T> stacked(C * L);
  for (std::size_t k = 0; k < estimate.count; ++k) {
    for (std::size_t c = 0; c < C; ++c) {
      const auto f = per_channel[c].frame(k);
      std::copy(f.begin(), f.end(), stacked.begin() + static_cast<std::ptrdiff_t>(c * L));
    }
    forward_frame<T>(params, state, stacked, estimate.frame(k));
  }
  auto out = overlap_add(estimate);
  out.resize(mix.length());
  return out;
}

template <class T>
std::vector<T> enhance_streaming(const ModelParams<T>& params, const SteeringPlan& plan,
                                 const MultichannelBuffer& mix) {
  check_inputs(params.config, plan, mix);
  const auto L = static_cast<std::size_t>(params.config.frame_len);
  const std::size_t C = mix.channels();
  const auto padded = zero_pad(mix, padded_length(mix.length(), L));

  StreamEngine<T> engine(params, plan);
  const std::size_t hop = engine.hop();
  const std::size_t hops = padded.length() / hop;
  std::vector<double> in(C * hop);
  std::vector<T> out;
  out.reserve(padded.length());
  std::vector<T> block(hop);
  for (std::size_t j = 0; j < hops; ++j) {
    for (std::size_t c = 0; c < C; ++c) {
      const auto ch = padded.channel(c);
      std::copy(ch.begin() + static_cast<std::ptrdiff_t>(j * hop),
                ch.begin() + static_cast<std::ptrdiff_t>((j + 1) * hop),
                in.begin() + static_cast<std::ptrdiff_t>(c * hop));
    }
    engine.push_pull(in, block);
    if (j > 0) out.insert(out.end(), block.begin(), block.end());
  }
  engine.flush(block);
  out.insert(out.end(), block.begin(), block.end());
  out.resize(mix.length());
  return out;
}

template class StreamEngine<float>;
template class StreamEngine<double>;
template std::vector<float> enhance_offline(const ModelParams<float>&, const SteeringPlan&,
                                            const MultichannelBuffer&);
template std::vector<double> enhance_offline(const ModelParams<double>&, const SteeringPlan&,
                                             const MultichannelBuffer&);
template std::vector<float> enhance_streaming(const ModelParams<float>&, const SteeringPlan&,
                                              const MultichannelBuffer&);
template std::vector<double> enhance_streaming(const ModelParams<double>&, const SteeringPlan&,
                                               const MultichannelBuffer&);

}  // namespace dfs
