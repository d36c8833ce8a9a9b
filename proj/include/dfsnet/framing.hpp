#pragma once

// 50%-overlap rectangular framing and coverage-normalized overlap-add.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace dfs {

// K = ceil((T - L) / (L/2)) + 1 for T > L, otherwise 1.
inline std::size_t frame_count(std::size_t signal_length, std::size_t frame_len) {
  const std::size_t hop = frame_len / 2;
  if (signal_length <= frame_len) return 1;
  return (signal_length - frame_len + hop - 1) / hop + 1;
}

template <class T>
struct FrameSequence {
  std::size_t frame_len = 0;
  std::size_t hop = 0;
  std::size_t count = 0;
  std::size_t signal_length = 0;  // true length before zero padding
  std::vector<T> data;            // count x frame_len, row-major

  std::span<T> frame(std::size_t k) { return {data.data() + k * frame_len, frame_len}; }
  std::span<const T> frame(std::size_t k) const { return {data.data() + k * frame_len, frame_len}; }
  // Padded length covered by all frames.
  std::size_t covered_length() const { return (count - 1) * hop + frame_len; }
};

inline void check_frame_len(std::size_t frame_len) {
  if (frame_len < 2 || frame_len % 2 != 0) {
    throw std::invalid_argument("frame length must be even and >= 2");
  }
}

template <class T>
FrameSequence<T> segment(std::span<const T> signal, std::size_t frame_len) {
  check_frame_len(frame_len);
  FrameSequence<T> seq;
  seq.frame_len = frame_len;
  seq.hop = frame_len / 2;
  seq.count = frame_count(signal.size(), frame_len);
  seq.signal_length = signal.size();
  seq.data.assign(seq.count * frame_len, T(0));
  for (std::size_t k = 0; k < seq.count; ++k) {
    const std::size_t start = k * seq.hop;
    auto dst = seq.frame(k);
    for (std::size_t i = 0; i < frame_len && start + i < signal.size(); ++i) {
      dst[i] = signal[start + i];
    }
  }
  return seq;
}

// Samples covered by two frames are halved; head and tail keep unit scale.
// Output is trimmed to the true signal length.
template <class T>
std::vector<T> overlap_add(const FrameSequence<T>& seq) {
  std::vector<T> out(seq.covered_length(), T(0));
  for (std::size_t k = 0; k < seq.count; ++k) {
    const auto src = seq.frame(k);
    T* dst = out.data() + k * seq.hop;
    for (std::size_t i = 0; i < seq.frame_len; ++i) dst[i] += src[i];
  }
  const std::size_t interior_end = out.size() - seq.hop;
  for (std::size_t t = seq.hop; t < interior_end; ++t) out[t] *= T(0.5);
  out.resize(seq.signal_length);
  return out;
}

// Per-sample scale applied by overlap_add (1 or 1/2), for gradient routing.
template <class T>
T overlap_scale(const FrameSequence<T>& seq, std::size_t t) {
  return (t >= seq.hop && t + seq.hop < seq.covered_length()) ? T(0.5) : T(1);
}

}  // namespace dfs
