#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfs {

using Vec3 = std::array<double, 3>;

inline double distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline bool is_finite(const Vec3& v) {
  return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}

// Raised for malformed or inconsistent input data (files, metadata, signals).
// Precondition violations on library calls use std::invalid_argument.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// C x T sample matrix, channel-major.
class MultichannelBuffer {
 public:
  MultichannelBuffer() = default;
  MultichannelBuffer(std::size_t channels, std::size_t length, double sample_rate)
      : channels_(channels), length_(length), sample_rate_(sample_rate),
        samples_(channels * length, 0.0) {}

  std::size_t channels() const { return channels_; }
  std::size_t length() const { return length_; }
  double sample_rate() const { return sample_rate_; }

  std::span<double> channel(std::size_t c) {
    return {samples_.data() + c * length_, length_};
  }
  std::span<const double> channel(std::size_t c) const {
    return {samples_.data() + c * length_, length_};
  }

  double& at(std::size_t c, std::size_t t) { return samples_[c * length_ + t]; }
  double at(std::size_t c, std::size_t t) const { return samples_[c * length_ + t]; }

  std::span<double> data() { return samples_; }
  std::span<const double> data() const { return samples_; }

  bool all_finite() const {
    for (double v : samples_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  // Channel c of the result is channel perm[c] of this buffer.
  MultichannelBuffer permuted(std::span<const std::size_t> perm) const;

  friend bool operator==(const MultichannelBuffer&, const MultichannelBuffer&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t length_ = 0;
  double sample_rate_ = 0.0;
  std::vector<double> samples_;
};

inline MultichannelBuffer MultichannelBuffer::permuted(std::span<const std::size_t> perm) const {
  if (perm.size() != channels_) {
    throw std::invalid_argument("permutation size does not match channel count");
  }
  MultichannelBuffer out(channels_, length_, sample_rate_);
  for (std::size_t c = 0; c < channels_; ++c) {
    if (perm[c] >= channels_) throw std::invalid_argument("permutation index out of range");
    const auto src = channel(perm[c]);
    std::copy(src.begin(), src.end(), out.channel(c).begin());
  }
  return out;
}

}  // namespace dfs
