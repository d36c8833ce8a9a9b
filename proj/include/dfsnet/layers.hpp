#pragma once

// Per-frame network primitives. Each function works on one frame; stateful
// pieces (normalization windows, recurrent hidden vectors) are passed in
// explicitly and belong to exactly one channel of one stream.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "dfsnet/kernels.hpp"
#include "dfsnet/model.hpp"

namespace dfs {

inline constexpr double kNormEps = 1e-5;

// Sliding-window statistics over the last min(k, R) frames, kept as two ring
// buffers of per-frame sums and squared sums plus running totals. The totals
// are recomputed from the rings every time the write head wraps, which keeps
// the add/subtract drift bounded without changing the O(1) cost per frame.
class NormState {
 public:
  struct Stats {
    double mean = 0.0;
    double var = 0.0;      // after clamping at zero
    double inv_std = 0.0;  // 1 / sqrt(var + eps)
    bool clamped = false;  // raw variance estimate was negative
    std::size_t window = 0;
  };

  explicit NormState(int window = 1)
      : sums_(static_cast<std::size_t>(std::max(window, 1)), 0.0),
        sqsums_(sums_.size(), 0.0) {}

  std::size_t capacity() const { return sums_.size(); }
  std::size_t frames_seen() const { return count_; }

  template <class T>
  Stats push(std::span<const T> x, double eps = kNormEps) {
    double s = 0.0;
    double q = 0.0;
    for (T v : x) {
      const double d = static_cast<double>(v);
      s += d;
      q += d * d;
    }
    if (count_ >= sums_.size()) {
      total_ -= sums_[head_];
      total_sq_ -= sqsums_[head_];
    }
    sums_[head_] = s;
    sqsums_[head_] = q;
    total_ += s;
    total_sq_ += q;
    ++count_;
    if (++head_ == sums_.size()) {
      head_ = 0;
      total_ = 0.0;
      total_sq_ = 0.0;
      for (std::size_t i = 0; i < sums_.size(); ++i) {
        total_ += sums_[i];
        total_sq_ += sqsums_[i];
      }
    }
    Stats st;
    st.window = std::min(count_, sums_.size());
    const double n = static_cast<double>(x.size()) * static_cast<double>(st.window);
    st.mean = total_ / n;
    const double raw = total_sq_ / n - st.mean * st.mean;
    st.clamped = raw < 0.0;
    st.var = st.clamped ? 0.0 : raw;
    st.inv_std = 1.0 / std::sqrt(st.var + eps);
    return st;
  }

  void reset() {
    std::fill(sums_.begin(), sums_.end(), 0.0);
    std::fill(sqsums_.begin(), sqsums_.end(), 0.0);
    total_ = total_sq_ = 0.0;
    count_ = head_ = 0;
  }

 private:
  std::vector<double> sums_;
  std::vector<double> sqsums_;
  double total_ = 0.0;
  double total_sq_ = 0.0;
  std::size_t count_ = 0;
  std::size_t head_ = 0;
};

// Sliding-window layer normalization of one frame; updates the window.
template <class T>
NormState::Stats sln_step(std::span<const T> x, NormState& state, std::span<const T> gamma,
                          std::span<const T> beta, std::span<T> out, double eps = kNormEps) {
  const auto st = state.push(x, eps);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const T xhat = static_cast<T>((static_cast<double>(x[n]) - st.mean) * st.inv_std);
    out[n] = xhat * gamma[n] + beta[n];
  }
  return st;
}

// z = y B_e (+ b). y has L samples, z has N entries.
template <class T>
void encode(const ModelParams<T>& params, std::span<const T> frame, std::span<T> latent) {
  const auto L = static_cast<std::size_t>(params.config.frame_len);
  const auto N = static_cast<std::size_t>(params.config.latent_dim);
  if (frame.size() != L || latent.size() != N) throw std::invalid_argument("encode: size mismatch");
  if (params.encoder_bias.empty()) {
    std::fill(latent.begin(), latent.end(), T(0));
  } else {
    std::copy(params.encoder_bias.data.begin(), params.encoder_bias.data.end(), latent.begin());
  }
  kernels::gemv_t(params.encoder.ptr(), L, N, N, frame.data(), latent.data());
}

template <class T>
void prelu(std::span<const T> x, std::span<const T> slopes, std::span<T> out) {
  for (std::size_t n = 0; n < x.size(); ++n) out[n] = x[n] > T(0) ? x[n] : slopes[n] * x[n];
}

// Sum of vals[0], vals[stride], ... (count terms) in ascending value order,
// so any reordering of the channels gives the same bits. Up to 64 terms are
// sorted on the stack.
template <class T>
T symmetric_sum(const T* vals, std::size_t count, std::size_t stride) {
  constexpr std::size_t kStack = 64;
  T stack[kStack];
  std::vector<T> heap;
  T* buf = stack;
  if (count > kStack) {
    heap.resize(count);
    buf = heap.data();
  }
  for (std::size_t c = 0; c < count; ++c) buf[c] = vals[c * stride];
  if (count > 2) std::sort(buf, buf + count);
  T acc = T(0);
  for (std::size_t c = 0; c < count; ++c) acc += buf[c];
  return acc;
}

// Mean over channels of a C x N row-major block; invariant to channel order.
template <class T>
void channel_average(std::span<const T> features, std::size_t channels, std::span<T> out) {
  if (channels == 0) throw std::invalid_argument("channel_average: no channels");
  const std::size_t n = out.size();
  if (features.size() != channels * n) throw std::invalid_argument("channel_average: size mismatch");
  const T inv = T(1) / static_cast<T>(channels);
  for (std::size_t i = 0; i < n; ++i) out[i] = symmetric_sum(features.data() + i, channels, n) * inv;
}

template <class T>
inline T logistic(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// Logistic sigmoid kept strictly inside (0, 1) after floating-point saturation.
template <class T>
void mask_head(std::span<const T> x, std::span<T> out) {
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(logistic(x[i]), lo, hi);
}

// ((1/C) sum_c m_c * z_c) B_d; scratch holds N values.
template <class T>
void decode_and_sum(const ModelParams<T>& params, std::span<const T> masks, std::span<const T> latents,
                    std::size_t channels, std::span<T> scratch, std::span<T> frame) {
  const auto N = static_cast<std::size_t>(params.config.latent_dim);
  const auto L = static_cast<std::size_t>(params.config.frame_len);
  if (masks.size() != channels * N || latents.size() != channels * N) {
    throw std::invalid_argument("decode_and_sum: mask/latent channel mismatch");
  }
  if (channels == 0) throw std::invalid_argument("decode_and_sum: no channels");
  const T inv = T(1) / static_cast<T>(channels);
  constexpr std::size_t kStack = 64;
  T prod[kStack];
  for (std::size_t n = 0; n < N; ++n) {
    if (channels <= kStack) {
      for (std::size_t c = 0; c < channels; ++c) prod[c] = masks[c * N + n] * latents[c * N + n];
      scratch[n] = symmetric_sum(prod, channels, 1) * inv;
    } else {
      std::vector<T> big(channels);
      for (std::size_t c = 0; c < channels; ++c) big[c] = masks[c * N + n] * latents[c * N + n];
      scratch[n] = symmetric_sum(big.data(), channels, 1) * inv;
    }
  }
  std::fill(frame.begin(), frame.end(), T(0));
  kernels::gemv_t(params.decoder.ptr(), N, L, L, scratch.data(), frame.data());
}

// Input-matrix product of the averaged band: out = W_ih[:, band:2 band] avg_band.
template <class T>
void shared_projection(const GruCellParams<T>& cell, std::size_t band, std::size_t hidden,
                       const T* avg_band, T* out) {
  const std::size_t in = 2 * band;
  std::fill(out, out + 3 * hidden, T(0));
  kernels::gemv(cell.w_ih.ptr() + band, 3 * hidden, band, in, avg_band, out);
}

// One gated recurrent update (reset-before-candidate form):
//   r = s(Wx_r + b_ir + Uh_r + b_hr), u = s(Wx_u + b_iu + Uh_u + b_hu)
//   n = tanh(Wx_n + b_in + r (Uh_n + b_hn)),  h' = (1 - u) n + u h
// avg_proj is the precomputed averaged-band product or nullptr. On return gx
// holds r, u, n and gh holds the hidden-path pre-activations.
template <class T>
void gru_cell_step(const GruCellParams<T>& cell, std::size_t band, std::size_t hidden,
                   const T* local, const T* avg_proj, const T* h_prev, T* h_new, T* gx, T* gh) {
  const std::size_t rows = 3 * hidden;
  const std::size_t in = cell.w_ih.shape[1];
  std::copy(cell.b_ih.data.begin(), cell.b_ih.data.end(), gx);
  kernels::gemv(cell.w_ih.ptr(), rows, band, in, local, gx);
  if (avg_proj != nullptr) {
    for (std::size_t i = 0; i < rows; ++i) gx[i] += avg_proj[i];
  }
  std::copy(cell.b_hh.data.begin(), cell.b_hh.data.end(), gh);
  kernels::gemv(cell.w_hh.ptr(), rows, hidden, hidden, h_prev, gh);
  T* r = gx;
  T* u = gx + hidden;
  T* n = gx + 2 * hidden;
  for (std::size_t i = 0; i < hidden; ++i) {
    r[i] = logistic(r[i] + gh[i]);
    u[i] = logistic(u[i] + gh[hidden + i]);
    n[i] = std::tanh(n[i] + r[i] * gh[2 * hidden + i]);
    h_new[i] = (T(1) - u[i]) * n[i] + u[i] * h_prev[i];
  }
}

// Scratch for one block step; sized once per stream.
template <class T>
struct BlockScratch {
  std::vector<T> act;       // C x N PReLU outputs (skip path)
  std::vector<T> avg;       // N
  std::vector<T> proj;      // P x 3h shared projections
  std::vector<T> proj_tmp;  // 3h, used when reuse is disabled
  std::vector<T> gx, gh;    // 3h
  std::vector<T> h_new;     // h
  std::vector<T> fc_out;    // N
  std::vector<T> norm_out;  // N

  BlockScratch() = default;
  BlockScratch(const ModelConfig& cfg, std::size_t channels) {
    const auto N = static_cast<std::size_t>(cfg.latent_dim);
    const auto h = static_cast<std::size_t>(cfg.cell_hidden());
    act.assign(channels * N, T(0));
    avg.assign(N, T(0));
    proj.assign(static_cast<std::size_t>(cfg.partitions) * 3 * h, T(0));
    proj_tmp.assign(3 * h, T(0));
    gx.assign(3 * h, T(0));
    gh.assign(3 * h, T(0));
    h_new.assign(h, T(0));
    fc_out.assign(N, T(0));
    norm_out.assign(N, T(0));
  }
};

// Group GRU for one channel: band p of [local, avg] drives cell p. hidden (H)
// is updated in place and is also the output. When proj is non-empty it holds
// the per-band averaged products computed once for the frame; otherwise they
// are recomputed here.
template <class T>
void group_gru_step(const std::vector<GruCellParams<T>>& cells, const ModelConfig& cfg,
                    std::span<const T> local, std::span<const T> avg, std::span<const T> proj,
                    std::span<T> hidden, BlockScratch<T>& ws) {
  const auto band = static_cast<std::size_t>(cfg.band());
  const auto h = static_cast<std::size_t>(cfg.cell_hidden());
  if (local.size() != static_cast<std::size_t>(cfg.latent_dim) ||
      hidden.size() != static_cast<std::size_t>(cfg.hidden_dim)) {
    throw std::invalid_argument("group_gru_step: dimension mismatch");
  }
  for (int p = 0; p < cfg.partitions; ++p) {
    const auto pu = static_cast<std::size_t>(p);
    const auto& cell = cells[static_cast<std::size_t>(cfg.cell_index(p))];
    const T* ap = nullptr;
    if (cfg.channel_interaction) {
      if (!proj.empty()) {
        ap = proj.data() + pu * 3 * h;
      } else {
        shared_projection(cell, band, h, avg.data() + pu * band, ws.proj_tmp.data());
        ap = ws.proj_tmp.data();
      }
    }
    T* hp = hidden.data() + pu * h;
    gru_cell_step(cell, band, h, local.data() + pu * band, ap, hp, ws.h_new.data(), ws.gx.data(),
                  ws.gh.data());
    std::copy(ws.h_new.begin(), ws.h_new.end(), hp);
  }
}

template <class T>
struct ChannelBlockState {
  std::vector<T> hidden;  // H
  NormState norm;

  ChannelBlockState() = default;
  explicit ChannelBlockState(const ModelConfig& cfg)
      : hidden(static_cast<std::size_t>(cfg.hidden_dim), T(0)), norm(cfg.norm_window) {}
  void reset() {
    std::fill(hidden.begin(), hidden.end(), T(0));
    norm.reset();
  }
};

// One RCI block over all channels of a frame; features (C x N) are replaced
// by the block output. states[c] belongs to channel c.
template <class T>
void rci_block_step(const RciBlockParams<T>& blk, const ModelConfig& cfg, std::span<T> features,
                    std::span<ChannelBlockState<T>> states, BlockScratch<T>& ws,
                    bool reuse_shared = true) {
  const auto N = static_cast<std::size_t>(cfg.latent_dim);
  const auto H = static_cast<std::size_t>(cfg.hidden_dim);
  const auto h = static_cast<std::size_t>(cfg.cell_hidden());
  const auto band = static_cast<std::size_t>(cfg.band());
  const std::size_t C = states.size();
  if (features.size() != C * N) throw std::invalid_argument("rci_block_step: channel mismatch");

  const std::span<const T> slopes(blk.prelu.data);
  for (std::size_t c = 0; c < C; ++c) {
    prelu<T>(features.subspan(c * N, N), slopes, std::span<T>(ws.act).subspan(c * N, N));
  }
  std::span<const T> proj;
  if (cfg.channel_interaction) {
    channel_average<T>(std::span<const T>(ws.act.data(), C * N), C, ws.avg);
    if (reuse_shared) {
      for (int p = 0; p < cfg.partitions; ++p) {
        const auto pu = static_cast<std::size_t>(p);
        shared_projection(blk.cells[static_cast<std::size_t>(cfg.cell_index(p))], band, h,
                          ws.avg.data() + pu * band, ws.proj.data() + pu * 3 * h);
      }
      proj = ws.proj;
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    const std::span<const T> act(ws.act.data() + c * N, N);
    auto& st = states[c];
    group_gru_step<T>(blk.cells, cfg, act, ws.avg, proj, st.hidden, ws);
    std::copy(blk.fc_bias.data.begin(), blk.fc_bias.data.end(), ws.fc_out.begin());
    kernels::gemv_t(blk.fc_weight.ptr(), H, N, N, st.hidden.data(), ws.fc_out.data());
    sln_step<T>(ws.fc_out, st.norm, blk.norm.gamma.data, blk.norm.beta.data, ws.norm_out);
    for (std::size_t n = 0; n < N; ++n) features[c * N + n] = ws.norm_out[n] + act[n];
  }
}

}  // namespace dfs
