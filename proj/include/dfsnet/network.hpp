#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "dfsnet/layers.hpp"
#include "dfsnet/model.hpp"

namespace dfs {

// Per-stream network state for C channels: normalization windows, recurrent
// hidden vectors and all per-frame scratch. Nothing is allocated after
// construction.
template <class T>
struct NetworkState {
  std::size_t channels = 0;
  std::vector<NormState> input_norm;                     // [c]
  std::vector<std::vector<ChannelBlockState<T>>> blocks;  // [block][c]
  BlockScratch<T> scratch;
  std::vector<T> latent;    // C x N
  std::vector<T> features;  // C x N
  std::vector<T> masks;     // C x N
  std::vector<T> mixed;     // N
  std::size_t frames_processed = 0;
  // Compute the averaged-band cell products once per frame instead of once
  // per channel. Output is identical either way.
  bool reuse_shared = true;

  NetworkState() = default;
  NetworkState(const ModelConfig& cfg, std::size_t num_channels) : channels(num_channels) {
    if (num_channels == 0) throw std::invalid_argument("network needs at least one channel");
    const auto N = static_cast<std::size_t>(cfg.latent_dim);
    input_norm.assign(num_channels, NormState(cfg.norm_window));
    blocks.assign(static_cast<std::size_t>(cfg.num_blocks),
                  std::vector<ChannelBlockState<T>>(num_channels, ChannelBlockState<T>(cfg)));
    scratch = BlockScratch<T>(cfg, num_channels);
    latent.assign(num_channels * N, T(0));
    features.assign(num_channels * N, T(0));
    masks.assign(num_channels * N, T(0));
    mixed.assign(N, T(0));
  }

  void reset() {
    for (auto& s : input_norm) s.reset();
    for (auto& blk : blocks) {
      for (auto& s : blk) s.reset();
    }
    frames_processed = 0;
  }
};

// Encoder, input normalization, RCI blocks, mask head and latent
// filter-and-sum decoder for one frame. frames is C x L (aligned input),
// out receives L samples.
template <class T>
void forward_frame(const ModelParams<T>& params, NetworkState<T>& state, std::span<const T> frames,
                   std::span<T> out) {
  const ModelConfig& cfg = params.config;
  const auto L = static_cast<std::size_t>(cfg.frame_len);
  const auto N = static_cast<std::size_t>(cfg.latent_dim);
  const std::size_t C = state.channels;
  if (frames.size() != C * L) throw std::invalid_argument("forward_frame: expected C x L input");
  if (out.size() != L) throw std::invalid_argument("forward_frame: output must hold L samples");

  std::span<T> latent(state.latent);
  std::span<T> features(state.features);
  for (std::size_t c = 0; c < C; ++c) {
    encode<T>(params, frames.subspan(c * L, L), latent.subspan(c * N, N));
    sln_step<T>(latent.subspan(c * N, N), state.input_norm[c], params.input_norm.gamma.data,
                params.input_norm.beta.data, features.subspan(c * N, N));
  }
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    rci_block_step<T>(params.blocks[b], cfg, features, state.blocks[b], state.scratch,
                      state.reuse_shared);
  }
  mask_head<T>(features, state.masks);
  decode_and_sum<T>(params, state.masks, state.latent, C, state.mixed, out);
  ++state.frames_processed;
}

}  // namespace dfs
