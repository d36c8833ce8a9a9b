#pragma once

// Network configuration and the learnable tensors. Every tensor is shared by
// all channels; nothing here depends on the channel count.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dfs {

struct ModelConfig {
  int frame_len = 64;      // L
  int latent_dim = 128;    // N
  int hidden_dim = 256;    // H
  int partitions = 4;      // P
  int num_blocks = 4;      // RCI blocks
  int norm_window = 1000;  // R, frames
  int fir_taps = 17;       // M, steering filter length
  int sample_rate = 16000;

  bool encoder_bias = false;
  // Ablation variants: one recurrent cell reused for every band, and blocks
  // that see only local features (no channel average).
  bool share_cells = false;
  bool channel_interaction = true;

  static ModelConfig reference() { return {}; }
  // Small network for desk-scale training and gradient checks.
  static ModelConfig tiny() {
    ModelConfig c;
    c.frame_len = 32;
    c.latent_dim = 16;
    c.hidden_dim = 32;
    c.partitions = 2;
    c.num_blocks = 2;
    c.norm_window = 100;
    return c;
  }

  void validate() const;

  int hop() const { return frame_len / 2; }
  int band() const { return latent_dim / partitions; }
  int cell_hidden() const { return hidden_dim / partitions; }
  int cell_input() const { return channel_interaction ? 2 * band() : band(); }
  int num_cells() const { return share_cells ? 1 : partitions; }
  int cell_index(int p) const { return share_cells ? 0 : p; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, T fill = T(0)) : shape(std::move(dims)) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    data.assign(n, fill);
  }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

template <class T>
struct NormParams {
  Tensor<T> gamma;
  Tensor<T> beta;

  friend bool operator==(const NormParams&, const NormParams&) = default;
};

// Gate rows are ordered reset, update, candidate (each cell_hidden rows).
// w_ih columns: local band first, then the averaged band when present.
template <class T>
struct GruCellParams {
  Tensor<T> w_ih;  // 3h x in
  Tensor<T> w_hh;  // 3h x h
  Tensor<T> b_ih;  // 3h
  Tensor<T> b_hh;  // 3h

  friend bool operator==(const GruCellParams&, const GruCellParams&) = default;
};

template <class T>
struct RciBlockParams {
  Tensor<T> prelu;  // N slopes
  std::vector<GruCellParams<T>> cells;
  Tensor<T> fc_weight;  // H x N
  Tensor<T> fc_bias;    // N
  NormParams<T> norm;

  friend bool operator==(const RciBlockParams&, const RciBlockParams&) = default;
};

template <class T>
struct ModelParams {
  ModelConfig config;
  Tensor<T> encoder;       // L x N
  Tensor<T> encoder_bias;  // N, empty unless config.encoder_bias
  Tensor<T> decoder;       // N x L
  NormParams<T> input_norm;
  std::vector<RciBlockParams<T>> blocks;

  // Zero-filled tensors with this config's shapes; also the gradient layout.
  static ModelParams zeros(const ModelConfig& config);

  // Calls fn(name, tensor) for every tensor in a fixed order.
  template <class F>
  void visit(F&& fn);
  template <class F>
  void visit(F&& fn) const;

  std::size_t scalar_count() const;
  bool all_finite() const;

  template <class U>
  ModelParams<U> cast() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Uniform +-sqrt(1/fan_in) for encoder, decoder and FC; uniform +-sqrt(1/h)
// for input-to-hidden weights; per-gate orthogonal hidden-to-hidden blocks;
// zero biases; PReLU slopes 0.25; norm gains 1 and offsets 0.
ModelParams<double> init_params(const ModelConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------

template <class T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& config) {
  config.validate();
  const auto L = static_cast<std::size_t>(config.frame_len);
  const auto N = static_cast<std::size_t>(config.latent_dim);
  const auto H = static_cast<std::size_t>(config.hidden_dim);
  const auto h = static_cast<std::size_t>(config.cell_hidden());
  const auto in = static_cast<std::size_t>(config.cell_input());

  ModelParams p;
  p.config = config;
  p.encoder = Tensor<T>({L, N});
  if (config.encoder_bias) p.encoder_bias = Tensor<T>({N});
  p.decoder = Tensor<T>({N, L});
  p.input_norm = {Tensor<T>({N}), Tensor<T>({N})};
  p.blocks.resize(static_cast<std::size_t>(config.num_blocks));
  for (auto& b : p.blocks) {
    b.prelu = Tensor<T>({N});
    b.cells.resize(static_cast<std::size_t>(config.num_cells()));
    for (auto& cell : b.cells) {
      cell.w_ih = Tensor<T>({3 * h, in});
      cell.w_hh = Tensor<T>({3 * h, h});
      cell.b_ih = Tensor<T>({3 * h});
      cell.b_hh = Tensor<T>({3 * h});
    }
    b.fc_weight = Tensor<T>({H, N});
    b.fc_bias = Tensor<T>({N});
    b.norm = {Tensor<T>({N}), Tensor<T>({N})};
  }
  return p;
}

namespace detail {
template <class Params, class F>
void visit_params(Params& p, F&& fn) {
  fn(std::string("encoder.weight"), p.encoder);
  if (!p.encoder_bias.empty()) fn(std::string("encoder.bias"), p.encoder_bias);
  fn(std::string("decoder.weight"), p.decoder);
  fn(std::string("input_norm.gamma"), p.input_norm.gamma);
  fn(std::string("input_norm.beta"), p.input_norm.beta);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    auto& blk = p.blocks[b];
    const std::string prefix = "blocks." + std::to_string(b) + ".";
    fn(prefix + "prelu", blk.prelu);
    for (std::size_t c = 0; c < blk.cells.size(); ++c) {
      const std::string cp = prefix + "cells." + std::to_string(c) + ".";
      fn(cp + "w_ih", blk.cells[c].w_ih);
      fn(cp + "w_hh", blk.cells[c].w_hh);
      fn(cp + "b_ih", blk.cells[c].b_ih);
      fn(cp + "b_hh", blk.cells[c].b_hh);
    }
    fn(prefix + "fc.weight", blk.fc_weight);
    fn(prefix + "fc.bias", blk.fc_bias);
    fn(prefix + "norm.gamma", blk.norm.gamma);
    fn(prefix + "norm.beta", blk.norm.beta);
  }
}
}  // namespace detail

template <class T>
template <class F>
void ModelParams<T>::visit(F&& fn) {
  detail::visit_params(*this, fn);
}

template <class T>
template <class F>
void ModelParams<T>::visit(F&& fn) const {
  detail::visit_params(*this, fn);
}

template <class T>
std::size_t ModelParams<T>::scalar_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Tensor<T>& t) { n += t.size(); });
  return n;
}

template <class T>
bool ModelParams<T>::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const Tensor<T>& t) {
    for (T v : t.data) ok = ok && std::isfinite(static_cast<double>(v));
  });
  return ok;
}

template <class T>
template <class U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out = ModelParams<U>::zeros(config);
  std::vector<const Tensor<T>*> src;
  visit([&](const std::string&, const Tensor<T>& t) { src.push_back(&t); });
  std::size_t i = 0;
  out.visit([&](const std::string&, Tensor<U>& t) {
    const auto& s = *src[i++];
    for (std::size_t k = 0; k < t.size(); ++k) t.data[k] = static_cast<U>(s.data[k]);
  });
  return out;
}

}  // namespace dfs
