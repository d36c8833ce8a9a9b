#include "dfsnet/accounting.hpp"

#include <stdexcept>

namespace dfs {

std::uint64_t count_params(const ModelConfig& config) {
  config.validate();
  const std::uint64_t L = static_cast<std::uint64_t>(config.frame_len);
  const std::uint64_t N = static_cast<std::uint64_t>(config.latent_dim);
  const std::uint64_t H = static_cast<std::uint64_t>(config.hidden_dim);
  const std::uint64_t h = static_cast<std::uint64_t>(config.cell_hidden());
  const std::uint64_t in = static_cast<std::uint64_t>(config.cell_input());
  const std::uint64_t cells = static_cast<std::uint64_t>(config.num_cells());

  const std::uint64_t cell = 3 * h * in + 3 * h * h + 3 * h + 3 * h;
  const std::uint64_t block = N + cells * cell + H * N + N + 2 * N;
  std::uint64_t total = L * N + N * L + 2 * N;
  if (config.encoder_bias) total += N;
  return total + static_cast<std::uint64_t>(config.num_blocks) * block;
}

MacCount count_macs(const ModelConfig& config, double sample_rate, std::size_t channels) {
  config.validate();
  if (!(sample_rate > 0.0)) throw std::invalid_argument("sample rate must be positive");
  const double L = config.frame_len;
  const double N = config.latent_dim;
  const double H = config.hidden_dim;
  const double P = config.partitions;
  const double band = config.band();
  const double h = config.cell_hidden();
  const double B = config.num_blocks;

  const double per_block_local = P * (3 * h * band + 3 * h * h) + H * N;
  const double per_block_global = config.channel_interaction ? P * 3 * h * band : 0.0;

  MacCount m;
  m.frames_per_second = 2.0 * sample_rate / L;
  m.local_per_channel = (L * N + B * per_block_local + N * L) * m.frames_per_second;
  m.local = m.local_per_channel * static_cast<double>(channels);
  m.global = B * per_block_global * m.frames_per_second;
  m.total = m.local + m.global;
  return m;
}

LatencyReport latency_report(const ModelConfig& config, int fir_taps, double sample_rate) {
  if (!(sample_rate > 0.0)) throw std::invalid_argument("sample rate must be positive");
  if (fir_taps < 1) throw std::invalid_argument("fir_taps must be >= 1");
  LatencyReport r;
  r.frame_latency_ms = 1000.0 * config.frame_len / sample_rate;
  r.frac_filter_latency_ms = 1000.0 * ((fir_taps - 1) / 2) / sample_rate;
  r.algorithmic_total_ms = r.frame_latency_ms + r.frac_filter_latency_ms;
  r.max_compute_budget_ms = 1000.0 * config.hop() / sample_rate;
  return r;
}

}  // namespace dfs
