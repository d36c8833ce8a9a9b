#pragma once

// Structural cost of a configuration: parameters, multiply-accumulates per
// second and algorithmic latency.

#include <cstddef>
#include <cstdint>

#include "dfsnet/model.hpp"

namespace dfs {

// Exact scalar count of ModelParams for the config (includes ablation flags).
std::uint64_t count_params(const ModelConfig& config);

// Matrix-product MACs only. Local work runs once per channel with shared
// weights: encoder, the local-band cell inputs, hidden-to-hidden products,
// FC and the decoder projection. Global work runs once per frame: the
// averaged-band cell products. All rates are per second.
struct MacCount {
  double frames_per_second = 0.0;
  double local_per_channel = 0.0;
  double local = 0.0;  // local_per_channel * C
  double global = 0.0;
  double total = 0.0;
};

MacCount count_macs(const ModelConfig& config, double sample_rate, std::size_t channels);

struct LatencyReport {
  double frame_latency_ms = 0.0;
  double frac_filter_latency_ms = 0.0;
  double algorithmic_total_ms = 0.0;
  double max_compute_budget_ms = 0.0;  // one hop
};

LatencyReport latency_report(const ModelConfig& config, int fir_taps, double sample_rate);

}  // namespace dfs
