#include "dfsnet/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace dfs {

void ModelConfig::validate() const {
  if (frame_len < 2 || frame_len % 2 != 0) throw std::invalid_argument("frame_len must be even and >= 2");
  if (latent_dim < 1 || hidden_dim < 1 || partitions < 1 || num_blocks < 1) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (latent_dim % partitions != 0) throw std::invalid_argument("latent_dim must be divisible by partitions");
  if (hidden_dim % partitions != 0) throw std::invalid_argument("hidden_dim must be divisible by partitions");
  if (norm_window < 1) throw std::invalid_argument("norm_window must be >= 1");
  if (fir_taps < 3 || fir_taps % 2 == 0) throw std::invalid_argument("fir_taps must be odd and >= 3");
  if (sample_rate < 1) throw std::invalid_argument("sample_rate must be positive");
}

namespace {

void fill_uniform(Tensor<double>& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.data) v = dist(rng);
}

// Writes an orthogonal n x n block at rows [row0, row0 + n) of a row-major
// matrix with n columns (modified Gram-Schmidt on Gaussian rows).
void fill_orthogonal_block(Tensor<double>& t, std::size_t row0, std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  double* base = t.ptr() + row0 * n;
  for (std::size_t r = 0; r < n; ++r) {
    double* row = base + r * n;
    for (;;) {
      for (std::size_t c = 0; c < n; ++c) row[c] = gauss(rng);
      for (std::size_t q = 0; q < r; ++q) {
        const double* prev = base + q * n;
        double proj = 0.0;
        for (std::size_t c = 0; c < n; ++c) proj += row[c] * prev[c];
        for (std::size_t c = 0; c < n; ++c) row[c] -= proj * prev[c];
      }
      double norm = 0.0;
      for (std::size_t c = 0; c < n; ++c) norm += row[c] * row[c];
      norm = std::sqrt(norm);
      if (norm > 1e-8) {
        for (std::size_t c = 0; c < n; ++c) row[c] /= norm;
        break;
      }
    }
  }
}

}  // namespace

ModelParams<double> init_params(const ModelConfig& config, std::uint64_t seed) {
  auto p = ModelParams<double>::zeros(config);
  std::mt19937_64 rng(seed);
  const auto h = static_cast<std::size_t>(config.cell_hidden());

  fill_uniform(p.encoder, std::sqrt(1.0 / config.frame_len), rng);
  fill_uniform(p.decoder, std::sqrt(1.0 / config.latent_dim), rng);
  std::fill(p.input_norm.gamma.data.begin(), p.input_norm.gamma.data.end(), 1.0);
  for (auto& blk : p.blocks) {
    std::fill(blk.prelu.data.begin(), blk.prelu.data.end(), 0.25);
    for (auto& cell : blk.cells) {
      fill_uniform(cell.w_ih, std::sqrt(1.0 / static_cast<double>(h)), rng);
      for (std::size_t gate = 0; gate < 3; ++gate) fill_orthogonal_block(cell.w_hh, gate * h, h, rng);
    }
    fill_uniform(blk.fc_weight, std::sqrt(1.0 / config.hidden_dim), rng);
    std::fill(blk.norm.gamma.data.begin(), blk.norm.gamma.data.end(), 1.0);
  }
  return p;
}

}  // namespace dfs
