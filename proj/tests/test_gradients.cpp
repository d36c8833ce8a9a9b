// Analytic backward passes against central finite differences.

#include <cmath>
#include <vector>

#include "doctest.h"
#include "dfsnet/layers.hpp"
#include "dfsnet/training.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace dfs;
using dfs::test::random_params;
using dfs::test::random_vector;

namespace gc = dfs::gradcheck;

namespace {

constexpr int kSeeds = 20;

ModelConfig small_config() {
  ModelConfig c;
  c.frame_len = 8;
  c.latent_dim = 6;
  c.hidden_dim = 8;
  c.partitions = 2;
  c.num_blocks = 2;
  c.norm_window = 3;
  return c;
}

}  // namespace

TEST_CASE("si_sdr gradient") { CHECK(gc::check_si_sdr(kSeeds) < gc::kTolerance); }
TEST_CASE("encode gradient") { CHECK(gc::check_encode(kSeeds) < gc::kTolerance); }
TEST_CASE("sliding-window normalization gradient through the window") {
  CHECK(gc::check_sln_window(kSeeds) < gc::kTolerance);
}
TEST_CASE("channel_average, mask_head and prelu gradients") {
  CHECK(gc::check_average_mask_prelu(kSeeds) < gc::kTolerance);
}
TEST_CASE("decode_and_sum gradient") { CHECK(gc::check_decode_and_sum(kSeeds) < gc::kTolerance); }
TEST_CASE("overlap_add gradient") { CHECK(gc::check_overlap_add(kSeeds) < gc::kTolerance); }
TEST_CASE("gated recurrent cell gradient") { CHECK(gc::check_gru_cell(kSeeds) < gc::kTolerance); }
TEST_CASE("RCI block gradient through time and channels") { CHECK(gc::check_rci_block(kSeeds) < gc::kTolerance); }
TEST_CASE("whole-model loss gradient") { CHECK(gc::check_whole_model(kSeeds) < gc::kTolerance); }

TEST_CASE("si_sdr gradient at est = ref is orthogonal to ref") {
  for (int s = 0; s < kSeeds; ++s) {
    const auto ref = random_vector(64, 300 + s);
    std::vector<double> grad(ref.size());
    si_sdr_backward(ref, ref, grad);
    double dot = 0.0, gn = 0.0, rn = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      dot += grad[i] * ref[i];
      gn += grad[i] * grad[i];
      rn += ref[i] * ref[i];
    }
    CHECK(std::abs(dot) <= 1e-9 * std::sqrt(gn * rn) + 1e-12);
  }
}

TEST_CASE("traced block forward equals the inference block step") {
  const auto cfg = ModelConfig::tiny();
  const std::size_t C = 3;
  const std::size_t N = 16;
  const auto params = random_params(cfg, 3200);
  std::vector<ChannelBlockState<double>> a(C, ChannelBlockState<double>(cfg)), b = a;
  BlockScratch<double> wa(cfg, C), wb(cfg, C);
  BlockTrace tr;
  for (int k = 0; k < 6; ++k) {
    auto f = random_vector(C * N, 3300 + k);
    std::vector<double> out(C * N);
    rci_block_forward_traced(params.blocks[1], cfg, f, a, wa, tr, out);
    rci_block_step<double>(params.blocks[1], cfg, f, b, wb);
    CHECK(out == f);
  }
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  const auto cfg = small_config();
  const auto params = random_params(cfg, 3900);
  const auto plan = dfs::test::random_plan(2, 3901, 5);
  const auto utt = align_utterance(plan, dfs::test::random_buffer(2, 40, 3902), 8);
  SequenceModel model(params);
  const auto est = model.forward(utt);
  auto grads = ParamGrads::zeros(cfg);
  model.backward(std::vector<double>(est.size(), 0.0), grads);
  bool all_zero = true;
  grads.visit([&](const std::string&, const Tensor<double>& t) {
    for (double v : t.data) all_zero = all_zero && v == 0.0;
  });
  CHECK(all_zero);
}
