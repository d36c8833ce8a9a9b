#pragma once

// Desk-scale training in double precision: SI-SDR objective, analytic
// reverse-mode gradients through every layer and through time, Adam with
// per-epoch exponential learning-rate decay.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dfsnet/common.hpp"
#include "dfsnet/layers.hpp"
#include "dfsnet/model.hpp"
#include "dfsnet/steering.hpp"

namespace dfs {

using ParamGrads = ModelParams<double>;

// ---- objective -------------------------------------------------------------

// Residual floor relative to the projected target energy; keeps the value
// finite at a perfect estimate (100 dB) while staying exactly scale invariant.
inline constexpr double kSiSdrEps = 1e-10;

// alpha = <est, ref> / |ref|^2;
// 10 log10(|alpha ref|^2 / (|est - alpha ref|^2 + eps |alpha ref|^2)).
double si_sdr(std::span<const double> estimate, std::span<const double> reference);
double si_sdr(std::span<const float> estimate, std::span<const double> reference);

// Returns si_sdr and writes d si_sdr / d estimate into grad.
double si_sdr_backward(std::span<const double> estimate, std::span<const double> reference,
                       std::span<double> grad);

// ---- per-operation backward passes ----------------------------------------
// All accumulate into parameter gradients and either overwrite (d_out) or
// accumulate (d_*_acc) input gradients as documented.

// d_latent -> encoder gradients; d_frame (optional, may be empty) overwritten.
void encode_backward(const ModelParams<double>& params, std::span<const double> frame,
                     std::span<const double> d_latent, ParamGrads& grads, std::span<double> d_frame);

// d_avg (N) -> accumulates d_avg / C into every row of d_features_acc (C x N).
void channel_average_backward(std::span<const double> d_avg, std::size_t channels,
                              std::span<double> d_features_acc);

// d_mask -> d_x (overwritten).
void mask_head_backward(std::span<const double> masks, std::span<const double> d_masks,
                        std::span<double> d_x);

// Overwrites d_masks and d_latents (C x N); accumulates decoder gradient.
// mixed is the forward value (1/C) sum_c m_c * z_c.
void decode_and_sum_backward(const ModelParams<double>& params, std::span<const double> masks,
                             std::span<const double> latents, std::span<const double> mixed,
                             std::size_t channels, std::span<const double> d_frame, ParamGrads& grads,
                             std::span<double> d_masks, std::span<double> d_latents);

// Gradient of overlap_add w.r.t. each frame. d_signal covers the kept
// (possibly trimmed) output samples; d_frames is count x frame_len and is
// overwritten.
void overlap_add_backward(std::size_t frame_len, std::size_t count, std::span<const double> d_signal,
                          std::span<double> d_frames);

void prelu_backward(std::span<const double> x, std::span<const double> slopes,
                    std::span<const double> d_out, std::span<double> d_x, std::span<double> d_slopes);

// Reverse-time gradient of one sliding-window normalization site of one
// channel. Frame k's statistics depend on frames [k - R_k + 1, k]; step() must
// be called for k = K-1, K-2, ..., 0 and returns d_x for frame k (overwritten)
// including contributions from every later frame whose window covers k.
class SlnWindowGrad {
 public:
  SlnWindowGrad() = default;
  SlnWindowGrad(int window, std::size_t frames);

  void step(std::size_t k, std::span<const double> x, const NormState::Stats& stats,
            std::span<const double> gamma, std::span<const double> d_out, std::span<double> d_gamma,
            std::span<double> d_beta, std::span<double> d_x);

 private:
  std::size_t window_ = 1;
  std::vector<double> offset_;  // per frame: dmu/(N R) - slope * mean
  std::vector<double> slope_;   // per frame: 2 dvar/(N R)
  double acc_offset_ = 0.0;
  double acc_slope_ = 0.0;
};

// Per-step cache of one recurrent cell.
struct GruTrace {
  std::vector<double> gates;  // r, u, n (3h)
  std::vector<double> gh;     // hidden-path pre-activations (3h)
};

// Backward of gru_cell_step. d_h_new is the total gradient on the new hidden
// state. Accumulates into cell grads, d_local_acc and d_avg_acc (band each,
// d_avg_acc ignored when null), and overwrites d_h_prev.
void gru_cell_backward(const GruCellParams<double>& cell, std::size_t band, std::size_t hidden,
                       const double* local, const double* avg, const double* h_prev,
                       const GruTrace& trace, const double* d_h_new, GruCellParams<double>& grads,
                       double* d_local_acc, double* d_avg_acc, double* d_h_prev);

// Forward values of one RCI block for one frame across all channels.
struct BlockTrace {
  std::vector<double> input;        // C x N (pre-PReLU)
  std::vector<double> act;          // C x N
  std::vector<double> avg;          // N
  std::vector<double> hidden_prev;  // C x H
  std::vector<double> hidden_new;   // C x H
  std::vector<GruTrace> cells;      // C x P
  std::vector<double> fc_out;       // C x N
  std::vector<NormState::Stats> stats;  // C
};

// Same arithmetic as rci_block_step (with shared-average reuse) while
// recording a trace. out (C x N) may alias nothing in the trace.
void rci_block_forward_traced(const RciBlockParams<double>& blk, const ModelConfig& cfg,
                              std::span<const double> in, std::span<ChannelBlockState<double>> states,
                              BlockScratch<double>& ws, BlockTrace& trace, std::span<double> out);

// Backward of one block at frame k. d_hidden (C x H) carries the gradient on
// this frame's new hidden state from frame k+1 and is replaced by the gradient
// on the previous hidden state. norm_grads[c] is the block norm site of
// channel c. d_in (C x N) is overwritten.
void rci_block_backward(const RciBlockParams<double>& blk, const ModelConfig& cfg,
                        const BlockTrace& trace, std::size_t k, std::span<const double> d_out,
                        std::span<double> d_hidden, std::span<SlnWindowGrad> norm_grads,
                        RciBlockParams<double>& grads, std::span<double> d_in);

// ---- whole-utterance forward/backward ---------------------------------------

// Steered, framed input of one utterance: frames x channels x L.
struct AlignedUtterance {
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::size_t frame_len = 0;
  std::size_t signal_length = 0;  // samples kept after overlap-add
  std::vector<double> data;

  std::span<const double> frame(std::size_t k) const {
    return {data.data() + k * channels * frame_len, channels * frame_len};
  }
};

// Uses the same padding and steering as enhance_offline.
AlignedUtterance align_utterance(const SteeringPlan& plan, const MultichannelBuffer& mix,
                                 std::size_t frame_len);

// Runs the model over the utterance; returns the overlap-added estimate
// (signal_length samples). When grads is non-null, d_loss/d_estimate must be
// supplied through loss_grad and parameter gradients are accumulated.
class SequenceModel {
 public:
  explicit SequenceModel(const ModelParams<double>& params) : params_(&params) {}

  std::vector<double> forward(const AlignedUtterance& utt);
  // Requires a preceding forward() on the same utterance.
  void backward(std::span<const double> d_estimate, ParamGrads& grads);

 private:
  struct FrameTrace {
    std::vector<double> latent;  // C x N
    std::vector<NormState::Stats> in_stats;
    std::vector<BlockTrace> blocks;
    std::vector<double> masks;  // C x N
    std::vector<double> mixed;  // N
  };
  const ModelParams<double>* params_;
  const AlignedUtterance* utt_ = nullptr;
  std::vector<FrameTrace> trace_;
};

// Loss = -si_sdr(estimate, target). Accumulates gradients when grads != null.
double loss_and_gradient(const ModelParams<double>& params, const AlignedUtterance& utt,
                         std::span<const double> target, ParamGrads* grads,
                         std::vector<double>* estimate = nullptr);

// ---- optimizer -------------------------------------------------------------

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double epoch_decay = 0.98;
};

struct OptimizerState {
  ModelParams<double> m;
  ModelParams<double> v;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  AdamOptions options;

  OptimizerState() = default;
  OptimizerState(const ModelConfig& config, const AdamOptions& opts);
  void end_epoch() { learning_rate *= options.epoch_decay; }
};

// Bias-corrected Adam update at opt.learning_rate. Rejects non-finite
// gradients and mismatched shapes.
void adam_step(ModelParams<double>& params, const ParamGrads& grads, OptimizerState& opt);

// ---- training loop ---------------------------------------------------------

struct TrainingExample {
  AlignedUtterance input;
  std::vector<double> target;    // x_DS
  std::vector<double> baseline;  // y_DS, the unprocessed delay-and-sum
};

TrainingExample make_training_example(const SteeringPlan& plan, const MultichannelBuffer& mix,
                                      const MultichannelBuffer& clean, std::size_t frame_len);

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
};

struct TrainOptions {
  int epochs = 1;
  std::size_t steps_per_epoch = 0;  // 0: one pass over the dataset
  AdamOptions adam;
  std::uint64_t seed = 0;
  bool shuffle = true;
  std::function<void(const StepLog&)> on_step;
};

struct TrainResult {
  ModelParams<double> params;
  std::vector<StepLog> steps;
  std::vector<double> epoch_si_sdr;  // mean over the epoch's steps, dB
};

TrainResult train_loop(const std::vector<TrainingExample>& data, ModelParams<double> init,
                       const TrainOptions& options);

}  // namespace dfs
