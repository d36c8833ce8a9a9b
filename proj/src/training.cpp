#include "dfsnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "dfsnet/framing.hpp"
#include "dfsnet/kernels.hpp"
#include "dfsnet/streaming.hpp"

namespace dfs {

namespace {

constexpr double kDbPerNeper = 10.0 / 2.302585092994045684;  // 10 / ln 10
constexpr double kTiny = std::numeric_limits<double>::min();

struct SdrTerms {
  double alpha = 0.0;
  double ref_energy = 0.0;
  double num = 0.0;  // |alpha ref|^2 (+ tiny)
  double den = 0.0;  // |res|^2 + eps |alpha ref|^2 (+ tiny)
};

SdrTerms sdr_terms(std::span<const double> est, std::span<const double> ref) {
  if (est.size() != ref.size()) {
    throw std::invalid_argument("si_sdr: estimate has " + std::to_string(est.size()) +
                                " samples, reference " + std::to_string(ref.size()));
  }
  if (ref.empty()) throw std::invalid_argument("si_sdr: empty signals");
  SdrTerms t;
  double dot = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    dot += est[i] * ref[i];
    t.ref_energy += ref[i] * ref[i];
  }
  if (!(t.ref_energy > 0.0)) throw std::invalid_argument("si_sdr: reference has zero energy");
  t.alpha = dot / t.ref_energy;
  double res = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double e = est[i] - t.alpha * ref[i];
    res += e * e;
  }
  const double target = t.alpha * t.alpha * t.ref_energy;
  t.num = target + kTiny;
  t.den = res + kSiSdrEps * target + kTiny;
  return t;
}

std::vector<Tensor<double>*> tensor_list(ModelParams<double>& p) {
  std::vector<Tensor<double>*> out;
  p.visit([&](const std::string&, Tensor<double>& t) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor<double>*> tensor_list(const ModelParams<double>& p) {
  std::vector<const Tensor<double>*> out;
  p.visit([&](const std::string&, const Tensor<double>& t) { out.push_back(&t); });
  return out;
}

// d_y += x * d (outer product into a row-major rows x cols block with stride ld).
void outer_acc(double* w, std::size_t rows, std::size_t cols, std::size_t ld, const double* d,
               const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (d[r] != 0.0) kernels::axpy(d[r], x, w + r * ld, cols);
  }
}

}  // namespace

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  const auto t = sdr_terms(estimate, reference);
  return 10.0 * std::log10(t.num / t.den);
}

double si_sdr(std::span<const float> estimate, std::span<const double> reference) {
  std::vector<double> e(estimate.begin(), estimate.end());
  return si_sdr(std::span<const double>(e), reference);
}

double si_sdr_backward(std::span<const double> estimate, std::span<const double> reference,
                       std::span<double> grad) {
  const auto t = sdr_terms(estimate, reference);
  if (grad.size() != estimate.size()) throw std::invalid_argument("si_sdr_backward: grad size");
  // residual r = est - alpha ref; d|r|^2 = 2 (r - (<r,ref>/|ref|^2) ref)
  double res_dot = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    res_dot += (estimate[i] - t.alpha * reference[i]) * reference[i];
  }
  const double beta = res_dot / t.ref_energy;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d_num = 2.0 * t.alpha * reference[i];
    const double res = estimate[i] - t.alpha * reference[i];
    const double d_den = 2.0 * (res - beta * reference[i]) + kSiSdrEps * d_num;
    grad[i] = kDbPerNeper * (d_num / t.num - d_den / t.den);
  }
  return 10.0 * std::log10(t.num / t.den);
}

// ---------------------------------------------------------------------------

void encode_backward(const ModelParams<double>& params, std::span<const double> frame,
                     std::span<const double> d_latent, ParamGrads& grads, std::span<double> d_frame) {
  const auto L = static_cast<std::size_t>(params.config.frame_len);
  const auto N = static_cast<std::size_t>(params.config.latent_dim);
  if (frame.size() != L || d_latent.size() != N) throw std::invalid_argument("encode_backward: size");
  // z = y E: dE[l][n] += y[l] dz[n]
  for (std::size_t l = 0; l < L; ++l) {
    if (frame[l] != 0.0) kernels::axpy(frame[l], d_latent.data(), grads.encoder.ptr() + l * N, N);
  }
  if (!grads.encoder_bias.empty()) {
    for (std::size_t n = 0; n < N; ++n) grads.encoder_bias.data[n] += d_latent[n];
  }
  if (!d_frame.empty()) {
    std::fill(d_frame.begin(), d_frame.end(), 0.0);
    kernels::gemv(params.encoder.ptr(), L, N, N, d_latent.data(), d_frame.data());
  }
}

void channel_average_backward(std::span<const double> d_avg, std::size_t channels,
                              std::span<double> d_features_acc) {
  const std::size_t n = d_avg.size();
  if (channels == 0 || d_features_acc.size() != channels * n) {
    throw std::invalid_argument("channel_average_backward: size mismatch");
  }
  const double inv = 1.0 / static_cast<double>(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) d_features_acc[c * n + i] += d_avg[i] * inv;
  }
}

void mask_head_backward(std::span<const double> masks, std::span<const double> d_masks,
                        std::span<double> d_x) {
  for (std::size_t i = 0; i < masks.size(); ++i) d_x[i] = d_masks[i] * masks[i] * (1.0 - masks[i]);
}

void decode_and_sum_backward(const ModelParams<double>& params, std::span<const double> masks,
                             std::span<const double> latents, std::span<const double> mixed,
                             std::size_t channels, std::span<const double> d_frame, ParamGrads& grads,
                             std::span<double> d_masks, std::span<double> d_latents) {
  const auto N = static_cast<std::size_t>(params.config.latent_dim);
  const auto L = static_cast<std::size_t>(params.config.frame_len);
  if (d_frame.size() != L || mixed.size() != N || masks.size() != channels * N) {
    throw std::invalid_argument("decode_and_sum_backward: size mismatch");
  }
  for (std::size_t n = 0; n < N; ++n) {
    if (mixed[n] != 0.0) kernels::axpy(mixed[n], d_frame.data(), grads.decoder.ptr() + n * L, L);
  }
  std::vector<double> d_mixed(N, 0.0);
  kernels::gemv(params.decoder.ptr(), N, L, L, d_frame.data(), d_mixed.data());
  const double inv = 1.0 / static_cast<double>(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t n = 0; n < N; ++n) {
      const double g = d_mixed[n] * inv;
      d_masks[c * N + n] = g * latents[c * N + n];
      d_latents[c * N + n] = g * masks[c * N + n];
    }
  }
}

void overlap_add_backward(std::size_t frame_len, std::size_t count, std::span<const double> d_signal,
                          std::span<double> d_frames) {
  const std::size_t hop = frame_len / 2;
  const std::size_t covered = (count - 1) * hop + frame_len;
  if (d_frames.size() != count * frame_len || d_signal.size() > covered) {
    throw std::invalid_argument("overlap_add_backward: size mismatch");
  }
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t i = 0; i < frame_len; ++i) {
      const std::size_t t = k * hop + i;
      double g = 0.0;
      if (t < d_signal.size()) g = (t >= hop && t + hop < covered) ? 0.5 * d_signal[t] : d_signal[t];
      d_frames[k * frame_len + i] = g;
    }
  }
}

void prelu_backward(std::span<const double> x, std::span<const double> slopes,
                    std::span<const double> d_out, std::span<double> d_x, std::span<double> d_slopes) {
  for (std::size_t n = 0; n < x.size(); ++n) {
    if (x[n] > 0.0) {
      d_x[n] = d_out[n];
    } else {
      d_x[n] = d_out[n] * slopes[n];
      d_slopes[n] += d_out[n] * x[n];
    }
  }
}

// ---------------------------------------------------------------------------

SlnWindowGrad::SlnWindowGrad(int window, std::size_t frames)
    : window_(static_cast<std::size_t>(std::max(window, 1))), offset_(frames, 0.0), slope_(frames, 0.0) {}

void SlnWindowGrad::step(std::size_t k, std::span<const double> x, const NormState::Stats& stats,
                         std::span<const double> gamma, std::span<const double> d_out,
                         std::span<double> d_gamma, std::span<double> d_beta, std::span<double> d_x) {
  if (k >= offset_.size()) throw std::out_of_range("SlnWindowGrad: frame index");
  const std::size_t N = x.size();
  const double n_total = static_cast<double>(N) * static_cast<double>(stats.window);
  double sum_g = 0.0;
  double sum_gc = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const double xc = x[n] - stats.mean;
    d_gamma[n] += d_out[n] * xc * stats.inv_std;
    d_beta[n] += d_out[n];
    const double g = d_out[n] * gamma[n];
    d_x[n] = g * stats.inv_std;
    sum_g += g;
    sum_gc += g * xc;
  }
  const double d_mean = -stats.inv_std * sum_g;
  const double d_var = stats.clamped ? 0.0 : -0.5 * stats.inv_std * stats.inv_std * stats.inv_std * sum_gc;
  // mean = S/n, var = Q/n - mean^2 over the window. Each member frame j gets
  // d_mean/n + (2 d_var/n)(x_j - mean).
  slope_[k] = 2.0 * d_var / n_total;
  offset_[k] = d_mean / n_total - slope_[k] * stats.mean;
  acc_offset_ += offset_[k];
  acc_slope_ += slope_[k];
  if (k + window_ < offset_.size()) {
    acc_offset_ -= offset_[k + window_];
    acc_slope_ -= slope_[k + window_];
  }
  for (std::size_t n = 0; n < N; ++n) d_x[n] += acc_offset_ + acc_slope_ * x[n];
}

// ---------------------------------------------------------------------------

void gru_cell_backward(const GruCellParams<double>& cell, std::size_t band, std::size_t hidden,
                       const double* local, const double* avg, const double* h_prev,
                       const GruTrace& trace, const double* d_h_new, GruCellParams<double>& grads,
                       double* d_local_acc, double* d_avg_acc, double* d_h_prev) {
  const std::size_t rows = 3 * hidden;
  const std::size_t in = cell.w_ih.shape[1];
  const double* r = trace.gates.data();
  const double* u = r + hidden;
  const double* nn = r + 2 * hidden;
  const double* gh_n = trace.gh.data() + 2 * hidden;

  std::vector<double> dgx(rows), dgh(rows);
  for (std::size_t i = 0; i < hidden; ++i) {
    const double dh = d_h_new[i];
    const double dn = dh * (1.0 - u[i]);
    const double du = dh * (h_prev[i] - nn[i]);
    d_h_prev[i] = dh * u[i];
    const double dn_pre = dn * (1.0 - nn[i] * nn[i]);
    const double dr = dn_pre * gh_n[i];
    const double dr_pre = dr * r[i] * (1.0 - r[i]);
    const double du_pre = du * u[i] * (1.0 - u[i]);
    dgx[i] = dr_pre;
    dgx[hidden + i] = du_pre;
    dgx[2 * hidden + i] = dn_pre;
    dgh[i] = dr_pre;
    dgh[hidden + i] = du_pre;
    dgh[2 * hidden + i] = dn_pre * r[i];
  }
  for (std::size_t i = 0; i < rows; ++i) {
    grads.b_ih.data[i] += dgx[i];
    grads.b_hh.data[i] += dgh[i];
  }
  outer_acc(grads.w_ih.ptr(), rows, band, in, dgx.data(), local);
  if (avg != nullptr) outer_acc(grads.w_ih.ptr() + band, rows, band, in, dgx.data(), avg);
  outer_acc(grads.w_hh.ptr(), rows, hidden, hidden, dgh.data(), h_prev);

  kernels::gemv_t(cell.w_ih.ptr(), rows, band, in, dgx.data(), d_local_acc);
  if (avg != nullptr && d_avg_acc != nullptr) {
    kernels::gemv_t(cell.w_ih.ptr() + band, rows, band, in, dgx.data(), d_avg_acc);
  }
  kernels::gemv_t(cell.w_hh.ptr(), rows, hidden, hidden, dgh.data(), d_h_prev);
}

// ---------------------------------------------------------------------------

void rci_block_forward_traced(const RciBlockParams<double>& blk, const ModelConfig& cfg,
                              std::span<const double> in, std::span<ChannelBlockState<double>> states,
                              BlockScratch<double>& ws, BlockTrace& trace, std::span<double> out) {
  const auto N = static_cast<std::size_t>(cfg.latent_dim);
  const auto H = static_cast<std::size_t>(cfg.hidden_dim);
  const auto h = static_cast<std::size_t>(cfg.cell_hidden());
  const auto band = static_cast<std::size_t>(cfg.band());
  const auto P = static_cast<std::size_t>(cfg.partitions);
  const std::size_t C = states.size();
  if (in.size() != C * N || out.size() != C * N) {
    throw std::invalid_argument("rci_block_forward_traced: channel mismatch");
  }

  trace.input.assign(in.begin(), in.end());
  trace.hidden_prev.resize(C * H);
  trace.hidden_new.resize(C * H);
  trace.fc_out.resize(C * N);
  trace.stats.resize(C);
  trace.cells.resize(C * P);

  const std::span<const double> slopes(blk.prelu.data);
  for (std::size_t c = 0; c < C; ++c) {
    prelu<double>(in.subspan(c * N, N), slopes, std::span<double>(ws.act).subspan(c * N, N));
  }
  trace.act = ws.act;
  if (cfg.channel_interaction) {
    channel_average<double>(std::span<const double>(ws.act.data(), C * N), C, ws.avg);
    for (std::size_t p = 0; p < P; ++p) {
      shared_projection(blk.cells[static_cast<std::size_t>(cfg.cell_index(static_cast<int>(p)))], band, h,
                        ws.avg.data() + p * band, ws.proj.data() + p * 3 * h);
    }
    trace.avg = ws.avg;
  } else {
    trace.avg.clear();
  }

  for (std::size_t c = 0; c < C; ++c) {
    const double* act = ws.act.data() + c * N;
    auto& st = states[c];
    std::copy(st.hidden.begin(), st.hidden.end(), trace.hidden_prev.begin() + static_cast<std::ptrdiff_t>(c * H));
    for (std::size_t p = 0; p < P; ++p) {
      const auto& cell = blk.cells[static_cast<std::size_t>(cfg.cell_index(static_cast<int>(p)))];
      const double* ap = cfg.channel_interaction ? ws.proj.data() + p * 3 * h : nullptr;
      double* hp = st.hidden.data() + p * h;
      gru_cell_step(cell, band, h, act + p * band, ap, hp, ws.h_new.data(), ws.gx.data(), ws.gh.data());
      std::copy(ws.h_new.begin(), ws.h_new.end(), hp);
      auto& ct = trace.cells[c * P + p];
      ct.gates = ws.gx;
      ct.gh = ws.gh;
    }
    std::copy(st.hidden.begin(), st.hidden.end(), trace.hidden_new.begin() + static_cast<std::ptrdiff_t>(c * H));
    std::copy(blk.fc_bias.data.begin(), blk.fc_bias.data.end(), ws.fc_out.begin());
    kernels::gemv_t(blk.fc_weight.ptr(), H, N, N, st.hidden.data(), ws.fc_out.data());
    std::copy(ws.fc_out.begin(), ws.fc_out.end(), trace.fc_out.begin() + static_cast<std::ptrdiff_t>(c * N));
    trace.stats[c] = sln_step<double>(ws.fc_out, st.norm, blk.norm.gamma.data, blk.norm.beta.data, ws.norm_out);
    for (std::size_t n = 0; n < N; ++n) out[c * N + n] = ws.norm_out[n] + act[n];
  }
}

void rci_block_backward(const RciBlockParams<double>& blk, const ModelConfig& cfg,
                        const BlockTrace& trace, std::size_t k, std::span<const double> d_out,
                        std::span<double> d_hidden, std::span<SlnWindowGrad> norm_grads,
                        RciBlockParams<double>& grads, std::span<double> d_in) {
  const auto N = static_cast<std::size_t>(cfg.latent_dim);
  const auto H = static_cast<std::size_t>(cfg.hidden_dim);
  const auto h = static_cast<std::size_t>(cfg.cell_hidden());
  const auto band = static_cast<std::size_t>(cfg.band());
  const auto P = static_cast<std::size_t>(cfg.partitions);
  const std::size_t C = norm_grads.size();
  if (d_out.size() != C * N || d_in.size() != C * N || d_hidden.size() != C * H) {
    throw std::invalid_argument("rci_block_backward: size mismatch");
  }

  std::vector<double> d_act(d_out.begin(), d_out.end());  // skip path
  std::vector<double> d_avg(N, 0.0);
  std::vector<double> d_fc(N), d_h(H), d_hp(h);
  for (std::size_t c = 0; c < C; ++c) {
    const double* fc_out = trace.fc_out.data() + c * N;
    norm_grads[c].step(k, {fc_out, N}, trace.stats[c], blk.norm.gamma.data, d_out.subspan(c * N, N),
                       grads.norm.gamma.data, grads.norm.beta.data, d_fc);
    for (std::size_t n = 0; n < N; ++n) grads.fc_bias.data[n] += d_fc[n];
    const double* hn = trace.hidden_new.data() + c * H;
    outer_acc(grads.fc_weight.ptr(), H, N, N, hn, d_fc.data());
    // fc_out = h W: dh = W dfc, plus the recurrent carry from frame k+1.
    std::copy(d_hidden.begin() + static_cast<std::ptrdiff_t>(c * H),
              d_hidden.begin() + static_cast<std::ptrdiff_t>((c + 1) * H), d_h.begin());
    kernels::gemv(blk.fc_weight.ptr(), H, N, N, d_fc.data(), d_h.data());

    const double* act = trace.act.data() + c * N;
    const double* hprev = trace.hidden_prev.data() + c * H;
    for (std::size_t p = 0; p < P; ++p) {
      const auto ci = static_cast<std::size_t>(cfg.cell_index(static_cast<int>(p)));
      const double* avg = cfg.channel_interaction ? trace.avg.data() + p * band : nullptr;
      gru_cell_backward(blk.cells[ci], band, h, act + p * band, avg, hprev + p * h, trace.cells[c * P + p],
                        d_h.data() + p * h, grads.cells[ci], d_act.data() + c * N + p * band,
                        avg != nullptr ? d_avg.data() + p * band : nullptr, d_hp.data());
      std::copy(d_hp.begin(), d_hp.end(), d_hidden.begin() + static_cast<std::ptrdiff_t>(c * H + p * h));
    }
  }
  if (cfg.channel_interaction) channel_average_backward(d_avg, C, d_act);
  const std::span<const double> slopes(blk.prelu.data);
  for (std::size_t c = 0; c < C; ++c) {
    prelu_backward(std::span<const double>(trace.input).subspan(c * N, N), slopes,
                   std::span<const double>(d_act).subspan(c * N, N), d_in.subspan(c * N, N),
                   grads.prelu.data);
  }
}

// ---------------------------------------------------------------------------

AlignedUtterance align_utterance(const SteeringPlan& plan, const MultichannelBuffer& mix,
                                 std::size_t frame_len) {
  check_frame_len(frame_len);
  if (plan.channels() != mix.channels()) {
    throw std::invalid_argument("steering plan has " + std::to_string(plan.channels()) +
                                " channels, input has " + std::to_string(mix.channels()));
  }
  const std::size_t C = mix.channels();
  const std::size_t padded = padded_length(mix.length(), frame_len);
  MultichannelBuffer buf(C, padded, mix.sample_rate());
  for (std::size_t c = 0; c < C; ++c) {
    const auto src = mix.channel(c);
    std::copy(src.begin(), src.end(), buf.channel(c).begin());
  }
  const auto aligned = apply_steering(plan, buf);

  AlignedUtterance utt;
  utt.channels = C;
  utt.frame_len = frame_len;
  utt.frames = frame_count(padded, frame_len);
  utt.signal_length = mix.length();
  utt.data.assign(utt.frames * C * frame_len, 0.0);
  const std::size_t hop = frame_len / 2;
  for (std::size_t k = 0; k < utt.frames; ++k) {
    for (std::size_t c = 0; c < C; ++c) {
      const auto ch = aligned.channel(c);
      double* dst = utt.data.data() + (k * C + c) * frame_len;
      for (std::size_t i = 0; i < frame_len && k * hop + i < padded; ++i) dst[i] = ch[k * hop + i];
    }
  }
  return utt;
}

std::vector<double> SequenceModel::forward(const AlignedUtterance& utt) {
  const ModelParams<double>& params = *params_;
  const ModelConfig& cfg = params.config;
  const auto L = static_cast<std::size_t>(cfg.frame_len);
  const auto N = static_cast<std::size_t>(cfg.latent_dim);
  const std::size_t C = utt.channels;
  if (utt.frame_len != L) throw std::invalid_argument("utterance frame length does not match model");
  if (C == 0 || utt.frames == 0) throw std::invalid_argument("empty utterance");
  utt_ = &utt;

  std::vector<NormState> in_norm(C, NormState(cfg.norm_window));
  std::vector<std::vector<ChannelBlockState<double>>> states(
      params.blocks.size(), std::vector<ChannelBlockState<double>>(C, ChannelBlockState<double>(cfg)));
  BlockScratch<double> ws(cfg, C);
  std::vector<double> features(C * N), next(C * N);

  FrameSequence<double> est;
  est.frame_len = L;
  est.hop = L / 2;
  est.count = utt.frames;
  est.signal_length = (utt.frames - 1) * est.hop + L;
  est.data.assign(utt.frames * L, 0.0);

  trace_.assign(utt.frames, FrameTrace{});
  for (std::size_t k = 0; k < utt.frames; ++k) {
    auto& ft = trace_[k];
    ft.latent.assign(C * N, 0.0);
    ft.in_stats.resize(C);
    const auto frames = utt.frame(k);
    for (std::size_t c = 0; c < C; ++c) {
      std::span<double> z(ft.latent.data() + c * N, N);
      encode<double>(params, frames.subspan(c * L, L), z);
      ft.in_stats[c] = sln_step<double>(z, in_norm[c], params.input_norm.gamma.data,
                                        params.input_norm.beta.data, std::span<double>(features).subspan(c * N, N));
    }
    ft.blocks.resize(params.blocks.size());
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
      rci_block_forward_traced(params.blocks[b], cfg, features, states[b], ws, ft.blocks[b], next);
      features.swap(next);
    }
    ft.masks.assign(C * N, 0.0);
    ft.mixed.assign(N, 0.0);
    mask_head<double>(features, ft.masks);
    decode_and_sum<double>(params, ft.masks, ft.latent, C, ft.mixed, est.frame(k));
  }
  auto out = overlap_add(est);
  out.resize(utt.signal_length);
  return out;
}

void SequenceModel::backward(std::span<const double> d_estimate, ParamGrads& grads) {
  if (utt_ == nullptr || trace_.empty()) throw std::logic_error("backward() without forward()");
  const ModelParams<double>& params = *params_;
  const ModelConfig& cfg = params.config;
  const auto& utt = *utt_;
  const auto L = static_cast<std::size_t>(cfg.frame_len);
  const auto N = static_cast<std::size_t>(cfg.latent_dim);
  const auto H = static_cast<std::size_t>(cfg.hidden_dim);
  const std::size_t C = utt.channels;
  const std::size_t K = utt.frames;
  const std::size_t B = params.blocks.size();
  if (d_estimate.size() != utt.signal_length) throw std::invalid_argument("backward: gradient length");
  if (!(grads.config == cfg)) throw std::invalid_argument("backward: gradient layout mismatch");

  std::vector<double> d_frames(K * L);
  overlap_add_backward(L, K, d_estimate, d_frames);

  std::vector<SlnWindowGrad> in_norm(C, SlnWindowGrad(cfg.norm_window, K));
  std::vector<std::vector<SlnWindowGrad>> blk_norm(B, std::vector<SlnWindowGrad>(C, SlnWindowGrad(cfg.norm_window, K)));
  std::vector<std::vector<double>> d_hidden(B, std::vector<double>(C * H, 0.0));
  std::vector<double> d_masks(C * N), d_latent(C * N), d_feat(C * N), d_prev(C * N), d_z(N);

  for (std::size_t kk = K; kk-- > 0;) {
    const auto& ft = trace_[kk];
    decode_and_sum_backward(params, ft.masks, ft.latent, ft.mixed, C,
                            std::span<const double>(d_frames).subspan(kk * L, L), grads, d_masks, d_latent);
    mask_head_backward(ft.masks, d_masks, d_feat);
    for (std::size_t b = B; b-- > 0;) {
      rci_block_backward(params.blocks[b], cfg, ft.blocks[b], kk, d_feat, d_hidden[b], blk_norm[b],
                         grads.blocks[b], d_prev);
      d_feat.swap(d_prev);
    }
    const auto frames = utt.frame(kk);
    for (std::size_t c = 0; c < C; ++c) {
      in_norm[c].step(kk, std::span<const double>(ft.latent).subspan(c * N, N), ft.in_stats[c],
                      params.input_norm.gamma.data, std::span<const double>(d_feat).subspan(c * N, N),
                      grads.input_norm.gamma.data, grads.input_norm.beta.data, d_z);
      for (std::size_t n = 0; n < N; ++n) d_z[n] += d_latent[c * N + n];
      encode_backward(params, frames.subspan(c * L, L), d_z, grads, {});
    }
  }
}

double loss_and_gradient(const ModelParams<double>& params, const AlignedUtterance& utt,
                         std::span<const double> target, ParamGrads* grads, std::vector<double>* estimate) {
  SequenceModel model(params);
  auto est = model.forward(utt);
  double loss;
  if (grads != nullptr) {
    std::vector<double> d(est.size());
    loss = -si_sdr_backward(est, target, d);
    for (auto& v : d) v = -v;
    model.backward(d, *grads);
  } else {
    loss = -si_sdr(std::span<const double>(est), target);
  }
  if (estimate != nullptr) *estimate = std::move(est);
  return loss;
}

// ---------------------------------------------------------------------------

OptimizerState::OptimizerState(const ModelConfig& config, const AdamOptions& opts)
    : m(ModelParams<double>::zeros(config)),
      v(ModelParams<double>::zeros(config)),
      learning_rate(opts.learning_rate),
      options(opts) {}

void adam_step(ModelParams<double>& params, const ParamGrads& grads, OptimizerState& opt) {
  auto p = tensor_list(params);
  const auto g = tensor_list(grads);
  auto m = tensor_list(opt.m);
  auto v = tensor_list(opt.v);
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw std::invalid_argument("adam_step: parameter layout mismatch");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i]->shape != p[i]->shape || m[i]->shape != p[i]->shape) {
      throw std::invalid_argument("adam_step: tensor shape mismatch");
    }
  }
  if (!grads.all_finite()) throw std::domain_error("adam_step: non-finite gradient");

  const auto& o = opt.options;
  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto& w = p[i]->data;
    const auto& gd = g[i]->data;
    auto& md = m[i]->data;
    auto& vd = v[i]->data;
    for (std::size_t j = 0; j < w.size(); ++j) {
      md[j] = o.beta1 * md[j] + (1.0 - o.beta1) * gd[j];
      vd[j] = o.beta2 * vd[j] + (1.0 - o.beta2) * gd[j] * gd[j];
      w[j] -= opt.learning_rate * (md[j] / c1) / (std::sqrt(vd[j] / c2) + o.eps);
    }
  }
}

// ---------------------------------------------------------------------------

TrainingExample make_training_example(const SteeringPlan& plan, const MultichannelBuffer& mix,
                                      const MultichannelBuffer& clean, std::size_t frame_len) {
  if (mix.channels() != clean.channels() || mix.length() != clean.length()) {
    throw std::invalid_argument("mixture and clean images differ in shape");
  }
  TrainingExample ex;
  ex.input = align_utterance(plan, mix, frame_len);
  ex.target = make_target(plan, clean);
  ex.baseline = delay_and_sum(apply_steering(plan, mix));
  return ex;
}

TrainResult train_loop(const std::vector<TrainingExample>& data, ModelParams<double> init,
                       const TrainOptions& options) {
  if (data.empty()) throw std::invalid_argument("training set is empty");
  if (options.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  TrainResult res;
  res.params = std::move(init);
  OptimizerState opt(res.params.config, options.adam);
  const std::size_t per_epoch = options.steps_per_epoch ? options.steps_per_epoch : data.size();
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  std::size_t step = 0;
  for (int e = 0; e < options.epochs; ++e) {
    double sum = 0.0;
    for (std::size_t s = 0; s < per_epoch; ++s) {
      if (s % data.size() == 0 && options.shuffle) std::shuffle(order.begin(), order.end(), rng);
      const auto& ex = data[order[s % data.size()]];
      auto grads = ModelParams<double>::zeros(res.params.config);
      const double loss = loss_and_gradient(res.params, ex.input, ex.target, &grads);
      StepLog log{step++, static_cast<std::size_t>(e), loss, opt.learning_rate};
      adam_step(res.params, grads, opt);
      sum += -loss;
      res.steps.push_back(log);
      if (options.on_step) options.on_step(log);
    }
    res.epoch_si_sdr.push_back(sum / static_cast<double>(per_epoch));
    opt.end_epoch();
  }
  return res;
}

}  // namespace dfs
