#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "dfsnet/accounting.hpp"
#include "dfsnet/io.hpp"
#include "dfsnet/kernels.hpp"
#include "dfsnet/scene_sim.hpp"
#include "dfsnet/streaming.hpp"
#include "dfsnet/training.hpp"

namespace fs = std::filesystem;

namespace dfs::cli {

namespace {

// Bad flag values and combinations detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Reorders file channels so that channel 0 is the reference microphone.
MultichannelBuffer to_reference_order(const MultichannelBuffer& audio, const io::SceneMetadata& meta,
                                      const std::string& what) {
  if (audio.channels() != meta.spec.mics.size()) {
    throw DataError(what + " has " + std::to_string(audio.channels()) + " channels but the scene has " +
                    std::to_string(meta.spec.mics.size()) + " microphones");
  }
  if (audio.sample_rate() != meta.spec.sample_rate) {
    throw DataError(what + " is sampled at " + fmt("%g", audio.sample_rate()) + " Hz but the scene expects " +
                    fmt("%g", meta.spec.sample_rate) + " Hz");
  }
  return audio.permuted(meta.permutation);
}

io::SampleFormat parse_format(const std::string& s) {
  return s == "pcm16" ? io::SampleFormat::pcm16 : io::SampleFormat::float32;
}

// ---- simulate ----------------------------------------------------------------

struct SimulateArgs {
  std::uint64_t seed = 0;
  std::string out_dir;
  int mics = 4;
  std::optional<double> t60;
  std::optional<double> snr;
  double duration = 2.0;
  double perturb_deg = 5.0;
  double mic_radius = 0.15;
  std::string format = "float32";
};

int simulate(const SimulateArgs& a, std::ostream& out) {
  auto spec = sample_random_scene(a.seed, static_cast<std::size_t>(a.mics), a.mic_radius);
  if (a.t60) spec.t60 = *a.t60;
  if (a.snr) spec.snr_db = *a.snr;
  try {
    spec.validate();
    t60_to_reflection_coeff(spec.room, spec.t60);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto n = static_cast<std::size_t>(std::llround(a.duration * spec.sample_rate));
  const auto speech = synthetic_speech(n, spec.sample_rate, a.seed * 2 + 1);
  std::vector<std::vector<double>> noises;
  for (std::size_t j = 0; j < spec.noise_sources.size(); ++j) {
    noises.push_back(synthetic_noise(n, spec.sample_rate, a.seed * 2 + 1000 + j));
  }
  const auto scene = render_scene(spec, speech, noises);
  const auto meta = io::describe_scene(spec, a.perturb_deg, a.seed ^ 0x5eedULL);

  const fs::path dir(a.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string());
  const auto f = parse_format(a.format);
  io::OutputTransaction tx;
  tx.stage(dir / "mix.wav", io::wav_encode(scene.mix, f));
  tx.stage(dir / "clean.wav", io::wav_encode(scene.clean, f));
  tx.stage(dir / "noise.wav", io::wav_encode(scene.noise, f));
  tx.stage(dir / "scene.json", io::scene_to_json(meta));
  tx.commit();
  out << "wrote " << (dir / "mix.wav").string() << ", clean.wav, noise.wav, scene.json (" << a.mics
      << " mics, T60 " << fmt("%.3f", spec.t60) << " s, SNR " << fmt("%.2f", spec.snr_db) << " dB)\n";
  return kExitOk;
}

// ---- enhance -----------------------------------------------------------------

struct EnhanceArgs {
  std::string weights, scene, in, out;
  bool streaming = false;
  bool batch = false;
  bool true_tdoa = false;
  std::string format = "float32";
};

int enhance(const EnhanceArgs& a, std::ostream& out) {
  const auto params = io::load_weights(a.weights);
  const auto meta = io::load_scene(a.scene);
  const auto mix = to_reference_order(io::wav_read(a.in), meta, a.in);
  const auto plan = meta.plan(!a.true_tdoa);
  const auto t0 = std::chrono::steady_clock::now();
  const auto est = a.streaming ? enhance_streaming<float>(params, plan, mix) : enhance_offline<float>(params, plan, mix);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MultichannelBuffer buf(1, est.size(), mix.sample_rate());
  std::copy(est.begin(), est.end(), buf.channel(0).begin());
  io::wav_write(a.out, buf, parse_format(a.format));
  const double hops = std::ceil(static_cast<double>(mix.length()) / params.config.hop());
  out << "wrote " << a.out << " (" << (a.streaming ? "streaming" : "batch") << ", " << mix.channels()
      << " channels, " << fmt("%.4f", 1000.0 * secs / std::max(hops, 1.0)) << " ms per hop)\n";
  return kExitOk;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config, data_dir, out, log;
  int epochs = 1;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  std::size_t steps_per_epoch = 0;
  bool true_tdoa = false;
};

std::vector<fs::path> scene_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("data directory " + root.string() + " does not exist");
  if (fs::exists(root / "scene.json")) return {root};
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "scene.json")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw DataError("no scene directories (with scene.json) under " + root.string());
  return dirs;
}

int train(const TrainArgs& a, std::ostream& out) {
  const auto cfg = io::resolve_config(a.config);
  std::vector<TrainingExample> data;
  for (const auto& dir : scene_dirs(a.data_dir)) {
    const auto meta = io::load_scene(dir / "scene.json");
    if (meta.spec.sample_rate != cfg.sample_rate) {
      throw DataError((dir / "scene.json").string() + ": sample rate differs from the model config");
    }
    const auto mix = to_reference_order(io::wav_read(dir / "mix.wav"), meta, (dir / "mix.wav").string());
    const auto clean = to_reference_order(io::wav_read(dir / "clean.wav"), meta, (dir / "clean.wav").string());
    if (clean.length() != mix.length()) throw DataError(dir.string() + ": mix and clean lengths differ");
    data.push_back(make_training_example(meta.plan(!a.true_tdoa), mix, clean, static_cast<std::size_t>(cfg.frame_len)));
  }

  TrainOptions opt;
  opt.epochs = a.epochs;
  opt.steps_per_epoch = a.steps_per_epoch;
  opt.seed = a.seed;
  opt.adam.learning_rate = a.lr;
  std::ostringstream log;
  log << "step\tepoch\tloss\tlr\n";
  opt.on_step = [&](const StepLog& s) {
    log << s.step << '\t' << s.epoch << '\t' << fmt("%.6f", s.loss) << '\t' << fmt("%.8g", s.learning_rate) << '\n';
  };
  const auto result = train_loop(data, init_params(cfg, a.seed), opt);
  for (std::size_t e = 0; e < result.epoch_si_sdr.size(); ++e) {
    out << "epoch " << e << ": mean SI-SDR " << fmt("%.3f", result.epoch_si_sdr[e]) << " dB\n";
  }
  const std::string log_path = a.log.empty() ? a.out + ".log" : a.log;
  io::OutputTransaction tx;
  tx.stage(a.out, io::encode_weights(result.params.cast<float>()));
  tx.stage(log_path, log.str());
  tx.commit();
  out << "wrote " << a.out << " and " << log_path << " (" << result.steps.size() << " steps)\n";
  return kExitOk;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string est, scene, clean, mix;
  std::optional<int> ref_mic;
  bool true_tdoa = false;
};

int evaluate(const EvalArgs& a, std::ostream& out) {
  const auto meta = io::load_scene(a.scene);
  const auto clean = to_reference_order(io::wav_read(a.clean), meta, a.clean);
  const auto est_file = io::wav_read(a.est);
  if (est_file.channels() != 1) throw DataError(a.est + " must be mono");
  if (est_file.length() != clean.length()) {
    throw DataError(a.est + " has " + std::to_string(est_file.length()) + " samples, clean has " +
                    std::to_string(clean.length()));
  }
  const auto est = est_file.channel(0);
  const auto plan = meta.plan(!a.true_tdoa);
  const auto target = make_target(plan, clean);

  std::vector<double> ref = target;
  std::string ref_name = "x_DS";
  if (a.ref_mic) {
    const auto c = static_cast<std::size_t>(*a.ref_mic);
    if (*a.ref_mic < 0 || c >= clean.channels()) throw UsageError("--ref-mic is outside the microphone range");
    const auto pos = static_cast<std::size_t>(
        std::find(meta.permutation.begin(), meta.permutation.end(), c) - meta.permutation.begin());
    steer_channel(plan, pos, clean.channel(pos), ref);
    ref_name = "clean mic " + std::to_string(c) + " (steered)";
  }
  const double sdr = si_sdr(est, ref);
  out << "SI-SDR vs " << ref_name << ": " << fmt("%.3f", sdr) << " dB\n";

  fs::path mix_path = a.mix.empty() ? fs::path(a.clean).parent_path() / "mix.wav" : fs::path(a.mix);
  if (!a.mix.empty() || fs::exists(mix_path)) {
    const auto mix = to_reference_order(io::wav_read(mix_path), meta, mix_path.string());
    if (mix.length() != clean.length()) throw DataError("mix and clean lengths differ");
    const auto baseline = delay_and_sum(apply_steering(plan, mix));
    const double base = si_sdr(std::span<const double>(baseline), ref);
    out << "DS baseline SI-SDR vs " << ref_name << ": " << fmt("%.3f", base) << " dB\n";
    out << "improvement over DS: " << fmt("%.3f", sdr - base) << " dB\n";
  } else {
    out << "DS baseline: skipped (no mix.wav next to the clean file; pass --mix)\n";
  }
  out << "note: PESQ and STOI are not built in; use an external implementation on the written audio\n";
  return kExitOk;
}

// ---- info --------------------------------------------------------------------

struct InfoArgs {
  std::string config = "reference";
  int mics = 4;
};

int info(const InfoArgs& a, std::ostream& out) {
  const auto cfg = io::resolve_config(a.config);
  const auto params = count_params(cfg);
  const auto macs = count_macs(cfg, cfg.sample_rate, static_cast<std::size_t>(a.mics));
  const auto lat = latency_report(cfg, cfg.fir_taps, cfg.sample_rate);
  out << "config: L=" << cfg.frame_len << " N=" << cfg.latent_dim << " H=" << cfg.hidden_dim
      << " P=" << cfg.partitions << " B=" << cfg.num_blocks << " R=" << cfg.norm_window << " M=" << cfg.fir_taps
      << " fs=" << cfg.sample_rate << (cfg.share_cells ? " shared-cells" : "")
      << (cfg.channel_interaction ? "" : " no-channel-interaction") << "\n";
  out << "parameters: " << params << " (" << fmt("%.2f", params / 1e6) << "M)\n";
  out << "local GMAC/s per channel: " << fmt("%.3f", macs.local_per_channel / 1e9) << "\n";
  out << "global GMAC/s: " << fmt("%.3f", macs.global / 1e9) << "\n";
  out << "total GMAC/s (C=" << a.mics << "): " << fmt("%.3f", macs.total / 1e9) << "\n";
  out << "latency: frame " << fmt("%.3f", lat.frame_latency_ms) << " ms + fractional delay "
      << fmt("%.3f", lat.frac_filter_latency_ms) << " ms = " << fmt("%.3f", lat.algorithmic_total_ms) << " ms\n";
  out << "compute budget per hop: " << fmt("%.3f", lat.max_compute_budget_ms) << " ms\n";
  out << "kernels: " << kernels::isa_name(kernels::active_isa()) << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Geometry-steered multichannel speech enhancement"};
  app.name("dfsnet");
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "render a random reverberant scene");
  s->add_option("--seed", sim.seed, "scene seed")->required();
  s->add_option("--out-dir", sim.out_dir, "output directory")->required();
  s->add_option("--mics", sim.mics, "microphone count")->check(CLI::Range(1, 64));
  s->add_option("--t60", sim.t60, "reverberation time override, s")->check(CLI::Range(0.01, 1.99));
  s->add_option("--snr", sim.snr, "SNR override, dB");
  s->add_option("--duration", sim.duration, "length, s")->check(CLI::Range(1.0, 60.0));
  s->add_option("--perturb-deg", sim.perturb_deg, "max TDOA angle error, degrees")->check(CLI::Range(0.0, 90.0));
  s->add_option("--mic-radius", sim.mic_radius, "array radius around the room centre, m")->check(CLI::Range(0.0, 0.5));
  s->add_option("--format", sim.format, "sample format")->check(CLI::IsMember({"float32", "pcm16"}));

  EnhanceArgs enh;
  auto* e = app.add_subcommand("enhance", "run the network on a mixture");
  e->add_option("--weights", enh.weights, "weight file")->required();
  e->add_option("--scene", enh.scene, "scene metadata")->required();
  e->add_option("--in", enh.in, "multichannel mixture")->required();
  e->add_option("--out", enh.out, "mono estimate")->required();
  auto* fst = e->add_flag("--streaming", enh.streaming, "hop-by-hop engine");
  auto* fb = e->add_flag("--batch", enh.batch, "whole-utterance path (default)");
  fst->excludes(fb);
  e->add_flag("--true-tdoa", enh.true_tdoa, "steer with the true instead of the perturbed TDOAs");
  e->add_option("--format", enh.format, "sample format")->check(CLI::IsMember({"float32", "pcm16"}));

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "desk-scale training");
  t->add_option("--config", tr.config, "reference, tiny or a JSON file")->required();
  t->add_option("--data-dir", tr.data_dir, "scene directory or directory of scene directories")->required();
  t->add_option("--epochs", tr.epochs, "epochs")->check(CLI::Range(1, 100000));
  t->add_option("--seed", tr.seed, "initialization and shuffling seed");
  t->add_option("--out", tr.out, "weight file to write")->required();
  t->add_option("--log", tr.log, "metrics log (default: <out>.log)");
  t->add_option("--lr", tr.lr, "initial learning rate")->check(CLI::PositiveNumber);
  t->add_option("--steps-per-epoch", tr.steps_per_epoch, "steps per epoch (default: one pass)");
  t->add_flag("--true-tdoa", tr.true_tdoa, "steer with the true instead of the perturbed TDOAs");

  EvalArgs ev;
  auto* v = app.add_subcommand("eval", "SI-SDR of an estimate");
  v->add_option("--est", ev.est, "mono estimate")->required();
  v->add_option("--scene", ev.scene, "scene metadata")->required();
  v->add_option("--clean", ev.clean, "clean multichannel images")->required();
  v->add_option("--mix", ev.mix, "mixture for the DS baseline (default: mix.wav next to --clean)");
  v->add_option("--ref-mic", ev.ref_mic, "compare against this microphone's clean image instead of x_DS");
  v->add_flag("--true-tdoa", ev.true_tdoa, "steer with the true instead of the perturbed TDOAs");

  InfoArgs inf;
  auto* i = app.add_subcommand("info", "parameter, compute and latency report");
  i->add_option("--config", inf.config, "reference, tiny or a JSON file");
  i->add_option("--mics", inf.mics, "channel count for the total")->check(CLI::Range(1, 64));

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "dfsnet: usage error: " << ex.what() << "\n";
    return kExitUsage;
  }

  try {
    if (s->parsed()) return simulate(sim, out);
    if (e->parsed()) {
      if (enh.streaming && enh.batch) throw UsageError("--streaming and --batch are exclusive");
      return enhance(enh, out);
    }
    if (t->parsed()) return train(tr, out);
    if (v->parsed()) return evaluate(ev, out);
    if (i->parsed()) return info(inf, out);
  } catch (const UsageError& ex) {
    err << "dfsnet: usage error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "dfsnet: error: " << ex.what() << "\n";
    return kExitData;
  }
  err << "dfsnet: usage error: no subcommand\n";
  return kExitUsage;
}

}  // namespace dfs::cli
