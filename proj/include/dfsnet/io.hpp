#pragma once

// File formats: RIFF/WAVE audio, the DFSW weight container and scene
// metadata JSON. Malformed files raise DataError.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfsnet/common.hpp"
#include "dfsnet/model.hpp"
#include "dfsnet/scene_sim.hpp"
#include "dfsnet/steering.hpp"

namespace dfs::io {

// ---- audio -----------------------------------------------------------------

enum class SampleFormat { pcm16, float32 };

// PCM16, IEEE float32 and their WAVE_FORMAT_EXTENSIBLE forms.
MultichannelBuffer wav_read(const std::filesystem::path& path);
// PCM16 rounds half away from zero and clips to [-1, 1 - 2^-15].
void wav_write(const std::filesystem::path& path, const MultichannelBuffer& audio,
               SampleFormat format = SampleFormat::float32);

std::vector<std::uint8_t> wav_encode(const MultichannelBuffer& audio, SampleFormat format);
MultichannelBuffer wav_decode(const std::vector<std::uint8_t>& bytes);

std::int16_t quantize_pcm16(double v);

// ---- weights ---------------------------------------------------------------

inline constexpr std::uint32_t kWeightFormatVersion = 1;

std::vector<std::uint8_t> encode_weights(const ModelParams<float>& params);
ModelParams<float> decode_weights(const std::vector<std::uint8_t>& bytes);
void save_weights(const std::filesystem::path& path, const ModelParams<float>& params);
ModelParams<float> load_weights(const std::filesystem::path& path);

// ---- scene metadata --------------------------------------------------------

struct SceneMetadata {
  SceneSpec spec;
  std::vector<double> true_tdoa;       // in reference order, C-1 entries
  std::vector<double> perturbed_tdoa;  // idem
  std::vector<std::size_t> permutation;  // reference order -> file channel
  double perturbation_deg = 0.0;
  int fir_taps = kReferenceFirTaps;

  // Steering plan for the reference-ordered channels.
  SteeringPlan plan(bool perturbed = true) const;
};

// Permutation, true and perturbed TDOAs for a rendered scene.
SceneMetadata describe_scene(const SceneSpec& spec, double perturbation_deg, std::uint64_t seed,
                             int fir_taps = kReferenceFirTaps);

std::string scene_to_json(const SceneMetadata& meta);
SceneMetadata scene_from_json(const std::string& text);
void save_scene(const std::filesystem::path& path, const SceneMetadata& meta);
SceneMetadata load_scene(const std::filesystem::path& path);

// ---- model configuration -------------------------------------------------------

// "reference", "tiny", or a JSON object with any of frame_len, latent_dim,
// hidden_dim, partitions, num_blocks, norm_window, fir_taps, sample_rate,
// encoder_bias, share_cells, channel_interaction (others keep reference values).
ModelConfig config_from_json(const std::string& text);
std::string config_to_json(const ModelConfig& config);
// Preset name or path to a JSON file.
ModelConfig resolve_config(const std::string& name_or_path);

// ---- files -----------------------------------------------------------------

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

// Stages several output files next to their destinations and moves them all
// into place on commit(). Anything not committed is removed on destruction.
class OutputTransaction {
 public:
  OutputTransaction() = default;
  OutputTransaction(const OutputTransaction&) = delete;
  OutputTransaction& operator=(const OutputTransaction&) = delete;
  ~OutputTransaction();

  void stage(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
  void stage(const std::filesystem::path& path, const std::string& text);
  void commit();

 private:
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged_;  // tmp, final
};

}  // namespace dfs::io
