#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nnaee/adjoint.hpp"
#include "nnaee/model.hpp"
#include "nnaee/neural.hpp"
#include "nnaee/scene.hpp"
#include "nnaee/serialize.hpp"

namespace nnaee::pipeline {

/// Environment variable naming a preset JSON file used when no --preset flag is given.
inline constexpr const char *kPresetEnv = "NNAEE_PRESET";

/// Everything needed to run the experiment: the three model tiers, sensors, source,
/// scene generators, network shapes, training and inversion settings, and dataset sizes.
struct Preset {
  std::string name;
  ModelConfig physical;
  ModelConfig accurate;
  ModelConfig surrogate;
  SensorGeometry geometry;
  SourceWaveform waveform;
  scene::SceneParams training_scene;
  scene::SceneParams test_scene;

  int latent_width = 32; // M_p
  nn::AutoencoderWidths ae_widths{{300, 128}};
  nn::PhiWidths phi_widths{128};
  int fan_in_1 = 3;
  int fan_in_2 = 5;
  nn::PhiWidths direct_widths{128};
  nn::TrainOptions ae_training;
  nn::TrainOptions phi_training;
  nn::TrainOptions direct_training;
  adjoint::InversionOptions inversion;

  std::vector<int> n_train_grid{50, 100, 200, 400};
  int n_validation = 40;
  int n_test = 10;
  std::uint64_t master_seed = 20240601;

  const ModelConfig &config(Tier tier) const;
  int max_train() const;
  /// Throws ConfigError describing the first inconsistency.
  void validate() const;

  static Preset desk();
  static Preset full();
  /// Tiny grids and sizes for smoke runs and tests.
  static Preset mini();
  static Preset named(const std::string &name);
};

void to_json(json &j, const Preset &p);
void from_json(const json &j, Preset &p);

Preset load_preset(const std::filesystem::path &path);
void save_preset(const std::filesystem::path &path, const Preset &p);

/// A named built-in preset or a JSON file path.
Preset resolve_preset(const std::string &name_or_path);

/// The file named by NNAEE_PRESET when set, the desk preset otherwise.
Preset default_preset();

} // namespace nnaee::pipeline
