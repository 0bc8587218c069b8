#pragma once

#include <string>
#include <vector>

#include "seilab/nn.hpp"
#include "seilab/pipeline.hpp"
#include "seilab/sigmodel.hpp"

namespace seilab::config {

struct SynthesisSection {
  int count_per_emitter = 1000;
  double snr_db = 30.0;
  sigmodel::FrameSynthesisConfig frame;
};

/// Knobs for the mimicry autoencoder. The experimental configuration is a
/// 128-unit hidden layer with a 1e-8 target; the 100-unit / 1e-6 variant
/// is reachable here. max_epochs defaults to a desk-scale cap; the full
/// 100k-epoch budget is one config edit away.
struct AeSection {
  int hidden = 128;
  double target_mse = 1e-8;
  int max_epochs = 20000;
  double learning_rate = 0.003;
  int minibatch = 250;
};

struct GanSection {
  int epochs = 10;
  int minibatch = 250;
  double learning_rate = 0.0005;
};

struct DaeSection {
  int hidden = 256;
  int epochs = 300;
  int minibatch = 64;
  double learning_rate = 0.003;
};

struct TrainingSection {
  nn::TrainConfig sei_cnn;        // lr 0.01, clip 1, l2 1e-4
  int gabor_epochs = 30;
  AeSection ae;
  GanSection gan;
  DaeSection dae;
};

/// Desk-scale experiment sizes used by the scenario runner.
struct RunSection {
  int train_per_emitter = 120;
  int test_per_emitter = 30;
  int eve_transmissions = 120;
  int mimic_target = 0;  // index into the authorized set
};

struct LabConfig {
  std::vector<sigmodel::EmitterProfile> emitters;
  sigmodel::EmitterProfile decoy;
  sigmodel::EmitterProfile eve_frontend;
  pipeline::PipelineConfig pipeline;
  SynthesisSection synthesis;
  TrainingSection training;
  RunSection run;
  double min_profile_distance = 0.25;

  void validate() const;
};

LabConfig default_config();

LabConfig load_config(const std::string& path);
void save_config(const LabConfig& cfg, const std::string& path);
std::string config_to_json(const LabConfig& cfg);
LabConfig config_from_json(const std::string& text);

}  // namespace seilab::config
