#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "repose/data.hpp"
#include "repose/metrics.hpp"
#include "repose/model.hpp"

namespace repose {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct LrPoint {
  long step = 0;
  double lr = 1e-3;
};

struct DatasetSpec {
  std::string type = "synthetic";  // synthetic | native | lsp_style | mpii_style
  std::string path;                // annotation file, for the file-backed types
  // synthetic generator knobs
  int count = 2000;
  int canvas = 80;
  double occluded_fraction = 0.15;
  double unannotated_fraction = 0.0;
  std::uint64_t seed = 7;
};

struct RunConfig {
  ReposeConfig model;
  AugmentConfig augment;
  AdamConfig adam;
  int batch_size = 16;
  std::vector<LrPoint> lr_schedule{{0, 1e-3}};
  long max_steps = 2000;
  std::uint64_t seed = 1;
  double sigma = 5.0;  // ground-truth heatmap sigma at the model input size
  bool augment_enabled = true;
  DatasetSpec train_data;
  DatasetSpec val_data;
  std::string output_dir = "runs/default";
  long log_every = 10;
  long checkpoint_every = 500;
  long eval_every = 0;  // 0: evaluate only at the end
  int val_limit = 200;
  PckSpec pck;

  void validate() const;
};

std::string serialize_run_config(const RunConfig& config);  // canonical JSON
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& config, const std::string& path);

// Built-in profiles. "paper" carries the published training setup (128x128,
// K=16, batch 64, the step-decay schedule); "desk" is the CPU-scale profile
// that trains on synthetic data in minutes.
RunConfig paper_profile();
RunConfig desk_profile();
RunConfig profile_by_name(const std::string& name);

}  // namespace repose
